"""
Shared FastMCP server instance for virl.

Tool modules import ``mcp`` from here and register with its decorator.
"""

from fastmcp import FastMCP

mcp = FastMCP(name="virl")
