"""
FastMCP server instance for virl.

Exposes the library's inspection operations as MCP tools: the motion library,
demonstration rendering, the reward transform, learned distances between clips
and checkpoint evaluation. Training itself stays on the command line.
"""

import logging
from pathlib import Path
from typing import Any, Dict

from dotenv import load_dotenv
from fastmcp import Context

# Look for .env in the project root (parent of src/), then the working directory
env_path = Path(__file__).parent.parent.parent / ".env"
if env_path.exists():
    load_dotenv(env_path)
else:
    load_dotenv()

from .log_config import setup_json_logging  # noqa: E402

setup_json_logging()

logger = logging.getLogger(__name__)

from . import __version__  # noqa: E402
from .mcp_instance import mcp  # noqa: E402

# Import tool modules to trigger decorator registration
from .tools import checkpoints, metric, motion  # noqa: E402, F401

# Logging to stdout would corrupt the stdio transport; stay at DEBUG on stderr
logger.debug("FastMCP server instance created", extra={"server_name": "virl"})


@mcp.tool()
async def health_check(ctx: Context) -> Dict[str, Any]:
    """
    Health check endpoint that verifies the server is running.

    Returns:
        Dictionary with status and server information
    """
    await ctx.info("Health check requested")

    return {
        "status": "healthy",
        "server": "virl",
        "version": __version__,
    }


logger.debug(
    "MCP tools registered",
    extra={
        "tools": [
            "health_check",
            "list_motion_classes",
            "render_demo_frames",
            "shaped_reward",
            "clip_distance",
            "evaluate_checkpoint",
        ]
    },
)
