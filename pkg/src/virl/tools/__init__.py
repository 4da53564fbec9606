"""MCP tools for inspecting motion clips, learned distances and checkpoints.

Every tool returns a dict with ``success``, its payload, an ``error``
(ErrorDetail fields) on failure, and ``metadata.request_time_ms``.
"""

from .checkpoints import evaluate_checkpoint
from .metric import clip_distance, shaped_reward
from .motion import list_motion_classes, render_demo_frames

__all__ = [
    "clip_distance",
    "evaluate_checkpoint",
    "list_motion_classes",
    "render_demo_frames",
    "shaped_reward",
]
