"""Learned-distance tools: the reward transform and clip-to-clip distances."""

import asyncio
import logging
import time
from typing import Annotated, Any, Literal, Optional

import numpy as np
from fastmcp import Context

from ..config import load_run_config
from ..env import clip_by_name, demo_frames, motion_library
from ..errors import VirlError
from ..mcp_instance import mcp
from ..metric import distance_profile
from ..metric import shaped_reward as reward_transform
from ..nets import SiameseNetwork
from ..training import load_metric

logger = logging.getLogger(__name__)


@mcp.tool
async def shaped_reward(
    ctx: Context,
    distances: Annotated[list[float], "Non-negative distances d"],
    w_d: Annotated[float, "Reward width, must be negative"] = -5.0,
) -> dict[str, Any]:
    """Map distances to rewards exp(w_d * d^2) in (0, 1].

    Returns:
        Dictionary with:
        - success: True on success
        - rewards: one reward per distance
        - metadata: timing information
    """
    start_time = time.perf_counter()

    try:
        rewards = np.atleast_1d(reward_transform(np.asarray(distances, dtype=np.float64), w_d))
        elapsed_ms = (time.perf_counter() - start_time) * 1000
        await ctx.debug(f"Shaped {len(distances)} distances")
        return {
            "success": True,
            "rewards": [float(r) for r in rewards],
            "metadata": {"w_d": w_d, "request_time_ms": round(elapsed_ms, 2)},
        }

    except VirlError as e:
        elapsed_ms = (time.perf_counter() - start_time) * 1000
        await ctx.error(f"Cannot shape rewards: {e.message}")
        logger.error(f"Cannot shape rewards: {e.message}", extra={"duration_ms": elapsed_ms})
        return {
            "success": False,
            "error": e.to_detail().model_dump(),
            "rewards": [],
            "metadata": {"request_time_ms": round(elapsed_ms, 2)},
        }

    except Exception as e:
        elapsed_ms = (time.perf_counter() - start_time) * 1000
        await ctx.error(f"Failed to shape rewards: {str(e)}")
        logger.exception("Failed to shape rewards", extra={"duration_ms": elapsed_ms})
        return {
            "success": False,
            "error": {
                "error_type": "execution_error",
                "message": f"Failed to shape rewards: {str(e)}",
                "details": {"exception_type": type(e).__name__},
                "suggestion": "Pass a flat list of finite, non-negative distances",
            },
            "rewards": [],
            "metadata": {"request_time_ms": round(elapsed_ms, 2)},
        }


def _clip_profile(
    clip_a: str,
    clip_b: str,
    checkpoint: Optional[str],
    config_path: Optional[str],
    frames: int,
    speed_b: float,
    mode: str,
) -> dict[str, Any]:
    config = load_run_config(config_path)
    env = config.env_config()
    library = motion_library(config.classes, env.joints)
    if checkpoint:
        net = load_metric(checkpoint, config)
    else:
        net = SiameseNetwork(config.architecture(), rng=np.random.default_rng(config.seed))
    a = demo_frames(clip_by_name(clip_a, library), env, frames)
    b = demo_frames(clip_by_name(clip_b, library).warped(speed_b), env, frames)
    profile = distance_profile(net, a, b, mode)  # type: ignore[arg-type]
    selected = profile.selected()
    return {
        "spatial": [round(float(v), 6) for v in profile.spatial],
        "temporal": [round(float(v), 6) for v in profile.temporal],
        "total": float(selected.sum()),
        "rewards": [round(float(r), 6) for r in np.atleast_1d(reward_transform(selected, config.metric_w_d))],
        "trained": bool(checkpoint),
    }


@mcp.tool
async def clip_distance(
    ctx: Context,
    clip_a: Annotated[str, "First clip name"],
    clip_b: Annotated[str, "Second clip name"],
    checkpoint: Annotated[Optional[str], "Metric or full checkpoint; fresh weights if omitted"] = None,
    config_path: Annotated[Optional[str], "key=value run config the checkpoint was trained with"] = None,
    frames: Annotated[int, "Frames rendered from each clip"] = 16,
    speed_b: Annotated[float, "Replay speed of the second clip"] = 1.0,
    mode: Annotated[Literal["spatial", "temporal", "combined"], "Distance terms to report"] = "combined",
) -> dict[str, Any]:
    """Per-step learned distances between two rendered demonstration clips.

    Returns:
        Dictionary with:
        - success: True on success
        - spatial, temporal: per-step distances of the frame and LSTM encodings
        - total: sum of the selected distance over the sequence
        - rewards: shaped rewards of the selected distance
        - metadata: timing information
    """
    start_time = time.perf_counter()

    try:
        if frames < 1:
            raise VirlError(f"frames must be positive, got {frames}", {"frames": frames})
        await ctx.info(f"Measuring distance between '{clip_a}' and '{clip_b}'")
        logger.info("Measuring clip distance", extra={"clip_a": clip_a, "clip_b": clip_b, "mode": mode})

        result = await asyncio.to_thread(
            _clip_profile, clip_a, clip_b, checkpoint, config_path, frames, speed_b, mode
        )

        elapsed_ms = (time.perf_counter() - start_time) * 1000
        await ctx.info(f"Total {mode} distance {result['total']:.4f}")
        return {
            "success": True,
            **result,
            "metadata": {"mode": mode, "frames": frames, "request_time_ms": round(elapsed_ms, 2)},
        }

    except VirlError as e:
        elapsed_ms = (time.perf_counter() - start_time) * 1000
        await ctx.error(f"Cannot measure distance: {e.message}")
        logger.error(f"Cannot measure distance: {e.message}", extra={"duration_ms": elapsed_ms})
        return {
            "success": False,
            "error": e.to_detail().model_dump(),
            "metadata": {"request_time_ms": round(elapsed_ms, 2)},
        }

    except Exception as e:
        elapsed_ms = (time.perf_counter() - start_time) * 1000
        await ctx.error(f"Failed to measure distance: {str(e)}")
        logger.exception("Failed to measure clip distance", extra={"duration_ms": elapsed_ms})
        return {
            "success": False,
            "error": {
                "error_type": "execution_error",
                "message": f"Failed to measure distance: {str(e)}",
                "details": {"exception_type": type(e).__name__},
                "suggestion": "Check the clip names with list_motion_classes",
            },
            "metadata": {"request_time_ms": round(elapsed_ms, 2)},
        }
