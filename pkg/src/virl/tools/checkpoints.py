"""Checkpoint evaluation tool."""

import asyncio
import logging
import time
from typing import Annotated, Any, Optional

from fastmcp import Context

from ..config import load_run_config
from ..errors import VirlError
from ..mcp_instance import mcp
from ..training import evaluate_checkpoint as evaluate

logger = logging.getLogger(__name__)


@mcp.tool
async def evaluate_checkpoint(
    ctx: Context,
    checkpoint: Annotated[str, "Path of a training checkpoint"],
    config_path: Annotated[Optional[str], "key=value run config the checkpoint was trained with"] = None,
    episodes: Annotated[int, "Evaluation episodes"] = 10,
) -> dict[str, Any]:
    """Mean and standard deviation of the oracle return of a checkpointed policy.

    The policy acts with its mean action on the configured clip.

    Returns:
        Dictionary with:
        - success: True on success
        - report: episodes, mean_return, std_return, mean_length
        - metadata: timing information
    """
    start_time = time.perf_counter()

    try:
        if episodes < 1:
            raise VirlError(f"episodes must be positive, got {episodes}", {"episodes": episodes})
        await ctx.info(f"Evaluating {checkpoint} over {episodes} episodes")
        logger.info("Evaluating checkpoint", extra={"checkpoint": checkpoint, "episodes": episodes})

        config = load_run_config(config_path)
        report = await asyncio.to_thread(evaluate, checkpoint, config, episodes)

        elapsed_ms = (time.perf_counter() - start_time) * 1000
        await ctx.info(f"Mean oracle return {report.mean_return:.3f} ± {report.std_return:.3f}")
        return {
            "success": True,
            "report": report.model_dump(),
            "metadata": {
                "checkpoint": checkpoint,
                "config_hash": config.config_hash(),
                "request_time_ms": round(elapsed_ms, 2),
            },
        }

    except VirlError as e:
        elapsed_ms = (time.perf_counter() - start_time) * 1000
        await ctx.error(f"Cannot evaluate {checkpoint}: {e.message}")
        logger.error(f"Cannot evaluate {checkpoint}: {e.message}", extra={"duration_ms": elapsed_ms})
        return {
            "success": False,
            "error": e.to_detail().model_dump(),
            "report": None,
            "metadata": {"request_time_ms": round(elapsed_ms, 2)},
        }

    except Exception as e:
        elapsed_ms = (time.perf_counter() - start_time) * 1000
        await ctx.error(f"Failed to evaluate {checkpoint}: {str(e)}")
        logger.exception("Failed to evaluate checkpoint", extra={"duration_ms": elapsed_ms})
        return {
            "success": False,
            "error": {
                "error_type": "execution_error",
                "message": f"Failed to evaluate {checkpoint}: {str(e)}",
                "details": {"exception_type": type(e).__name__},
                "suggestion": None,
            },
            "report": None,
            "metadata": {"request_time_ms": round(elapsed_ms, 2)},
        }
