"""Motion library tools.

Lists the demonstration classes and renders demonstration frames, so a client
can see what a policy is asked to imitate.
"""

import logging
import time
from typing import Annotated, Any, Optional

from fastmcp import Context

from ..env import EnvConfig, class_separation, clip_by_name, demo_frames, motion_library, write_sequence
from ..errors import VirlError
from ..mcp_instance import mcp

logger = logging.getLogger(__name__)


@mcp.tool
async def list_motion_classes(
    ctx: Context,
    classes: Annotated[int, "Number of classes K in the library (at least 2)"] = 4,
) -> dict[str, Any]:
    """List the motion classes of the multitask library.

    Returns:
        Dictionary with:
        - success: True on success
        - classes: class_id, name, joint count and harmonic multiples per clip
        - separation: mean joint-angle distance between every pair of clips
        - metadata: timing information
    """
    start_time = time.perf_counter()

    try:
        await ctx.info(f"Building motion library with {classes} classes")
        logger.info("Building motion library", extra={"classes": classes})

        library = motion_library(classes)
        entries = [
            {
                "class_id": clip.class_id,
                "name": clip.name,
                "joints": clip.joints,
                "harmonics": [h.multiple for h in clip.harmonics],
            }
            for clip in library
        ]
        separation = [
            {"a": a.name, "b": b.name, "distance": round(class_separation(a, b), 6)}
            for i, a in enumerate(library)
            for b in library[i + 1 :]
        ]

        elapsed_ms = (time.perf_counter() - start_time) * 1000
        return {
            "success": True,
            "classes": entries,
            "separation": separation,
            "metadata": {"total_classes": len(entries), "request_time_ms": round(elapsed_ms, 2)},
        }

    except VirlError as e:
        elapsed_ms = (time.perf_counter() - start_time) * 1000
        await ctx.error(f"Invalid motion library request: {e.message}")
        logger.error(f"Invalid motion library request: {e.message}", extra={"duration_ms": elapsed_ms})
        return {
            "success": False,
            "error": e.to_detail().model_dump(),
            "classes": [],
            "metadata": {"request_time_ms": round(elapsed_ms, 2)},
        }

    except Exception as e:
        elapsed_ms = (time.perf_counter() - start_time) * 1000
        await ctx.error(f"Failed to list motion classes: {str(e)}")
        logger.exception("Failed to list motion classes", extra={"duration_ms": elapsed_ms})
        return {
            "success": False,
            "error": {
                "error_type": "execution_error",
                "message": f"Failed to list motion classes: {str(e)}",
                "details": {"exception_type": type(e).__name__},
                "suggestion": None,
            },
            "classes": [],
            "metadata": {"request_time_ms": round(elapsed_ms, 2)},
        }


@mcp.tool
async def render_demo_frames(
    ctx: Context,
    clip: Annotated[str, "Clip name, e.g. walk, run, jump or zombie"] = "walk",
    frames: Annotated[int, "Number of frames to render"] = 16,
    frame_size: Annotated[int, "Frame side in pixels (multiple of 4, at least 12)"] = 32,
    phase: Annotated[float, "Starting phase in [0, 1)"] = 0.0,
    speed: Annotated[float, "Replay speed in [0.5, 2.0]"] = 1.0,
    output_dir: Annotated[Optional[str], "Directory to write PGM files to"] = None,
    classes: Annotated[int, "Library size the clip is looked up in"] = 4,
) -> dict[str, Any]:
    """Render a demonstration clip as grayscale frames.

    Returns:
        Dictionary with:
        - success: True on success
        - clip, frames, shape: what was rendered
        - mean_intensity: average pixel value per frame
        - files: PGM paths when output_dir is given
        - metadata: timing information
    """
    start_time = time.perf_counter()

    try:
        if frames < 1:
            raise VirlError(f"frames must be positive, got {frames}", {"frames": frames})
        if not 0.0 <= phase < 1.0:
            raise VirlError(f"phase must lie in [0, 1), got {phase}", {"phase": phase})

        await ctx.info(f"Rendering {frames} frames of '{clip}'")
        logger.info("Rendering demonstration", extra={"clip": clip, "frames": frames, "speed": speed})

        config = EnvConfig(frame_size=frame_size)
        motion = clip_by_name(clip, motion_library(classes, config.joints)).warped(speed)
        images = demo_frames(motion, config, frames, phase0=phase)
        files = [str(p) for p in write_sequence(output_dir, images, stem=clip)] if output_dir else []

        elapsed_ms = (time.perf_counter() - start_time) * 1000
        await ctx.info(f"Rendered {frames} frames")
        return {
            "success": True,
            "clip": clip,
            "frames": frames,
            "shape": list(images.shape),
            "mean_intensity": [round(float(v), 6) for v in images.reshape(frames, -1).mean(axis=1)],
            "files": files,
            "metadata": {"speed": motion.speed, "request_time_ms": round(elapsed_ms, 2)},
        }

    except VirlError as e:
        elapsed_ms = (time.perf_counter() - start_time) * 1000
        await ctx.error(f"Cannot render '{clip}': {e.message}")
        logger.error(f"Cannot render '{clip}': {e.message}", extra={"duration_ms": elapsed_ms})
        return {
            "success": False,
            "error": e.to_detail().model_dump(),
            "files": [],
            "metadata": {"request_time_ms": round(elapsed_ms, 2)},
        }

    except Exception as e:
        elapsed_ms = (time.perf_counter() - start_time) * 1000
        await ctx.error(f"Failed to render '{clip}': {str(e)}")
        logger.exception("Failed to render demonstration", extra={"duration_ms": elapsed_ms})
        return {
            "success": False,
            "error": {
                "error_type": "execution_error",
                "message": f"Failed to render '{clip}': {str(e)}",
                "details": {"exception_type": type(e).__name__},
                "suggestion": "Check frame_size (multiple of 4, at least 12) and speed (0.5 to 2.0)",
            },
            "files": [],
            "metadata": {"request_time_ms": round(elapsed_ms, 2)},
        }
