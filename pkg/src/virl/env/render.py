"""Rasterisation of the articulated chain and PGM (P5) frame files."""

import logging
from pathlib import Path

import numpy as np

from ..errors import VirlError

logger = logging.getLogger(__name__)

VIEW_EXTENT = 0.85
STROKE_PX = 0.6


def joint_positions(angles: np.ndarray, link_length: float = 0.25) -> np.ndarray:
    """(J+1, 2) world positions of the root and every link endpoint.

    Angles are relative to the parent link; 0 everywhere is the upright chain.
    World y points up, the root sits at the origin.
    """
    absolute = np.cumsum(np.asarray(angles, dtype=np.float64))
    steps = link_length * np.stack([np.sin(absolute), np.cos(absolute)], axis=-1)
    return np.concatenate([np.zeros((1, 2)), np.cumsum(steps, axis=0)], axis=0)


def _pixel_grid(frame_size: int, extent: float) -> tuple[np.ndarray, np.ndarray]:
    centers = (np.arange(frame_size) + 0.5) / frame_size * 2.0 * extent - extent
    x = centers[None, :]
    y = -centers[:, None]  # row 0 is the top of the canvas
    return np.broadcast_to(x, (frame_size, frame_size)), np.broadcast_to(y, (frame_size, frame_size))


def render_chain(
    angles: np.ndarray,
    frame_size: int = 32,
    link_length: float = 0.25,
    extent: float = VIEW_EXTENT,
) -> np.ndarray:
    """Anti-aliased line drawing of the chain on a black (H, W) canvas in [0, 1]."""
    points = joint_positions(angles, link_length)
    px, py = _pixel_grid(frame_size, extent)
    pixels_per_unit = frame_size / (2.0 * extent)
    stroke = STROKE_PX * max(1.0, frame_size / 32)

    canvas = np.zeros((frame_size, frame_size), dtype=np.float64)
    for start, end in zip(points[:-1], points[1:]):
        seg = end - start
        length_sq = float(seg @ seg)
        rel_x, rel_y = px - start[0], py - start[1]
        t = np.clip((rel_x * seg[0] + rel_y * seg[1]) / length_sq, 0.0, 1.0)
        dist = np.hypot(rel_x - t * seg[0], rel_y - t * seg[1]) * pixels_per_unit
        canvas = np.maximum(canvas, np.clip(1.0 + stroke - dist, 0.0, 1.0))
    return canvas.astype(np.float32)


def to_bytes(frame: np.ndarray) -> np.ndarray:
    return np.round(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_pgm(path: Path | str, frame: np.ndarray) -> Path:
    """Write one frame as binary greyscale PGM (P5, maxval 255)."""
    frame = np.asarray(frame)
    if frame.ndim != 2:
        raise VirlError(f"PGM frames must be 2-D, got shape {frame.shape}")
    path = Path(path)
    height, width = frame.shape
    path.write_bytes(f"P5\n{width} {height}\n255\n".encode("ascii") + to_bytes(frame).tobytes())
    return path


def read_pgm(path: Path | str) -> np.ndarray:
    """Load a P5 file written by ``write_pgm`` back to float32 values in [0, 1]."""
    blob = Path(path).read_bytes()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            pos = blob.index(b"\n", pos) + 1
            continue
        end = pos
        while end < len(blob) and not blob[end : end + 1].isspace():
            end += 1
        tokens.append(blob[pos:end])
        pos = end
    pos += 1  # single whitespace before the raster
    magic, width, height, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic != b"P5" or maxval != 255:
        raise VirlError(f"unsupported PGM file {path}", {"magic": magic.decode(errors="replace")})
    raster = np.frombuffer(blob, dtype=np.uint8, count=width * height, offset=pos)
    return (raster.reshape(height, width) / 255.0).astype(np.float32)


def write_sequence(directory: Path | str, frames: np.ndarray, stem: str = "frame") -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = [write_pgm(directory / f"{stem}_{i:04d}.pgm", frame) for i, frame in enumerate(frames)]
    logger.info("wrote PGM frames", extra={"directory": str(directory), "count": len(paths)})
    return paths
