"""Parametric demonstration clips and the multitask motion library.

A clip is a sum of phase harmonics per joint:
    theta_j(phi) = bias_j + sum_k A_kj * sin(2 pi m_k phi + offset_kj)
with integer m_k, so every clip is periodic in phi with period 1.
"""

import math
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..errors import VirlError

TWO_PI = 2.0 * math.pi
WARP_RANGE = (0.5, 2.0)


class Harmonic(BaseModel):
    model_config = ConfigDict(frozen=True)

    multiple: int = Field(ge=1, description="Integer frequency multiple of the cycle")
    amplitudes: tuple[float, ...]
    offsets: tuple[float, ...]


class MotionClip(BaseModel):
    """A cyclic demonstration: joint angles as a function of phase."""

    model_config = ConfigDict(frozen=True)

    class_id: int
    name: str
    bias: tuple[float, ...]
    harmonics: tuple[Harmonic, ...]
    cycle_duration: float = Field(default=1.0, gt=0.0, description="Seconds per cycle at speed 1")
    speed: float = Field(default=1.0, gt=0.0, description="Speed modifier omega")

    @property
    def joints(self) -> int:
        return len(self.bias)

    def angles(self, phase: float | np.ndarray) -> np.ndarray:
        """Joint angles at ``phase``; shape (..., J)."""
        phi = np.asarray(phase, dtype=np.float64)[..., None]
        theta = np.broadcast_to(np.asarray(self.bias), phi.shape[:-1] + (self.joints,)).copy()
        for h in self.harmonics:
            theta += np.asarray(h.amplitudes) * np.sin(TWO_PI * h.multiple * phi + np.asarray(h.offsets))
        return theta

    def velocities(self, phase: float | np.ndarray) -> np.ndarray:
        """d theta / dt at ``phase`` under the clip's speed."""
        phi = np.asarray(phase, dtype=np.float64)[..., None]
        rate = self.speed / self.cycle_duration
        dtheta = np.zeros(phi.shape[:-1] + (self.joints,))
        for h in self.harmonics:
            dtheta += (
                np.asarray(h.amplitudes)
                * TWO_PI
                * h.multiple
                * np.cos(TWO_PI * h.multiple * phi + np.asarray(h.offsets))
            )
        return dtheta * rate

    def warped(self, omega: float) -> "MotionClip":
        low, high = WARP_RANGE
        if not low <= omega <= high:
            raise VirlError(f"speed modifier {omega} outside [{low}, {high}]", {"omega": omega})
        return self.model_copy(update={"speed": omega})


def _fit(values: tuple[float, ...], joints: int) -> tuple[float, ...]:
    return tuple(float(v) for v in np.resize(np.asarray(values, dtype=np.float64), joints))


def _clip(
    class_id: int,
    name: str,
    bias: tuple[float, ...],
    harmonics: list[tuple[int, tuple[float, ...], tuple[float, ...]]],
    joints: int,
) -> MotionClip:
    return MotionClip(
        class_id=class_id,
        name=name,
        bias=_fit(bias, joints),
        harmonics=tuple(
            Harmonic(multiple=m, amplitudes=_fit(a, joints), offsets=_fit(o, joints))
            for m, a, o in harmonics
        ),
    )


def _base_clips(joints: int) -> list[MotionClip]:
    half = math.pi / 2
    return [
        # phase-offset sinusoid
        _clip(0, "walk", (0.0, 0.0, 0.0), [(1, (0.5, 0.7, 0.4), (0.0, half, math.pi))], joints),
        # same pattern at double frequency, larger swing
        _clip(1, "run", (0.0, 0.0, 0.0), [(2, (0.6, 0.9, 0.5), (0.0, half, math.pi))], joints),
        # crouch-extend: A (1 - cos 2 pi phi) / 2 with A = (0.8, -1.2, 0.9)
        _clip(2, "jump", (0.4, -0.6, 0.45), [(1, (0.4, 0.6, 0.45), (-half, half, -half))], joints),
        # asymmetric sway around a leaning posture
        _clip(
            3,
            "zombie",
            (0.3, 0.6, -0.2),
            [(1, (0.2, 0.1, 0.2), (0.0, 0.0, half)), (2, (0.1, 0.0, 0.1), (0.0, 0.0, 0.0))],
            joints,
        ),
    ]


def motion_library(k: int = 4, joints: int = 3) -> list[MotionClip]:
    """K distinct motion classes; the first four are walk, run, jump and zombie."""
    if k < 2:
        raise VirlError(f"motion library needs at least 2 classes, got {k}", {"k": k})
    clips = _base_clips(joints)[:k]
    for class_id in range(len(clips), k):
        offsets = tuple(class_id + j * TWO_PI / 3 for j in range(3))
        bias = (0.3 * math.cos(class_id), 0.3 * math.sin(class_id), -0.3 * math.cos(class_id))
        clips.append(
            _clip(class_id, f"motion{class_id}", bias, [(class_id - 1, (0.5, 0.5, 0.5), offsets)], joints)
        )
    return clips


def clip_by_name(name: str, library: list[MotionClip]) -> MotionClip:
    for clip in library:
        if clip.name == name:
            return clip
    raise VirlError(
        f"unknown motion clip {name!r}",
        {"available": [c.name for c in library]},
    )


def class_separation(a: MotionClip, b: MotionClip, grid: int = 512) -> float:
    """Mean over a phase grid of the L2 distance between the two clips' joint angles."""
    phases = np.arange(grid) / grid
    return float(np.mean(np.linalg.norm(a.angles(phases) - b.angles(phases), axis=-1)))


def sample_speed(rng: np.random.Generator, warp: bool, low: Optional[float] = None) -> float:
    if not warp:
        return 1.0
    lo, hi = WARP_RANGE
    return float(rng.uniform(lo if low is None else low, hi))
