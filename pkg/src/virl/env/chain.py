"""A planar articulated chain driven by joint PD controllers.

The chain stands on its root ("foot") at the origin. Each control step holds a
target pose for ``substeps`` semi-implicit Euler substeps of unit-inertia joint
dynamics. A demonstration clip runs alongside on its own phase clock; the agent
frame and the demo frame of every step are rendered from the same camera.
"""

import logging
import math
from typing import Any, NamedTuple, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..errors import InvalidActionError, VirlError
from ..sequences import MotionSequence
from .clips import MotionClip, sample_speed
from .render import VIEW_EXTENT, joint_positions, render_chain

logger = logging.getLogger(__name__)


class EnvConfig(BaseModel):
    """Chain environment settings."""

    control_rate: float = Field(default=30.0, gt=0.0, description="Control steps per second")
    frame_size: int = Field(default=32, ge=12, description="Rendered frame side in pixels")
    episode_steps: int = Field(default=64, ge=8, description="Episode cap T in control steps")
    terminate_on_contact: bool = Field(default=True, description="End episodes when a link touches the ground")
    rsi: bool = Field(default=True, description="Start episodes from a random demonstration phase")
    warp: bool = Field(default=False, description="Replay the demonstration at a random speed in [0.5, 2]")
    joints: int = Field(default=3, ge=1, description="Number of chain joints J")
    link_length: float = Field(default=0.25, gt=0.0, description="Length of every link")
    kp: float = Field(default=20.0, ge=0.0, description="Proportional gain")
    kd: float = Field(default=2.0, ge=0.0, description="Derivative gain")
    substeps: int = Field(default=4, ge=1, description="Physics substeps per control step")

    @property
    def dt(self) -> float:
        return 1.0 / self.control_rate


def wrap_angle(x: np.ndarray | float) -> np.ndarray:
    """Map angles to (-pi, pi]."""
    x = np.asarray(x, dtype=np.float64)
    return x - 2.0 * math.pi * np.ceil((x - math.pi) / (2.0 * math.pi))


class PoseState(BaseModel):
    """Physical state of the chain plus the demonstration clock."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    angles: np.ndarray
    velocities: np.ndarray
    root_pos: np.ndarray = Field(default_factory=lambda: np.zeros(2))
    root_vel: np.ndarray = Field(default_factory=lambda: np.zeros(2))
    phase: float = Field(default=0.0, ge=0.0, lt=1.0)

    def policy_features(self) -> np.ndarray:
        """Pose-only policy input: angles, velocities and the phase on the unit circle."""
        clock = [math.sin(2.0 * math.pi * self.phase), math.cos(2.0 * math.pi * self.phase)]
        return np.concatenate([self.angles, self.velocities, clock]).astype(np.float32)


def state_dim(joints: int) -> int:
    return 2 * joints + 2


def rest_pose(joints: int) -> PoseState:
    return PoseState(angles=np.zeros(joints), velocities=np.zeros(joints))


def oracle_reward(agent: np.ndarray, demo: np.ndarray) -> float:
    """exp(-2 * sum of squared wrapped joint errors); 1.0 for identical poses."""
    err = wrap_angle(np.asarray(agent) - np.asarray(demo))
    return float(np.exp(-2.0 * np.sum(err * err)))


def below_ground(angles: np.ndarray, link_length: float) -> bool:
    """True when any link endpoint other than the foot is under y = 0."""
    return bool(np.any(joint_positions(angles, link_length)[1:, 1] < 0.0))


class Observation(NamedTuple):
    pose: PoseState
    frame: np.ndarray
    demo_frame: np.ndarray


class StepResult(NamedTuple):
    pose: PoseState
    frame: np.ndarray
    demo_frame: np.ndarray
    done: bool
    info: dict[str, Any]


class ChainEnv:
    """One chain imitating one clip. Not thread-safe; use one instance per worker."""

    def __init__(self, config: EnvConfig, clip: MotionClip) -> None:
        if clip.joints != config.joints:
            raise VirlError(
                f"clip {clip.name!r} drives {clip.joints} joints, env has {config.joints}",
                {"clip_joints": clip.joints, "env_joints": config.joints},
            )
        self.config = config
        self.clip = clip
        self.cycle_steps = clip.cycle_duration * config.control_rate
        self._pose: Optional[PoseState] = None
        self._demo = clip
        self._steps = 0
        self._done = True

    @property
    def speed(self) -> float:
        return self._demo.speed

    @property
    def pose(self) -> PoseState:
        if self._pose is None:
            raise VirlError("environment used before reset")
        return self._pose

    def render(self, angles: np.ndarray) -> np.ndarray:
        return render_chain(angles, self.config.frame_size, self.config.link_length, VIEW_EXTENT)

    def demo_angles(self, phase: float) -> np.ndarray:
        return self._demo.angles(phase)

    def _observe(self) -> Observation:
        pose = self.pose
        return Observation(pose, self.render(pose.angles), self.render(self.demo_angles(pose.phase)))

    def reset(self, rng: np.random.Generator) -> Observation:
        cfg = self.config
        self._demo = self.clip.warped(sample_speed(rng, True)) if cfg.warp else self.clip
        if cfg.rsi:
            phase = float(rng.random())
            angles = wrap_angle(self._demo.angles(phase))
            velocities = self._demo.velocities(phase)
        else:
            phase = 0.0
            angles = np.zeros(cfg.joints)
            velocities = np.zeros(cfg.joints)
        self._pose = PoseState(angles=angles, velocities=velocities, phase=phase)
        self._steps = 0
        self._done = False
        return self._observe()

    def integrate(self, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Hold ``target`` for one control step; returns (angles, velocities)."""
        cfg = self.config
        h = cfg.dt / cfg.substeps
        theta = self.pose.angles.astype(np.float64).copy()
        omega = self.pose.velocities.astype(np.float64).copy()
        for _ in range(cfg.substeps):
            torque = cfg.kp * wrap_angle(target - theta) - cfg.kd * omega
            omega = omega + h * torque
            theta = theta + h * omega
        return wrap_angle(theta), omega

    def step(self, action: np.ndarray) -> StepResult:
        if self._done:
            raise VirlError("step called on a finished episode; call reset first")
        cfg = self.config
        action = np.asarray(action, dtype=np.float64).reshape(-1)
        if action.shape != (cfg.joints,):
            raise InvalidActionError(
                f"action must have {cfg.joints} entries, got {action.shape[0]}",
                {"shape": list(action.shape)},
            )
        if not np.all(np.isfinite(action)):
            raise InvalidActionError("action contains non-finite values", {"action": action.tolist()})
        target = np.clip(action, -math.pi, math.pi)

        angles, velocities = self.integrate(target)
        phase = float((self.pose.phase + self.speed / self.cycle_steps) % 1.0)
        self._pose = PoseState(angles=angles, velocities=velocities, phase=phase)
        self._steps += 1

        terminated = cfg.terminate_on_contact and below_ground(angles, cfg.link_length)
        truncated = self._steps >= cfg.episode_steps
        self._done = terminated or truncated
        obs = self._observe()
        info = {
            "oracle_reward": oracle_reward(angles, self.demo_angles(phase)),
            "terminated": terminated,
            "truncated": truncated and not terminated,
            "step": self._steps,
            "phase": phase,
        }
        return StepResult(obs.pose, obs.frame, obs.demo_frame, self._done, info)


def demo_frames(
    clip: MotionClip,
    config: EnvConfig,
    length: int,
    phase0: float = 0.0,
) -> np.ndarray:
    """(length, H, W) rendering of ``clip`` starting at ``phase0`` at the env's control rate."""
    cycle_steps = clip.cycle_duration * config.control_rate
    phases = (phase0 + np.arange(length) * clip.speed / cycle_steps) % 1.0
    angles = clip.angles(phases)
    return np.stack(
        [render_chain(a, config.frame_size, config.link_length, VIEW_EXTENT) for a in angles]
    ).astype(np.float32)


def library_sequences(
    library: list[MotionClip],
    config: EnvConfig,
    per_class: int,
    length: int,
    rng: np.random.Generator,
) -> list[MotionSequence]:
    """Render ``per_class`` clips of every class at random phases (and speeds, with warp on)."""
    sequences = []
    for clip in library:
        for _ in range(per_class):
            warped = clip.warped(sample_speed(rng, True)) if config.warp else clip
            frames = demo_frames(warped, config, length, phase0=float(rng.random()))
            sequences.append(MotionSequence(frames=frames, class_id=clip.class_id, speed=warped.speed))
    return sequences
