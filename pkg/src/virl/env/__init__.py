"""Planar articulated-chain environment, demonstration clips and frame rendering."""

from .chain import (
    ChainEnv,
    EnvConfig,
    Observation,
    PoseState,
    StepResult,
    below_ground,
    demo_frames,
    library_sequences,
    oracle_reward,
    rest_pose,
    state_dim,
    wrap_angle,
)
from .clips import MotionClip, class_separation, clip_by_name, motion_library
from .render import joint_positions, read_pgm, render_chain, write_pgm, write_sequence

__all__ = [
    "ChainEnv",
    "EnvConfig",
    "MotionClip",
    "Observation",
    "PoseState",
    "StepResult",
    "below_ground",
    "class_separation",
    "clip_by_name",
    "demo_frames",
    "joint_positions",
    "library_sequences",
    "motion_library",
    "oracle_reward",
    "read_pgm",
    "render_chain",
    "rest_pose",
    "state_dim",
    "wrap_angle",
    "write_pgm",
    "write_sequence",
]
