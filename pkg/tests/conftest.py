"""Pytest fixtures for virl testing.

Small architectures and tiny run configs keep the suite fast; the full-size
stack is only exercised by tests marked ``slow``.
"""

from unittest.mock import AsyncMock, MagicMock

import numpy as np
import pytest
from fastmcp import Context

from virl.config import RunConfig, build_config
from virl.env import EnvConfig, motion_library
from virl.nets import MetricArchitecture, SiameseNetwork
from virl.sequences import MotionSequence


@pytest.fixture
def mock_ctx():
    """Create a mock FastMCP Context for testing tool functions.

    This fixture provides a mock that satisfies ctx.info(), ctx.error(),
    ctx.debug(), etc. calls without requiring a real MCP session.
    """
    ctx = MagicMock(spec=Context)
    ctx.info = AsyncMock()
    ctx.error = AsyncMock()
    ctx.debug = AsyncMock()
    ctx.warning = AsyncMock()
    return ctx


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


@pytest.fixture
def small_arch() -> MetricArchitecture:
    """16x16 frames: conv1 -> 6x6, conv2 -> 2x2."""
    return MetricArchitecture(frame_size=16, dense_units=16, embed_dim=8, lstm_hidden=8)


@pytest.fixture
def small_net(small_arch) -> SiameseNetwork:
    return SiameseNetwork(small_arch, rng=np.random.default_rng(7))


@pytest.fixture
def env_config() -> EnvConfig:
    return EnvConfig(frame_size=16, episode_steps=12)


@pytest.fixture
def walk(env_config):
    return motion_library(4, env_config.joints)[0]


def make_sequence(rng: np.random.Generator, length: int = 6, size: int = 16, class_id: int = 0) -> MotionSequence:
    return MotionSequence(frames=rng.random((length, size, size)), class_id=class_id)


@pytest.fixture
def sequence_factory():
    """Random-pixel sequences: never frame-constant, never palindromic."""
    return make_sequence


@pytest.fixture
def tiny_values(tmp_path) -> dict:
    """Settings for a run that finishes in seconds."""
    return {
        "seed": 1,
        "rounds": 2,
        "out": str(tmp_path / "run"),
        "classes": 2,
        "env_frame_size": 16,
        "env_episode_steps": 8,
        "metric_steps_per_round": 2,
        "metric_batch_size": 4,
        "metric_library_per_class": 2,
        "metric_library_length": 6,
        "metric_dense_units": 16,
        "metric_embed_dim": 8,
        "metric_lstm_hidden": 8,
        "pretrain_steps": 3,
        "rl_samples_per_round": 24,
        "rl_hidden": (8, 8),
        "value_steps_per_round": 2,
        "eval_episodes": 2,
    }


@pytest.fixture
def tiny_config(tiny_values) -> RunConfig:
    return build_config(tiny_values)
