"""Run configuration: one flat, documented key set loaded from several sources.

Priority, lowest to highest: model defaults < ``VIRL_<KEY>`` environment
variables (a ``.env`` file is honoured) < the ``key=value`` config file < CLI
flags.
"""

import hashlib
import logging
import os
from pathlib import Path
from typing import Any, Literal, Mapping, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .env import EnvConfig
from .errors import ConfigError
from .metric import MetricLossWeights
from .models import DistanceMode, RewardKind
from .nets import MetricArchitecture

logger = logging.getLogger(__name__)

ENV_PREFIX = "VIRL_"


class RunConfig(BaseModel):
    """Every setting of a run. Unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    # Run
    seed: int = Field(default=0, description="Master seed; every random stream is derived from it")
    rounds: int = Field(default=100, ge=0, description="Training rounds (collect, metric step, policy step)")
    out: str = Field(default="runs/virl", description="Output directory for checkpoints and metrics")
    clip: str = Field(default="walk", description="Demonstration clip to imitate")
    classes: int = Field(default=4, ge=2, description="Number of motion classes K in the multitask library")
    mode: DistanceMode = Field(default="combined", description="Distance terms feeding the reward")
    reward: RewardKind = Field(default="normalized", description="normalized: exp(w_d d^2); negdist: -d")
    reward_source: Literal["metric", "oracle"] = Field(
        default="metric", description="oracle trains on the hidden pose reward (diagnostic only)"
    )
    checkpoint_every: int = Field(default=10, ge=1, description="Rounds between periodic checkpoints")
    metric_checkpoint: str = Field(default="", description="Pretrained metric checkpoint to start from")
    record_wall_time: bool = Field(default=False, description="Write real wall time to the metrics CSV")
    eval_episodes: int = Field(default=10, ge=1, description="Episodes per evaluation")

    # Environment
    env_control_rate: float = Field(default=30.0, gt=0.0, description="Control steps per second")
    env_frame_size: int = Field(default=32, ge=12, description="Frame side in pixels (multiple of 4)")
    env_episode_steps: int = Field(default=64, ge=8, description="Episode cap T")
    env_rsi: bool = Field(default=True, description="Reference state initialisation")
    env_warp: bool = Field(default=False, description="Replay the demonstration at random speeds")
    env_terminate_on_contact: bool = Field(default=True, description="End episodes on ground contact")
    env_kp: float = Field(default=20.0, ge=0.0, description="PD proportional gain")
    env_kd: float = Field(default=2.0, ge=0.0, description="PD derivative gain")
    env_substeps: int = Field(default=4, ge=1, description="Physics substeps per control step")

    # Distance metric
    metric_lr: float = Field(default=1e-4, ge=0.0, description="Metric learning rate")
    metric_steps_per_round: int = Field(default=20, ge=0, description="Metric gradient steps per update")
    metric_update_every: int = Field(default=1, ge=1, description="Rounds between metric updates")
    metric_batch_size: int = Field(default=16, ge=1, description="Labelled pairs per metric step")
    metric_mix: float = Field(default=0.5, ge=0.0, le=1.0, description="Fraction of augmentation pairs")
    metric_min_crop: int = Field(default=4, ge=2, description="Shortest cropped window")
    metric_memory_capacity: int = Field(default=200, ge=1, description="Experience memory size in episodes")
    metric_library_per_class: int = Field(default=8, ge=1, description="Rendered library clips per class")
    metric_library_length: int = Field(default=16, ge=2, description="Frames per library clip")
    metric_w_triplet: float = Field(default=1.0, ge=0.0, description="Triplet loss weight")
    metric_w_vae: float = Field(default=1e-3, ge=0.0, description="beta of the VAE KL term")
    metric_w_seq_ae: float = Field(default=0.1, ge=0.0, description="Sequence autoencoder weight")
    metric_margin: float = Field(default=1.0, gt=0.0, description="Triplet margin rho")
    metric_w_d: float = Field(default=-5.0, lt=0.0, description="Reward width w_d")
    metric_dropout: float = Field(default=0.2, ge=0.0, lt=1.0, description="Dropout between conv layers")
    metric_dense_units: int = Field(default=256, ge=1, description="Frame encoder dense width")
    metric_embed_dim: int = Field(default=64, ge=1, description="Embedding size of e_t and h_t")
    metric_lstm_hidden: int = Field(default=128, ge=1, description="LSTM hidden units")
    pretrain_steps: int = Field(default=2000, ge=0, description="Metric steps run by pretrain-metric")

    # Reinforcement learning
    rl_samples_per_round: int = Field(default=2048, ge=1, description="Environment steps collected per round")
    rl_workers: int = Field(default=1, ge=1, description="Rollout worker threads")
    rl_gamma: float = Field(default=0.95, ge=0.0, lt=1.0, description="Discount gamma")
    rl_lambda: float = Field(default=0.95, ge=0.0, le=1.0, description="GAE lambda")
    rl_max_kl: float = Field(default=0.01, gt=0.0, description="KL budget per policy update")
    rl_max_backtracks: int = Field(default=10, ge=1, description="Line-search halvings")
    rl_hidden: tuple[int, ...] = Field(default=(512, 256), description="Policy/value hidden sizes, comma separated")
    rl_init_std: float = Field(default=0.2, gt=0.0, description="Initial action standard deviation")
    rl_learn_std: bool = Field(default=False, description="Optimise the log-std vector")
    rl_value_lr: float = Field(default=1e-3, ge=0.0, description="Value function learning rate")
    value_steps_per_round: int = Field(default=10, ge=0, description="Value regression steps per round")

    @field_validator("rl_hidden", mode="before")
    @classmethod
    def _split_sizes(cls, value: Any) -> Any:
        if isinstance(value, str):
            return tuple(int(v) for v in value.replace(" ", "").split(",") if v)
        return value

    @field_validator("env_frame_size")
    @classmethod
    def _frame_multiple_of_four(cls, value: int) -> int:
        if value % 4:
            raise ValueError(f"frame size must be a multiple of 4, got {value}")
        return value

    # Derived settings

    def env_config(self) -> EnvConfig:
        return EnvConfig(
            control_rate=self.env_control_rate,
            frame_size=self.env_frame_size,
            episode_steps=self.env_episode_steps,
            terminate_on_contact=self.env_terminate_on_contact,
            rsi=self.env_rsi,
            warp=self.env_warp,
            kp=self.env_kp,
            kd=self.env_kd,
            substeps=self.env_substeps,
        )

    def architecture(self) -> MetricArchitecture:
        return MetricArchitecture(
            frame_size=self.env_frame_size,
            dense_units=self.metric_dense_units,
            embed_dim=self.metric_embed_dim,
            lstm_hidden=self.metric_lstm_hidden,
            dropout=self.metric_dropout,
        )

    def loss_weights(self) -> MetricLossWeights:
        return MetricLossWeights(
            w_triplet=self.metric_w_triplet,
            w_vae=self.metric_w_vae,
            w_seq_ae=self.metric_w_seq_ae,
            margin=self.metric_margin,
            w_d=self.metric_w_d,
        )

    # Serialisation

    def dump(self) -> str:
        """Canonical ``key=value`` text; ``parse_config_text`` reads it back."""
        return "".join(f"{key}={_format(getattr(self, key))}\n" for key in type(self).model_fields)

    def config_hash(self) -> str:
        return hashlib.sha256(self.dump().encode("utf-8")).hexdigest()[:16]

    def save(self, path: Path | str) -> Path:
        path = Path(path)
        path.write_text(self.dump(), encoding="utf-8")
        return path

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        return build_config({**self.model_dump(), **overrides})


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def describe_keys() -> str:
    """One line per key: name, default and description (for ``--help-config``)."""
    lines = []
    for key, field in RunConfig.model_fields.items():
        lines.append(f"{key:<26} default={_format(field.default):<12} {field.description}")
    return "\n".join(lines)


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(
                f"{source}:{lineno}: expected key=value, got {raw.strip()!r}",
                {"line": lineno, "source": source},
            )
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def environment_values(environ: Optional[Mapping[str, str]] = None) -> dict[str, str]:
    """``VIRL_<KEY>`` variables for known keys."""
    environ = os.environ if environ is None else environ
    values = {}
    for key in RunConfig.model_fields:
        name = f"{ENV_PREFIX}{key.upper()}"
        if name in environ:
            values[key] = environ[name]
    return values


def build_config(values: Mapping[str, Any]) -> RunConfig:
    unknown = sorted(set(values) - set(RunConfig.model_fields))
    if unknown:
        raise ConfigError(
            f"unknown config keys: {', '.join(unknown)}",
            {"unknown": unknown},
            suggestion="Run `virl train --help-config` to list the valid keys",
        )
    try:
        return RunConfig(**values)
    except ValidationError as e:
        problems = [
            {"key": ".".join(str(p) for p in err["loc"]), "message": err["msg"]} for err in e.errors()
        ]
        raise ConfigError("invalid config values", {"errors": problems}) from e


def load_run_config(
    path: Optional[Path | str] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
    dotenv: bool = True,
) -> RunConfig:
    """Merge defaults, environment, the config file and explicit overrides."""
    if dotenv and environ is None:
        load_dotenv()
    values: dict[str, Any] = dict(environment_values(environ))
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}", {"path": str(path)}) from e
        values.update(parse_config_text(text, source=str(path)))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    config = build_config(values)
    logger.debug("resolved run config", extra={"config_hash": config.config_hash()})
    return config
