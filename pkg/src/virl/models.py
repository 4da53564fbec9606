"""Pydantic data models for reports, records and structured errors.

This module defines the structures that leave the library: loss and update
reports, per-round metrics rows, evaluation summaries, gradient-check results,
and the ErrorDetail payload used by the CLI and the MCP tools.
"""

from typing import Any, Literal, Optional

from pydantic import BaseModel, Field

# Error type definitions
ErrorType = Literal[
    "shape_mismatch",
    "non_finite",
    "backward_before_forward",
    "empty_sequence",
    "sequence_too_short",
    "degenerate_sequence",
    "length_mismatch",
    "empty_sources",
    "non_finite_loss",
    "non_finite_gradient",
    "config_error",
    "checkpoint_error",
    "invalid_action",
    "empty_trajectory",
    "execution_error",
]

DistanceMode = Literal["spatial", "temporal", "combined"]
RewardKind = Literal["normalized", "negdist"]


class ErrorDetail(BaseModel):
    """Detailed error information for failed operations."""

    error_type: ErrorType = Field(description="Category of error that occurred")
    message: str = Field(description="Human-readable error message")
    details: Optional[dict[str, Any]] = Field(
        default=None,
        description="Additional context (offending op, node id, sample index, ...)",
    )
    suggestion: Optional[str] = Field(
        default=None,
        description="Suggested resolution or next steps",
    )


class LossReport(BaseModel):
    """Mean loss components of one metric training step."""

    triplet: float = Field(description="Mean triplet (Siamese) loss over the batch")
    vae: float = Field(description="Mean VAE loss (beta-weighted KL + Bernoulli cross-entropy)")
    seq_ae: float = Field(description="Mean sequence-autoencoder reconstruction loss")
    total: float = Field(description="Weighted total that was differentiated")
    batch_size: int = Field(description="Number of labelled pairs in the batch")


class PolicyUpdateReport(BaseModel):
    """Outcome of one KL-constrained policy update."""

    accepted: bool = Field(description="Whether a line-search candidate satisfied both conditions")
    kl: float = Field(description="Measured mean KL(pi_old || pi_new) of the applied step (0 if rejected)")
    surrogate_gain: float = Field(description="Surrogate improvement of the applied step")
    step_fraction: float = Field(description="Fraction of the initial step that was accepted")
    tries: int = Field(description="Line-search candidates evaluated")
    grad_norm: float = Field(description="L2 norm of the surrogate gradient")
    reason: str = Field(default="", description="Why the update was rejected, empty when accepted")


class MetricsRow(BaseModel):
    """One row of the per-round metrics CSV; field order is the column order."""

    round: int
    env_steps: int
    mean_metric_reward: float
    mean_oracle_return: float
    mean_episode_length: float
    triplet: float
    vae: float
    seq_ae: float
    policy_kl: float
    value_mse: float
    wall_time: float

    @classmethod
    def columns(cls) -> list[str]:
        return list(cls.model_fields)

    def csv_values(self) -> list[str]:
        out = []
        for name in self.columns():
            value = getattr(self, name)
            out.append(str(value) if isinstance(value, int) else f"{value:.6f}")
        return out


class EvalReport(BaseModel):
    """Oracle-return statistics of a policy over evaluation episodes."""

    episodes: int = Field(description="Number of evaluation episodes")
    mean_return: float = Field(description="Mean undiscounted oracle return")
    std_return: float = Field(description="Standard deviation of the oracle return")
    mean_length: float = Field(description="Mean episode length in control steps")


class GradCheckResult(BaseModel):
    """Result of comparing analytic and central-difference gradients."""

    name: str = Field(description="What was checked")
    max_rel_error: float = Field(description="Max relative error over sampled coordinates")
    coords_checked: int = Field(description="Number of coordinates compared")
    kinks_skipped: int = Field(default=0, description="Coordinates straddling a ReLU/hinge kink")
    tolerance: float = Field(description="Pass threshold")
    passed: bool = Field(description="max_rel_error <= tolerance and all differences finite")
