"""Policy-gradient learning on pose states with a learned reward."""

from .advantage import discounted_returns, gae, normalize
from .policy import GaussianPolicy, ValueFunction
from .rollout import (
    Trajectory,
    assign_rewards,
    build_policy_batch,
    collect_episode,
    collect_round,
    evaluate_policy,
)
from .trpo import PolicyBatch, policy_update, value_update

__all__ = [
    "GaussianPolicy",
    "PolicyBatch",
    "Trajectory",
    "ValueFunction",
    "assign_rewards",
    "build_policy_batch",
    "collect_episode",
    "collect_round",
    "discounted_returns",
    "evaluate_policy",
    "gae",
    "normalize",
    "policy_update",
    "value_update",
]
