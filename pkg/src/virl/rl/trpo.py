"""KL-constrained policy update and value regression."""

import logging
import math
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..autodiff import Adam, ParameterStore, Tensor, mean
from ..errors import EmptyTrajectoryError, NonFiniteGradientError
from ..models import PolicyUpdateReport
from .policy import GaussianPolicy, ValueFunction

logger = logging.getLogger(__name__)

TRIAL_STEP = 1e-2


class PolicyBatch(BaseModel):
    """Everything the learner may see: no frames, no oracle values."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    states: np.ndarray = Field(description="(N, state_dim) pose states")
    actions: np.ndarray = Field(description="(N, action_dim) sampled actions")
    log_probs: np.ndarray = Field(description="(N,) log-probabilities under the behaviour policy")
    advantages: np.ndarray = Field(description="(N,) normalised advantages")
    returns: np.ndarray = Field(description="(N,) discounted returns (value targets)")

    def __len__(self) -> int:
        return int(self.states.shape[0])


def flat_values(store: ParameterStore, names: list[str]) -> np.ndarray:
    return np.concatenate([store.value(n).reshape(-1).astype(np.float64) for n in names])


def flat_grads(store: ParameterStore, names: list[str]) -> np.ndarray:
    return np.concatenate([store.grad(n).reshape(-1).astype(np.float64) for n in names])


def assign_flat(store: ParameterStore, names: list[str], vector: np.ndarray) -> None:
    offset = 0
    for name in names:
        shape = store.value(name).shape
        size = int(np.prod(shape)) if shape else 1
        store.set_value(name, vector[offset : offset + size].reshape(shape))
        offset += size


def _surrogate(policy: GaussianPolicy, batch: PolicyBatch) -> float:
    """mean(exp(log pi - log pi_old) * A): the importance-weighted surrogate."""
    log_probs = policy.log_prob(batch.states, batch.actions).numpy().astype(np.float64)
    ratio = np.exp(np.clip(log_probs - batch.log_probs, -50.0, 50.0))
    return float(np.mean(ratio * batch.advantages))


def policy_update(
    policy: GaussianPolicy,
    batch: PolicyBatch,
    max_kl: float = 0.01,
    max_backtracks: int = 10,
    min_batch: int = 1,
) -> PolicyUpdateReport:
    """Ascend grad mean(log pi(a|s) * A) with a backtracking line search.

    A trial step estimates the KL curvature along the gradient so the first
    candidate lands near ``max_kl``; the step is halved until the measured mean
    KL(pi_old || pi_new) is within ``max_kl`` and the surrogate improved. If no
    candidate qualifies the parameters are restored.
    """
    if len(batch) < min_batch:
        raise EmptyTrajectoryError(
            f"policy update needs at least {min_batch} samples, got {len(batch)}",
            {"samples": len(batch), "min_batch": min_batch},
        )
    if max_kl <= 0:
        raise ValueError(f"max_kl must be positive, got {max_kl}")

    store = policy.store
    names = policy.trainable_names()
    old_mean = policy.mean_numpy(batch.states)
    old_log_std = policy.log_std_value().astype(np.float64).copy()
    theta0 = flat_values(store, names)

    store.zero_grad()
    objective = mean(policy.log_prob(batch.states, batch.actions) * Tensor(batch.advantages))
    objective.backward()
    grad = flat_grads(store, names)
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradientError(
            "policy gradient is not finite",
            {"non_finite": int(np.sum(~np.isfinite(grad))), "objective": objective.item()},
        )
    grad_norm = float(np.linalg.norm(grad))
    if grad_norm == 0.0:
        return PolicyUpdateReport(
            accepted=False, kl=0.0, surrogate_gain=0.0, step_fraction=0.0, tries=0,
            grad_norm=0.0, reason="zero gradient",
        )

    base = _surrogate(policy, batch)
    trial = TRIAL_STEP / grad_norm
    assign_flat(store, names, theta0 + trial * grad)
    trial_kl = policy.kl_from(batch.states, old_mean, old_log_std)
    # KL ~ 0.5 s^2 g'Fg along the gradient
    curvature = 2.0 * trial_kl / trial**2
    step = math.sqrt(2.0 * max_kl / curvature) if curvature > 0 else 1.0 / grad_norm

    tries = 0
    for k in range(max_backtracks):
        tries += 1
        fraction = 0.5**k
        assign_flat(store, names, theta0 + fraction * step * grad)
        kl = policy.kl_from(batch.states, old_mean, old_log_std)
        gain = _surrogate(policy, batch) - base
        if np.isfinite(kl) and kl <= max_kl and gain > 0:
            report = PolicyUpdateReport(
                accepted=True, kl=kl, surrogate_gain=gain, step_fraction=fraction,
                tries=tries, grad_norm=grad_norm,
            )
            logger.debug("policy step accepted", extra=report.model_dump())
            return report

    assign_flat(store, names, theta0)
    report = PolicyUpdateReport(
        accepted=False, kl=0.0, surrogate_gain=0.0, step_fraction=0.0, tries=tries,
        grad_norm=grad_norm, reason="no candidate met the KL bound with a surrogate gain",
    )
    logger.debug("policy step rejected", extra=report.model_dump())
    return report


def value_update(
    value_fn: ValueFunction,
    batch: PolicyBatch,
    optimizer: Adam,
    lr: Optional[float] = None,
) -> float:
    """One optimiser step on mean (V(s) - G)^2; returns the post-step MSE."""
    if len(batch) == 0:
        raise EmptyTrajectoryError("value update needs a nonempty batch")
    value_fn.store.zero_grad()
    loss = value_fn.mse(batch.states, batch.returns)
    loss.backward()
    optimizer.step(lr)
    return value_fn.mse(batch.states, batch.returns).item()
