"""Discounted returns and generalized advantage estimation."""

import numpy as np

from ..errors import EmptyTrajectoryError, VirlError


def _check(rewards: np.ndarray, gamma: float, lam: float = 1.0) -> np.ndarray:
    rewards = np.asarray(rewards, dtype=np.float64).reshape(-1)
    if rewards.size == 0:
        raise EmptyTrajectoryError("cannot compute returns of an empty trajectory")
    if not 0.0 <= gamma < 1.0:
        raise VirlError(f"discount gamma must lie in [0, 1), got {gamma}", {"gamma": gamma})
    if not 0.0 <= lam <= 1.0:
        raise VirlError(f"GAE lambda must lie in [0, 1], got {lam}", {"lambda": lam})
    return rewards


def discounted_returns(rewards: np.ndarray, gamma: float, bootstrap: float = 0.0) -> np.ndarray:
    """G_t = sum_{k >= t} gamma^(k-t) r_k, plus gamma^(T-t) * bootstrap."""
    rewards = _check(rewards, gamma)
    returns = np.empty_like(rewards)
    running = bootstrap
    for t in range(len(rewards) - 1, -1, -1):
        running = rewards[t] + gamma * running
        returns[t] = running
    return returns


def gae(
    rewards: np.ndarray,
    values: np.ndarray,
    gamma: float,
    lam: float,
    last_value: float = 0.0,
) -> np.ndarray:
    """A_t = sum_k (gamma lam)^k delta_{t+k}, delta_t = r_t + gamma V_{t+1} - V_t.

    ``last_value`` is V(s_T): the value of the final state after a time-limit
    truncation, 0 after a termination.
    """
    rewards = _check(rewards, gamma, lam)
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.shape != rewards.shape:
        raise VirlError("values and rewards differ in length", {"values": values.size, "rewards": rewards.size})
    next_values = np.append(values[1:], last_value)
    deltas = rewards + gamma * next_values - values
    advantages = np.empty_like(rewards)
    running = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        running = deltas[t] + gamma * lam * running
        advantages[t] = running
    return advantages


def normalize(advantages: np.ndarray) -> np.ndarray:
    """Zero mean and unit standard deviation; a constant batch maps to zeros."""
    advantages = np.asarray(advantages, dtype=np.float64)
    if advantages.size == 0:
        raise EmptyTrajectoryError("cannot normalise an empty advantage batch")
    centered = advantages - advantages.mean()
    std = centered.std()
    if std < 1e-12:
        return np.zeros_like(centered)
    return centered / std
