"""Gaussian policy and value networks over pose states."""

import logging
import math
from typing import Optional, Sequence

import numpy as np

from ..autodiff import ParameterStore, Tensor, exp, mean, relu, square, sum_
from ..errors import CheckpointError
from ..nets.layers import add_dense, dense

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
DEFAULT_STD = 0.2


def _add_mlp(
    store: ParameterStore,
    prefix: str,
    n_in: int,
    hidden: Sequence[int],
    n_out: int,
    rng: np.random.Generator,
    out_scale: float,
) -> None:
    sizes = [n_in, *hidden]
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        add_dense(store, f"{prefix}/fc{i + 1}", a, b, rng)
    add_dense(store, f"{prefix}/out", sizes[-1], n_out, rng)
    store.set_value(f"{prefix}/out/w", store.value(f"{prefix}/out/w") * out_scale)


def _mlp(store: ParameterStore, prefix: str, n_hidden: int, x: Tensor) -> Tensor:
    for i in range(n_hidden):
        x = relu(dense(store, f"{prefix}/fc{i + 1}", x))
    return dense(store, f"{prefix}/out", x)


def _check_prefix(store: ParameterStore, prefix: str, reference: ParameterStore) -> ParameterStore:
    selected = store.select(f"{prefix}/")
    if selected.arch_hash() != reference.arch_hash():
        raise CheckpointError(
            f"{prefix} network architecture hash mismatch",
            {"expected": reference.arch_hash(), "found": selected.arch_hash()},
            suggestion="Use the config the checkpoint was trained with",
        )
    return selected


class GaussianPolicy:
    """a ~ N(mu_theta(s), diag(sigma^2)) with a state-independent log-std vector.

    The log-std is stored with the other parameters so it is checkpointed; it is
    only optimised when ``learn_std`` is set.
    """

    def __init__(
        self,
        state_dim: int,
        action_dim: int,
        hidden: Sequence[int] = (512, 256),
        rng: Optional[np.random.Generator] = None,
        store: Optional[ParameterStore] = None,
        prefix: str = "policy",
        init_std: float = DEFAULT_STD,
        learn_std: bool = False,
    ) -> None:
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.hidden = tuple(hidden)
        self.prefix = prefix
        self.learn_std = learn_std
        if store is None:
            store = ParameterStore()
            self._init_params(store, rng or np.random.default_rng(0), init_std)
        self.store = store

    def _init_params(self, store: ParameterStore, rng: np.random.Generator, init_std: float) -> None:
        _add_mlp(store, self.prefix, self.state_dim, self.hidden, self.action_dim, rng, out_scale=0.1)
        store.add(f"{self.prefix}/log_std", np.full(self.action_dim, math.log(init_std)))

    @classmethod
    def from_store(
        cls,
        store: ParameterStore,
        state_dim: int,
        action_dim: int,
        hidden: Sequence[int],
        prefix: str = "policy",
        learn_std: bool = False,
    ) -> "GaussianPolicy":
        reference = cls(state_dim, action_dim, hidden, prefix=prefix)
        selected = _check_prefix(store, prefix, reference.store)
        return cls(state_dim, action_dim, hidden, store=selected, prefix=prefix, learn_std=learn_std)

    @property
    def log_std_name(self) -> str:
        return f"{self.prefix}/log_std"

    def trainable_names(self) -> list[str]:
        return [n for n in self.store.names() if self.learn_std or n != self.log_std_name]

    def log_std_value(self) -> np.ndarray:
        return self.store.value(self.log_std_name)

    def std(self) -> np.ndarray:
        return np.exp(self.log_std_value().astype(np.float64))

    def _log_std(self) -> Tensor:
        if self.learn_std:
            return self.store.tensor(self.log_std_name)
        return Tensor(self.log_std_value())

    def mean(self, states: np.ndarray) -> Tensor:
        return _mlp(self.store, self.prefix, len(self.hidden), Tensor(np.atleast_2d(states)))

    def mean_numpy(self, states: np.ndarray) -> np.ndarray:
        return self.mean(states).numpy().astype(np.float64)

    def log_prob(self, states: np.ndarray, actions: np.ndarray) -> Tensor:
        """Exact diagonal-Gaussian log density per row, shape (N,)."""
        mu = self.mean(states)
        log_std = self._log_std()
        z = (Tensor(np.atleast_2d(actions)) - mu) * exp(-log_std)
        return sum_(square(z), axis=1) * -0.5 - sum_(log_std) - 0.5 * self.action_dim * LOG_2PI

    def sample_action(self, state: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, float]:
        """Draw a = mu + sigma * n and return it with its log-probability."""
        mu = self.mean_numpy(state)[0]
        std = self.std()
        noise = rng.standard_normal(self.action_dim)
        action = mu + std * noise
        log_prob = float(-0.5 * np.sum(noise * noise) - np.sum(np.log(std)) - 0.5 * self.action_dim * LOG_2PI)
        return action, log_prob

    def kl_from(self, states: np.ndarray, old_mean: np.ndarray, old_log_std: np.ndarray) -> float:
        """Mean over ``states`` of KL(pi_old || pi_current), closed form."""
        new_mean = self.mean_numpy(states)
        new_log_std = self.log_std_value().astype(np.float64)
        old_var = np.exp(2.0 * old_log_std)
        new_var = np.exp(2.0 * new_log_std)
        kl = new_log_std - old_log_std + (old_var + (old_mean - new_mean) ** 2) / (2.0 * new_var) - 0.5
        return float(np.mean(np.sum(kl, axis=1)))


class ValueFunction:
    """V(s): an MLP with a scalar head."""

    def __init__(
        self,
        state_dim: int,
        hidden: Sequence[int] = (512, 256),
        rng: Optional[np.random.Generator] = None,
        store: Optional[ParameterStore] = None,
        prefix: str = "value",
    ) -> None:
        self.state_dim = state_dim
        self.hidden = tuple(hidden)
        self.prefix = prefix
        if store is None:
            store = ParameterStore()
            _add_mlp(store, prefix, state_dim, self.hidden, 1, rng or np.random.default_rng(0), out_scale=1.0)
        self.store = store

    @classmethod
    def from_store(
        cls, store: ParameterStore, state_dim: int, hidden: Sequence[int], prefix: str = "value"
    ) -> "ValueFunction":
        reference = cls(state_dim, hidden, prefix=prefix)
        return cls(state_dim, hidden, store=_check_prefix(store, prefix, reference.store), prefix=prefix)

    def predict(self, states: np.ndarray) -> Tensor:
        out = _mlp(self.store, self.prefix, len(self.hidden), Tensor(np.atleast_2d(states)))
        return sum_(out, axis=1)

    def predict_numpy(self, states: np.ndarray) -> np.ndarray:
        return self.predict(states).numpy().astype(np.float64)

    def mse(self, states: np.ndarray, targets: np.ndarray) -> Tensor:
        return mean(square(self.predict(states) - Tensor(np.asarray(targets))))
