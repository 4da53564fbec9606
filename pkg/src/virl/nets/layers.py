"""Parameter initialisation and the reusable layers (dense, LSTM cell)."""

from typing import NamedTuple

import numpy as np

from ..autodiff import ParameterStore, Tensor, matmul, sigmoid, slice_, tanh


class LSTMState(NamedTuple):
    h: Tensor
    c: Tensor


def glorot_uniform(
    rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int
) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def add_dense(store: ParameterStore, name: str, n_in: int, n_out: int, rng: np.random.Generator) -> None:
    store.add(f"{name}/w", glorot_uniform(rng, (n_in, n_out), n_in, n_out))
    store.add(f"{name}/b", np.zeros(n_out, dtype=np.float32))


def dense(store: ParameterStore, name: str, x: Tensor) -> Tensor:
    return matmul(x, store.tensor(f"{name}/w")) + store.tensor(f"{name}/b")


def add_conv(
    store: ParameterStore,
    name: str,
    shape: tuple[int, int, int, int],
    rng: np.random.Generator,
    bias_channels: int,
) -> None:
    """Kernel of ``shape`` plus a (1, bias_channels, 1, 1) bias broadcast over positions."""
    a, b, kh, kw = shape
    store.add(f"{name}/w", glorot_uniform(rng, shape, b * kh * kw, a * kh * kw))
    store.add(f"{name}/b", np.zeros((1, bias_channels, 1, 1), dtype=np.float32))


def add_lstm(
    store: ParameterStore,
    name: str,
    n_in: int,
    n_hidden: int,
    rng: np.random.Generator,
    forget_bias: float = 1.0,
) -> None:
    """Gate layout along the last axis: input, forget, cell, output."""
    store.add(f"{name}/W", glorot_uniform(rng, (n_in, 4 * n_hidden), n_in, 4 * n_hidden))
    store.add(f"{name}/U", glorot_uniform(rng, (n_hidden, 4 * n_hidden), n_hidden, 4 * n_hidden))
    bias = np.zeros(4 * n_hidden, dtype=np.float32)
    bias[n_hidden : 2 * n_hidden] = forget_bias
    store.add(f"{name}/b", bias)


def lstm_cell(store: ParameterStore, name: str, x: Tensor, state: LSTMState) -> LSTMState:
    n_hidden = store.value(f"{name}/U").shape[0]
    z = matmul(x, store.tensor(f"{name}/W")) + matmul(state.h, store.tensor(f"{name}/U"))
    z = z + store.tensor(f"{name}/b")
    i = sigmoid(slice_(z, (slice(None), slice(0, n_hidden))))
    f = sigmoid(slice_(z, (slice(None), slice(n_hidden, 2 * n_hidden))))
    g = tanh(slice_(z, (slice(None), slice(2 * n_hidden, 3 * n_hidden))))
    o = sigmoid(slice_(z, (slice(None), slice(3 * n_hidden, 4 * n_hidden))))
    c = f * state.c + i * g
    h = o * tanh(c)
    return LSTMState(h, c)


def zero_state(batch: int, n_hidden: int) -> LSTMState:
    return LSTMState(Tensor(np.zeros((batch, n_hidden))), Tensor(np.zeros((batch, n_hidden))))
