"""The finite-difference gradient suite run by ``virl gradcheck``.

Primitives are checked at 1e-4 relative error; composed graphs (the full
metric loss with and without dropout, an unrolled LSTM, the policy
log-density) at 1e-3.
"""

import logging
from typing import Callable

import numpy as np

from .autodiff import (
    ParameterStore,
    Tensor,
    concat,
    conv2d,
    conv_transpose2d,
    dropout,
    dropout_mask,
    exp,
    grad_check,
    l2_norm,
    log,
    matmul,
    mean,
    relu,
    reshape,
    sigmoid,
    slice_,
    softplus,
    square,
    sum_,
    tanh,
)
from .metric import MetricLossWeights, sample_loss
from .models import GradCheckResult
from .nets import MetricArchitecture, SiameseNetwork
from .nets.layers import add_lstm, lstm_cell, zero_state
from .rl import GaussianPolicy
from .sequences import LabeledPair, MotionSequence

logger = logging.getLogger(__name__)

PRIMITIVE_TOL = 1e-4
COMPOSED_TOL = 1e-3

# Small enough for a fast suite, large enough to exercise both conv layers
GRADCHECK_ARCH = MetricArchitecture(frame_size=16, dense_units=16, embed_dim=8, lstm_hidden=8)


def _store(rng: np.random.Generator, **shapes: tuple[int, ...]) -> ParameterStore:
    store = ParameterStore()
    for name, shape in shapes.items():
        store.add(name, rng.standard_normal(shape) * 0.5)
    return store


def _primitive_cases(rng: np.random.Generator) -> list[tuple[str, Callable[[ParameterStore], Tensor], ParameterStore]]:
    weights = rng.standard_normal((3, 4))
    mask = dropout_mask((3, 4), 0.5, np.random.default_rng(7))
    x = lambda s: s.tensor("x")  # noqa: E731
    cases = [
        ("add", lambda s: sum_((x(s) + s.tensor("y")) * Tensor(weights)), _store(rng, x=(3, 4), y=(4,))),
        ("sub", lambda s: sum_((x(s) - s.tensor("y")) * Tensor(weights)), _store(rng, x=(3, 4), y=(3, 4))),
        ("mul", lambda s: sum_(x(s) * s.tensor("y")), _store(rng, x=(3, 4), y=(3, 1))),
        ("neg", lambda s: sum_(-x(s) * Tensor(weights)), _store(rng, x=(3, 4))),
        ("relu", lambda s: sum_(relu(x(s)) * Tensor(weights)), _store(rng, x=(3, 4))),
        ("sigmoid", lambda s: sum_(sigmoid(x(s)) * Tensor(weights)), _store(rng, x=(3, 4))),
        ("tanh", lambda s: sum_(tanh(x(s)) * Tensor(weights)), _store(rng, x=(3, 4))),
        ("dropout", lambda s: sum_(dropout(x(s), mask) * Tensor(weights)), _store(rng, x=(3, 4))),
        ("exp", lambda s: sum_(exp(x(s)) * Tensor(weights)), _store(rng, x=(3, 4))),
        ("log", lambda s: sum_(log(square(x(s)) + 0.5)), _store(rng, x=(3, 4))),
        ("softplus", lambda s: sum_(softplus(x(s)) * Tensor(weights)), _store(rng, x=(3, 4))),
        ("mean", lambda s: sum_(mean(square(x(s)), axis=0) * Tensor(weights[0])), _store(rng, x=(3, 4))),
        ("reshape", lambda s: sum_(reshape(x(s), (4, 3)) * Tensor(weights.reshape(4, 3))), _store(rng, x=(3, 4))),
        (
            "concat",
            lambda s: sum_(concat([x(s), s.tensor("y")], axis=1) * Tensor(_fixed((3, 6)))),
            _store(rng, x=(3, 4), y=(3, 2)),
        ),
        ("slice", lambda s: sum_(square(slice_(x(s), (slice(None), slice(1, 3))))), _store(rng, x=(3, 4))),
        ("l2_norm", lambda s: sum_(l2_norm(x(s))), _store(rng, x=(3, 4))),
        (
            "matmul",
            lambda s: sum_(matmul(x(s), s.tensor("y")) * Tensor(_fixed((3, 2)))),
            _store(rng, x=(3, 4), y=(4, 2)),
        ),
        (
            "conv2d",
            lambda s: sum_(conv2d(s.tensor("x"), s.tensor("w"), 2) * Tensor(_fixed((1, 2, 3, 3)))),
            _store(rng, x=(1, 1, 8, 8), w=(2, 1, 4, 4)),
        ),
        (
            "conv_transpose2d",
            lambda s: sum_(conv_transpose2d(s.tensor("x"), s.tensor("w"), 2) * Tensor(_fixed((1, 1, 8, 8)))),
            _store(rng, x=(1, 2, 3, 3), w=(2, 1, 4, 4)),
        ),
    ]
    return cases


def _fixed(shape: tuple[int, ...]) -> np.ndarray:
    """Deterministic output weights, so every evaluation of a case sees the same graph."""
    return np.random.default_rng(1234).standard_normal(shape)


def _metric_case(seed: int, dropout_rate: float = 0.0) -> tuple[Callable[[ParameterStore], Tensor], ParameterStore]:
    # the noise stream is rebuilt per evaluation, so every evaluation draws the same dropout mask
    arch = GRADCHECK_ARCH.model_copy(update={"dropout": dropout_rate})
    rng = np.random.default_rng(seed)
    net = SiameseNetwork(arch, rng=rng)
    frames = rng.random((2, 3, arch.frame_size, arch.frame_size))
    weights = MetricLossWeights()
    pairs = [
        LabeledPair(
            anchor=MotionSequence(frames=frames[0]),
            other=MotionSequence(frames=frames[1]),
            y=y,
            provenance="gradcheck",
        )
        for y in (0, 1)
    ]

    def loss(store: ParameterStore) -> Tensor:
        model = SiameseNetwork(arch, store=store)
        noise = np.random.default_rng(seed + 1)
        total = None
        for pair in pairs:
            parts = sample_loss(model, pair, weights, noise)
            term = parts.triplet * weights.w_triplet + parts.vae + parts.seq_ae * weights.w_seq_ae
            total = term if total is None else total + term
        return total

    return loss, net.store


def _lstm_case(seed: int) -> tuple[Callable[[ParameterStore], Tensor], ParameterStore]:
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    add_lstm(store, "lstm", 4, 5, rng)
    inputs = rng.standard_normal((3, 2, 4))
    readout = rng.standard_normal((2, 5))

    def unrolled(s: ParameterStore) -> Tensor:
        state = zero_state(2, 5)
        for t in range(3):
            state = lstm_cell(s, "lstm", Tensor(inputs[t]), state)
        return sum_(state.h * Tensor(readout))

    return unrolled, store


def _policy_case(seed: int) -> tuple[Callable[[ParameterStore], Tensor], ParameterStore]:
    rng = np.random.default_rng(seed)
    policy = GaussianPolicy(8, 3, hidden=(6, 5), rng=rng, learn_std=True)
    states = rng.standard_normal((4, 8))
    actions = rng.standard_normal((4, 3)) * 0.3

    def log_density(store: ParameterStore) -> Tensor:
        model = GaussianPolicy(8, 3, hidden=(6, 5), store=store, learn_std=True)
        return sum_(model.log_prob(states, actions))

    return log_density, policy.store


def run_gradcheck_suite(seed: int = 0, max_coords: int = 6) -> list[GradCheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    for name, fn, store in _primitive_cases(rng):
        results.append(
            grad_check(fn, store, eps=1e-6, max_coords=max_coords, tolerance=PRIMITIVE_TOL, rng=rng, name=name)
        )
    composed = (
        ("metric_loss", _metric_case),
        ("metric_loss_dropout", lambda s: _metric_case(s, dropout_rate=0.2)),
        ("lstm_3_steps", _lstm_case),
        ("policy_log_prob", _policy_case),
    )
    for name, build in composed:
        fn, store = build(seed)
        results.append(
            grad_check(fn, store, eps=1e-6, max_coords=max_coords, tolerance=COMPOSED_TOL, rng=rng, name=name)
        )
    failed = [r.name for r in results if not r.passed]
    logger.info("gradient suite finished", extra={"checks": len(results), "failed": failed})
    return results
