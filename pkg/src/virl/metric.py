"""The recurrent Siamese distance: losses, the training step and the RL reward.

A sequence is summarised for the triplet loss by f = concat(h_T, mean_t e_t).
Per-step distances for rewards compare e_t and h_t of the agent and demo
sequences, each encoded from a zero LSTM state with dropout off.
"""

import logging
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .autodiff import (
    Adam,
    Tensor,
    concat,
    exp,
    l2_norm,
    mean,
    relu,
    reshape,
    slice_,
    softplus,
    square,
    sum_,
)
from .errors import (
    EmptySequenceError,
    EmptySourcesError,
    LengthMismatchError,
    NonFiniteError,
    NonFiniteGradientError,
    NonFiniteLossError,
    VirlError,
)
from .models import DistanceMode, LossReport, RewardKind
from .nets import SequenceEncoding, SiameseNetwork
from .sequences import LabeledPair, MotionSequence, TripletBatch

logger = logging.getLogger(__name__)


class MetricLossWeights(BaseModel):
    """Weights of the metric objective and the reward transform."""

    w_triplet: float = Field(default=1.0, ge=0.0, description="Weight of the triplet loss")
    w_vae: float = Field(default=1e-3, ge=0.0, description="beta: weight of the KL term of the VAE loss")
    w_seq_ae: float = Field(default=0.1, ge=0.0, description="Weight of the sequence-autoencoder loss")
    margin: float = Field(default=1.0, gt=0.0, description="Triplet margin rho")
    w_d: float = Field(default=-5.0, lt=0.0, description="Reward width in exp(w_d * d^2)")


class DistanceProfile(BaseModel):
    """Per-step spatial and temporal distances between two equal-length sequences."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    spatial: np.ndarray = Field(description="d_e(t) = ||e^a_t - e^b_t||")
    temporal: np.ndarray = Field(description="d_h(t) = ||h^a_t - h^b_t||")
    mode: DistanceMode = "combined"

    @property
    def combined(self) -> np.ndarray:
        return self.spatial + self.temporal

    def selected(self) -> np.ndarray:
        if self.mode == "spatial":
            return self.spatial
        if self.mode == "temporal":
            return self.temporal
        return self.combined


class SampleLoss(NamedTuple):
    triplet: Tensor
    vae: Tensor
    seq_ae: Tensor


# Loss terms


def smoothed_distance(a: Tensor, b: Tensor) -> Tensor:
    """||a - b|| with the epsilon-smoothed norm, shifted so identical inputs give exactly 0."""
    diff = a - b
    floor = l2_norm(Tensor(np.zeros(diff.shape))).item()
    return l2_norm(diff) - floor


def contrastive_term(distance: Tensor, y: int, margin: float) -> Tensor:
    """y=1: the distance itself; y=0: the hinge max(margin - distance, 0)."""
    if y == 1:
        return distance
    return relu(margin - distance)


def sequence_code(encoding: SequenceEncoding) -> Tensor:
    """f = concat(h_T, mean_t e_t), shape (B, 2 * embed_dim)."""
    return concat([encoding.h[-1], mean(encoding.e, axis=1)], axis=1)


def _encode_pair(
    net: SiameseNetwork, pair: LabeledPair, rng: Optional[np.random.Generator]
) -> tuple[SequenceEncoding, np.ndarray]:
    a, b = pair.anchor.frames, pair.other.frames
    if len(a) == 0 or len(b) == 0:
        raise EmptySequenceError("triplet loss needs nonempty sequences")
    if len(a) != len(b):
        raise LengthMismatchError(f"pair members differ in length: {len(a)} vs {len(b)}")
    frames = np.stack([a, b])
    mask = net.dropout_mask(frames.shape[0] * frames.shape[1], rng)
    return net.encode_sequence(frames, mask), frames


def triplet_loss(
    net: SiameseNetwork,
    pair: LabeledPair,
    margin: float = 1.0,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    encoding, _ = _encode_pair(net, pair, rng)
    return _triplet_from_encoding(encoding, pair.y, margin)


def _triplet_from_encoding(encoding: SequenceEncoding, y: int, margin: float) -> Tensor:
    f = sequence_code(encoding)
    distance = smoothed_distance(slice_(f, 0), slice_(f, 1))
    return contrastive_term(distance, y, margin)


def gaussian_kl(mu: Tensor, logvar: Tensor) -> Tensor:
    """Per-row KL(N(mu, exp(logvar)) || N(0, I)) = 0.5 * sum(mu^2 + sigma^2 - 1 - log sigma^2)."""
    return sum_(square(mu) + exp(logvar) - 1.0 - logvar, axis=-1) * 0.5


def bernoulli_cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Per-frame mean over pixels of softplus(l) - t * l, the CE of sigmoid(l) against t."""
    n = logits.shape[0]
    per_pixel = softplus(logits) - logits * Tensor(targets)
    return mean(reshape(per_pixel, (n, int(np.prod(per_pixel.shape[1:])))), axis=1)


def target_entropy(targets: np.ndarray) -> np.ndarray:
    """Per-frame mean pixel entropy of Bernoulli targets; the CE lower bound."""
    t = np.clip(np.asarray(targets, dtype=np.float64), 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(np.where(t > 0, t * np.log(t), 0.0) + np.where(t < 1, (1 - t) * np.log1p(-t), 0.0))
    return h.reshape(h.shape[0], -1).mean(axis=1)


def vae_loss(
    net: SiameseNetwork,
    frames: np.ndarray,
    beta: float,
    rng: np.random.Generator,
    hidden: Optional[Tensor] = None,
) -> Tensor:
    """Mean over frames of beta * KL + reconstruction cross-entropy."""
    frames = np.asarray(frames)
    if frames.ndim == 2:
        frames = frames[None]
    sample = net.vae_encode_sample(frames, rng, hidden)
    logits = net.decode_image(sample.z)
    per_frame = gaussian_kl(sample.mu, sample.logvar) * beta + bernoulli_cross_entropy(logits, frames)
    return mean(per_frame)


def seq_ae_loss(net: SiameseNetwork, encoding: SequenceEncoding) -> Tensor:
    """MSE between decode_sequence(h_T, T) and the stop-gradient spatial embeddings."""
    length = encoding.length
    if length < 1:
        raise EmptySequenceError("sequence autoencoder needs a nonempty sequence")
    outputs = net.decode_sequence(encoding.h[-1], length)
    targets = encoding.e.detach()
    errors = [
        mean(square(out - slice_(targets, (slice(None), t, slice(None))))) for t, out in enumerate(outputs)
    ]
    total = errors[0]
    for err in errors[1:]:
        total = total + err
    return total / float(length)


def sample_loss(
    net: SiameseNetwork,
    pair: LabeledPair,
    weights: MetricLossWeights,
    rng: np.random.Generator,
) -> SampleLoss:
    """All three loss components for one labelled pair, from one shared encoder pass."""
    encoding, frames = _encode_pair(net, pair, rng)
    triplet = _triplet_from_encoding(encoding, pair.y, weights.margin)
    flat = frames.reshape(-1, *frames.shape[2:])
    vae = vae_loss(net, flat, weights.w_vae, rng, hidden=encoding.hidden)
    return SampleLoss(triplet, vae, seq_ae_loss(net, encoding))


def weighted_total(losses: Sequence[SampleLoss], weights: MetricLossWeights) -> Tensor:
    """w_triplet * sum triplet + sum vae + w_seq_ae * sum seq_ae."""
    total: Optional[Tensor] = None
    for loss in losses:
        term = loss.triplet * weights.w_triplet + loss.vae + loss.seq_ae * weights.w_seq_ae
        total = term if total is None else total + term
    if total is None:
        raise EmptySourcesError("cannot total an empty batch")
    return total


# Training


class MetricTrainer:
    """Owns the distance network's optimiser and its dropout / VAE noise stream."""

    def __init__(
        self,
        net: SiameseNetwork,
        weights: Optional[MetricLossWeights] = None,
        lr: float = 1e-4,
        rng: Optional[np.random.Generator] = None,
    ) -> None:
        self.net = net
        self.weights = weights or MetricLossWeights()
        self.rng = rng or np.random.default_rng(0)
        self.optimizer = Adam(net.store, lr=lr)

    def losses(self, batch: TripletBatch) -> list[SampleLoss]:
        out = []
        for index, pair in enumerate(batch):
            try:
                loss = sample_loss(self.net, pair, self.weights, self.rng)
            except NonFiniteError as exc:
                raise NonFiniteLossError(index, exc.op) from exc
            for component, value in zip(SampleLoss._fields, loss):
                if not np.isfinite(value.item()):
                    raise NonFiniteLossError(index, component)
            out.append(loss)
        return out

    def train_step(self, batch: TripletBatch, lr: Optional[float] = None) -> LossReport:
        """One optimiser step on the weighted loss of ``batch``; aborts on non-finite values."""
        if not batch:
            raise EmptySourcesError("metric_train_step needs a nonempty batch")
        store = self.net.store
        store.zero_grad()
        losses = self.losses(batch)
        total = weighted_total(losses, self.weights)
        total.backward()
        if not store.grads_finite():
            raise NonFiniteGradientError("metric gradient is not finite", {"grad_norm": store.grad_norm()})
        self.optimizer.step(lr)

        n = len(batch)
        report = LossReport(
            triplet=sum(loss.triplet.item() for loss in losses) / n,
            vae=sum(loss.vae.item() for loss in losses) / n,
            seq_ae=sum(loss.seq_ae.item() for loss in losses) / n,
            total=total.item() / n,
            batch_size=n,
        )
        logger.debug("metric step", extra=report.model_dump())
        return report


# Distances and rewards


def _encode_single(net: SiameseNetwork, frames: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    frames = np.asarray(frames)
    if len(frames) == 0:
        raise EmptySequenceError("cannot encode an empty sequence")
    encoding = net.encode_sequence(frames[None])
    e = encoding.e.numpy()[0].astype(np.float64)
    h = np.stack([h_t.numpy()[0] for h_t in encoding.h]).astype(np.float64)
    return e, h


def distance_profile(
    net: SiameseNetwork,
    agent: np.ndarray,
    demo: np.ndarray,
    mode: DistanceMode = "combined",
) -> DistanceProfile:
    """Exact per-step distances; identical inputs give exactly zero."""
    agent, demo = np.asarray(agent), np.asarray(demo)
    if len(agent) != len(demo):
        raise LengthMismatchError(
            f"agent ({len(agent)}) and demo ({len(demo)}) sequences differ in length",
            {"agent": len(agent), "demo": len(demo)},
        )
    e_a, h_a = _encode_single(net, agent)
    e_b, h_b = _encode_single(net, demo)
    return DistanceProfile(
        spatial=np.linalg.norm(e_a - e_b, axis=-1),
        temporal=np.linalg.norm(h_a - h_b, axis=-1),
        mode=mode,
    )


def shaped_reward(d: np.ndarray | float, w_d: float = -5.0) -> np.ndarray | float:
    """exp(w_d * d^2), in (0, 1] and 1 at d = 0.

    Large distances are clamped to the smallest positive float instead of
    underflowing to zero.
    """
    if w_d >= 0:
        raise VirlError(f"reward width w_d must be negative, got {w_d}", {"w_d": w_d})
    arr = np.asarray(d, dtype=np.float64)
    if np.any(arr < 0):
        raise VirlError("distances must be non-negative")
    out = np.maximum(np.exp(w_d * arr * arr), np.finfo(arr.dtype).tiny)
    return float(out) if out.ndim == 0 else out


def episode_rewards(
    net: SiameseNetwork,
    agent: np.ndarray,
    demo: np.ndarray,
    mode: DistanceMode = "combined",
    kind: RewardKind = "normalized",
    w_d: float = -5.0,
) -> np.ndarray:
    """Rewards r_0..r_{T-1} for an episode of T steps.

    ``agent`` and ``demo`` hold T+1 frames starting at the reset frame; r_t is the
    distance after the recurrent pass has consumed frames 0..t+1.
    """
    if len(agent) < 2:
        raise EmptySequenceError("an episode needs the reset frame and at least one step")
    d = distance_profile(net, agent, demo, mode).selected()[1:]
    if kind == "negdist":
        return -d
    return np.asarray(shaped_reward(d, w_d))


def snapshot(net: SiameseNetwork) -> SiameseNetwork:
    """A frozen copy of ``net`` for reward evaluation during a collection round."""
    return SiameseNetwork(net.arch, store=net.store.copy(), prefix=net.prefix)


def final_encoding(net: SiameseNetwork, frames: np.ndarray) -> np.ndarray:
    """h_T of the temporal branch, dropout off."""
    return _encode_single(net, frames)[1][-1]


def sequence_embedding(net: SiameseNetwork, frames: np.ndarray) -> np.ndarray:
    """The triplet-loss code f = concat(h_T, mean_t e_t) as a numpy vector."""
    e, h = _encode_single(net, frames)
    return np.concatenate([h[-1], e.mean(axis=0)])


def class_separation(
    net: SiameseNetwork,
    sequences: Sequence[MotionSequence],
    embed: Callable[[SiameseNetwork, np.ndarray], np.ndarray] = sequence_embedding,
) -> tuple[float, float, float]:
    """(mean inter-class distance, mean intra-class distance, inter / intra)."""
    codes = np.stack([embed(net, seq.frames) for seq in sequences])
    labels = np.array([seq.class_id for seq in sequences])
    dist = np.linalg.norm(codes[:, None, :] - codes[None, :, :], axis=-1)
    upper = np.triu(np.ones_like(dist, dtype=bool), k=1)
    same = (labels[:, None] == labels[None, :]) & upper
    diff = (labels[:, None] != labels[None, :]) & upper
    if not same.any() or not diff.any():
        raise VirlError("class separation needs two classes with at least two sequences in one")
    inter, intra = float(dist[diff].mean()), float(dist[same].mean())
    return inter, intra, inter / max(intra, 1e-12)
