"""The recurrent Siamese network: conv frame encoder, LSTM sequence encoder,
VAE image head/decoder and sequence decoder.

Both Siamese branches are the same ``SiameseNetwork`` instance reading the same
``ParameterStore`` entries; a pair is encoded as a batch of two.
"""

import logging
from typing import NamedTuple, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from ..autodiff import (
    ParameterStore,
    Tensor,
    concat,
    conv2d,
    conv_transpose2d,
    dropout,
    dropout_mask,
    exp,
    relu,
    reshape,
    sigmoid,
    slice_,
    tanh,
)
from ..errors import CheckpointError, EmptySequenceError, ShapeMismatchError, VirlError
from .layers import (
    LSTMState,
    add_conv,
    add_dense,
    add_lstm,
    dense,
    lstm_cell,
    zero_state,
)

logger = logging.getLogger(__name__)


class MetricArchitecture(BaseModel):
    """Layer sizes of the distance network. Defaults are the published stack."""

    frame_size: int = Field(default=32, description="Square grayscale frame side in pixels")
    conv1_filters: int = Field(default=8, description="Filters of the first conv layer")
    conv1_kernel: int = Field(default=6, description="Kernel side of the first conv layer")
    conv2_filters: int = Field(default=16, description="Filters of the second conv layer")
    conv2_kernel: int = Field(default=4, description="Kernel side of the second conv layer")
    stride: int = Field(default=2, description="Stride of both conv layers")
    dense_units: int = Field(default=256, description="Units of the first dense layer")
    embed_dim: int = Field(default=64, description="Spatial/temporal encoding size")
    lstm_hidden: int = Field(default=128, description="LSTM hidden units")
    dropout: float = Field(default=0.2, ge=0.0, lt=1.0, description="Dropout between conv layers")

    @model_validator(mode="after")
    def _check_geometry(self) -> "MetricArchitecture":
        h1 = self.frame_size - self.conv1_kernel
        if h1 < 0 or h1 % self.stride:
            raise ValueError(f"frame_size {self.frame_size} does not tile conv1 exactly")
        h1 = h1 // self.stride + 1
        h2 = h1 - self.conv2_kernel
        if h2 < 0 or h2 % self.stride:
            raise ValueError(f"frame_size {self.frame_size} does not tile conv2 exactly")
        return self

    @property
    def conv1_size(self) -> int:
        return (self.frame_size - self.conv1_kernel) // self.stride + 1

    @property
    def conv2_size(self) -> int:
        return (self.conv1_size - self.conv2_kernel) // self.stride + 1

    @property
    def flat_size(self) -> int:
        return self.conv2_filters * self.conv2_size**2


class ConvFeatures(NamedTuple):
    embedding: Tensor  # (N, embed_dim), sigmoid output
    hidden: Tensor  # (N, dense_units), trunk shared with the VAE head


class SequenceEncoding(NamedTuple):
    e: Tensor  # (B, T, embed_dim)
    h: list[Tensor]  # T tensors of (B, embed_dim)
    hidden: Tensor  # (B*T, dense_units)

    @property
    def length(self) -> int:
        return len(self.h)

    def spatial(self, t: int) -> Tensor:
        return slice_(self.e, (slice(None), t, slice(None)))


class VaeSample(NamedTuple):
    z: Tensor
    mu: Tensor
    logvar: Tensor
    sigma: Tensor


def reparameterize(mu: Tensor, sigma: Tensor, noise: np.ndarray) -> Tensor:
    """z = mu + sigma * n, differentiable in mu and sigma."""
    return mu + sigma * Tensor(noise)


class SiameseNetwork:
    """Shared-weight encoder/decoder stack over one ParameterStore."""

    def __init__(
        self,
        arch: Optional[MetricArchitecture] = None,
        rng: Optional[np.random.Generator] = None,
        store: Optional[ParameterStore] = None,
        prefix: str = "metric",
    ) -> None:
        self.arch = arch or MetricArchitecture()
        self.prefix = prefix
        if store is None:
            store = ParameterStore()
            self._init_params(store, rng or np.random.default_rng(0))
        self.store = store

    @classmethod
    def from_store(
        cls, arch: MetricArchitecture, store: ParameterStore, prefix: str = "metric"
    ) -> "SiameseNetwork":
        """Wrap checkpointed parameters, refusing ones built for another architecture."""
        reference = ParameterStore()
        cls(arch, store=reference, prefix=prefix)._init_params(reference, np.random.default_rng(0))
        selected = store.select(f"{prefix}/")
        if selected.arch_hash() != reference.arch_hash():
            raise CheckpointError(
                "distance network architecture hash mismatch",
                {"expected": reference.arch_hash(), "found": selected.arch_hash()},
                suggestion="Use the config the checkpoint was trained with",
            )
        return cls(arch, store=selected, prefix=prefix)

    def _p(self, name: str) -> str:
        return f"{self.prefix}/{name}"

    def _init_params(self, store: ParameterStore, rng: np.random.Generator) -> None:
        a = self.arch
        k1, k2 = a.conv1_kernel, a.conv2_kernel
        add_conv(store, self._p("conv1"), (a.conv1_filters, 1, k1, k1), rng, a.conv1_filters)
        add_conv(store, self._p("conv2"), (a.conv2_filters, a.conv1_filters, k2, k2), rng, a.conv2_filters)
        add_dense(store, self._p("dense1"), a.flat_size, a.dense_units, rng)
        add_dense(store, self._p("dense2"), a.dense_units, a.embed_dim, rng)
        add_lstm(store, self._p("lstm"), a.embed_dim, a.lstm_hidden, rng)
        add_dense(store, self._p("lstm_out"), a.lstm_hidden, a.embed_dim, rng)
        add_dense(store, self._p("vae_mu"), a.dense_units, a.embed_dim, rng)
        add_dense(store, self._p("vae_logvar"), a.dense_units, a.embed_dim, rng)
        add_dense(store, self._p("dec_dense1"), a.embed_dim, a.dense_units, rng)
        add_dense(store, self._p("dec_dense2"), a.dense_units, a.flat_size, rng)
        add_conv(store, self._p("deconv2"), (a.conv2_filters, a.conv1_filters, k2, k2), rng, a.conv1_filters)
        add_conv(store, self._p("deconv1"), (a.conv1_filters, 1, k1, k1), rng, 1)
        add_dense(store, self._p("seqdec_init"), a.embed_dim, a.lstm_hidden, rng)
        add_lstm(store, self._p("seqdec_lstm"), 2 * a.embed_dim, a.lstm_hidden, rng)
        add_dense(store, self._p("seqdec_out"), a.lstm_hidden, a.embed_dim, rng)
        logger.debug(
            "initialised distance network",
            extra={"parameters": len(store), "arch_hash": store.arch_hash()},
        )

    # Frame encoder

    def dropout_mask(self, n_frames: int, rng: Optional[np.random.Generator]) -> Optional[np.ndarray]:
        """Mask for the activations between the two conv layers; None at evaluation time."""
        if rng is None or self.arch.dropout <= 0.0:
            return None
        a = self.arch
        return dropout_mask((n_frames, a.conv1_filters, a.conv1_size, a.conv1_size), a.dropout, rng)

    def conv_encode(self, frames: np.ndarray, mask: Optional[np.ndarray] = None) -> ConvFeatures:
        """Encode (N, H, W) frames with pixels in [0, 1] to embeddings in (0, 1)^64."""
        frames = np.asarray(frames)
        size = self.arch.frame_size
        if frames.ndim == 2:
            frames = frames[None]
        if frames.ndim != 3 or frames.shape[1:] != (size, size):
            raise ShapeMismatchError("conv_encode", [tuple(frames.shape)], f"expected (N, {size}, {size})")
        s = self.arch.stride
        x = Tensor(frames.reshape(frames.shape[0], 1, size, size))
        x = relu(conv2d(x, self.store.tensor(self._p("conv1/w")), s) + self.store.tensor(self._p("conv1/b")))
        x = dropout(x, mask)
        x = relu(conv2d(x, self.store.tensor(self._p("conv2/w")), s) + self.store.tensor(self._p("conv2/b")))
        x = reshape(x, (frames.shape[0], self.arch.flat_size))
        hidden = relu(dense(self.store, self._p("dense1"), x))
        embedding = sigmoid(dense(self.store, self._p("dense2"), hidden))
        return ConvFeatures(embedding, hidden)

    # Sequence encoder

    def initial_state(self, batch: int) -> LSTMState:
        return zero_state(batch, self.arch.lstm_hidden)

    def lstm_step(self, e_t: Tensor, state: LSTMState) -> LSTMState:
        if state.h.shape[-1] != self.arch.lstm_hidden or state.c.shape[-1] != self.arch.lstm_hidden:
            raise ShapeMismatchError("lstm_step", [state.h.shape, state.c.shape])
        return lstm_cell(self.store, self._p("lstm"), e_t, state)

    def temporal_head(self, h: Tensor) -> Tensor:
        return sigmoid(dense(self.store, self._p("lstm_out"), h))

    def encode_sequence(self, frames: np.ndarray, mask: Optional[np.ndarray] = None) -> SequenceEncoding:
        """Encode (B, T, H, W) or (T, H, W) frames; the LSTM starts from zeros."""
        frames = np.asarray(frames)
        if frames.ndim == 3:
            frames = frames[None]
        if frames.ndim != 4:
            raise ShapeMismatchError("encode_sequence", [tuple(frames.shape)], "expected (B, T, H, W)")
        batch, length = frames.shape[:2]
        if length == 0:
            raise EmptySequenceError("cannot encode an empty sequence")

        features = self.conv_encode(frames.reshape(batch * length, *frames.shape[2:]), mask)
        e = reshape(features.embedding, (batch, length, self.arch.embed_dim))
        state = self.initial_state(batch)
        h_steps = []
        for t in range(length):
            state = self.lstm_step(slice_(e, (slice(None), t, slice(None))), state)
            h_steps.append(self.temporal_head(state.h))
        return SequenceEncoding(e, h_steps, features.hidden)

    # VAE

    def vae_head(self, hidden: Tensor) -> tuple[Tensor, Tensor]:
        mu = dense(self.store, self._p("vae_mu"), hidden)
        logvar = dense(self.store, self._p("vae_logvar"), hidden)
        return mu, logvar

    def vae_encode_sample(
        self,
        frames: np.ndarray,
        rng: np.random.Generator,
        hidden: Optional[Tensor] = None,
    ) -> VaeSample:
        """Map frames to q(z|s) = N(mu, sigma^2) and draw z by reparameterization."""
        if hidden is None:
            hidden = self.conv_encode(frames).hidden
        mu, logvar = self.vae_head(hidden)
        sigma = exp(logvar * 0.5)
        z = reparameterize(mu, sigma, rng.standard_normal(mu.shape))
        return VaeSample(z, mu, logvar, sigma)

    def decode_image(self, z: Tensor) -> Tensor:
        """Bernoulli pixel logits of shape (N, H, W)."""
        a = self.arch
        if z.ndim != 2 or z.shape[1] != a.embed_dim:
            raise ShapeMismatchError("decode_image", [z.shape])
        n = z.shape[0]
        s = a.stride
        d = relu(dense(self.store, self._p("dec_dense1"), z))
        d = relu(dense(self.store, self._p("dec_dense2"), d))
        d = reshape(d, (n, a.conv2_filters, a.conv2_size, a.conv2_size))
        w2, b2 = self.store.tensor(self._p("deconv2/w")), self.store.tensor(self._p("deconv2/b"))
        d = relu(conv_transpose2d(d, w2, s) + b2)
        w1, b1 = self.store.tensor(self._p("deconv1/w")), self.store.tensor(self._p("deconv1/b"))
        logits = conv_transpose2d(d, w1, s) + b1
        return reshape(logits, (n, a.frame_size, a.frame_size))

    # Sequence decoder

    def decode_sequence(self, v: Tensor, length: int) -> list[Tensor]:
        """Reconstruct ``length`` embeddings from context v, feeding back its own outputs."""
        a = self.arch
        if length < 1:
            raise VirlError(f"decode_sequence length must be >= 1, got {length}")
        if v.ndim != 2 or v.shape[1] != a.embed_dim:
            raise ShapeMismatchError("decode_sequence", [v.shape])
        batch = v.shape[0]
        h = tanh(dense(self.store, self._p("seqdec_init"), v))
        state = LSTMState(h, Tensor(np.zeros((batch, a.lstm_hidden))))
        previous = Tensor(np.zeros((batch, a.embed_dim)))
        outputs = []
        for _ in range(length):
            state = lstm_cell(self.store, self._p("seqdec_lstm"), concat([previous, v], axis=1), state)
            previous = sigmoid(dense(self.store, self._p("seqdec_out"), state.h))
            outputs.append(previous)
        return outputs
