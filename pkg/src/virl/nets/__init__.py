"""The distance network: conv encoder, LSTM encoder, VAE and sequence decoders."""

from .layers import LSTMState, glorot_uniform
from .siamese import (
    ConvFeatures,
    MetricArchitecture,
    SequenceEncoding,
    SiameseNetwork,
    VaeSample,
    reparameterize,
)

__all__ = [
    "ConvFeatures",
    "LSTMState",
    "MetricArchitecture",
    "SequenceEncoding",
    "SiameseNetwork",
    "VaeSample",
    "glorot_uniform",
    "reparameterize",
]
