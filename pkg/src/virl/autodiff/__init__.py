"""Minimal reverse-mode automatic differentiation.

Every network and loss in virl is assembled from the primitives in
``virl.autodiff.tensor``; parameters live in a ``ParameterStore``.
"""

from .gradcheck import grad_check
from .optim import Adam
from .params import CheckpointHeader, ParameterStore
from .tensor import (
    Graph,
    Tensor,
    add,
    as_tensor,
    concat,
    conv2d,
    conv_transpose2d,
    dropout,
    dropout_mask,
    exp,
    l2_norm,
    log,
    matmul,
    mean,
    mul,
    precision,
    relu,
    reshape,
    sigmoid,
    slice_,
    softplus,
    square,
    sub,
    sum_,
    tanh,
)

__all__ = [
    "Adam",
    "CheckpointHeader",
    "Graph",
    "ParameterStore",
    "Tensor",
    "add",
    "as_tensor",
    "concat",
    "conv2d",
    "conv_transpose2d",
    "dropout",
    "dropout_mask",
    "exp",
    "grad_check",
    "l2_norm",
    "log",
    "matmul",
    "mean",
    "mul",
    "precision",
    "relu",
    "reshape",
    "sigmoid",
    "slice_",
    "softplus",
    "square",
    "sub",
    "sum_",
    "tanh",
]
