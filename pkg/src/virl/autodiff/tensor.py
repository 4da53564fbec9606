"""Reverse-mode automatic differentiation over dense numpy arrays.

Each primitive returns a new ``Tensor`` node that remembers its op tag, its
parents and a closure mapping the output gradient to parent gradients.
``Tensor.backward`` walks the graph in reverse topological order; gradients of
parameter leaves are then added into their ``ParameterStore`` slots.

Arrays are float32 unless a ``precision`` context says otherwise.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager
from contextvars import ContextVar
from typing import TYPE_CHECKING, Any, Callable, Iterator, Mapping, Optional, Sequence, Union

import numpy as np

from ..errors import BackwardBeforeForwardError, NonFiniteError, ShapeMismatchError, VirlError

if TYPE_CHECKING:
    from .params import ParameterStore

NORM_EPS = 1e-8

_dtype: ContextVar[type] = ContextVar("virl_dtype", default=np.float32)
_node_ids = itertools.count()

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]
Operand = Union["Tensor", np.ndarray, float, int]


@contextmanager
def precision(dtype: Any) -> Iterator[None]:
    """Build graphs in ``dtype`` inside the block (float64 for gradient checks)."""
    token = _dtype.set(np.dtype(dtype).type)
    try:
        yield
    finally:
        _dtype.reset(token)


def current_dtype() -> type:
    return _dtype.get()


class Tensor:
    """A node of the computation graph holding its forward value."""

    __slots__ = (
        "data",
        "grad",
        "op",
        "parents",
        "requires_grad",
        "node_id",
        "param_name",
        "_backward",
        "_store",
    )

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        op: str = "leaf",
        parents: tuple["Tensor", ...] = (),
        backward: Optional[BackwardFn] = None,
        param_name: Optional[str] = None,
        store: Optional["ParameterStore"] = None,
    ) -> None:
        self.data: np.ndarray = np.asarray(data, dtype=_dtype.get())
        self.grad: Optional[np.ndarray] = None
        self.op = op
        self.parents = parents
        self.requires_grad = requires_grad
        self.node_id = next(_node_ids)
        self.param_name = param_name
        self._backward = backward
        self._store = store

    def __repr__(self) -> str:
        return f"Tensor(op={self.op}, shape={self.shape}, id={self.node_id})"

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> "Tensor":
        """Same value, cut from the graph (stop-gradient)."""
        return Tensor(self.data, requires_grad=False, op="detach")

    def _topological_order(self) -> list["Tensor"]:
        # Iterative: LSTM rollouts make graphs deeper than the recursion limit
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if node.node_id in visited:
                continue
            visited.add(node.node_id)
            stack.append((node, True))
            for parent in node.parents:
                if parent.requires_grad and parent.node_id not in visited:
                    stack.append((parent, False))
        return order

    def backward(self, seed: Optional[np.ndarray] = None) -> None:
        """Propagate ``seed`` (ones for a scalar output) back through the graph."""
        if seed is None:
            if self.data.size != 1:
                raise ShapeMismatchError(
                    "backward", [self.shape], "non-scalar output needs an explicit seed"
                )
            seed = np.ones_like(self.data)
        seed = np.asarray(seed, dtype=self.data.dtype)
        if seed.shape != self.data.shape:
            raise ShapeMismatchError("backward", [self.shape, tuple(seed.shape)], "seed shape")
        if not self.requires_grad:
            return

        # Per-pass gradients; nodes shared with an earlier pass start from zero
        order = self._topological_order()
        grads: dict[int, np.ndarray] = {self.node_id: seed.copy()}
        for node in reversed(order):
            node_grad = grads.get(node.node_id)
            if node._backward is None or node_grad is None:
                continue
            parent_grads = node._backward(node_grad)
            for parent, g in zip(node.parents, parent_grads):
                if g is None or not parent.requires_grad:
                    continue
                g = _unbroadcast(np.asarray(g, dtype=parent.data.dtype), parent.data.shape)
                prior = grads.get(parent.node_id)
                grads[parent.node_id] = g.copy() if prior is None else prior + g

        for node in order:
            node_grad = grads.get(node.node_id)
            if node_grad is None:
                continue
            if node._store is not None and node.param_name is not None:
                node._store.accumulate(node.param_name, node_grad)
                node.grad = node_grad
            elif node._backward is None:
                # plain leaves accumulate across passes
                node.grad = node_grad if node.grad is None else node.grad + node_grad
            else:
                node.grad = node_grad

    # Operator sugar
    def __add__(self, other: Operand) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: Operand) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: Operand) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: Operand) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: Operand) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: Operand) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other: float) -> "Tensor":
        return mul(self, 1.0 / float(other))

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __getitem__(self, index: Any) -> "Tensor":
        return slice_(self, index)


def as_tensor(value: Operand) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _result(
    data: np.ndarray, op: str, parents: tuple[Tensor, ...], backward: BackwardFn
) -> Tensor:
    requires_grad = any(p.requires_grad for p in parents)
    out = Tensor(
        data,
        requires_grad=requires_grad,
        op=op,
        parents=parents if requires_grad else (),
        backward=backward if requires_grad else None,
    )
    if not np.all(np.isfinite(out.data)):
        raise NonFiniteError(op, out.node_id)
    return out


def _broadcast_check(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise ShapeMismatchError(op, [a.shape, b.shape], "not broadcastable") from e


# Elementwise


def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("add", a, b)
    return _result(a.data + b.data, "add", (a, b), lambda g: (g, g))


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("sub", a, b)
    return _result(a.data - b.data, "sub", (a, b), lambda g: (g, -g))


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("mul", a, b)
    return _result(a.data * b.data, "mul", (a, b), lambda g: (g * b.data, g * a.data))


def neg(x: Tensor) -> Tensor:
    return _result(-x.data, "neg", (x,), lambda g: (-g,))


def relu(x: Tensor) -> Tensor:
    # relu'(0) = 0
    mask = x.data > 0
    return _result(np.where(mask, x.data, 0).astype(x.data.dtype), "relu", (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    s = (0.5 * (1.0 + np.tanh(0.5 * x.data))).astype(x.data.dtype)
    return _result(s, "sigmoid", (x,), lambda g: (g * s * (1.0 - s),))


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return _result(t, "tanh", (x,), lambda g: (g * (1.0 - t * t),))


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        e = np.exp(x.data)
    return _result(e, "exp", (x,), lambda g: (g * e,))


def log(x: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x.data)
    return _result(out, "log", (x,), lambda g: (g / x.data,))


def square(x: Tensor) -> Tensor:
    return _result(x.data * x.data, "square", (x,), lambda g: (2.0 * g * x.data,))


def softplus(x: Tensor) -> Tensor:
    """log(1 + e^x) without overflow."""
    out = np.logaddexp(0.0, x.data).astype(x.data.dtype)
    s = (0.5 * (1.0 + np.tanh(0.5 * x.data))).astype(x.data.dtype)
    return _result(out, "softplus", (x,), lambda g: (g * s,))


def dropout(x: Tensor, mask: Optional[np.ndarray]) -> Tensor:
    """Multiply by an externally supplied (already rescaled) keep-mask."""
    if mask is None:
        return x
    m = np.asarray(mask, dtype=x.data.dtype)
    if m.shape != x.shape:
        raise ShapeMismatchError("dropout", [x.shape, tuple(m.shape)])
    return _result(x.data * m, "dropout", (x,), lambda g: (g * m,))


def dropout_mask(shape: tuple[int, ...], rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout mask: kept units are scaled by 1 / (1 - rate)."""
    if rate <= 0.0:
        return np.ones(shape, dtype=current_dtype())
    keep = rng.random(shape) >= rate
    return (keep / (1.0 - rate)).astype(current_dtype())


# Reductions and shape ops


def sum_(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.data.shape),)

    return _result(np.asarray(out), "sum", (x,), backward)


def mean(x: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    count = x.data.size if axis is None else x.data.shape[axis]
    return sum_(x, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError as e:
        raise ShapeMismatchError("reshape", [x.shape, tuple(shape)]) from e
    return _result(out, "reshape", (x,), lambda g: (g.reshape(x.data.shape),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = tuple(as_tensor(t) for t in tensors)
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as e:
        raise ShapeMismatchError("concat", [p.shape for p in parts]) from e
    bounds = np.cumsum([p.data.shape[axis] for p in parts])[:-1]

    def backward(g: np.ndarray) -> list[np.ndarray]:
        return list(np.split(g, bounds, axis=axis))

    return _result(out, "concat", parts, backward)


def slice_(x: Tensor, index: Any) -> Tensor:
    out = x.data[index]

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return _result(np.array(out), "slice", (x,), backward)


def l2_norm(x: Tensor, axis: int = -1) -> Tensor:
    """Smoothed norm sqrt(sum v^2 + 1e-8); differentiable at v = 0."""
    n = np.sqrt(np.sum(x.data * x.data, axis=axis) + NORM_EPS).astype(x.data.dtype)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (np.expand_dims(g / n, axis) * x.data,)

    return _result(n, "l2_norm", (x,), backward)


# Linear algebra and convolutions


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError("matmul", [a.shape, b.shape])
    return _result(a.data @ b.data, "matmul", (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def _conv_out(size: int, kernel: int, stride: int) -> int:
    return (size - kernel) // stride + 1


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    n, c = x.shape[:2]
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]
    oh, ow = windows.shape[2], windows.shape[3]
    return windows.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * kh * kw, oh * ow)


def _col2im(
    cols: np.ndarray, shape: tuple[int, ...], kh: int, kw: int, stride: int, oh: int, ow: int
) -> np.ndarray:
    n, c = shape[:2]
    cols = cols.reshape(n, c, kh, kw, oh, ow)
    out = np.zeros(shape, dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += cols[:, :, i, j]
    return out


def conv2d(x: Tensor, w: Tensor, stride: int = 1) -> Tensor:
    """Valid-padding 2-D convolution. x: (N, C, H, W); w: (F, C, kh, kw)."""
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeMismatchError("conv2d", [x.shape, w.shape])
    f, c, kh, kw = w.shape
    n, _, h, wd = x.shape
    oh, ow = _conv_out(h, kh, stride), _conv_out(wd, kw, stride)
    if oh < 1 or ow < 1:
        raise ShapeMismatchError("conv2d", [x.shape, w.shape], "kernel larger than input")
    cols = _im2col(x.data, kh, kw, stride)
    wm = w.data.reshape(f, -1)
    out = np.matmul(wm, cols).reshape(n, f, oh, ow)

    def backward(g: np.ndarray) -> tuple[Optional[np.ndarray], np.ndarray]:
        gm = g.reshape(n, f, oh * ow)
        dw = np.matmul(gm, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.data.shape)
        dx = None
        if x.requires_grad:
            dx = _col2im(np.matmul(wm.T, gm), x.data.shape, kh, kw, stride, oh, ow)
        return dx, dw

    return _result(out, "conv2d", (x, w), backward)


def conv_transpose2d(x: Tensor, w: Tensor, stride: int = 1) -> Tensor:
    """Transposed convolution (the adjoint of conv2d). x: (N, F, h, w); w: (F, C, kh, kw)."""
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[0]:
        raise ShapeMismatchError("conv_transpose2d", [x.shape, w.shape])
    f, c, kh, kw = w.shape
    n, _, ih, iw = x.shape
    oh, ow = (ih - 1) * stride + kh, (iw - 1) * stride + kw
    wm = w.data.reshape(f, -1)
    xm = x.data.reshape(n, f, ih * iw)
    out = _col2im(np.matmul(wm.T, xm), (n, c, oh, ow), kh, kw, stride, ih, iw)

    def backward(g: np.ndarray) -> tuple[Optional[np.ndarray], np.ndarray]:
        gcols = _im2col(g, kh, kw, stride)
        dw = np.matmul(xm, gcols.transpose(0, 2, 1)).sum(axis=0).reshape(w.data.shape)
        dx = None
        if x.requires_grad:
            dx = np.matmul(wm, gcols).reshape(x.data.shape)
        return dx, dw

    return _result(out, "conv_transpose2d", (x, w), backward)


class Graph:
    """A named-input computation: ``forward`` builds and evaluates, ``backward`` differentiates.

    Example:
        graph = Graph(lambda t: sum_(square(t["x"])), input_names=("x",))
        graph.forward({"x": Tensor([3.0], requires_grad=True)})
        graph.backward()
    """

    def __init__(self, build: Callable[[dict[str, Tensor]], Tensor], input_names: Sequence[str] = ()):
        self._build = build
        self.input_names = tuple(input_names)
        self.inputs: dict[str, Tensor] = {}
        self.output: Optional[Tensor] = None

    def forward(self, inputs: Mapping[str, Any]) -> Tensor:
        missing = [name for name in self.input_names if name not in inputs]
        if missing:
            raise VirlError(f"unbound graph inputs: {missing}", {"missing": missing})
        self.inputs = {k: as_tensor(v) for k, v in inputs.items()}
        self.output = self._build(self.inputs)
        return self.output

    def backward(self, seed: Optional[np.ndarray] = None) -> None:
        if self.output is None:
            raise BackwardBeforeForwardError("backward called before forward")
        self.output.backward(seed)
