"""Minimal reverse-mode automatic differentiation over numpy arrays.

Just enough machinery to differentiate a soft rollout: elementwise
arithmetic with broadcasting, 2-D matmul (a batched left operand is fine),
axis sums, a stable softmax, cyclic shifts and cyclic convolution /
correlation along the last axis.  Gradients are checked against central
finite differences in the test suite.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fn")

    def __init__(self, data, requires_grad=False, _parents=(), _grad_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._grad_fn = _grad_fn

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, as_tensor(other))

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, as_tensor(other))

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, as_tensor(-1.0))

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def reshape(self, shape):
        return reshape(self, shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    return Tensor(x)


def leaf(x) -> Tensor:
    return Tensor(np.array(x, dtype=np.float64), requires_grad=True)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (the reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(x: Tensor, y: Tensor) -> Tensor:
    def grad_fn(g):
        return _unbroadcast(g, x.data.shape), _unbroadcast(g, y.data.shape)

    return Tensor(x.data + y.data, _parents=(x, y), _grad_fn=grad_fn)


def sub(x: Tensor, y: Tensor) -> Tensor:
    def grad_fn(g):
        return _unbroadcast(g, x.data.shape), _unbroadcast(-g, y.data.shape)

    return Tensor(x.data - y.data, _parents=(x, y), _grad_fn=grad_fn)


def mul(x: Tensor, y: Tensor) -> Tensor:
    def grad_fn(g):
        return (
            _unbroadcast(g * y.data, x.data.shape),
            _unbroadcast(g * x.data, y.data.shape),
        )

    return Tensor(x.data * y.data, _parents=(x, y), _grad_fn=grad_fn)


def matmul(x: Tensor, y: Tensor) -> Tensor:
    """2-D matrix product; the left operand may carry a batch as its rows."""
    if x.data.ndim != 2 or y.data.ndim != 2:
        raise ValueError("matmul only supports 2-D operands")

    def grad_fn(g):
        gx = g @ y.data.T if x.requires_grad else None
        gy = x.data.T @ g if y.requires_grad else None
        return gx, gy

    return Tensor(x.data @ y.data, _parents=(x, y), _grad_fn=grad_fn)


def transpose2(x: Tensor) -> Tensor:
    def grad_fn(g):
        return (g.T,)

    return Tensor(x.data.T, _parents=(x,), _grad_fn=grad_fn)


def tsum(x: Tensor, axis=None, keepdims=False) -> Tensor:
    def grad_fn(g):
        if axis is None:
            return (np.broadcast_to(g, x.data.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, x.data.shape).copy(),)

    return Tensor(
        x.data.sum(axis=axis, keepdims=keepdims), _parents=(x,), _grad_fn=grad_fn
    )


def reshape(x: Tensor, shape) -> Tensor:
    def grad_fn(g):
        return (g.reshape(x.data.shape),)

    return Tensor(x.data.reshape(shape), _parents=(x,), _grad_fn=grad_fn)


def softmax(x: Tensor) -> Tensor:
    """Stable softmax along the last axis."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def grad_fn(g):
        return ((g - (g * y).sum(axis=-1, keepdims=True)) * y,)

    return Tensor(y, _parents=(x,), _grad_fn=grad_fn)


def roll(x: Tensor, shift: int) -> Tensor:
    """Cyclic shift along the last axis (INC is +1, DEC is -1)."""

    def grad_fn(g):
        return (np.roll(g, -shift, axis=-1),)

    return Tensor(np.roll(x.data, shift, axis=-1), _parents=(x,), _grad_fn=grad_fn)


def col(x: Tensor, j: int) -> Tensor:
    """Select column ``j`` of a 2-D tensor, dropping the axis."""

    def grad_fn(g):
        gx = np.zeros_like(x.data)
        gx[:, j] = g
        return (gx,)

    return Tensor(x.data[:, j], _parents=(x,), _grad_fn=grad_fn)


def stack(tensors: list[Tensor], axis: int = 1) -> Tensor:
    parents = tuple(tensors)

    def grad_fn(g):
        pieces = np.moveaxis(g, axis, 0)
        return tuple(pieces[i] for i in range(len(parents)))

    return Tensor(
        np.stack([t.data for t in tensors], axis=axis),
        _parents=parents,
        _grad_fn=grad_fn,
    )


@lru_cache(maxsize=None)
def _shift_index(m: int) -> np.ndarray:
    # IDX[p, q] = (p - q) mod m
    p = np.arange(m)
    return (p[:, None] - p[None, :]) % m


def _conv_raw(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # out[b, k] = sum_i x[b, i] * y[b, (k - i) mod m]
    idx = _shift_index(x.shape[-1])
    return np.einsum("bi,bki->bk", x, y[:, idx])


def _corr_raw(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # out[b, k] = sum_i x[b, i] * y[b, (i - k) mod m]
    idx = _shift_index(x.shape[-1])
    return np.einsum("bi,bik->bk", x, y[:, idx])


def conv_circ(x: Tensor, y: Tensor) -> Tensor:
    """Circular convolution along the last axis: P(x + y mod m)."""

    def grad_fn(g):
        gx = _corr_raw(g, y.data) if x.requires_grad else None
        gy = _corr_raw(g, x.data) if y.requires_grad else None
        return gx, gy

    return Tensor(_conv_raw(x.data, y.data), _parents=(x, y), _grad_fn=grad_fn)


def corr_circ(x: Tensor, y: Tensor) -> Tensor:
    """Circular correlation along the last axis: P(x - y mod m)."""

    def grad_fn(g):
        gx = _conv_raw(g, y.data) if x.requires_grad else None
        gy = _corr_raw(x.data, g) if y.requires_grad else None
        return gx, gy

    return Tensor(_corr_raw(x.data, y.data), _parents=(x, y), _grad_fn=grad_fn)


def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    return order


def backward(root: Tensor) -> None:
    """Accumulate gradients of ``root`` (summed if non-scalar) into leaves."""
    order = _toposort(root)
    root.grad = np.ones_like(root.data)
    for node in reversed(order):
        if node._grad_fn is None or node.grad is None:
            continue
        grads = node._grad_fn(node.grad)
        for parent, g in zip(node._parents, grads):
            if g is None or not parent.requires_grad:
                continue
            # No op mutates gradient arrays in place, so plain rebinding is safe.
            parent.grad = g if parent.grad is None else parent.grad + g
