"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

A ``Tensor`` wraps an ndarray and, when gradients are enabled, remembers the
operation that produced it as a backward closure plus the parent tensors it
depends on.  ``grad`` walks the recorded tape once in reverse topological
order and accumulates cotangents into leaf ``.grad`` slots.

Conventions the rest of the package relies on:

* everything is float64; there is no dtype promotion to think about,
* the subgradient of ``abs`` at 0 is 0, and ``relu`` uses the inactive side
  (gradient 0) exactly at the kink,
* any operation producing a non-finite value raises ``FloatingPointError``
  immediately rather than letting NaNs propagate.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "no_grad",
    "grad",
    "concat",
    "stop_gradient",
    "tanh",
    "exp",
    "log",
    "sqrt",
    "square",
    "absolute",
    "relu",
    "matmul",
    "transpose",
    "tensor_sum",
    "tensor_mean",
]

# Flipped off only by micro-benchmarks; every op checks its output when set.
CHECK_FINITE = True

_GRAD_ENABLED = True


class no_grad:
    """Context manager that disables tape recording (evaluation mode)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def _check(data: np.ndarray, op: str) -> None:
    if CHECK_FINITE and not np.all(np.isfinite(data)):
        raise FloatingPointError(f"non-finite values produced by op '{op}'")


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        _check(self.data, "tensor")
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    # -- bookkeeping -------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def T(self):
        return transpose(self)

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __neg__(self):
        return mul(self, _wrap(-1.0))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __getitem__(self, idx):
        return take(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis=axis, keepdims=keepdims)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents, backward, op: str) -> Tensor:
    _check(data, op)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    need = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out.requires_grad = need
    if need:
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    else:
        out._parents = ()
        out._backward = None
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        t.grad = g if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient over the axes numpy broadcast to produce it."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


# -- arithmetic ------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _result(data, (a, b), backward, "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(-g, b.data.shape))

    return _result(data, (a, b), backward, "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _result(data, (a, b), backward, "mul")


def div(a: Tensor, b: Tensor) -> Tensor:
    data = a.data / b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g / b.data, a.data.shape))
        _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _result(data, (a, b), backward, "div")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}")
    data = a.data @ b.data

    def backward(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _result(data, (a, b), backward, "matmul")


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ValueError("transpose expects a 2-D tensor")
    data = a.data.T

    def backward(g):
        _accumulate(a, g.T)

    return _result(data, (a,), backward, "transpose")


# -- elementwise nonlinearities -------------------------------------------


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def backward(g):
        _accumulate(a, g * (1.0 - data * data))

    return _result(data, (a,), backward, "tanh")


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)

    def backward(g):
        _accumulate(a, g * data)

    return _result(data, (a,), backward, "exp")


def log(a: Tensor) -> Tensor:
    data = np.log(a.data)

    def backward(g):
        _accumulate(a, g / a.data)

    return _result(data, (a,), backward, "log")


def sqrt(a: Tensor) -> Tensor:
    data = np.sqrt(a.data)

    def backward(g):
        _accumulate(a, g * 0.5 / data)

    return _result(data, (a,), backward, "sqrt")


def square(a: Tensor) -> Tensor:
    data = a.data * a.data

    def backward(g):
        _accumulate(a, g * 2.0 * a.data)

    return _result(data, (a,), backward, "square")


def absolute(a: Tensor) -> Tensor:
    data = np.abs(a.data)

    def backward(g):
        # sign(0) == 0: the L1 subgradient at the kink is fixed to 0.
        _accumulate(a, g * np.sign(a.data))

    return _result(data, (a,), backward, "absolute")


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0.0)

    def backward(g):
        # strict inequality: gradient at the kink comes from the inactive side
        _accumulate(a, g * (a.data > 0.0))

    return _result(data, (a,), backward, "relu")


# -- reductions and shape ops ---------------------------------------------


def tensor_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = np.asarray(a.data.sum(axis=axis, keepdims=keepdims))

    def backward(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.data.shape).copy())
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            _accumulate(a, np.broadcast_to(ge, a.data.shape).copy())

    return _result(data, (a,), backward, "sum")


def tensor_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]
    data = np.asarray(a.data.mean(axis=axis, keepdims=keepdims))

    def backward(g):
        scale = 1.0 / n
        if axis is None:
            _accumulate(a, np.broadcast_to(g * scale, a.data.shape).copy())
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            _accumulate(a, np.broadcast_to(ge * scale, a.data.shape).copy())

    return _result(data, (a,), backward, "mean")


def concat(tensors, axis: int = 0) -> Tensor:
    parts = [_wrap(t) for t in tensors]
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]

    def backward(g):
        offset = 0
        for p, n in zip(parts, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offset, offset + n)
            _accumulate(p, g[tuple(sl)])
            offset += n

    return _result(data, tuple(parts), backward, "concat")


def take(a: Tensor, idx) -> Tensor:
    """Indexing/slicing; duplicate fancy indices accumulate their gradients."""
    data = a.data[idx]

    def backward(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, idx, g)
        _accumulate(a, buf)

    return _result(np.asarray(data), (a,), backward, "take")


def stop_gradient(a: Tensor) -> Tensor:
    """Constant copy of ``a``; the tape ends here."""
    return Tensor(a.data.copy())


# -- backward pass ---------------------------------------------------------


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, emitted = stack.pop()
        if emitted:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order  # parents precede children; root is last


def grad(loss: Tensor, params: dict) -> dict:
    """Gradients of a scalar ``loss`` with respect to named parameters.

    Parameters the loss never touched get exact zero gradients.  Raises
    ``ValueError`` for a non-scalar loss and ``FloatingPointError`` if any
    gradient comes out non-finite.
    """
    if loss.data.ndim != 0:
        raise ValueError(f"loss must be a scalar node, got shape {loss.data.shape}")
    for p in params.values():
        p.grad = None
    order = _topo_order(loss)
    for t in order:
        t.grad = None
    loss.grad = np.ones((), dtype=np.float64)
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)
    out = {}
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter '{name}'")
        out[name] = np.array(g, dtype=np.float64)
    for t in order:
        t.grad = None
    return out
