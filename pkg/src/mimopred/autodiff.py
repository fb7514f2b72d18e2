"""Reverse-mode automatic differentiation on dense float64 arrays.

A :class:`Tensor` wraps a numpy array; operations record a dynamic graph
that a backward pass consumes and discards.  Backward rules are written
in terms of tensor operations themselves, so gradients can be
differentiated once more (``create_graph=True``) when an optimization
step must stay inside the graph.

Only what the networks here need is implemented: elementwise arithmetic
with broadcasting, 2-d matmul, relu, reductions, per-row batch
normalization, and length-doubling linear upsampling.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, NumericError

_state = threading.local()


def _recording() -> bool:
    return getattr(_state, "recording", True)


@contextmanager
def no_grad():
    """Disable graph recording inside the context."""
    previous = _recording()
    _state.recording = False
    try:
        yield
    finally:
        _state.recording = previous


@contextmanager
def _record_always():
    previous = _recording()
    _state.recording = True
    try:
        yield
    finally:
        _state.recording = previous


class Tensor:
    """Row-major float64 array plus an optional backward rule."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Tensor | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        if self.size != 1:
            raise DimensionError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def backward(self) -> None:
        """Populate ``grad`` on every leaf that requires it.

        Gradients are set afresh on each call, never accumulated across
        calls.
        """
        leaves = [t for t in _topo_order(self) if t.requires_grad and t._backward is None]
        for leaf, g in zip(leaves, grad(self, leaves)):
            leaf.grad = g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(_lift(other), -1.0))

    def __rsub__(self, other):
        return add(_lift(other), mul(self, -1.0))

    def __truediv__(self, other):
        return mul(self, power(_lift(other), -1.0))

    def __rtruediv__(self, other):
        return mul(_lift(other), power(self, -1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _node(data: np.ndarray, parents: tuple, backward: Callable) -> Tensor:
    out = Tensor(data)
    if _recording() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g: Tensor, shape: tuple) -> Tensor:
    """Sum ``g`` down to ``shape``, undoing numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = tensor_sum(g, axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = tensor_sum(g, axis=axes, keepdims=True)
    return g if g.shape == shape else reshape(g, shape)


def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)

    def backward(g):
        ga = _unbroadcast(g, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g, b.shape) if b.requires_grad else None
        return ga, gb

    return _node(a.data + b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)

    def backward(g):
        ga = _unbroadcast(mul(g, b), a.shape) if a.requires_grad else None
        gb = _unbroadcast(mul(g, a), b.shape) if b.requires_grad else None
        return ga, gb

    return _node(a.data * b.data, (a, b), backward)


def power(a, exponent) -> Tensor:
    a = _lift(a)
    p = float(exponent)

    def backward(g):
        return (mul(g, mul(power(a, p - 1.0), p)),)

    return _node(a.data**p, (a,), backward)


def matmul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs 2-d operands, got shapes {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shapes {a.shape} and {b.shape} are incompatible")

    def backward(g):
        ga = matmul(g, transpose(b)) if a.requires_grad else None
        gb = matmul(transpose(a), g) if b.requires_grad else None
        return ga, gb

    return _node(a.data @ b.data, (a, b), backward)


def transpose(a) -> Tensor:
    a = _lift(a)
    if a.ndim != 2:
        raise DimensionError(f"transpose needs a 2-d operand, got shape {a.shape}")

    def backward(g):
        return (transpose(g),)

    return _node(a.data.T, (a,), backward)


def reshape(a, shape) -> Tensor:
    a = _lift(a)
    shape = tuple(shape)

    def backward(g):
        return (reshape(g, a.shape),)

    return _node(a.data.reshape(shape), (a,), backward)


def broadcast_to(a, shape) -> Tensor:
    a = _lift(a)
    shape = tuple(shape)
    if a.shape == shape:
        return a

    def backward(g):
        return (_unbroadcast(g, a.shape),)

    return _node(np.broadcast_to(a.data, shape), (a,), backward)


def tensor_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    if isinstance(axis, int):
        axis = (axis,)

    def backward(g):
        gg = g
        if not keepdims:
            kept = [1] * a.ndim if axis is None else list(a.shape)
            if axis is not None:
                for ax in axis:
                    kept[ax] = 1
            gg = reshape(gg, tuple(kept))
        return (broadcast_to(gg, a.shape),)

    return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def relu(a) -> Tensor:
    """Elementwise max(x, 0); the subgradient at 0 is taken as 0."""
    a = _lift(a)
    positive = a.data > 0.0
    mask = Tensor(positive.astype(np.float64))

    def backward(g):
        return (mul(g, mask),)

    return _node(np.where(positive, a.data, 0.0), (a,), backward)


def batchnorm(x, scale, shift, eps: float = 1e-5) -> Tensor:
    """Normalize each row over the second axis, then apply a per-row affine.

    Uses the population variance of the current batch (no running
    statistics) and differentiates through the batch statistics.
    ``scale`` and ``shift`` are length-C vectors for a (C, N) input.
    """
    x, scale, shift = _lift(x), _lift(scale), _lift(shift)
    if x.ndim != 2:
        raise DimensionError(f"batchnorm needs a 2-d input, got shape {x.shape}")
    channels, n = x.shape
    if n < 2:
        raise DimensionError(f"batchnorm needs at least 2 entries per row, got {n}")
    for name, v in (("scale", scale), ("shift", shift)):
        if v.shape != (channels,):
            raise DimensionError(
                f"batchnorm {name} shape {v.shape} does not match {channels} rows"
            )
    mean = mul(tensor_sum(x, axis=1, keepdims=True), 1.0 / n)
    centered = x - mean
    var = mul(tensor_sum(mul(centered, centered), axis=1, keepdims=True), 1.0 / n)
    normalized = mul(centered, power(add(var, float(eps)), -0.5))
    return add(mul(normalized, reshape(scale, (channels, 1))), reshape(shift, (channels, 1)))


_UPSAMPLE_CACHE: dict[int, np.ndarray] = {}


def _upsample_matrix(n: int) -> np.ndarray:
    w = _UPSAMPLE_CACHE.get(n)
    if w is None:
        w = np.zeros((n, 2 * n))
        for j in range(2 * n):
            # half-sample offset: output j samples the source at (j+0.5)/2 - 0.5
            src = min(max((j + 0.5) / 2.0 - 0.5, 0.0), float(n - 1))
            lo = int(np.floor(src))
            hi = min(lo + 1, n - 1)
            frac = src - lo
            w[lo, j] += 1.0 - frac
            w[hi, j] += frac
        _UPSAMPLE_CACHE[n] = w
    return w


def upsample_linear(x) -> Tensor:
    """Double the length of each row by linear interpolation.

    Edges replicate; a length-1 row becomes two copies of its value.
    Implemented as multiplication by a fixed interpolation matrix, so it
    is linear and exactly differentiable to any order.
    """
    x = _lift(x)
    if x.ndim != 2:
        raise DimensionError(f"upsample_linear needs a 2-d input, got shape {x.shape}")
    return matmul(x, Tensor(_upsample_matrix(x.shape[1])))


def mse_loss(pred, target) -> Tensor:
    """Mean over samples of the squared l2 distance between rows.

    1-d inputs count as a single sample.
    """
    pred, target = _lift(pred), _lift(target)
    if pred.shape != target.shape:
        raise DimensionError(f"mse_loss shapes {pred.shape} and {target.shape} differ")
    n_samples = pred.shape[0] if pred.ndim >= 2 else 1
    diff = pred - target
    return mul(tensor_sum(mul(diff, diff)), 1.0 / n_samples)


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def grad(output: Tensor, inputs: Sequence[Tensor], create_graph: bool = False) -> list[Tensor]:
    """Gradients of a scalar ``output`` with respect to ``inputs``.

    With ``create_graph`` the returned gradients are themselves graph
    nodes and can be differentiated again.  Inputs the output does not
    depend on get zero gradients.
    """
    if output.size != 1:
        raise DimensionError(f"grad needs a scalar output, got shape {output.shape}")
    order = _topo_order(output)
    table: dict[int, Tensor] = {id(output): Tensor(np.ones_like(output.data))}
    context = _record_always if create_graph else no_grad
    with context():
        for node in reversed(order):
            g = table.get(id(node))
            if g is None or node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                held = table.get(id(parent))
                table[id(parent)] = pg if held is None else add(held, pg)
    results = []
    for t in inputs:
        g = table.get(id(t))
        results.append(g if g is not None else Tensor(np.zeros_like(t.data)))
    return results


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, step: float = 1e-6) -> float:
    """Worst-case relative gap between reverse-mode and central differences.

    ``f`` must map ``x`` to a scalar and be finite at ``x +- step`` in
    every coordinate.  Returns max_i |ad_i - fd_i| / max(1, |fd_i|).
    """
    previous = x.requires_grad
    x.requires_grad = True
    try:
        y = f(x)
        if not np.all(np.isfinite(y.data)):
            raise NumericError("grad_check: function value is not finite")
        (gx,) = grad(y, [x])
        analytic = gx.data.reshape(-1).copy()
    finally:
        x.requires_grad = previous
    if not x.data.flags.writeable:
        x.data = x.data.copy()
    numeric = np.empty(x.size)
    with no_grad():
        for i, idx in enumerate(np.ndindex(x.shape)):
            orig = x.data[idx]
            x.data[idx] = orig + step
            hi = float(f(x).data.reshape(()))
            x.data[idx] = orig - step
            lo = float(f(x).data.reshape(()))
            x.data[idx] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise NumericError("grad_check: function is not finite near x")
            numeric[i] = (hi - lo) / (2.0 * step)
    if x.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))))
