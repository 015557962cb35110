"""Reverse-mode differentiation over numpy arrays, plus spatial jets.

Values are float64 arrays. A :class:`Tensor` records the operation that
produced it; :meth:`Tensor.backward` walks the recorded graph in reverse
topological order. Spatial first and pure second derivatives are carried
forward as :class:`Jet` objects whose components are themselves tensors,
so losses built from ``u'`` and ``u''`` remain differentiable in the
network parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    ndim_extra = grad.ndim - len(shape)
    if ndim_extra > 0:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")
    # numpy must defer to Tensor's reflected operators
    __array_ufunc__ = None

    def __init__(self, value, parents: tuple = (), backward: Optional[Callable] = None,
                 requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self._parents = parents
        self._backward = backward
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.value.shape

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        a, b = self.shape, other.shape
        return _make(self.value + other.value, (self, other),
                     lambda g: (_unbroadcast(g, a), _unbroadcast(g, b)))

    __radd__ = __add__

    def __sub__(self, other):
        other = as_tensor(other)
        a, b = self.shape, other.shape
        return _make(self.value - other.value, (self, other),
                     lambda g: (_unbroadcast(g, a), -_unbroadcast(g, b)))

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __neg__(self):
        return _make(-self.value, (self,), lambda g: (-g,))

    def __mul__(self, other):
        other = as_tensor(other)
        x, y = self.value, other.value
        return _make(x * y, (self, other),
                     lambda g: (_unbroadcast(g * y, x.shape), _unbroadcast(g * x, y.shape)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return self * other.reciprocal()
        return self * (1.0 / float(other))

    def __getitem__(self, idx):
        shape = self.shape

        basic = isinstance(idx, (slice, int)) or (
            isinstance(idx, tuple) and all(isinstance(i, (slice, int)) for i in idx))

        def back(g):
            out = np.zeros(shape)
            if basic:
                out[idx] += g
            else:
                np.add.at(out, idx, g)
            return (out,)
        return _make(self.value[idx], (self,), back)

    def square(self):
        x = self.value
        return _make(x * x, (self,), lambda g: (2.0 * g * x,))

    def reciprocal(self):
        x = self.value
        r = 1.0 / x
        return _make(r, (self,), lambda g: (-g * r * r,))

    def sum(self):
        shape = self.shape
        return _make(self.value.sum(), (self,), lambda g: (np.broadcast_to(g, shape).copy(),))

    def reshape(self, *shape):
        old = self.shape
        return _make(self.value.reshape(*shape), (self,), lambda g: (g.reshape(old),))

    def broadcast_to(self, shape):
        old = self.shape
        return _make(np.broadcast_to(self.value, shape).copy(), (self,),
                     lambda g: (_unbroadcast(g, old),))

    # -- reverse pass -----------------------------------------------------

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf tensor."""
        if self.value.size != 1:
            raise ValueError("backward() requires a scalar output")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.value)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if not parent.requires_grad or pg is None:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def _make(value, parents, backward) -> Tensor:
    return Tensor(value, parents, backward)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def leaf(value) -> Tensor:
    return Tensor(np.array(value, dtype=np.float64), requires_grad=True)


# -- elementwise functions ------------------------------------------------

def sin(x: Tensor) -> Tensor:
    v = x.value
    return _make(np.sin(v), (x,), lambda g: (g * np.cos(v),))


def cos(x: Tensor) -> Tensor:
    v = x.value
    return _make(np.cos(v), (x,), lambda g: (-g * np.sin(v),))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.value)
    return _make(out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    v = x.value
    return _make(np.log(v), (x,), lambda g: (g / v,))


def linear(y: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``y @ weight.T + bias`` for a batch ``y`` of shape (N, in)."""
    yv, wv = y.value, weight.value
    out = yv @ wv.T
    if bias is None:
        return _make(out, (y, weight), lambda g: (g @ wv, g.T @ yv))
    out = out + bias.value
    return _make(out, (y, weight, bias), lambda g: (g @ wv, g.T @ yv, g.sum(axis=0)))


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate 2-D tensors along the last axis."""
    sizes = np.cumsum([p.shape[-1] for p in parts])[:-1]
    return _make(np.concatenate([p.value for p in parts], axis=-1), tuple(parts),
                 lambda g: tuple(np.split(g, sizes, axis=-1)))


# -- jets -----------------------------------------------------------------

@dataclass
class Jet:
    """Batched (value, d/dx_i, d^2/dx_i^2) triple.

    ``d1[i]`` and ``d2[i]`` broadcast against ``value``; ``d2[i] is None``
    means the second derivative is identically zero.
    """

    value: Tensor
    d1: list
    d2: list

    @property
    def dim(self) -> int:
        return len(self.d1)


def jet_input(x: np.ndarray) -> Jet:
    """Seed jet for the raw coordinates ``x`` of shape (N, d)."""
    n, d = x.shape
    d1 = []
    for i in range(d):
        e = np.zeros((1, d))
        e[0, i] = 1.0
        d1.append(Tensor(e))
    return Jet(Tensor(x), d1, [None] * d)


def jet_linear(jet: Jet, weight: Tensor, bias: Optional[Tensor] = None) -> Jet:
    value = linear(jet.value, weight, bias)
    d1 = [linear(t, weight) for t in jet.d1]
    d2 = [None if t is None else linear(t, weight) for t in jet.d2]
    return Jet(value, d1, d2)


def _jet_trig(jet: Jet, kind: str) -> Jet:
    # f = sin: f' = cos, f'' = -sin.   f = cos: f' = -sin, f'' = -cos.
    s, c = sin(jet.value), cos(jet.value)
    if kind == "sin":
        f, fp, fpp_neg = s, c, s
    else:
        f, fp, fpp_neg = c, -s, c
    d1, d2 = [], []
    for t1, t2 in zip(jet.d1, jet.d2):
        d1.append(fp * t1)
        curv = fpp_neg * t1.square()
        d2.append(-curv if t2 is None else fp * t2 - curv)
    return Jet(f, d1, d2)


def jet_sin(jet: Jet) -> Jet:
    return _jet_trig(jet, "sin")


def jet_cos(jet: Jet) -> Jet:
    return _jet_trig(jet, "cos")


def jet_scale(jet: Jet, c: float) -> Jet:
    return Jet(jet.value * c, [t * c for t in jet.d1],
               [None if t is None else t * c for t in jet.d2])


def jet_concat(jets: Sequence[Jet]) -> Jet:
    n = jets[0].value.shape[0]

    def full(t: Optional[Tensor], width: int) -> Tensor:
        if t is None:
            return Tensor(np.zeros((n, width)))
        return t if t.shape[0] == n else t.broadcast_to((n, t.shape[-1]))

    widths = [j.value.shape[-1] for j in jets]
    value = concat([j.value for j in jets])
    d = jets[0].dim
    d1 = [concat([full(j.d1[i], w) for j, w in zip(jets, widths)]) for i in range(d)]
    d2 = [concat([full(j.d2[i], w) for j, w in zip(jets, widths)]) for i in range(d)]
    return Jet(value, d1, d2)


def jet_dense(jet: Jet) -> Jet:
    """Materialize broadcast/zero derivative components at full batch shape."""
    shape = jet.value.shape

    def full(t):
        if t is None:
            return Tensor(np.zeros(shape))
        return t if t.shape == shape else t.broadcast_to(shape)
    return Jet(jet.value, [full(t) for t in jet.d1], [full(t) for t in jet.d2])


@dataclass
class JetValue:
    """Value, gradient and pure second derivatives of a scalar field at one point."""

    value: float
    d1: np.ndarray
    d2: np.ndarray
    finite: bool = field(init=False)

    def __post_init__(self):
        self.d1 = np.asarray(self.d1, dtype=np.float64)
        self.d2 = np.asarray(self.d2, dtype=np.float64)
        self.finite = bool(np.isfinite(self.value) and np.all(np.isfinite(self.d1))
                           and np.all(np.isfinite(self.d2)))


# -- parameter vectors ----------------------------------------------------

class LayoutError(ValueError):
    """Parameter vector does not match the expected block layout."""


@dataclass(frozen=True)
class ParamVector:
    """Flat parameter vector with a named block layout.

    ``layout`` is an ordered tuple of ``(name, shape)`` pairs; blocks are
    stored contiguously in C order.
    """

    values: np.ndarray
    layout: tuple

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "layout", tuple((n, tuple(s)) for n, s in self.layout))
        if values.size != layout_size(self.layout):
            raise LayoutError(f"vector has {values.size} entries, layout needs "
                              f"{layout_size(self.layout)}")

    def __len__(self):
        return self.values.size

    def unflatten(self) -> dict:
        return unflatten(self.values, self.layout)

    @classmethod
    def flatten(cls, blocks: dict, layout) -> "ParamVector":
        parts = []
        for name, shape in layout:
            arr = np.asarray(blocks[name], dtype=np.float64)
            if arr.shape != tuple(shape):
                raise LayoutError(f"block {name!r} has shape {arr.shape}, expected {tuple(shape)}")
            parts.append(arr.reshape(-1))
        values = np.concatenate(parts) if parts else np.zeros(0)
        return cls(values, layout)

    def with_values(self, values) -> "ParamVector":
        return ParamVector(np.array(values, dtype=np.float64), self.layout)


def layout_size(layout) -> int:
    return int(sum(int(np.prod(s)) for _, s in layout))


def unflatten(values, layout) -> dict:
    """Split a flat array or :class:`Tensor` into named blocks."""
    out = {}
    start = 0
    is_tensor = isinstance(values, Tensor)
    total = values.shape[0] if is_tensor else np.asarray(values).shape[0]
    if total != layout_size(layout):
        raise LayoutError(f"vector has {total} entries, layout needs {layout_size(layout)}")
    for name, shape in layout:
        size = int(np.prod(shape))
        seg = values[start:start + size]
        out[name] = seg.reshape(*shape) if is_tensor else np.asarray(seg).reshape(shape)
        start += size
    return out


# -- gradients ------------------------------------------------------------

def value_and_grad(loss: Callable[[Tensor], Tensor], theta) -> tuple[float, np.ndarray]:
    """Evaluate ``loss(theta)`` and its gradient with respect to ``theta``.

    Non-finite results are returned as-is; callers test with
    ``np.isfinite``. Floating point warnings are silenced here because
    overflow is an expected outcome of unstable trajectories.
    """
    values = theta.values if isinstance(theta, ParamVector) else theta
    t = leaf(np.array(values, dtype=np.float64))
    with np.errstate(all="ignore"):
        out = loss(t)
        out.backward()
    grad = t.grad if t.grad is not None else np.zeros_like(t.value)
    return float(out.value), grad


def grad_params(loss: Callable[[Tensor], Tensor], theta) -> np.ndarray:
    return value_and_grad(loss, theta)[1]
