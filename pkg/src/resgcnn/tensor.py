"""Small dense tensor with tape-based reverse-mode differentiation.

Only the handful of operations the forecaster needs are provided: grid
convolution, per-frame adjacency aggregation, PReLU, axis permutation and a
few elementwise helpers.  Every op records a closure that maps the output
gradient to the gradients of its inputs; :meth:`Tensor.backward` replays the
tape in reverse topological order.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when operand extents disagree.

    ``op`` names the operation and ``dim`` the offending dimension label.
    """

    def __init__(self, op: str, dim: str, expected, got):
        self.op = op
        self.dim = dim
        self.expected = expected
        self.got = got
        super().__init__(f"{op}: dimension '{dim}' expected {expected}, got {got}")


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"non-finite gradient in parameter '{name}'")


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 _parents: tuple["Tensor", ...] = (), _backward: BackwardFn | None = None):
        self.data = np.asarray(data, dtype=DTYPE) if not isinstance(data, np.ndarray) else data
        if self.data.ndim == 0:
            self.data = self.data.reshape(())
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _as_tensor(other))

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def sum(self) -> "Tensor":
        return tsum(self)

    def permute(self, *axes: int) -> "Tensor":
        return permute(self, axes)

    def zero_grad(self):
        if self.grad is not None:
            self.grad.fill(0.0)

    def backward(self):
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar root, got shape {self.shape}")
        order = _topological(self)
        pending: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    if node.grad is None:
                        node.grad = np.zeros_like(node.data)
                    node.grad += g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + pg
                else:
                    pending[key] = pg


class Parameter(Tensor):
    """Leaf tensor with an always-allocated gradient buffer and a name."""

    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(np.array(data, dtype=DTYPE), requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=DTYPE))


def _topological(root: Tensor) -> list[Tensor]:
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
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def _result(data: np.ndarray, parents: tuple[Tensor, ...], fn: BackwardFn) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, fn)
    return Tensor(data)


def _check(op: str, dim: str, expected, got):
    if expected != got:
        raise ShapeError(op, dim, expected, got)


# -- forward ops ------------------------------------------------------------

def conv_grid(x: Tensor, weight: Tensor, bias: Tensor, padding: tuple[int, int] = (0, 0)) -> Tensor:
    """Cross-correlate ``x[C_in, T, N]`` with ``weight[C_out, C_in, kT, kN]``.

    Zero padding ``(pT, pN)`` is applied to both ends of the T and N axes.
    """
    if x.data.ndim != 3:
        raise ShapeError("conv_grid", "input rank", 3, x.data.ndim)
    if weight.data.ndim != 4:
        raise ShapeError("conv_grid", "kernel rank", 4, weight.data.ndim)
    c_in, t, n = x.shape
    c_out, wc_in, kt, kn = weight.shape
    _check("conv_grid", "C_in", wc_in, c_in)
    _check("conv_grid", "bias C_out", (c_out,), bias.shape)
    pt, pn = padding
    if kt > t + 2 * pt:
        raise ShapeError("conv_grid", "kT", f"<= {t + 2 * pt}", kt)
    if kn > n + 2 * pn:
        raise ShapeError("conv_grid", "kN", f"<= {n + 2 * pn}", kn)

    xp = np.pad(x.data, ((0, 0), (pt, pt), (pn, pn))) if (pt or pn) else x.data
    w = weight.data
    t_out, n_out = t + 2 * pt - kt + 1, n + 2 * pn - kn + 1
    if kt == 1 and kn == 1:
        win = None
        out = np.tensordot(w[:, :, 0, 0], xp, axes=(1, 0))
    else:
        # win: [C_in, T', N', kT, kN]
        win = sliding_window_view(xp, (kt, kn), axis=(1, 2))
        out = np.tensordot(w, win, axes=([1, 2, 3], [0, 3, 4]))
    out = out + bias.data[:, None, None]

    def backward(g):
        gb = g.sum(axis=(1, 2))
        if win is None:
            gw = np.tensordot(g, xp, axes=([1, 2], [1, 2]))[:, :, None, None]
            gxp = np.tensordot(w[:, :, 0, 0], g, axes=(0, 0))
        else:
            gw = np.tensordot(g, win, axes=([1, 2], [1, 2]))
            gxp = np.zeros_like(xp)
            for i in range(kt):
                for j in range(kn):
                    gxp[:, i:i + t_out, j:j + n_out] += np.tensordot(w[:, :, i, j], g, axes=(0, 0))
        gx = gxp[:, pt:pt + t, pn:pn + n]
        return gx, gw, gb

    return _result(out, (x, weight, bias), backward)


def frame_aggregate(features: Tensor, adjacency: Tensor) -> Tensor:
    """Per-frame matrix-vector product: ``out[c, t] = adjacency[t] @ features[c, t]``."""
    if features.data.ndim != 3:
        raise ShapeError("frame_aggregate", "features rank", 3, features.data.ndim)
    if adjacency.data.ndim != 3:
        raise ShapeError("frame_aggregate", "adjacency rank", 3, adjacency.data.ndim)
    _, t, n = features.shape
    _check("frame_aggregate", "T", t, adjacency.shape[0])
    _check("frame_aggregate", "N (rows)", n, adjacency.shape[1])
    _check("frame_aggregate", "N (cols)", n, adjacency.shape[2])
    x, a = features.data, adjacency.data
    out = np.einsum("tij,ctj->cti", a, x)

    def backward(g):
        gx = np.einsum("tij,cti->ctj", a, g)
        ga = np.einsum("cti,ctj->tij", g, x) if adjacency.requires_grad else None
        return gx, ga

    return _result(out, (features, adjacency), backward)


def prelu(x: Tensor, slopes: Tensor) -> Tensor:
    """``x if x > 0 else slope[c] * x`` with ``c`` the index along axis 0."""
    _check("prelu", "channels", (x.shape[0],), slopes.shape)
    bshape = (-1,) + (1,) * (x.data.ndim - 1)
    a = slopes.data.reshape(bshape)
    pos = x.data > 0
    out = np.where(pos, x.data, a * x.data)

    def backward(g):
        gx = np.where(pos, g, a * g)
        ga = np.where(pos, 0.0, x.data * g)
        ga = ga.reshape(ga.shape[0], -1).sum(axis=1)
        return gx, ga

    return _result(out, (x, slopes), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check("add", "shape", a.shape, b.shape)
    return _result(a.data + b.data, (a, b), lambda g: (g, g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if b.data.ndim == 0:
        k = b.data
        return _result(a.data * k, (a, b), lambda g: (g * k, np.sum(g * a.data)))
    _check("mul", "shape", a.shape, b.shape)
    return _result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def tsum(x: Tensor) -> Tensor:
    shape = x.shape
    return _result(np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


def permute(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _result(np.ascontiguousarray(x.data.transpose(axes)), (x,),
                   lambda g: (g.transpose(inverse),))


# -- optimisation -----------------------------------------------------------

def sgd_step(params: Iterable[Parameter], lr: float):
    """Plain SGD: ``p -= lr * grad`` then zero the gradient buffers.

    All gradients are checked before any parameter is touched.
    """
    if not lr > 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    params = list(params)
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteGradientError(p.name)
    for p in params:
        p.data -= lr * p.grad
        p.grad.fill(0.0)
