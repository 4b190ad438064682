"""Minimal reverse-mode autodiff over numpy float64 arrays.

This is the differentiable substrate for the recurrent encoders, graph
message passing, classifiers and flow layers in this package. It is
deliberately small: only the operations those components need are
implemented, everything runs in double precision, and evaluation of a
trained model can bypass the tape entirely by passing plain ndarrays
through the same helper functions (they dispatch on input type).
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence, Union

import numpy as np

ArrayLike = Union["Var", np.ndarray, float, int]


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Var:
    """A node in the computation tape: a float64 array plus a backward rule."""

    __slots__ = ("value", "grad", "_parents", "_backward")

    # keep numpy from absorbing Vars in mixed expressions: ndarray <op> Var
    # must fall through to the reflected operator below
    __array_ufunc__ = None
    __array_priority__ = 1000

    def __init__(self, value, parents: tuple = (), backward: Callable | None = None):
        self.value = _as_array(value)
        self.grad: np.ndarray | None = None
        self._parents = parents
        self._backward = backward

    # -- bookkeeping ---------------------------------------------------

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    def backward(self) -> None:
        """Backpropagate from this scalar node through the tape."""
        if self.value.size != 1:
            raise ValueError("backward() requires a scalar output")
        order: list[Var] = []
        seen: set[int] = set()
        stack: list[tuple[Var, bool]] = [(self, False)]
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
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other: ArrayLike) -> "Var":
        o = wrap(other)

        def bw(g):
            self._accum(_unbroadcast(g, self.shape))
            o._accum(_unbroadcast(g, o.shape))

        return Var(self.value + o.value, (self, o), bw)

    __radd__ = __add__

    def __sub__(self, other: ArrayLike) -> "Var":
        return self + (-wrap(other))

    def __rsub__(self, other: ArrayLike) -> "Var":
        return wrap(other) + (-self)

    def __neg__(self) -> "Var":
        def bw(g):
            self._accum(-g)

        return Var(-self.value, (self,), bw)

    def __mul__(self, other: ArrayLike) -> "Var":
        o = wrap(other)

        def bw(g):
            self._accum(_unbroadcast(g * o.value, self.shape))
            o._accum(_unbroadcast(g * self.value, o.shape))

        return Var(self.value * o.value, (self, o), bw)

    __rmul__ = __mul__

    def __truediv__(self, other: ArrayLike) -> "Var":
        o = wrap(other)

        def bw(g):
            self._accum(_unbroadcast(g / o.value, self.shape))
            o._accum(_unbroadcast(-g * self.value / o.value**2, o.shape))

        return Var(self.value / o.value, (self, o), bw)

    def __rtruediv__(self, other: ArrayLike) -> "Var":
        return wrap(other) / self

    def __pow__(self, p: float) -> "Var":
        if isinstance(p, Var):
            raise TypeError("only constant exponents are supported")

        def bw(g):
            self._accum(g * p * self.value ** (p - 1))

        return Var(self.value**p, (self,), bw)

    def __matmul__(self, other: ArrayLike) -> "Var":
        o = wrap(other)
        a, b = self.value, o.value

        def bw(g):
            if a.ndim == 1 and b.ndim == 1:
                self._accum(g * b)
                o._accum(g * a)
            elif a.ndim == 1:  # (n,) @ (n,k) -> (k,)
                self._accum(g @ b.T)
                o._accum(np.outer(a, g))
            elif b.ndim == 1:  # (m,n) @ (n,) -> (m,)
                self._accum(np.outer(g, b))
                o._accum(a.T @ g)
            else:  # (m,n) @ (n,k) -> (m,k)
                self._accum(g @ b.T)
                o._accum(a.T @ g)

        return Var(a @ b, (self, o), bw)

    def __rmatmul__(self, other: ArrayLike) -> "Var":
        return wrap(other) @ self

    def __getitem__(self, idx) -> "Var":
        basic = (int, slice, type(Ellipsis), type(None))

        def bw(g):
            if self.grad is None:
                self.grad = np.zeros_like(self.value)
            # += suffices for basic (view) indexing; fancy indices need add.at
            if isinstance(idx, basic) or (
                isinstance(idx, tuple) and all(isinstance(i, basic) for i in idx)
            ):
                self.grad[idx] += g
            else:
                np.add.at(self.grad, idx, g)

        return Var(self.value[idx], (self,), bw)

    # -- reductions ----------------------------------------------------

    def sum(self, axis: int | None = None) -> "Var":
        def bw(g):
            if axis is None:
                self._accum(np.broadcast_to(g, self.shape).copy())
            else:
                self._accum(np.broadcast_to(np.expand_dims(g, axis), self.shape).copy())

        return Var(self.value.sum(axis=axis), (self,), bw)

    def mean(self) -> "Var":
        return self.sum() / float(self.value.size)

    def reshape(self, *shape) -> "Var":
        old = self.shape

        def bw(g):
            self._accum(g.reshape(old))

        return Var(self.value.reshape(*shape), (self,), bw)

    def item(self) -> float:
        return float(self.value)

    def __repr__(self) -> str:
        return f"Var(shape={self.shape})"


def wrap(x: ArrayLike) -> Var:
    """Lift a constant into the tape (gradients into it are discarded)."""
    return x if isinstance(x, Var) else Var(x)


def value_of(x: ArrayLike) -> np.ndarray:
    return x.value if isinstance(x, Var) else _as_array(x)


# -- pointwise functions, polymorphic over Var / ndarray ----------------


def exp(x: ArrayLike):
    if isinstance(x, Var):
        y = np.exp(x.value)

        def bw(g):
            x._accum(g * y)

        return Var(y, (x,), bw)
    return np.exp(_as_array(x))


def log(x: ArrayLike):
    if isinstance(x, Var):
        def bw(g):
            x._accum(g / x.value)

        return Var(np.log(x.value), (x,), bw)
    return np.log(_as_array(x))


def tanh(x: ArrayLike):
    if isinstance(x, Var):
        y = np.tanh(x.value)

        def bw(g):
            x._accum(g * (1.0 - y**2))

        return Var(y, (x,), bw)
    return np.tanh(_as_array(x))


def sigmoid(x: ArrayLike):
    if isinstance(x, Var):
        y = _sigmoid_np(x.value)

        def bw(g):
            x._accum(g * y * (1.0 - y))

        return Var(y, (x,), bw)
    return _sigmoid_np(_as_array(x))


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def relu(x: ArrayLike):
    if isinstance(x, Var):
        mask = x.value > 0

        def bw(g):
            x._accum(g * mask)

        return Var(x.value * mask, (x,), bw)
    x = _as_array(x)
    return x * (x > 0)


def clip_min(x: ArrayLike, lo: float):
    """max(x, lo); gradient passes only where x > lo."""
    if isinstance(x, Var):
        mask = x.value > lo

        def bw(g):
            x._accum(g * mask)

        return Var(np.maximum(x.value, lo), (x,), bw)
    return np.maximum(_as_array(x), lo)


def concat(parts: Sequence[ArrayLike], axis: int = -1):
    """Concatenate along `axis`; differentiable when any part is a Var."""
    if any(isinstance(p, Var) for p in parts):
        vs = [wrap(p) for p in parts]
        sizes = [v.value.shape[axis] for v in vs]
        offsets = np.cumsum([0] + sizes)

        def bw(g):
            for v, a, b in zip(vs, offsets[:-1], offsets[1:]):
                sl = [slice(None)] * g.ndim
                sl[axis if axis >= 0 else g.ndim + axis] = slice(a, b)
                v._accum(g[tuple(sl)])

        return Var(np.concatenate([v.value for v in vs], axis=axis), tuple(vs), bw)
    return np.concatenate([_as_array(p) for p in parts], axis=axis)


def sum_last(x: ArrayLike):
    """Sum over the trailing axis (per-sample reductions on batches)."""
    if isinstance(x, Var):
        return x.sum(axis=-1)
    return _as_array(x).sum(axis=-1)


def stack_sum(parts: Iterable[ArrayLike]):
    """Elementwise sum of same-shape terms (empty input is not allowed)."""
    parts = list(parts)
    if not parts:
        raise ValueError("stack_sum of no terms")
    acc = parts[0]
    for p in parts[1:]:
        acc = acc + p
    return acc
