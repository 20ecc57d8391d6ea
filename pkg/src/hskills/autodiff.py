"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

A ``Var`` wraps an ndarray and records how it was produced; calling
``backward()`` on a scalar walks the tape in reverse topological order and
accumulates gradients into every reachable leaf. Only the operations needed
by the training losses are implemented, all batched.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Var", "leaf", "concat", "stack_rows", "maximum", "minimum"]


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward op."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Var:
    __slots__ = ("data", "grad", "parents", "vjp", "needs_grad")

    def __init__(self, data, parents=(), vjp=None, needs_grad=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.vjp = vjp
        if needs_grad is None:
            needs_grad = any(p.needs_grad for p in parents)
        self.needs_grad = needs_grad

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Var(shape={self.data.shape})"

    # -- graph walking ----------------------------------------------------

    def backward(self, seed: np.ndarray | None = None):
        if seed is None:
            if self.data.size != 1:
                raise ValueError("backward() without seed requires a scalar")
            seed = np.ones_like(self.data)
        else:
            seed = np.asarray(seed, dtype=np.float64)
            if seed.shape != self.data.shape:
                raise ValueError("cotangent shape mismatch")
        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in visited or not node.needs_grad:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                stack.append((p, False))
        self.grad = seed
        for node in reversed(order):
            if node.vjp is not None and node.grad is not None:
                node.vjp(node.grad)

    def _accum(self, g: np.ndarray):
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad = self.grad + g

    # -- elementwise arithmetic -------------------------------------------

    def __add__(self, other):
        other = as_var(other)
        out = Var(self.data + other.data, (self, other))

        def vjp(g):
            if self.needs_grad:
                self._accum(_unbroadcast(g, self.data.shape))
            if other.needs_grad:
                other._accum(_unbroadcast(g, other.data.shape))

        out.vjp = vjp
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Var(-self.data, (self,))
        out.vjp = lambda g: self._accum(-g)
        return out

    def __sub__(self, other):
        return self + (-as_var(other))

    def __rsub__(self, other):
        return as_var(other) + (-self)

    def __mul__(self, other):
        other = as_var(other)
        out = Var(self.data * other.data, (self, other))

        def vjp(g):
            if self.needs_grad:
                self._accum(_unbroadcast(g * other.data, self.data.shape))
            if other.needs_grad:
                other._accum(_unbroadcast(g * self.data, other.data.shape))

        out.vjp = vjp
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_var(other)
        out = Var(self.data / other.data, (self, other))

        def vjp(g):
            if self.needs_grad:
                self._accum(_unbroadcast(g / other.data, self.data.shape))
            if other.needs_grad:
                other._accum(
                    _unbroadcast(-g * self.data / other.data**2, other.data.shape)
                )

        out.vjp = vjp
        return out

    def __rtruediv__(self, other):
        return as_var(other) / self

    def __matmul__(self, other):
        other = as_var(other)
        out = Var(self.data @ other.data, (self, other))

        a, b = self.data, other.data

        def vjp(g):
            if self.needs_grad:
                if a.ndim == 1 and b.ndim == 1:
                    self._accum(g * b)
                elif b.ndim == 1:
                    self._accum(np.outer(g, b) if a.ndim == 2 else g[..., None] * b)
                else:
                    self._accum(g @ b.swapaxes(-1, -2))
            if other.needs_grad:
                if a.ndim == 1 and b.ndim == 1:
                    other._accum(g * a)
                elif a.ndim == 1:
                    other._accum(np.outer(a, g))
                else:
                    other._accum(a.swapaxes(-1, -2) @ g)

        out.vjp = vjp
        return out

    def __getitem__(self, idx):
        out = Var(self.data[idx], (self,))

        def vjp(g):
            full = np.zeros_like(self.data)
            np.add.at(full, idx, g)
            self._accum(full)

        out.vjp = vjp
        return out

    # -- nonlinearities ----------------------------------------------------

    def relu(self):
        mask = self.data > 0
        out = Var(self.data * mask, (self,))
        out.vjp = lambda g: self._accum(g * mask)
        return out

    def tanh(self):
        y = np.tanh(self.data)
        out = Var(y, (self,))
        out.vjp = lambda g: self._accum(g * (1.0 - y * y))
        return out

    def exp(self):
        y = np.exp(self.data)
        out = Var(y, (self,))
        out.vjp = lambda g: self._accum(g * y)
        return out

    def log(self):
        out = Var(np.log(self.data), (self,))
        out.vjp = lambda g: self._accum(g / self.data)
        return out

    def square(self):
        out = Var(self.data**2, (self,))
        out.vjp = lambda g: self._accum(2.0 * g * self.data)
        return out

    def sqrt(self):
        y = np.sqrt(self.data)
        out = Var(y, (self,))
        out.vjp = lambda g: self._accum(0.5 * g / y)
        return out

    def softplus(self):
        # log(1 + e^x), stable for large |x|
        y = np.maximum(self.data, 0.0) + np.log1p(np.exp(-np.abs(self.data)))
        sig = 1.0 / (1.0 + np.exp(-self.data))
        out = Var(y, (self,))
        out.vjp = lambda g: self._accum(g * sig)
        return out

    def clip(self, lo: float, hi: float):
        # gradient is zero outside the clamp window
        mask = (self.data >= lo) & (self.data <= hi)
        out = Var(np.clip(self.data, lo, hi), (self,))
        out.vjp = lambda g: self._accum(g * mask)
        return out

    # -- reductions and shaping -------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = Var(self.data.sum(axis=axis, keepdims=keepdims), (self,))

        def vjp(g):
            if axis is None:
                self._accum(np.broadcast_to(g, self.data.shape).copy())
            else:
                if not keepdims:
                    g = np.expand_dims(g, axis)
                self._accum(np.broadcast_to(g, self.data.shape).copy())

        out.vjp = vjp
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def transpose(self, *axes):
        if not axes:
            axes = tuple(reversed(range(self.data.ndim)))
        inv = np.argsort(axes)
        out = Var(self.data.transpose(axes), (self,))
        out.vjp = lambda g: self._accum(g.transpose(tuple(inv)))
        return out

    def reshape(self, *shape):
        out = Var(self.data.reshape(*shape), (self,))
        out.vjp = lambda g: self._accum(g.reshape(self.data.shape))
        return out

    def logsumexp(self, axis=-1, keepdims=False):
        m = self.data.max(axis=axis, keepdims=True)
        y = m + np.log(np.exp(self.data - m).sum(axis=axis, keepdims=True))
        soft = np.exp(self.data - y)
        out = Var(y if keepdims else np.squeeze(y, axis=axis), (self,))

        def vjp(g):
            if not keepdims:
                g = np.expand_dims(g, axis)
            self._accum(g * soft)

        out.vjp = vjp
        return out

    def detach(self):
        return Var(self.data.copy(), needs_grad=False)


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x, needs_grad=False)


def leaf(data: np.ndarray) -> Var:
    """A differentiable leaf; gradients accumulate into ``.grad``."""
    return Var(data, needs_grad=True)


def concat(vars_: list[Var], axis: int = -1) -> Var:
    vars_ = [as_var(v) for v in vars_]
    out = Var(np.concatenate([v.data for v in vars_], axis=axis), tuple(vars_))
    sizes = [v.data.shape[axis] for v in vars_]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        for v, piece in zip(vars_, np.split(g, splits, axis=axis)):
            if v.needs_grad:
                v._accum(piece)

    out.vjp = vjp
    return out


def stack_rows(vars_: list[Var]) -> Var:
    """Stack equally shaped arrays along a new leading axis."""
    vars_ = [as_var(v) for v in vars_]
    out = Var(np.stack([v.data for v in vars_], axis=0), tuple(vars_))

    def vjp(g):
        for i, v in enumerate(vars_):
            if v.needs_grad:
                v._accum(g[i])

    out.vjp = vjp
    return out


def maximum(a: Var, b: Var) -> Var:
    a, b = as_var(a), as_var(b)
    mask = a.data >= b.data
    out = Var(np.maximum(a.data, b.data), (a, b))

    def vjp(g):
        if a.needs_grad:
            a._accum(_unbroadcast(g * mask, a.data.shape))
        if b.needs_grad:
            b._accum(_unbroadcast(g * ~mask, b.data.shape))

    out.vjp = vjp
    return out


def minimum(a: Var, b: Var) -> Var:
    a, b = as_var(a), as_var(b)
    mask = a.data <= b.data
    out = Var(np.minimum(a.data, b.data), (a, b))

    def vjp(g):
        if a.needs_grad:
            a._accum(_unbroadcast(g * mask, a.data.shape))
        if b.needs_grad:
            b._accum(_unbroadcast(g * ~mask, b.data.shape))

    out.vjp = vjp
    return out
