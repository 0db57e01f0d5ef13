"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations record themselves on the active :class:`Tape` only when some input
requires a gradient, so the same code path serves training (recorded) and
sampling (plain numpy underneath, no graph kept alive).
"""

from __future__ import annotations

import numpy as np


class DimensionError(ValueError):
    pass


_TAPES: list["Tape"] = []


class Tape:
    """Records primitive ops in execution order.

    Execution order is a topological order of the graph, so walking it in
    reverse visits every node after all of its consumers, exactly once.
    """

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.remove(self)
        return False

    def record(self, node: "Tensor"):
        self.nodes.append(node)

    def backward(self, output: "Tensor"):
        if output.data.size != 1:
            raise DimensionError("backward needs a scalar output")
        output.grad = np.ones_like(output.data)
        for node in reversed(self.nodes):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def as_tensor(x) -> "Tensor":
    return x if isinstance(x, Tensor) else Tensor(x)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self):
        self.grad = None

    def _accum(self, g: np.ndarray):
        if not self.requires_grad:
            return
        g = _unbroadcast(g, self.data.shape)
        self.grad = g.copy() if self.grad is None else self.grad + g

    # ---- graph construction -------------------------------------------
    @staticmethod
    def _make(data, parents, backward) -> "Tensor":
        out = Tensor(data)
        if _TAPES and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
            _TAPES[-1].record(out)
        return out

    # ---- primitives ---------------------------------------------------
    def __add__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            a._accum(g)
            b._accum(g)

        return Tensor._make(a.data + b.data, (a, b), bw)

    __radd__ = __add__

    def __sub__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            a._accum(g)
            b._accum(-g)

        return Tensor._make(a.data - b.data, (a, b), bw)

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            a._accum(g * b.data)
            b._accum(g * a.data)

        return Tensor._make(a.data * b.data, (a, b), bw)

    __rmul__ = __mul__

    def __neg__(self):
        a = self
        return Tensor._make(-a.data, (a,), lambda g: a._accum(-g))

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))

    def tanh(self):
        a = self
        y = np.tanh(a.data)
        return Tensor._make(y, (a,), lambda g: a._accum(g * (1.0 - y * y)))

    def relu(self):
        a = self
        on = a.data > 0
        return Tensor._make(a.data * on, (a,), lambda g: a._accum(g * on))

    def silu(self):
        a = self
        s = 0.5 * (1.0 + np.tanh(0.5 * a.data))  # logistic without exp overflow
        return Tensor._make(a.data * s, (a,), lambda g: a._accum(g * s * (1.0 + a.data * (1.0 - s))))

    def exp(self):
        a = self
        y = np.exp(a.data)
        return Tensor._make(y, (a,), lambda g: a._accum(g * y))

    def sin(self):
        a = self
        return Tensor._make(np.sin(a.data), (a,), lambda g: a._accum(g * np.cos(a.data)))

    def cos(self):
        a = self
        return Tensor._make(np.cos(a.data), (a,), lambda g: a._accum(-g * np.sin(a.data)))

    def square(self):
        a = self
        return Tensor._make(a.data * a.data, (a,), lambda g: a._accum(2.0 * g * a.data))

    def sum(self):
        a = self
        return Tensor._make(a.data.sum(), (a,), lambda g: a._accum(np.broadcast_to(g, a.data.shape)))

    def mean(self):
        a = self
        n = a.data.size
        return Tensor._make(a.data.mean(), (a,), lambda g: a._accum(np.broadcast_to(g / n, a.data.shape)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner dimensions differ: {a.shape} x {b.shape}")

    def bw(g):
        a._accum(g @ b.data.T)
        b._accum(a.data.T @ g)

    return Tensor._make(a.data @ b.data, (a, b), bw)


def concat(parts: list[Tensor], axis: int = 1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g):
        for p, gp in zip(parts, np.split(g, cuts, axis=axis)):
            p._accum(gp)

    return Tensor._make(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), bw)


PRIMITIVES = ("add", "sub", "mul", "neg", "matmul", "tanh", "relu", "silu",
              "exp", "sin", "cos", "square", "sum", "mean", "concat")
