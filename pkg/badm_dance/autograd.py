"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Every operation on :class:`Tensor` records its inputs and a local backward rule.
:func:`backward` orders the recorded operations topologically
(:class:`ComputeGraph`), runs the rules in reverse and accumulates ``.grad`` on
the leaves that require gradients. The graph is consumed by the pass.
"""

from __future__ import annotations

import itertools
from collections.abc import Callable, Sequence
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .errors import NonScalarLoss, ShapeMismatch

_node_ids = itertools.count()
_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(
        isinstance(i, (int, np.integer, slice)) or i is Ellipsis or i is None
        for i in items
    )


class Tensor:
    """An n-dimensional float64 array that remembers how it was computed."""

    __slots__ = ("data", "grad", "requires_grad", "id", "op", "_parents", "_backward")
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.id = next(_node_ids)
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self.op == "leaf"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeMismatch(f"item() needs one value, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    # arithmetic

    def __add__(self, other):
        other = as_tensor(other)
        a, b = self, other
        return _record(
            a.data + b.data,
            (a, b),
            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
            "add",
        )

    __radd__ = __add__

    def __sub__(self, other):
        other = as_tensor(other)
        a, b = self, other
        return _record(
            a.data - b.data,
            (a, b),
            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
            "sub",
        )

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self, other
        return _record(
            a.data * b.data,
            (a, b),
            lambda g: (
                _unbroadcast(g * b.data, a.shape),
                _unbroadcast(g * a.data, b.shape),
            ),
            "mul",
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        a, b = self, other
        return _record(
            a.data / b.data,
            (a, b),
            lambda g: (
                _unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
            ),
            "div",
        )

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __neg__(self):
        return _record(-self.data, (self,), lambda g: (-g,), "neg")

    def __pow__(self, exponent: float):
        a = self
        return _record(
            a.data**exponent,
            (a,),
            lambda g: (g * exponent * a.data ** (exponent - 1),),
            "pow",
        )

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self, other
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise ShapeMismatch(f"Cannot matmul {a.shape} by {b.shape}")

        def rule(g):
            ga = g @ np.swapaxes(b.data, -1, -2)
            gb = np.swapaxes(a.data, -1, -2) @ g
            return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

        return _record(a.data @ b.data, (a, b), rule, "matmul")

    def __rmatmul__(self, other):
        return as_tensor(other) @ self

    def __getitem__(self, index):
        a = self

        def rule(g):
            full = np.zeros_like(a.data)
            if _is_basic_index(index):
                full[index] += g
            else:
                np.add.at(full, index, g)
            return (full,)

        return _record(a.data[index], (a,), rule, "getitem")

    # reductions and shape

    def sum(self, axis=None, keepdims: bool = False):
        a = self

        def rule(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, a.shape).copy(),)

        return _record(a.data.sum(axis=axis, keepdims=keepdims), (a,), rule, "sum")

    def mean(self, axis=None, keepdims: bool = False):
        count = self.data.size if axis is None else np.prod(
            [self.shape[i] for i in np.atleast_1d(axis)]
        )
        return self.sum(axis=axis, keepdims=keepdims) / float(count)

    def reshape(self, *shape):
        shape = shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape
        a = self
        return _record(
            a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape"
        )

    def transpose(self, *axes):
        axes = axes[0] if len(axes) == 1 and isinstance(axes[0], tuple) else axes
        axes = tuple(axes) if axes else tuple(reversed(range(self.ndim)))
        inverse = tuple(np.argsort(axes))
        return _record(
            self.data.transpose(axes),
            (self,),
            lambda g: (g.transpose(inverse),),
            "transpose",
        )

    def swapaxes(self, first: int, second: int):
        axes = list(range(self.ndim))
        axes[first], axes[second] = axes[second], axes[first]
        return self.transpose(tuple(axes))

    # elementwise functions

    def exp(self):
        out = np.exp(self.data)
        return _record(out, (self,), lambda g: (g * out,), "exp")

    def log(self):
        a = self
        return _record(np.log(a.data), (a,), lambda g: (g / a.data,), "log")

    def sqrt(self):
        out = np.sqrt(self.data)
        return _record(out, (self,), lambda g: (g * 0.5 / out,), "sqrt")

    def tanh(self):
        out = np.tanh(self.data)
        return _record(out, (self,), lambda g: (g * (1.0 - out * out),), "tanh")

    def sigmoid(self):
        out = 1.0 / (1.0 + np.exp(-self.data))
        return _record(out, (self,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _record(data, parents: tuple[Tensor, ...], rule: Callable, op: str) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.op = op
        out._parents = parents
        out._backward = rule
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def rule(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _record(out, (x,), rule, "softmax")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    return _record(
        np.concatenate([t.data for t in tensors], axis=axis),
        tensors,
        lambda g: tuple(np.split(g, cuts, axis=axis)),
        "concat",
    )


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    return _record(
        np.stack([t.data for t in tensors], axis=axis),
        tensors,
        lambda g: tuple(np.moveaxis(g, axis, 0)),
        "stack",
    )


@dataclass
class ComputeGraph:
    """Recorded operations reachable from an output, in topological order."""

    nodes: list[Tensor]

    @classmethod
    def trace(cls, output: Tensor) -> "ComputeGraph":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack_: list[tuple[Tensor, bool]] = [(output, False)]
        while stack_:
            node, expanded = stack_.pop()
            if expanded:
                order.append(node)
                continue
            if node.id in seen:
                continue
            seen.add(node.id)
            stack_.append((node, True))
            for parent in node._parents:
                if parent.id not in seen:
                    stack_.append((parent, False))
        return cls(order)

    def leaves(self) -> list[Tensor]:
        return [n for n in self.nodes if n.is_leaf and n.requires_grad]


def backward(loss: Tensor, graph: ComputeGraph | None = None) -> dict[int, np.ndarray]:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad``; returns grads keyed by leaf id."""
    if loss.data.size != 1:
        raise NonScalarLoss(f"Loss must be scalar, got shape {loss.shape}")
    graph = graph or ComputeGraph.trace(loss)
    grads: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.data)}
    for node in reversed(graph.nodes):
        g = grads.pop(node.id, None)
        if g is None:
            continue
        if node._backward is None:
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            grads[parent.id] = grads[parent.id] + pg if parent.id in grads else pg
        node._backward = None
        node._parents = ()
    return {leaf.id: leaf.grad for leaf in graph.leaves() if leaf.grad is not None}


def grad_check(f: Callable[[Tensor], Tensor], x, eps: float = 1e-5) -> float:
    """Relative error of autodiff against central differences for ``f`` at ``x``.

    The error is ``||g_auto - g_fd|| / max(||g_auto||, ||g_fd||, 1e-12)``.
    """
    x0 = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    leaf = Tensor(x0.copy(), requires_grad=True)
    backward(f(leaf))
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(x0)
    numeric = np.zeros_like(x0)
    with no_grad():
        for index in np.ndindex(x0.shape):
            bumped = x0.copy()
            bumped[index] += eps
            upper = f(Tensor(bumped)).data.item()
            bumped[index] -= 2 * eps
            lower = f(Tensor(bumped)).data.item()
            numeric[index] = (upper - lower) / (2 * eps)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)
