"""Dense float64 tensors with tape-based reverse-mode differentiation.

The engine records one TapeNode per produced tensor; creation order is a
topological order of the forward pass, so backward() replays the reachable
part of the tape once, newest first. Only the operator set the gait network
needs is implemented, everything in 64-bit for gradient-check fidelity.
"""

from __future__ import annotations

import itertools
import threading
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

__all__ = [
    "ShapeError",
    "Tensor",
    "TapeNode",
    "tensor",
    "zeros",
    "no_grad",
    "is_grad_enabled",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "relu",
    "softmax",
    "exp",
    "log",
    "sqrt",
    "tensor_sum",
    "tensor_mean",
    "tensor_max",
    "reshape",
    "transpose",
    "concat",
    "stack",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible; names both shapes."""


_node_counter = itertools.count()

# Grad recording is a per-thread switch so eval forwards on one thread do not
# disturb a training tape on another.
_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


class no_grad:
    """Context manager that suppresses tape recording."""

    def __enter__(self):
        self._prev = is_grad_enabled()
        _state.grad_enabled = False
        return self

    def __exit__(self, *exc):
        _state.grad_enabled = self._prev
        return False


class TapeNode:
    """One recorded forward op: kind, parent tensors, and a backward rule.

    The backward rule receives the upstream gradient and returns one
    ndarray (or None) per parent. Saved intermediates live in the closure.
    """

    __slots__ = ("op", "parents", "backward_rule", "index")

    def __init__(self, op: str, parents: Sequence["Tensor"],
                 backward_rule: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]):
        self.op = op
        self.parents = tuple(parents)
        self.backward_rule = backward_rule
        self.index = next(_node_counter)


class Tensor:
    """A float64 ndarray plus optional gradient and tape linkage."""

    __slots__ = ("data", "grad", "requires_grad", "node")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.node: Optional[TapeNode] = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        out = Tensor(self.data.copy())
        return out

    def zero_grad(self):
        self.grad = None

    def accumulate_grad(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self):
        """Accumulate gradients of this scalar into every reachable tensor.

        Repeated calls without zero_grad add up. Rejects non-scalar roots.
        """
        if self.size != 1:
            raise ValueError(
                f"backward() needs a scalar loss, got shape {self.data.shape}")
        order = _reachable_nodes(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node, out_tensor in order:
            g = grads.pop(id(out_tensor), None)
            if g is None:
                continue
            if out_tensor.requires_grad:
                out_tensor.accumulate_grad(g)
            parent_grads = node.backward_rule(g)
            for parent, pg in zip(node.parents, parent_grads):
                if pg is None:
                    continue
                if parent.node is None:
                    # Leaf: write into .grad only when requested.
                    if parent.requires_grad:
                        parent.accumulate_grad(pg)
                else:
                    key = id(parent)
                    if key in grads:
                        grads[key] += pg
                    else:
                        grads[key] = np.array(pg, dtype=np.float64, copy=True)
        if self.node is None and self.requires_grad:
            self.accumulate_grad(np.ones_like(self.data))

    # -- operator sugar -------------------------------------------------

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
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __getitem__(self, key):
        return _getitem(self, key)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={tuple(self.shape)}{flag})"

    def sum(self, axis=None, keepdims=False):
        return tensor_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tensor_mean(self, axis=axis, keepdims=keepdims)

    def max(self, axis=None, keepdims=False):
        return tensor_max(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes=None):
        return transpose(self, axes)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=np.float64), requires_grad=requires_grad)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _reachable_nodes(root: Tensor):
    """Nodes reachable from root, newest first, paired with their outputs.

    Creation indices give a valid topological order, so a sort replaces an
    explicit DFS post-order; each node is visited exactly once.
    """
    seen: set[int] = set()
    found: list[tuple[TapeNode, Tensor]] = []
    stack = [root]
    while stack:
        t = stack.pop()
        node = t.node
        if node is None or id(t) in seen:
            continue
        seen.add(id(t))
        found.append((node, t))
        stack.extend(node.parents)
    found.sort(key=lambda pair: pair[0].index, reverse=True)
    return found


def make_op(op: str, parents: Sequence[Tensor], out_data: np.ndarray,
            backward_rule) -> Tensor:
    """Wrap a forward result, recording a tape node when grad is enabled."""
    out = Tensor(out_data)
    if is_grad_enabled() and any(
            p.requires_grad or p.node is not None for p in parents):
        out.node = TapeNode(op, parents, backward_rule)
        out.requires_grad = True
    return out


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- elementwise arithmetic ---------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def rule(g):
        return unbroadcast(g, a.data.shape), unbroadcast(g, b.data.shape)

    return make_op("add", (a, b), out, rule)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data

    def rule(g):
        return unbroadcast(g, a.data.shape), unbroadcast(-g, b.data.shape)

    return make_op("sub", (a, b), out, rule)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data
    a_data, b_data = a.data, b.data

    def rule(g):
        return (unbroadcast(g * b_data, a_data.shape),
                unbroadcast(g * a_data, b_data.shape))

    return make_op("mul", (a, b), out, rule)


def div(a: Tensor, b: Tensor) -> Tensor:
    out = a.data / b.data
    a_data, b_data = a.data, b.data

    def rule(g):
        return (unbroadcast(g / b_data, a_data.shape),
                unbroadcast(-g * a_data / (b_data * b_data), b_data.shape))

    return make_op("div", (a, b), out, rule)


def neg(a: Tensor) -> Tensor:
    def rule(g):
        return (-g,)

    return make_op("neg", (a,), -a.data, rule)


# -- matmul ---------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product with numpy broadcasting over leading axes.

    Backward: dA = dC @ B^T, dB = A^T @ dC, each summed back over any
    broadcast batch axes.
    """
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(
            f"matmul needs >=2-d operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(
            f"matmul inner dimensions disagree: {a.data.shape} vs {b.data.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as err:
        raise ShapeError(
            f"matmul batch dimensions not broadcastable: "
            f"{a.data.shape} vs {b.data.shape}") from err
    a_data, b_data = a.data, b.data

    def rule(g):
        ga = np.matmul(g, np.swapaxes(b_data, -1, -2))
        gb = np.matmul(np.swapaxes(a_data, -1, -2), g)
        return unbroadcast(ga, a_data.shape), unbroadcast(gb, b_data.shape)

    return make_op("matmul", (a, b), out, rule)


# -- activations ----------------------------------------------------------


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    out = a.data * mask

    def rule(g):
        return (g * mask,)

    return make_op("relu", (a,), out, rule)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Exponent-normalized along axis, stabilized by max subtraction."""
    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"softmax axis {axis} invalid for shape {a.data.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def rule(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - inner),)

    return make_op("softmax", (a,), out, rule)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def rule(g):
        return (g * out,)

    return make_op("exp", (a,), out, rule)


def log(a: Tensor) -> Tensor:
    a_data = a.data

    def rule(g):
        return (g / a_data,)

    return make_op("log", (a,), np.log(a.data), rule)


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)

    def rule(g):
        return (g * 0.5 / out,)

    return make_op("sqrt", (a,), out, rule)


# -- reductions -----------------------------------------------------------


def tensor_sum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)
    shape = a.data.shape

    def rule(g):
        g = np.asarray(g)
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        axes = axis if isinstance(axis, tuple) else (axis,)
        if not keepdims:
            for ax in sorted(ax % len(shape) for ax in axes):
                g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, shape).copy(),)

    return make_op("sum", (a,), out, rule)


def tensor_mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    if axis is None:
        count = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.data.shape[ax] for ax in axes]))
    s = tensor_sum(a, axis=axis, keepdims=keepdims)
    return mul(s, Tensor(1.0 / count))


def tensor_max(a: Tensor, axis=None, keepdims=False) -> Tensor:
    """Max reduction; gradient routed to the first-occurring maximum."""
    out = a.data.max(axis=axis, keepdims=keepdims)
    shape = a.data.shape

    if axis is None:
        flat_idx = int(a.data.argmax())

        def rule(g):
            ga = np.zeros(shape)
            ga.reshape(-1)[flat_idx] = np.asarray(g).reshape(-1)[0]
            return (ga,)
    else:
        ax = axis % len(shape)
        arg = a.data.argmax(axis=ax)

        def rule(g):
            g = np.asarray(g)
            if not keepdims:
                g = np.expand_dims(g, ax)
            ga = np.zeros(shape)
            np.put_along_axis(ga, np.expand_dims(arg, ax), g, axis=ax)
            return (ga,)

    return make_op("max", (a,), out, rule)


# -- shape ops ------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    old = a.data.shape
    out = a.data.reshape(shape)

    def rule(g):
        return (g.reshape(old),)

    return make_op("reshape", (a,), out, rule)


def transpose(a: Tensor, axes=None) -> Tensor:
    out = np.transpose(a.data, axes)
    if axes is None:
        inv = None
    else:
        inv = np.argsort(axes)

    def rule(g):
        return (np.transpose(g, inv),)

    return make_op("transpose", (a,), out, rule)


def _getitem(a: Tensor, key) -> Tensor:
    out = a.data[key]
    shape = a.data.shape

    def rule(g):
        ga = np.zeros(shape)
        np.add.at(ga, key, g)
        return (ga,)

    return make_op("getitem", (a,), np.array(out, copy=True), rule)


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = list(tensors)
    out = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.data.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def rule(g):
        return tuple(np.array(piece, copy=True)
                     for piece in np.split(g, splits, axis=axis))

    return make_op("concat", ts, out, rule)


def stack(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = list(tensors)
    out = np.stack([t.data for t in ts], axis=axis)

    def rule(g):
        return tuple(np.array(piece, copy=True)
                     for piece in np.moveaxis(g, axis, 0))

    return make_op("stack", ts, out, rule)
