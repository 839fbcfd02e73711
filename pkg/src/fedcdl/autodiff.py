"""Minimal reverse-mode automatic differentiation over float64 arrays.

A graph is built eagerly: every operation computes its value when it is
created, so ``node.value`` is always available. :func:`forward` re-evaluates
a graph from its leaves and :func:`backward` accumulates adjoints from a
scalar root down to the trainable leaves.

Only scalar-times-tensor broadcasting is supported. Elementwise operations
require identical shapes; callers reshape or use ``matmul`` with a ones
vector to broadcast explicitly.

Example
-------
>>> x = leaf([3.0], trainable=True)
>>> y = sum_(mul(x, x))
>>> backward(y)[x]
array([6.])
"""
from __future__ import annotations

from typing import Callable, Dict, Iterable, List, Sequence

import numpy as np

__all__ = [
    "OPS",
    "ShapeError",
    "Node",
    "tensor",
    "leaf",
    "constant",
    "detach",
    "add",
    "sub",
    "mul",
    "matmul",
    "relu",
    "exp",
    "log",
    "sum_",
    "mean",
    "softmax",
    "reshape",
    "concat",
    "scalar_mul",
    "abs_",
    "forward",
    "backward",
]

OPS = (
    "add",
    "sub",
    "mul",
    "matmul",
    "relu",
    "exp",
    "log",
    "sum",
    "mean",
    "softmax",
    "reshape",
    "concat",
    "scalar_mul",
    "abs",
)


class ShapeError(ValueError):
    """Raised when operation inputs have incompatible shapes."""


def tensor(data, shape: Sequence[int] | None = None) -> np.ndarray:
    """Return a read-only, finite float64 copy of ``data``.

    This is the leaf representation used throughout the package. NaN and
    Inf are rejected here so that every graph starts from finite values.
    """
    arr = np.array(data, dtype=np.float64)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if int(np.prod(shape)) != arr.size:
            raise ShapeError(f"cannot view {arr.size} values as shape {shape}")
        arr = arr.reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains non-finite values")
    arr.setflags(write=False)
    return arr


class Node:
    """One vertex of a computation graph.

    Leaves have ``op is None``. ``grad`` holds the adjoint after
    :func:`backward` and has the same shape as ``value``.
    """

    __slots__ = ("op", "inputs", "attrs", "value", "grad", "trainable", "requires_grad", "name")

    def __init__(self, op, inputs, value, attrs=None, trainable=False, name=None):
        self.op = op
        self.inputs = tuple(inputs)
        self.attrs = attrs or {}
        self.value = value
        self.grad = None
        self.trainable = trainable
        self.requires_grad = trainable or any(n.requires_grad for n in self.inputs)
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        kind = self.op or ("param" if self.trainable else "const")
        label = f" {self.name!r}" if self.name else ""
        return f"<Node {kind}{label} shape={self.value.shape}>"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Node):
            return mul(self, other)
        return scalar_mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


def leaf(data, trainable: bool = False, name: str | None = None) -> Node:
    if isinstance(data, Node):
        raise TypeError("leaf() expects array data, not a Node")
    return Node(None, (), tensor(data), trainable=trainable, name=name)


def constant(data) -> Node:
    return leaf(data, trainable=False)


def detach(node: Node) -> Node:
    """Cut the graph: a constant leaf carrying ``node``'s current value."""
    return Node(None, (), node.value, trainable=False, name=node.name)


# -- forward rules ---------------------------------------------------------

def _same_shape(op, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _f_add(vals, attrs):
    _same_shape("add", *vals)
    return vals[0] + vals[1]


def _f_sub(vals, attrs):
    _same_shape("sub", *vals)
    return vals[0] - vals[1]


def _f_mul(vals, attrs):
    _same_shape("mul", *vals)
    return vals[0] * vals[1]


def _f_matmul(vals, attrs):
    a, b = vals
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return a @ b


def _f_log(vals, attrs):
    (x,) = vals
    if np.any(x <= 0.0):
        raise ValueError("log: input has non-positive entries")
    return np.log(x)


def _f_softmax(vals, attrs):
    (x,) = vals
    if x.ndim == 0:
        raise ShapeError("softmax: needs at least one dimension")
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def _f_reshape(vals, attrs):
    (x,) = vals
    shape = attrs["shape"]
    if int(np.prod(shape)) != x.size:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}")
    return x.reshape(shape)


def _f_concat(vals, attrs):
    axis = attrs["axis"]
    ref = vals[0]
    for v in vals[1:]:
        if v.ndim != ref.ndim or any(
            s != r for k, (s, r) in enumerate(zip(v.shape, ref.shape)) if k != axis % ref.ndim
        ):
            raise ShapeError(f"concat: incompatible shapes {[u.shape for u in vals]} on axis {axis}")
    return np.concatenate(vals, axis=axis)


_FORWARD: Dict[str, Callable] = {
    "add": _f_add,
    "sub": _f_sub,
    "mul": _f_mul,
    "matmul": _f_matmul,
    "relu": lambda v, a: np.maximum(v[0], 0.0),
    "exp": lambda v, a: np.exp(v[0]),
    "log": _f_log,
    "sum": lambda v, a: np.asarray(v[0].sum()),
    "mean": lambda v, a: np.asarray(v[0].mean()),
    "softmax": _f_softmax,
    "reshape": _f_reshape,
    "concat": _f_concat,
    "scalar_mul": lambda v, a: a["c"] * v[0],
    "abs": lambda v, a: np.abs(v[0]),
}


# -- vector-Jacobian products ------------------------------------------------
# Each returns one adjoint per input, in input order.

def _b_concat(node, g):
    axis = node.attrs["axis"]
    sizes = [n.value.shape[axis] for n in node.inputs]
    return np.split(g, np.cumsum(sizes)[:-1], axis=axis)


def _b_softmax(node, g):
    s = node.value
    # softmax is shift invariant; centring g first makes constant rows map to exact zeros
    g = g - g[..., :1]
    return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)


_VJP: Dict[str, Callable] = {
    "add": lambda n, g: (g, g),
    "sub": lambda n, g: (g, -g),
    "mul": lambda n, g: (g * n.inputs[1].value, g * n.inputs[0].value),
    "matmul": lambda n, g: (g @ n.inputs[1].value.T, n.inputs[0].value.T @ g),
    "relu": lambda n, g: (g * (n.inputs[0].value > 0.0),),
    "exp": lambda n, g: (g * n.value,),
    "log": lambda n, g: (g / n.inputs[0].value,),
    "sum": lambda n, g: (np.full(n.inputs[0].value.shape, float(g)),),
    "mean": lambda n, g: (np.full(n.inputs[0].value.shape, float(g) / n.inputs[0].value.size),),
    "softmax": _b_softmax,
    "reshape": lambda n, g: (g.reshape(n.inputs[0].value.shape),),
    "concat": _b_concat,
    "scalar_mul": lambda n, g: (n.attrs["c"] * g,),
    # subgradient 0 at exactly 0
    "abs": lambda n, g: (g * np.sign(n.inputs[0].value),),
}


def _apply(op: str, inputs: Sequence[Node], **attrs) -> Node:
    for x in inputs:
        if not isinstance(x, Node):
            raise TypeError(f"{op}: expected Node inputs, got {type(x).__name__}")
    value = _FORWARD[op]([x.value for x in inputs], attrs)
    return Node(op, inputs, value, attrs)


def add(a: Node, b: Node) -> Node:
    return _apply("add", (a, b))


def sub(a: Node, b: Node) -> Node:
    return _apply("sub", (a, b))


def mul(a: Node, b: Node) -> Node:
    """Elementwise product."""
    return _apply("mul", (a, b))


def matmul(a: Node, b: Node) -> Node:
    return _apply("matmul", (a, b))


def relu(x: Node) -> Node:
    return _apply("relu", (x,))


def exp(x: Node) -> Node:
    return _apply("exp", (x,))


def log(x: Node) -> Node:
    return _apply("log", (x,))


def sum_(x: Node) -> Node:
    """Sum of all elements, shape ``()``."""
    return _apply("sum", (x,))


def mean(x: Node) -> Node:
    """Mean of all elements, shape ``()``."""
    return _apply("mean", (x,))


def softmax(x: Node) -> Node:
    """Softmax along the last axis, computed with max subtraction."""
    return _apply("softmax", (x,))


def reshape(x: Node, shape: Sequence[int]) -> Node:
    return _apply("reshape", (x,), shape=tuple(int(s) for s in shape))


def concat(nodes: Sequence[Node], axis: int = -1) -> Node:
    return _apply("concat", tuple(nodes), axis=int(axis))


def scalar_mul(x: Node, c: float) -> Node:
    return _apply("scalar_mul", (x,), c=float(c))


def abs_(x: Node) -> Node:
    return _apply("abs", (x,))


# -- graph traversal --------------------------------------------------------

def _toposort(root: Node) -> List[Node]:
    order: List[Node] = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.inputs:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def forward(root: Node) -> np.ndarray:
    """Re-evaluate every interior node from its inputs and return the root value."""
    for node in _toposort(root):
        if node.op is not None:
            node.value = _FORWARD[node.op]([x.value for x in node.inputs], node.attrs)
    return root.value


def backward(root: Node) -> Dict[Node, np.ndarray]:
    """Gradients of a scalar ``root`` with respect to its trainable leaves.

    Adjoints are left on every node of the graph as ``node.grad``.
    """
    if root.value.size != 1 or root.value.ndim > 1:
        raise ShapeError(f"backward: root must be scalar, got shape {root.value.shape}")
    order = _toposort(root)
    for node in order:
        node.grad = np.zeros_like(node.value)
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if node.op is None or not node.requires_grad:
            continue
        parent_grads = _VJP[node.op](node, node.grad)
        for parent, g in zip(node.inputs, parent_grads):
            if parent.requires_grad:
                parent.grad = parent.grad + g
    return {n: n.grad for n in order if n.op is None and n.trainable}


def trainable_leaves(root: Node) -> Iterable[Node]:
    return [n for n in _toposort(root) if n.op is None and n.trainable]
