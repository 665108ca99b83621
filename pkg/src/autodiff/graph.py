"""
Reverse-mode automatic differentiation over dense float64 arrays.

Graphs are built define-by-run: every forward op records its inputs and a backward
rule mapping the output gradient to one gradient per input. `backward` walks the graph
once in reverse topological order and accumulates into leaf nodes only, so calling it
twice on the same root adds the gradients twice.
"""

import threading
from contextlib import contextmanager
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]
BackwardRule = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class ShapeError(ValueError):
    """Raised when an op receives inputs with incompatible shapes."""


_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording for evaluation-only forward passes (per thread)."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class Node:
    """A value in the computation graph."""

    __slots__ = ("value", "grad", "parents", "backward_rule", "requires_grad", "op")

    # ndarray (op) Node defers to the Node's reflected operator
    __array_ufunc__ = None

    def __init__(
        self,
        value: ArrayLike,
        parents: Tuple["Node", ...] = (),
        backward_rule: Optional[BackwardRule] = None,
        requires_grad: bool = False,
        op: str = "leaf",
    ):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.parents = parents
        self.backward_rule = backward_rule
        self.requires_grad = requires_grad
        self.op = op

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def is_leaf(self) -> bool:
        return self.backward_rule is None

    def item(self) -> float:
        return float(self.value.reshape(-1)[0]) if self.value.size == 1 else float("nan")

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, gradient: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += gradient

    def __repr__(self) -> str:
        return f"Node(op={self.op}, shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; every path goes through forward_op.
    def __add__(self, other: Any) -> "Node":
        return forward_op("add", (self, other))

    def __radd__(self, other: Any) -> "Node":
        return forward_op("add", (other, self))

    def __sub__(self, other: Any) -> "Node":
        return forward_op("sub", (self, other))

    def __rsub__(self, other: Any) -> "Node":
        return forward_op("sub", (other, self))

    def __mul__(self, other: Any) -> "Node":
        return forward_op("mul", (self, other))

    def __rmul__(self, other: Any) -> "Node":
        return forward_op("mul", (other, self))

    def __truediv__(self, other: Any) -> "Node":
        return forward_op("div", (self, other))

    def __rtruediv__(self, other: Any) -> "Node":
        return forward_op("div", (other, self))

    def __neg__(self) -> "Node":
        return forward_op("mul", (self, -1.0))

    def __matmul__(self, other: Any) -> "Node":
        return forward_op("matmul", (self, other))

    def __getitem__(self, index: Any) -> "Node":
        return forward_op("slice", (self,), {"index": index})


def lift(x: Any) -> Node:
    """Wrap constants as non-differentiable leaf nodes."""
    return x if isinstance(x, Node) else Node(x)


def _unbroadcast(gradient: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    while gradient.ndim > len(shape):
        gradient = gradient.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and gradient.shape[axis] != 1:
            gradient = gradient.sum(axis=axis, keepdims=True)
    return gradient


def _broadcast_check(kind: str, a: np.ndarray, b: np.ndarray) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: incompatible shapes {a.shape} and {b.shape}") from None


def _arity(kind: str, inputs: Sequence[Node], count: int) -> None:
    if len(inputs) != count:
        raise ShapeError(f"{kind}: expected {count} inputs, got {len(inputs)}")


# --- elementwise binary ------------------------------------------------------

def _add(inputs, attrs):
    a, b = (n.value for n in inputs)
    _broadcast_check("add", a, b)
    return a + b, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))


def _sub(inputs, attrs):
    a, b = (n.value for n in inputs)
    _broadcast_check("sub", a, b)
    return a - b, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))


def _mul(inputs, attrs):
    a, b = (n.value for n in inputs)
    _broadcast_check("mul", a, b)
    return a * b, lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape))


def _div(inputs, attrs):
    a, b = (n.value for n in inputs)
    _broadcast_check("div", a, b)
    out = a / b
    return out, lambda g: (_unbroadcast(g / b, a.shape), _unbroadcast(-g * out / b, b.shape))


def _matmul(inputs, attrs):
    a, b = (n.value for n in inputs)
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def rule(g):
        grad_a = g @ b.T
        grad_b = a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, b.shape[1])
        return grad_a, grad_b

    return a @ b, rule


# --- elementwise unary -------------------------------------------------------

def _exp(inputs, attrs):
    x = inputs[0].value
    out = np.exp(x)
    return out, lambda g: (g * out,)


def _log(inputs, attrs):
    x = inputs[0].value
    return np.log(x), lambda g: (g / x,)


def _relu(inputs, attrs):
    x = inputs[0].value
    mask = x > 0
    return np.where(mask, x, 0.0), lambda g: (g * mask,)


def _softplus(inputs, attrs):
    x = inputs[0].value
    # log(1 + e^x) = max(x, 0) + log1p(e^-|x|), finite for any x
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return out, lambda g: (g * expit(x),)


def _sigmoid(inputs, attrs):
    out = expit(inputs[0].value)
    return out, lambda g: (g * out * (1.0 - out),)


def _sin(inputs, attrs):
    x = inputs[0].value
    return np.sin(x), lambda g: (g * np.cos(x),)


def _cos(inputs, attrs):
    x = inputs[0].value
    return np.cos(x), lambda g: (-g * np.sin(x),)


def _square(inputs, attrs):
    x = inputs[0].value
    return x * x, lambda g: (2.0 * g * x,)


def _sqrt(inputs, attrs):
    out = np.sqrt(inputs[0].value)
    # subgradient 0 at the origin
    safe = np.where(out > 0, out, 1.0)
    return out, lambda g: (np.where(out > 0, g * 0.5 / safe, 0.0),)


def _abs(inputs, attrs):
    x = inputs[0].value
    return np.abs(x), lambda g: (g * np.sign(x),)


def _clamp_min(inputs, attrs):
    x = inputs[0].value
    floor = float(attrs["min"])
    keep = x >= floor
    return np.where(keep, x, floor), lambda g: (g * keep,)


# --- reductions and shape ops ------------------------------------------------

def _normalize_axis(axis: Any, ndim: int) -> Optional[Tuple[int, ...]]:
    if axis is None:
        return None
    axes = axis if isinstance(axis, tuple) else (axis,)
    return tuple(a % ndim for a in axes)


def _expand_reduced(g: np.ndarray, shape: Tuple[int, ...], axes: Optional[Tuple[int, ...]], keepdims: bool) -> np.ndarray:
    if axes is not None and not keepdims:
        for a in sorted(axes):
            g = np.expand_dims(g, a)
    return np.broadcast_to(g, shape)


def _sum(inputs, attrs):
    x = inputs[0].value
    axes = _normalize_axis(attrs.get("axis"), x.ndim)
    keepdims = bool(attrs.get("keepdims", False))
    out = x.sum(axis=axes, keepdims=keepdims)
    return out, lambda g: (_expand_reduced(np.asarray(g), x.shape, axes, keepdims).copy(),)


def _mean(inputs, attrs):
    x = inputs[0].value
    axes = _normalize_axis(attrs.get("axis"), x.ndim)
    keepdims = bool(attrs.get("keepdims", False))
    count = x.size if axes is None else int(np.prod([x.shape[a] for a in axes]))
    out = x.mean(axis=axes, keepdims=keepdims)
    return out, lambda g: (_expand_reduced(np.asarray(g), x.shape, axes, keepdims) / count,)


def _cumsum(inputs, attrs):
    x = inputs[0].value
    axis = int(attrs.get("axis", -1)) % x.ndim
    exclusive = bool(attrs.get("exclusive", False))
    out = np.cumsum(x, axis=axis)
    if exclusive:
        out = out - x

    def rule(g):
        reverse = np.flip(np.cumsum(np.flip(g, axis=axis), axis=axis), axis=axis)
        return (reverse - g if exclusive else reverse,)

    return out, rule


def _concat(inputs, attrs):
    values = [n.value for n in inputs]
    axis = int(attrs.get("axis", -1))
    ndim = values[0].ndim
    axis %= ndim
    for v in values[1:]:
        if v.ndim != ndim or any(v.shape[d] != values[0].shape[d] for d in range(ndim) if d != axis):
            raise ShapeError(f"concat: incompatible shapes {[v.shape for v in values]} along axis {axis}")
    sizes = np.cumsum([v.shape[axis] for v in values])[:-1]
    return np.concatenate(values, axis=axis), lambda g: tuple(np.split(g, sizes, axis=axis))


def _slice(inputs, attrs):
    x = inputs[0].value
    index = attrs["index"]
    try:
        out = x[index]
    except IndexError as exc:
        raise ShapeError(f"slice: index {index!r} invalid for shape {x.shape}: {exc}") from None

    parts = index if isinstance(index, tuple) else (index,)
    fancy = any(isinstance(p, (np.ndarray, list)) for p in parts)

    def rule(g):
        grad = np.zeros_like(x)
        if fancy:
            np.add.at(grad, index, g)
        else:
            grad[index] += g
        return (grad,)

    return np.array(out, dtype=np.float64), rule


def _take(inputs, attrs):
    x = inputs[0].value
    indices = np.asarray(attrs["indices"], dtype=np.int64)
    if indices.size and (indices.min() < -x.shape[0] or indices.max() >= x.shape[0]):
        raise ShapeError(f"take: indices out of range for leading dimension {x.shape[0]}")

    def rule(g):
        grad = np.zeros_like(x)
        np.add.at(grad, indices, g)
        return (grad,)

    return x[indices], rule


def _reshape(inputs, attrs):
    x = inputs[0].value
    try:
        out = x.reshape(attrs["shape"])
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} into {attrs['shape']}") from None
    return out, lambda g: (g.reshape(x.shape),)


def _transpose(inputs, attrs):
    x = inputs[0].value
    axes = tuple(attrs["axes"])
    inverse = tuple(np.argsort(axes))
    return np.transpose(x, axes), lambda g: (np.transpose(g, inverse),)


# --- image ops ---------------------------------------------------------------

def _pad2d(inputs, attrs):
    x = inputs[0].value
    pad = int(attrs.get("pad", 1))
    mode = attrs.get("mode", "zero")
    if x.ndim < 2:
        raise ShapeError(f"pad2d: expected at least 2 dimensions, got {x.shape}")
    height, width = x.shape[-2:]
    widths = [(0, 0)] * (x.ndim - 2) + [(pad, pad), (pad, pad)]
    if mode == "zero":
        out = np.pad(x, widths)
        return out, lambda g: (g[..., pad:pad + height, pad:pad + width],)
    if mode != "edge":
        raise ValueError(f"pad2d: unknown mode {mode!r}")

    source = np.pad(np.arange(height * width).reshape(height, width), pad, mode="edge").reshape(-1)
    out = np.pad(x, widths, mode="edge")

    def rule(g):
        flat = g.reshape(-1, g.shape[-2] * g.shape[-1])
        grad = np.zeros((flat.shape[0], height * width))
        np.add.at(grad, (slice(None), source), flat)
        return (grad.reshape(x.shape),)

    return out, rule


def _conv2d(inputs, attrs):
    x = inputs[0].value
    w = inputs[1].value
    bias = inputs[2].value if len(inputs) > 2 else None
    stride = int(attrs.get("stride", 1))
    padding = int(attrs.get("padding", 0))
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d: input {x.shape} and weight {w.shape} are incompatible")
    if bias is not None and bias.shape != (w.shape[0],):
        raise ShapeError(f"conv2d: bias {bias.shape} does not match {w.shape[0]} output channels")

    n, c, _, _ = x.shape
    o, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    if xp.shape[2] < kh or xp.shape[3] < kw:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {xp.shape[2:]}")
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = windows.shape[2], windows.shape[3]
    columns = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    kernel = w.reshape(o, -1)
    out = (columns @ kernel.T).reshape(n, ho, wo, o).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.reshape(1, o, 1, 1)

    def rule(g):
        g_rows = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, o)
        grad_w = (g_rows.T @ columns).reshape(w.shape)
        grad_columns = (g_rows @ kernel).reshape(n, ho, wo, c, kh, kw)
        grad_xp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                grad_xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += (
                    grad_columns[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                )
        grad_x = grad_xp[:, :, padding:padding + x.shape[2], padding:padding + x.shape[3]]
        grads = (grad_x, grad_w)
        if bias is not None:
            grads += (g.sum(axis=(0, 2, 3)),)
        return grads

    return out, rule


def _upsample2x(inputs, attrs):
    x = inputs[0].value
    if x.ndim < 2:
        raise ShapeError(f"upsample2x: expected at least 2 dimensions, got {x.shape}")
    out = np.repeat(np.repeat(x, 2, axis=-2), 2, axis=-1)

    def rule(g):
        h, w = x.shape[-2:]
        return (g.reshape(*x.shape[:-2], h, 2, w, 2).sum(axis=(-3, -1)),)

    return out, rule


_OPS: Dict[str, Callable[[Sequence[Node], Dict[str, Any]], Tuple[np.ndarray, BackwardRule]]] = {
    "add": _add,
    "sub": _sub,
    "mul": _mul,
    "div": _div,
    "matmul": _matmul,
    "exp": _exp,
    "log": _log,
    "relu": _relu,
    "softplus": _softplus,
    "sigmoid": _sigmoid,
    "sin": _sin,
    "cos": _cos,
    "square": _square,
    "sqrt": _sqrt,
    "abs": _abs,
    "clamp_min": _clamp_min,
    "sum": _sum,
    "mean": _mean,
    "cumsum": _cumsum,
    "concat": _concat,
    "slice": _slice,
    "take": _take,
    "reshape": _reshape,
    "transpose": _transpose,
    "pad2d": _pad2d,
    "conv2d": _conv2d,
    "upsample2x": _upsample2x,
}

_BINARY = {"add", "sub", "mul", "div", "matmul"}
_VARIADIC = {"concat", "conv2d"}

OP_KINDS: Tuple[str, ...] = tuple(_OPS)


def forward_op(kind: str, inputs: Sequence[Any], attrs: Optional[Dict[str, Any]] = None) -> Node:
    """
    Evaluate one op and record its backward rule.

    Args:
        kind: Op name, one of OP_KINDS
        inputs: Nodes or constants
        attrs: Op attributes (axis, stride, padding, index, ...)

    Returns:
        Output node
    """
    if kind not in _OPS:
        raise ValueError(f"unknown op kind {kind!r}")
    nodes = tuple(lift(x) for x in inputs)
    if kind in _BINARY:
        _arity(kind, nodes, 2)
    elif kind == "conv2d":
        if len(nodes) not in (2, 3):
            raise ShapeError(f"conv2d: expected input, weight and optional bias, got {len(nodes)} inputs")
    elif kind not in _VARIADIC:
        _arity(kind, nodes, 1)

    value, rule = _OPS[kind](nodes, attrs or {})
    if is_grad_enabled() and any(n.requires_grad for n in nodes):
        return Node(value, parents=nodes, backward_rule=rule, requires_grad=True, op=kind)
    return Node(value, op=kind)


def _topological_order(root: Node) -> List[Node]:
    order: List[Node] = []
    visited = set()
    stack: List[Tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(root: Node, params: Any = None) -> Any:
    """
    Accumulate d(root)/d(leaf) into every reachable leaf that requires grad.

    Args:
        root: Scalar node
        params: Optional ParameterSet returned for convenience

    Returns:
        `params`, with gradients filled
    """
    if root.value.size != 1:
        raise ValueError(f"backward: root must be scalar, got shape {root.shape}")
    if not root.requires_grad:
        if params is not None:
            for parameter in params:
                if parameter.trainable and parameter.node.grad is None:
                    parameter.node.grad = np.zeros_like(parameter.node.value)
        return params

    order = _topological_order(root)
    pending: Dict[int, np.ndarray] = {id(root): np.ones_like(root.value)}
    for node in reversed(order):
        gradient = pending.pop(id(node), None)
        if gradient is None:
            continue
        if node.is_leaf:
            node.accumulate(gradient)
            continue
        for parent, parent_grad in zip(node.parents, node.backward_rule(gradient)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in pending:
                pending[key] = pending[key] + parent_grad
            else:
                pending[key] = np.array(parent_grad, dtype=np.float64)

    if params is not None:
        for parameter in params:
            if parameter.trainable and parameter.node.grad is None:
                parameter.node.grad = np.zeros_like(parameter.node.value)
    return params


# Thin functional wrappers used throughout the package.

def matmul(a: Any, b: Any) -> Node:
    return forward_op("matmul", (a, b))


def exp(x: Any) -> Node:
    return forward_op("exp", (x,))


def log(x: Any) -> Node:
    return forward_op("log", (x,))


def relu(x: Any) -> Node:
    return forward_op("relu", (x,))


def softplus(x: Any) -> Node:
    return forward_op("softplus", (x,))


def sigmoid(x: Any) -> Node:
    return forward_op("sigmoid", (x,))


def sin(x: Any) -> Node:
    return forward_op("sin", (x,))


def cos(x: Any) -> Node:
    return forward_op("cos", (x,))


def square(x: Any) -> Node:
    return forward_op("square", (x,))


def sqrt(x: Any) -> Node:
    return forward_op("sqrt", (x,))


def absolute(x: Any) -> Node:
    return forward_op("abs", (x,))


def clamp_min(x: Any, minimum: float) -> Node:
    return forward_op("clamp_min", (x,), {"min": minimum})


def sum_(x: Any, axis: Any = None, keepdims: bool = False) -> Node:
    return forward_op("sum", (x,), {"axis": axis, "keepdims": keepdims})


def mean(x: Any, axis: Any = None, keepdims: bool = False) -> Node:
    return forward_op("mean", (x,), {"axis": axis, "keepdims": keepdims})


def cumsum(x: Any, axis: int = -1, exclusive: bool = False) -> Node:
    return forward_op("cumsum", (x,), {"axis": axis, "exclusive": exclusive})


def concat(nodes: Sequence[Any], axis: int = -1) -> Node:
    return forward_op("concat", tuple(nodes), {"axis": axis})


def take(x: Any, indices: np.ndarray) -> Node:
    return forward_op("take", (x,), {"indices": indices})


def reshape(x: Any, shape: Tuple[int, ...]) -> Node:
    return forward_op("reshape", (x,), {"shape": tuple(shape)})


def transpose(x: Any, axes: Tuple[int, ...]) -> Node:
    return forward_op("transpose", (x,), {"axes": tuple(axes)})


def pad2d(x: Any, pad: int = 1, mode: str = "zero") -> Node:
    return forward_op("pad2d", (x,), {"pad": pad, "mode": mode})


def conv2d(x: Any, weight: Any, bias: Any = None, stride: int = 1, padding: int = 0) -> Node:
    inputs = (x, weight) if bias is None else (x, weight, bias)
    return forward_op("conv2d", inputs, {"stride": stride, "padding": padding})


def upsample2x(x: Any) -> Node:
    return forward_op("upsample2x", (x,))
