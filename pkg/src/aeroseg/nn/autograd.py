"""Small reverse-mode differentiation engine over float64 numpy arrays.

Each op records its parents and a closure mapping the output gradient to one
gradient per parent. ``Tensor.backward`` walks the graph in reverse
topological order; only leaf tensors with ``requires_grad`` keep a ``.grad``.
Graph nodes are only recorded when some input requires a gradient.
"""
from __future__ import annotations

import contextlib

import numpy as np
import scipy.sparse as sp

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording graph nodes."""
    global _grad_enabled
    previous, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = previous


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, op=""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.op = op

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def T(self):
        return transpose(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = _topological(self)
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, index):
        return index_select(self, index)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _topological(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen and parent.requires_grad:
                stack.append((parent, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _node(data, parents, backward, op) -> Tensor:
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, True, tuple(parents), backward, op)
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(
        a.data + b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add"
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(
        a.data - b.data, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub"
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return _node(
        out,
        (a, b),
        lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)),
        "div",
    )


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _node(-a.data, (a,), lambda g: (-g,), "neg")


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    return _node(
        a.data**exponent, (a,), lambda g: (g * exponent * a.data ** (exponent - 1),), "pow"
    )


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    return _node(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def clip_min(a, lower: float) -> Tensor:
    a = as_tensor(a)
    keep = a.data > lower
    return _node(np.where(keep, a.data, lower), (a,), lambda g: (g * keep,), "clip_min")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _node(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = as_tensor(a)
    factor = np.where(a.data > 0, 1.0, slope)
    return _node(a.data * factor, (a,), lambda g: (g * factor,), "leaky_relu")


def dropout(a, rate: float, rng: np.random.Generator | None, training: bool = True) -> Tensor:
    """Inverted dropout; identity when not training or rate is zero."""
    a = as_tensor(a)
    if not training or rate <= 0.0:
        return a
    mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return _node(a.data * mask, (a,), lambda g: (g * mask,), "dropout")


# ---------------------------------------------------------------- linear algebra / shape


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), "matmul")


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return _node(a.data.T, (a,), lambda g: (g.T,), "transpose")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _node(data, tensors, backward, "concat")


def index_select(a, index) -> Tensor:
    """Basic (non-fancy) indexing such as slices; see ``take_rows`` for gathers."""
    a = as_tensor(a)

    def backward(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return _node(a.data[index], (a,), backward, "index")


# ---------------------------------------------------------------- reductions


def sum_(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward, "sum")


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else a.shape[axis]
    return sum_(a, axis, keepdims) * (1.0 / count)


def _extreme(a, axis, keepdims, pick, op):
    a = as_tensor(a)
    idx = pick(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        full = np.zeros_like(a.data)
        np.put_along_axis(full, np.expand_dims(idx, axis), g, axis=axis)
        return (full,)

    return _node(out if keepdims else np.squeeze(out, axis), (a,), backward, op)


def max_(a, axis: int, keepdims=False) -> Tensor:
    return _extreme(a, axis, keepdims, np.argmax, "max")


def min_(a, axis: int, keepdims=False) -> Tensor:
    return _extreme(a, axis, keepdims, np.argmin, "min")


# ---------------------------------------------------------------- graph ops


def scatter_rows(values: np.ndarray, index: np.ndarray, n: int) -> np.ndarray:
    """out[index[e]] += values[e] along axis 0, computed as a sparse product."""
    values = np.asarray(values)
    m = len(index)
    flat = values.reshape(m, -1)
    inc = sp.csr_matrix((np.ones(m), (index, np.arange(m))), shape=(n, m))
    return np.asarray(inc @ flat).reshape((n,) + values.shape[1:])


def take_rows(a, index: np.ndarray) -> Tensor:
    a = as_tensor(a)
    index = np.asarray(index)
    n = a.shape[0]
    return _node(a.data[index], (a,), lambda g: (scatter_rows(g, index, n),), "take_rows")


def segment_sum(a, segments: np.ndarray, n: int) -> Tensor:
    a = as_tensor(a)
    segments = np.asarray(segments)
    return _node(scatter_rows(a.data, segments, n), (a,), lambda g: (g[segments],), "segment_sum")


def segment_softmax(a, segments: np.ndarray, n: int) -> Tensor:
    """Softmax over rows sharing a segment id, independently per trailing column."""
    a = as_tensor(a)
    segments = np.asarray(segments)
    peak = np.full((n,) + a.shape[1:], -np.inf)
    np.maximum.at(peak, segments, a.data)
    ex = np.exp(a.data - peak[segments])
    out = ex / scatter_rows(ex, segments, n)[segments]

    def backward(g):
        inner = scatter_rows(out * g, segments, n)[segments]
        return (out * (g - inner),)

    return _node(out, (a,), backward, "segment_softmax")


def face_pool(a, faces: np.ndarray) -> Tensor:
    """Per-face [min | mean | max] over the three vertex feature rows."""
    a = as_tensor(a)
    faces = np.asarray(faces)
    tri = a.data[faces]  # (F, 3, w)
    lo_idx = np.argmin(tri, axis=1)
    hi_idx = np.argmax(tri, axis=1)
    lo = np.take_along_axis(tri, lo_idx[:, None], axis=1)[:, 0]
    hi = np.take_along_axis(tri, hi_idx[:, None], axis=1)[:, 0]
    mid = tri.sum(axis=1) / 3.0
    w = a.shape[1]
    n = a.shape[0]

    def backward(g):
        g_lo, g_mid, g_hi = g[:, :w], g[:, w : 2 * w], g[:, 2 * w :]
        per_vertex = np.repeat((g_mid / 3.0)[:, None, :], 3, axis=1)
        slots = np.arange(3)[None, :, None]
        per_vertex += (slots == lo_idx[:, None, :]) * g_lo[:, None, :]
        per_vertex += (slots == hi_idx[:, None, :]) * g_hi[:, None, :]
        return (scatter_rows(per_vertex.reshape(-1, w), faces.reshape(-1), n),)

    return _node(np.concatenate([lo, mid, hi], axis=1), (a,), backward, "face_pool")


# ---------------------------------------------------------------- normalization / probability


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    ex = np.exp(shifted)
    out = ex / ex.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (out * g).sum(axis=axis, keepdims=True)),)

    return _node(out, (a,), backward, "softmax")


def layer_norm(a, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize each row over the last axis, then apply gain and bias."""
    a, gain, bias = as_tensor(a), as_tensor(gain), as_tensor(bias)
    mu = a.data.mean(axis=-1, keepdims=True)
    centered = a.data - mu
    rstd = 1.0 / np.sqrt((centered**2).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * rstd
    out = xhat * gain.data + bias.data

    def backward(g):
        dxhat = g * gain.data
        dx = rstd * (
            dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, _unbroadcast(g * xhat, gain.shape), _unbroadcast(g, bias.shape)

    return _node(out, (a, gain, bias), backward, "layer_norm")


def pick(a, index: np.ndarray) -> Tensor:
    """Row-wise element selection: out[i] = a[i, index[i]]."""
    a = as_tensor(a)
    index = np.asarray(index)
    rows = np.arange(a.shape[0])

    def backward(g):
        full = np.zeros_like(a.data)
        full[rows, index] = g
        return (full,)

    return _node(a.data[rows, index], (a,), backward, "pick")
