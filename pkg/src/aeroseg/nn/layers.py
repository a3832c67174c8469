"""Network building blocks: per-point linear maps, residual point blocks,
transform nets, and multi-head graph attention."""
from __future__ import annotations

import math

import numpy as np

from . import autograd as ag
from .autograd import Tensor, parameter


class Module:
    training = True

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def modules(self):
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode: bool = True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise KeyError(f"state mismatch: missing {sorted(missing)[:3]}, unexpected {sorted(extra)[:3]}")
        for name, p in params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise ValueError(f"{name}: expected shape {p.shape}, got {value.shape}")
            p.data = value.copy()


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True, gain: float = 2.0):
        self.weight = parameter(rng.normal(0.0, math.sqrt(gain / n_in), size=(n_in, n_out)))
        self.bias = parameter(np.zeros(n_out)) if bias else None

    def __call__(self, x) -> Tensor:
        out = ag.matmul(x, self.weight)
        return out + self.bias if self.bias is not None else out


class LayerNorm(Module):
    def __init__(self, width: int):
        self.gain = parameter(np.ones(width))
        self.bias = parameter(np.zeros(width))

    def __call__(self, x) -> Tensor:
        return ag.layer_norm(x, self.gain, self.bias)


class ResPBlock(Module):
    """linear -> norm -> relu -> linear -> norm, plus shortcut, then relu."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        self.fc1 = Linear(n_in, n_out, rng)
        self.norm1 = LayerNorm(n_out)
        self.fc2 = Linear(n_out, n_out, rng)
        self.norm2 = LayerNorm(n_out)
        self.shortcut = Linear(n_in, n_out, rng, bias=False, gain=1.0) if n_in != n_out else None

    def __call__(self, x) -> Tensor:
        h = ag.relu(self.norm1(self.fc1(x)))
        h = self.norm2(self.fc2(h))
        skip = self.shortcut(x) if self.shortcut is not None else x
        return ag.relu(h + skip)


class TNet(Module):
    """Predicts a (d, d) feature transform from the whole point set.

    Point features go through a short ResP stack, are max-pooled over all
    points, and a head maps the pooled vector to ``I + delta``. With ``rank``
    set, ``delta = U(pooled) @ V`` where V is a learned (rank, d) basis, which
    keeps the head small for wide features. Heads start at zero so the initial
    transform is the identity.
    """

    def __init__(self, width: int, rng: np.random.Generator, hidden: int = 64, rank: int | None = None):
        self.width = width
        self.rank = rank
        self.encoder = [ResPBlock(width, hidden, rng), ResPBlock(hidden, hidden, rng)]
        self.fc = Linear(hidden, hidden, rng)
        out = width * width if rank is None else width * rank
        self.head = Linear(hidden, out, rng)
        self.head.weight.data[:] = 0.0
        self.basis = parameter(rng.normal(0.0, 1.0 / math.sqrt(width), size=(rank, width))) if rank else None

    def __call__(self, x) -> Tensor:
        h = x
        for block in self.encoder:
            h = block(h)
        pooled = ag.max_(h, axis=0, keepdims=True)
        coeffs = self.head(ag.relu(self.fc(pooled)))
        eye = np.eye(self.width)
        if self.rank is None:
            return coeffs.reshape(self.width, self.width) + eye
        return ag.matmul(coeffs.reshape(self.width, self.rank), self.basis) + eye


class GATLayer(Module):
    """Multi-head graph attention; heads are concatenated.

    Attention of node i over neighbor j (self included):
    ``softmax_j(leaky_relu(a_dst . z_i + a_src . z_j))`` with ``z = x W`` per head.
    """

    def __init__(
        self,
        n_in: int,
        rng: np.random.Generator,
        heads: int = 8,
        head_dim: int = 64,
        dropout: float = 0.1,
        negative_slope: float = 0.2,
    ):
        self.heads = heads
        self.head_dim = head_dim
        self.dropout = dropout
        self.negative_slope = negative_slope
        self.weight = parameter(rng.normal(0.0, math.sqrt(2.0 / (n_in + head_dim)), size=(n_in, heads * head_dim)))
        scale = math.sqrt(2.0 / (head_dim + 1))
        self.att_src = parameter(rng.normal(0.0, scale, size=(heads, head_dim)))
        self.att_dst = parameter(rng.normal(0.0, scale, size=(heads, head_dim)))
        self.bias = parameter(np.zeros(heads * head_dim))

    @property
    def out_dim(self) -> int:
        return self.heads * self.head_dim

    def attention(self, x, graph) -> tuple[Tensor, Tensor]:
        """Edge attention weights (E, heads) and projected node features (N, heads, head_dim)."""
        src, dst = graph.attention_index
        n = graph.n_nodes
        z = ag.matmul(x, self.weight).reshape(n, self.heads, self.head_dim)
        s_src = (z * self.att_src).sum(axis=2)
        s_dst = (z * self.att_dst).sum(axis=2)
        scores = ag.leaky_relu(ag.take_rows(s_src, src) + ag.take_rows(s_dst, dst), self.negative_slope)
        return ag.segment_softmax(scores, dst, n), z

    def __call__(self, x, graph, rng: np.random.Generator | None = None) -> Tensor:
        src, dst = graph.attention_index
        n = graph.n_nodes
        alpha, z = self.attention(x, graph)
        alpha = ag.dropout(alpha, self.dropout, rng, self.training and rng is not None)
        messages = ag.take_rows(z, src) * alpha.reshape(len(src), self.heads, 1)
        out = ag.segment_sum(messages, dst, n).reshape(n, self.out_dim)
        return out + self.bias


def aggregate_face(vertex_features) -> Tensor:
    """[min | mean | max] of exactly three vertex feature rows."""
    feats = ag.as_tensor(vertex_features)
    if feats.shape[0] != 3:
        raise ValueError("a face aggregates exactly 3 vertex rows")
    return ag.face_pool(feats, np.array([[0, 1, 2]])).reshape(-1)
