"""Hybrid point/graph segmentation network.

positions -> input T-Net -> priming ResP blocks -> GAT stack -> post ResP
blocks -> per-face [min|mean|max] pooling -> classifier MLP -> softmax.
Every ResP and GAT layer is followed by a T-Net whose transform multiplies the
features; all transforms are returned for orthogonality regularization.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from ..geometry import NUM_CLASSES, MeshGraph
from . import autograd as ag
from .autograd import Tensor
from .layers import GATLayer, Linear, Module, ResPBlock, TNet


class NonFiniteError(FloatingPointError):
    def __init__(self, layer: str, message: str = "non-finite activation"):
        self.layer = layer
        super().__init__(f"{message} in layer {layer}")


@dataclass(frozen=True)
class ModelConfig:
    in_dim: int = 3
    prime_widths: tuple[int, ...] = (64, 64)
    gat_layers: int = 4
    gat_heads: int = 8
    gat_head_dim: int = 64
    gat_dropout: float = 0.1
    gat_residual: bool = True
    post_widths: tuple[int, ...] = (256, 128)
    cls_hidden: int = 64
    n_classes: int = NUM_CLASSES
    tnet_hidden: int = 64
    tnet_rank: int = 16
    tnet_full_max: int = 128  # widths above this use the low-rank head
    seed: int = 0

    def __post_init__(self):
        sizes = (self.in_dim, self.gat_layers, self.gat_heads, self.gat_head_dim, self.cls_hidden,
                 self.n_classes, self.tnet_hidden, self.tnet_rank, *self.prime_widths, *self.post_widths)
        if min(sizes) < 1 or not self.prime_widths or not self.post_widths:
            raise ValueError("model widths, layer and head counts must be positive")
        if not 0.0 <= self.gat_dropout < 1.0:
            raise ValueError("gat_dropout must lie in [0, 1)")

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        kwargs = dict(data)
        for key in ("prime_widths", "post_widths"):
            if key in kwargs:
                kwargs[key] = tuple(int(w) for w in kwargs[key])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["prime_widths"] = list(self.prime_widths)
        d["post_widths"] = list(self.post_widths)
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


class SegmentationModel(Module):
    def __init__(self, config: ModelConfig | None = None):
        self.config = config = config or ModelConfig()
        rng = np.random.default_rng(config.seed)

        def tnet(width):
            rank = None if width <= config.tnet_full_max else config.tnet_rank
            return TNet(width, rng, hidden=config.tnet_hidden, rank=rank)

        self.input_tnet = tnet(config.in_dim)
        width = config.in_dim
        self.prime, self.prime_tnets = [], []
        for w in config.prime_widths:
            self.prime.append(ResPBlock(width, w, rng))
            self.prime_tnets.append(tnet(w))
            width = w
        self.gats, self.gat_tnets = [], []
        for _ in range(config.gat_layers):
            layer = GATLayer(width, rng, config.gat_heads, config.gat_head_dim, config.gat_dropout)
            self.gats.append(layer)
            self.gat_tnets.append(tnet(layer.out_dim))
            width = layer.out_dim
        self.post, self.post_tnets = [], []
        for w in config.post_widths:
            self.post.append(ResPBlock(width, w, rng))
            self.post_tnets.append(tnet(w))
            width = w
        self.cls_hidden = Linear(3 * width, config.cls_hidden, rng)
        self.cls_out = Linear(config.cls_hidden, config.n_classes, rng, gain=1.0)

    @property
    def n_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))

    def logits(
        self, graph: MeshGraph, positions, rng: np.random.Generator | None = None
    ) -> tuple[Tensor, list[Tensor]]:
        transforms: list[Tensor] = []
        layer_no = 0

        def check(x: Tensor, name: str) -> Tensor:
            if not np.all(np.isfinite(x.data)):
                raise NonFiniteError(f"{layer_no}:{name}")
            return x

        def transform(x: Tensor, net: TNet) -> Tensor:
            a = net(x)
            transforms.append(a)
            return ag.matmul(x, a)

        x = ag.as_tensor(positions)
        if x.shape != (graph.n_nodes, self.config.in_dim):
            raise ValueError(f"positions shape {x.shape} does not match graph with {graph.n_nodes} nodes")
        x = check(transform(x, self.input_tnet), "input_tnet")
        for block, net in zip(self.prime, self.prime_tnets):
            layer_no += 1
            x = check(transform(block(x), net), "prime")
        for gat, net in zip(self.gats, self.gat_tnets):
            layer_no += 1
            h = gat(x, graph, rng)
            if self.config.gat_residual and h.shape == x.shape:
                h = h + x
            x = check(transform(ag.relu(h), net), "gat")
        for block, net in zip(self.post, self.post_tnets):
            layer_no += 1
            x = check(transform(block(x), net), "post")
        layer_no += 1
        faces = ag.face_pool(x, graph.faces)
        out = self.cls_out(ag.relu(self.cls_hidden(faces)))
        return check(out, "classifier"), transforms

    def forward(
        self, graph: MeshGraph, positions, rng: np.random.Generator | None = None
    ) -> tuple[Tensor, list[Tensor]]:
        """Per-face class probabilities (F, M) and the T-Net transforms."""
        logits, transforms = self.logits(graph, positions, rng)
        return ag.softmax(logits, axis=1), transforms

    __call__ = forward

    def predict_proba(self, graph: MeshGraph, positions) -> np.ndarray:
        was_training = self.training
        self.eval()
        try:
            with ag.no_grad():
                probs, _ = self.forward(graph, positions)
        finally:
            self.train(was_training)
        return probs.data


def forward(model: SegmentationModel, graph: MeshGraph, positions, rng=None):
    return model.forward(graph, positions, rng)
