"""Training loop, evaluation helpers and dataset loading."""
from __future__ import annotations

import csv
import logging
import math
import os
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import augment
from .config import RunConfig
from .datagen import read_manifest
from .fileio import load_mesh, load_surfaces
from .geometry import NUM_CLASSES, LabeledMesh, MeshGraph, NormalizationRecord, SurfaceGrid, build_graph, normalize
from .nn.checkpoint import save_checkpoint
from .nn.losses import total_loss
from .nn.model import NonFiniteError, SegmentationModel
from .nn.optim import Adam, step_decay_lr

log = logging.getLogger(__name__)

METRICS_HEADER = [
    "epoch", "train_loss", "l_cls", "l_treg", "val_acc", "val_acc_mesh",
    "xi1", "xi2", "xi3", "xi4", "xi5", "lr",
]


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, step: int, detail: str = "non-finite loss"):
        self.epoch, self.step = epoch, step
        super().__init__(f"{detail} at epoch {epoch}, step {step}")


@dataclass
class Example:
    """A mesh prepared for the network: normalized positions and a reusable graph."""

    name: str
    mesh: LabeledMesh  # normalized
    graph: MeshGraph
    record: NormalizationRecord
    grids: list[SurfaceGrid] = field(default_factory=list)  # original coordinates

    @classmethod
    def from_mesh(cls, name: str, mesh: LabeledMesh, grids=()) -> "Example":
        normed, record = normalize(mesh)
        return cls(name, normed, build_graph(normed), record, list(grids))

    @property
    def labels(self) -> np.ndarray:
        return self.mesh.face_labels

    def original_centroids(self) -> np.ndarray:
        v = self.record.invert(self.mesh.vertices)
        return v[self.mesh.faces].mean(axis=1)


def load_examples(dataset_dir, split: str | None = None, with_surfaces: bool = True) -> list[Example]:
    manifest = read_manifest(dataset_dir)
    root = Path(manifest["root"])
    out = []
    for s in manifest["samples"]:
        if split is not None and s["split"] != split:
            continue
        mesh = load_mesh(root / s["mesh"], root / s["labels"])
        grids = load_surfaces(root / s["surfaces"]) if with_surfaces else []
        out.append(Example.from_mesh(s["sample_id"], mesh, grids))
    return out


def predict_examples(model: SegmentationModel, examples: Sequence[Example]) -> list[np.ndarray]:
    return [model.predict_proba(ex.graph, ex.mesh.vertices) for ex in examples]


def accuracy(probs: Sequence[np.ndarray], labels: Sequence[np.ndarray]) -> tuple[float, float]:
    """(pooled face accuracy, mean of per-mesh accuracies)."""
    hits = [np.argmax(p, axis=1) == np.asarray(y) for p, y in zip(probs, labels)]
    if not hits:
        return float("nan"), float("nan")
    pooled = float(np.concatenate(hits).mean())
    return pooled, float(np.mean([h.mean() for h in hits]))


def majority_baseline(train_labels: Sequence[np.ndarray], eval_labels: Sequence[np.ndarray]) -> float:
    """Accuracy of always predicting the most frequent training class."""
    counts = np.bincount(np.concatenate(train_labels), minlength=NUM_CLASSES)
    y = np.concatenate(eval_labels)
    return float((y == np.argmax(counts)).mean())


def confusion_matrix(probs, labels, n_classes: int = NUM_CLASSES) -> np.ndarray:
    pred = np.concatenate([np.argmax(p, axis=1) for p in probs])
    y = np.concatenate([np.asarray(l) for l in labels])
    return np.bincount(y * n_classes + pred, minlength=n_classes**2).reshape(n_classes, n_classes)


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    l_cls: float
    l_treg: float
    val_acc: float
    val_acc_mesh: float
    xi: tuple[float, ...]
    lr: float

    def row(self) -> list:
        return [self.epoch, self.train_loss, self.l_cls, self.l_treg, self.val_acc, self.val_acc_mesh,
                *self.xi, self.lr]


@dataclass
class TrainResult:
    model: SegmentationModel
    history: list[EpochMetrics]
    best_epoch: int
    best_val_acc: float
    param_hash: str | None = None


def _append_metrics(path: Path, m: EpochMetrics) -> None:
    new = not path.exists() or path.stat().st_size == 0
    with open(path, "a", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if new:
            writer.writerow(METRICS_HEADER)
        writer.writerow([repr(x) if isinstance(x, float) else x for x in m.row()])
        fh.flush()
        os.fsync(fh.fileno())


def read_metrics(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def train(
    train_set: Sequence[Example],
    val_set: Sequence[Example],
    config: RunConfig,
    metrics_path=None,
    checkpoint_path=None,
    progress: Callable[[EpochMetrics], None] | None = None,
) -> TrainResult:
    """One mesh per step, freshly augmented each time it is presented.

    The returned model carries the parameters of the epoch with the best
    pooled validation accuracy (the last epoch if there is no validation set).
    """
    if not train_set:
        raise ValueError("training set is empty")
    model = SegmentationModel(config.model_config())
    opt = Adam(model.parameters(), lr=config.lr)
    aug_rng = np.random.default_rng(config.aug_seed if config.aug_seed is not None else config.seed)
    order_rng = np.random.default_rng([config.seed, 1])
    drop_rng = np.random.default_rng([config.seed, 2])
    aug_base = config.augmentation()
    metrics_path = Path(metrics_path) if metrics_path else None

    history: list[EpochMetrics] = []
    best_state, best_epoch, best_acc = None, -1, -math.inf
    step = 0
    for epoch in range(config.epochs):
        aug = aug_base.at_epoch(epoch)
        opt.lr = step_decay_lr(epoch, config.epochs, config.lr, config.lr_decays, config.lr_factor)
        model.train()
        sums = np.zeros(3)
        for idx in order_rng.permutation(len(train_set)):
            ex = train_set[idx]
            step += 1
            positions = augment(ex.mesh, aug, aug_rng).vertices
            try:
                probs, transforms = model(ex.graph, positions, drop_rng)
            except NonFiniteError as exc:
                raise TrainingDiverged(epoch, step, str(exc)) from exc
            loss, lc, lt = total_loss(probs, ex.labels, transforms, config.gamma)
            if not np.isfinite(loss.data):
                raise TrainingDiverged(epoch, step)
            opt.zero_grad()
            loss.backward()
            opt.step()
            sums += (float(loss.data), float(lc.data), float(lt.data))
        sums /= len(train_set)

        if val_set:
            pooled, per_mesh = accuracy(predict_examples(model, val_set), [ex.labels for ex in val_set])
        else:
            pooled = per_mesh = float("nan")
        m = EpochMetrics(epoch, *map(float, sums), pooled, per_mesh, aug.intensities(), opt.lr)
        history.append(m)
        if metrics_path:
            _append_metrics(metrics_path, m)
        score = pooled if val_set else epoch
        if score > best_acc:
            best_state, best_epoch, best_acc = model.state_dict(), epoch, score
        log.info("epoch %d loss %.4f val %.4f lr %.2e", epoch, sums[0], pooled, opt.lr)
        if progress:
            progress(m)

    model.load_state_dict(best_state)
    model.eval()
    param_hash = None
    if checkpoint_path:
        meta = {"best_epoch": best_epoch, "best_val_acc": best_acc if val_set else None, "run": config.to_dict()}
        param_hash = save_checkpoint(checkpoint_path, model, meta, fmt=config.checkpoint_format)
    return TrainResult(model, history, best_epoch, best_acc if val_set else float("nan"), param_hash)


def split_calibration(n_faces_per_mesh: Sequence[int], fraction: float, seed: int) -> list[np.ndarray]:
    """Boolean mask per mesh selecting the calibration faces (a random ``fraction``)."""
    rng = np.random.default_rng([seed, 3])
    return [rng.random(n) < fraction for n in n_faces_per_mesh]


__all__ = [
    "Example", "EpochMetrics", "TrainResult", "TrainingDiverged", "accuracy", "confusion_matrix",
    "load_examples", "majority_baseline", "predict_examples", "read_metrics", "split_calibration", "train",
]
