"""Report figures. Uses the non-interactive Agg backend; every function saves a PNG."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .geometry import LABEL_NAMES  # noqa: E402

PART_COLORS = ("#7f7f7f", "#1f77b4", "#ff7f0e", "#2ca02c")


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_training_curves(history: list[dict], path) -> Path:
    """``history`` rows use the metrics-log column names."""
    epochs = [int(r["epoch"]) for r in history]
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(10, 3.6))
    ax_loss.plot(epochs, [r["train_loss"] for r in history], label="total")
    ax_loss.plot(epochs, [r["l_cls"] for r in history], label="classification")
    ax_loss.plot(epochs, [r["l_treg"] for r in history], label="transform reg.")
    ax_loss.set_yscale("log")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss")
    ax_loss.legend(frameon=False)

    ax_acc.plot(epochs, [r["val_acc"] for r in history], color="k")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("validation face accuracy")
    ax_acc.set_ylim(0, 1)
    lr_ax = ax_acc.twinx()
    lr_ax.plot(epochs, [r["lr"] for r in history], color="tab:red", alpha=0.5, lw=1)
    lr_ax.set_yscale("log")
    lr_ax.set_ylabel("learning rate", color="tab:red")
    fig.tight_layout()
    return _save(fig, path)


def plot_confusion(matrix: np.ndarray, path, title: str = "face predictions") -> Path:
    matrix = np.asarray(matrix)
    rows = matrix.sum(axis=1, keepdims=True)
    frac = np.divide(matrix, rows, out=np.zeros(matrix.shape), where=rows > 0)
    fig, ax = plt.subplots(figsize=(4.6, 4))
    im = ax.imshow(frac, cmap="Blues", vmin=0, vmax=1)
    for i in range(matrix.shape[0]):
        for j in range(matrix.shape[1]):
            ax.text(j, i, str(matrix[i, j]), ha="center", va="center",
                    color="white" if frac[i, j] > 0.6 else "black", fontsize=8)
    ax.set_xticks(range(len(LABEL_NAMES)), LABEL_NAMES, rotation=30)
    ax.set_yticks(range(len(LABEL_NAMES)), LABEL_NAMES)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, fraction=0.046, label="row fraction")
    return _save(fig, path)


def plot_surface_outcomes(reports: dict, path) -> Path:
    """Grouped bars of correct / under-refined / over-refined surfaces per method."""
    methods = list(reports)
    kinds = ("correct", "under_refined", "over_refined")
    colors = ("tab:green", "tab:red", "tab:orange")
    values = {
        "correct": [reports[m].total - reports[m].incorrect for m in methods],
        "under_refined": [reports[m].under_refined for m in methods],
        "over_refined": [reports[m].over_refined for m in methods],
    }
    x = np.arange(len(methods))
    width = 0.26
    fig, ax = plt.subplots(figsize=(1.8 + 1.6 * len(methods), 3.4))
    for k, (kind, color) in enumerate(zip(kinds, colors)):
        bars = ax.bar(x + (k - 1) * width, values[kind], width, label=kind.replace("_", "-"), color=color)
        ax.bar_label(bars, fontsize=7)
    ax.set_xticks(x, methods)
    ax.set_ylabel("surfaces")
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def plot_mesh_labels(vertices: np.ndarray, faces: np.ndarray, labels: np.ndarray, path, title: str = "") -> Path:
    """Top view of face centroids colored by part label."""
    c = np.asarray(vertices)[np.asarray(faces)].mean(axis=1)
    fig, ax = plt.subplots(figsize=(5, 4))
    for k, name in enumerate(LABEL_NAMES):
        sel = np.asarray(labels) == k
        if sel.any():
            ax.scatter(c[sel, 0], c[sel, 1], s=2, color=PART_COLORS[k], label=name)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, markerscale=4, fontsize=8)
    return _save(fig, path)
