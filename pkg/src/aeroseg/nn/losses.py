"""Segmentation losses: face cross-entropy plus transform orthogonality."""
from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Tensor

LOG_EPS = 1e-12


def cls_loss(probs, labels) -> Tensor:
    """Mean categorical cross-entropy of row-stochastic ``probs`` against integer labels."""
    probs = ag.as_tensor(probs)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (probs.shape[0],):
        raise ValueError(f"{len(labels)} labels for {probs.shape[0]} rows")
    picked = ag.pick(probs, labels)
    return -ag.mean(ag.log(ag.clip_min(picked, LOG_EPS)))


def treg_loss(transforms) -> Tensor:
    """Sum over transforms of ||I - A A^T||_F^2."""
    total = ag.Tensor(0.0)
    for a in transforms:
        a = ag.as_tensor(a)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"transform must be square, got {a.shape}")
        gap = np.eye(a.shape[0]) - ag.matmul(a, ag.transpose(a))
        total = total + ag.sum_(gap * gap)
    return total


def total_loss(probs, labels, transforms, gamma: float = 0.1) -> tuple[Tensor, Tensor, Tensor]:
    """Returns (total, classification, regularization)."""
    lc = cls_loss(probs, labels)
    lt = treg_loss(transforms)
    return lc + gamma * lt, lc, lt
