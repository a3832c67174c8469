"""Split-conformal Adaptive Prediction Sets (non-randomized).

Scores are the cumulative sorted probability mass down to the true class.
The calibrated threshold is the ceil((n+1)(1-alpha))-th smallest score, so
prediction sets contain the true label with probability >= 1 - alpha for
exchangeable data.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .fileio import atomic_write_text

# guards ceil() against representation error, e.g. 100 * 0.95 -> 95.00000000000001
_RANK_SLACK = 1e-9


def _sorted_order(probs: np.ndarray) -> np.ndarray:
    """Class order by descending probability, ties by ascending class id."""
    probs = np.atleast_2d(probs)
    return np.argsort(-probs, axis=1, kind="stable")


def _cumulative(probs: np.ndarray):
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    order = _sorted_order(probs)
    sorted_p = np.take_along_axis(probs, order, axis=1)
    return order, np.cumsum(sorted_p, axis=1)


def aps_scores(probs, labels) -> np.ndarray:
    """Vectorized scores for rows of ``probs`` against integer ``labels``."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    order, cum = _cumulative(probs)
    position = np.argmax(order == labels[:, None], axis=1)
    return cum[np.arange(len(labels)), position]


def aps_score(probs, label: int) -> float:
    return float(aps_scores(np.asarray(probs)[None, :], [label])[0])


def conformal_rank(n: int, alpha: float) -> int:
    return int(math.ceil((n + 1) * (1.0 - alpha) - _RANK_SLACK))


@dataclass(frozen=True)
class ConformalCalibrator:
    alpha: float
    qhat: float
    n_cal: int

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0.0 <= self.qhat <= 1.0 + 1e-12:
            raise ValueError("qhat must lie in [0, 1]")

    @property
    def nontrivial(self) -> bool:
        """Enough calibration points for the threshold to be below the clamp."""
        return self.n_cal >= math.ceil(1.0 / self.alpha) - 1

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "qhat": self.qhat, "n_cal": self.n_cal}

    def save(self, path) -> None:
        atomic_write_text(path, json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ConformalCalibrator":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return cls(float(data["alpha"]), float(data["qhat"]), int(data["n_cal"]))


def calibrate_scores(scores, alpha: float) -> ConformalCalibrator:
    scores = np.sort(np.asarray(scores, dtype=np.float64).reshape(-1))
    n = len(scores)
    if n == 0:
        raise ValueError("calibration set is empty")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    rank = conformal_rank(n, alpha)
    qhat = 1.0 if rank > n else float(scores[max(rank, 1) - 1])
    return ConformalCalibrator(alpha, min(qhat, 1.0), n)


def calibrate(probs, labels, alpha: float = 0.05) -> ConformalCalibrator:
    """Calibrate from a probability matrix (n, M) and true labels (n,)."""
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    if probs.shape[0] == 0:
        raise ValueError("calibration set is empty")
    return calibrate_scores(aps_scores(probs, labels), alpha)


def prediction_masks(calibrator: ConformalCalibrator, probs) -> np.ndarray:
    """Boolean (n, M) membership: classes in descending order until mass >= qhat."""
    order, cum = _cumulative(probs)
    reached = cum >= calibrator.qhat
    # number of classes kept = first index reaching qhat, plus one
    stop = np.where(reached.any(axis=1), np.argmax(reached, axis=1), cum.shape[1] - 1)
    keep_sorted = np.arange(cum.shape[1])[None, :] <= stop[:, None]
    masks = np.zeros_like(keep_sorted)
    np.put_along_axis(masks, order, keep_sorted, axis=1)
    return masks


def predict_set(calibrator: ConformalCalibrator, probs) -> frozenset[int]:
    mask = prediction_masks(calibrator, np.asarray(probs)[None, :])[0]
    return frozenset(int(i) for i in np.flatnonzero(mask))


def empirical_coverage(calibrator: ConformalCalibrator, probs, labels) -> float:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    masks = prediction_masks(calibrator, probs)
    return float(masks[np.arange(len(labels)), labels].mean())


def synthetic_classification(n: int, rng: np.random.Generator, n_classes: int = 4, sharpness: float = 2.0):
    """Draws (probs, labels) where labels are sampled from the stated probabilities.

    Logits are Gaussian with scale ``sharpness``; the returned probabilities
    are exactly the conditional label distribution.
    """
    logits = rng.normal(0.0, sharpness, size=(n, n_classes))
    logits -= logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=1, keepdims=True)
    u = rng.random(n)[:, None]
    labels = np.minimum((np.cumsum(probs, axis=1) < u).sum(axis=1), n_classes - 1)
    return probs, labels
