"""Face-level accuracy and surface-level refinement outcomes for a set of meshes."""
from __future__ import annotations

import csv
import io
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .conformal import ConformalCalibrator, calibrate, empirical_coverage, prediction_masks
from .geometry import LABEL_NAMES, PartLabel
from .projection import (
    DEFAULT_PRIORITY,
    RefinementPriority,
    SurfaceClassification,
    SurfaceReport,
    assign_faces,
    classify_surfaces,
    evaluate_surfaces,
    masks_to_sets,
    top1_sets,
)
from .training import Example, accuracy, confusion_matrix, split_calibration


@dataclass
class SurfaceRow:
    sample: str
    method: str
    classification: SurfaceClassification
    truth: int


@dataclass
class EvalReport:
    face_accuracy: float
    face_accuracy_mesh: float
    baseline: float | None
    coverage: float | None
    mean_set_size: float | None
    confusion: np.ndarray
    surfaces: dict[str, SurfaceReport]
    rows: list[SurfaceRow]
    calibrator: ConformalCalibrator | None

    def summary_rows(self) -> list[tuple[str, str]]:
        out = [
            ("face_accuracy", repr(self.face_accuracy)),
            ("face_accuracy_per_mesh", repr(self.face_accuracy_mesh)),
        ]
        if self.baseline is not None:
            out.append(("majority_baseline", repr(self.baseline)))
        if self.calibrator is not None:
            out += [
                ("alpha", repr(self.calibrator.alpha)),
                ("qhat", repr(self.calibrator.qhat)),
                ("n_calibration_faces", str(self.calibrator.n_cal)),
                ("coverage_heldout", repr(self.coverage)),
                ("mean_set_size", repr(self.mean_set_size)),
            ]
        for method, rep in self.surfaces.items():
            out += [
                (f"{method}_surfaces", str(rep.total)),
                (f"{method}_incorrect", str(rep.incorrect)),
                (f"{method}_under_refined", str(rep.under_refined)),
                (f"{method}_over_refined", str(rep.over_refined)),
                (f"{method}_surface_accuracy", repr(rep.accuracy)),
            ]
        return out

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value"])
        w.writerows(self.summary_rows())
        return buf.getvalue()

    def surfaces_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sample", "method", "surface_id", "label", "truth", "mode",
                    *[f"votes_{n}" for n in LABEL_NAMES]])
        for r in self.rows:
            c = r.classification
            w.writerow([r.sample, r.method, c.surface_id, c.label.key, PartLabel(r.truth).key, c.mode, *c.votes])
        return buf.getvalue()


def surface_outcomes(
    example: Example, sets: Sequence, priority: RefinementPriority = DEFAULT_PRIORITY
) -> tuple[list[SurfaceClassification], SurfaceReport]:
    assignments = assign_faces(example.original_centroids(), example.grids)
    classes = classify_surfaces(assignments, sets, priority=priority)
    truths = {g.surface_id: int(g.true_label) for g in example.grids}
    return classes, evaluate_surfaces(classes, truths, priority)


def evaluate(
    examples: Sequence[Example],
    probs: Sequence[np.ndarray],
    calibrator: ConformalCalibrator | None = None,
    alpha: float = 0.05,
    calibration_fraction: float = 0.2,
    seed: int = 0,
    priority: RefinementPriority = DEFAULT_PRIORITY,
    baseline: float | None = None,
) -> EvalReport:
    """Face accuracy plus surface outcomes under top-1 and conformal voting.

    Without a ``calibrator``, one is fitted on a random ``calibration_fraction``
    of the faces; coverage is then measured on the remaining faces.
    """
    labels = [ex.labels for ex in examples]
    pooled, per_mesh = accuracy(probs, labels)
    held = [np.ones(len(y), dtype=bool) for y in labels]
    if calibrator is None:
        cal_masks = split_calibration([len(y) for y in labels], calibration_fraction, seed)
        cal_p = np.concatenate([p[m] for p, m in zip(probs, cal_masks)])
        cal_y = np.concatenate([y[m] for y, m in zip(labels, cal_masks)])
        calibrator = calibrate(cal_p, cal_y, alpha)
        held = [~m for m in cal_masks]
    test_p = np.concatenate([p[m] for p, m in zip(probs, held)])
    test_y = np.concatenate([y[m] for y, m in zip(labels, held)])
    coverage = empirical_coverage(calibrator, test_p, test_y)
    set_size = float(prediction_masks(calibrator, test_p).sum(axis=1).mean())

    totals = {"top1": SurfaceReport(0, 0, 0, 0), "conformal": SurfaceReport(0, 0, 0, 0)}
    rows: list[SurfaceRow] = []
    for ex, p in zip(examples, probs):
        truths = {g.surface_id: int(g.true_label) for g in ex.grids}
        for method, sets in (("top1", top1_sets(p)), ("conformal", masks_to_sets(prediction_masks(calibrator, p)))):
            classes, rep = surface_outcomes(ex, sets, priority)
            totals[method] = totals[method] + rep
            rows += [SurfaceRow(ex.name, method, c, truths[c.surface_id]) for c in classes]
    return EvalReport(
        pooled, per_mesh, baseline, coverage, set_size, confusion_matrix(probs, labels), totals, rows, calibrator
    )
