"""Mesh-to-CAD projection: nearest-surface assignment and conservative voting."""
from __future__ import annotations

import csv
import io
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .fileio import atomic_write_text
from .geometry import LABEL_NAMES, NUM_CLASSES, PartLabel, SurfaceGrid

MAJORITY = "majority"
TIEBREAK = "conservative-tiebreak"

CSV_HEADER = ["surface_id", "label", "mode"] + [f"votes_{name}" for name in LABEL_NAMES]


@dataclass(frozen=True)
class RefinementPriority:
    """Labels from most to least refined mesh settings."""

    order: tuple[PartLabel, ...] = (PartLabel.WING, PartLabel.STABILIZER, PartLabel.ENGINE, PartLabel.FUSELAGE)

    def __post_init__(self):
        order = tuple(PartLabel.parse(x) for x in self.order)
        if sorted(order) != sorted(PartLabel):
            raise ValueError("priority must rank every part label exactly once")
        object.__setattr__(self, "order", order)

    @classmethod
    def from_names(cls, names) -> "RefinementPriority":
        return cls(tuple(PartLabel.parse(n) for n in names))

    def rank(self, label) -> int:
        """Higher means more refined."""
        return len(self.order) - 1 - self.order.index(PartLabel(label))

    def more_refined(self, a, b) -> PartLabel:
        return PartLabel(a) if self.rank(a) >= self.rank(b) else PartLabel(b)


DEFAULT_PRIORITY = RefinementPriority()


@dataclass(frozen=True)
class SurfaceAssignment:
    face_id: int
    surface_id: int
    distance: float


@dataclass(frozen=True)
class SurfaceClassification:
    surface_id: int
    label: PartLabel
    votes: tuple[int, ...]
    mode: str
    n_faces: int


def face_surface_distance(centroid, grid: SurfaceGrid | np.ndarray) -> float:
    pts = grid.flat_points if isinstance(grid, SurfaceGrid) else np.asarray(grid, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("surface grid is empty")
    diff = pts - np.asarray(centroid, dtype=np.float64)
    return float(np.sqrt(np.min(np.einsum("ij,ij->i", diff, diff))))


def surface_distances(centroids, grids: Sequence[SurfaceGrid], chunk: int = 256) -> np.ndarray:
    """(n_faces, n_surfaces) matrix of centroid-to-grid minimum distances."""
    centroids = np.asarray(centroids, dtype=np.float64).reshape(-1, 3)
    out = np.empty((len(centroids), len(grids)))
    for j, grid in enumerate(grids):
        pts = grid.flat_points
        for start in range(0, len(centroids), chunk):
            block = centroids[start : start + chunk]
            diff = block[:, None, :] - pts[None, :, :]
            out[start : start + chunk, j] = np.einsum("ijk,ijk->ij", diff, diff).min(axis=1)
    return np.sqrt(out)


def assign_faces(centroids, grids: Sequence[SurfaceGrid]) -> list[SurfaceAssignment]:
    """Nearest surface per face; equal distances go to the lowest surface id."""
    if not grids:
        raise ValueError("no surfaces to assign to")
    ids = np.array([g.surface_id for g in grids])
    order = np.argsort(ids, kind="stable")
    dist = surface_distances(centroids, [grids[i] for i in order])
    best = np.argmin(dist, axis=1)  # first minimum = lowest id after sorting
    return [
        SurfaceAssignment(i, int(ids[order[b]]), float(dist[i, b])) for i, b in enumerate(best)
    ]


def tally_votes(prediction_sets, n_classes: int = NUM_CLASSES) -> np.ndarray:
    votes = np.zeros(n_classes, dtype=np.int64)
    for s in prediction_sets:
        for c in s:
            votes[int(c)] += 1
    return votes


def decide(votes, n_faces: int, priority: RefinementPriority = DEFAULT_PRIORITY) -> tuple[PartLabel, str]:
    """Strict majority of faces wins; otherwise the more refined of the top two."""
    votes = np.asarray(votes)
    if n_faces <= 0:
        raise ValueError("surface has no assigned faces")
    ranked = sorted(range(len(votes)), key=lambda c: (-votes[c], -priority.rank(c)))
    majority = [c for c in ranked if 2 * votes[c] > n_faces]
    if len(majority) == 1:
        return PartLabel(majority[0]), MAJORITY
    if majority:
        # several classes above half: most votes first, equal counts by priority
        top = majority[0]
        tied = [c for c in majority if votes[c] == votes[top]]
        return PartLabel(top), MAJORITY if len(tied) == 1 else TIEBREAK
    first, second = ranked[0], ranked[1]
    return priority.more_refined(first, second), TIEBREAK


def classify_surface(
    surface_id: int,
    prediction_sets,
    priority: RefinementPriority = DEFAULT_PRIORITY,
) -> SurfaceClassification:
    """Vote over the prediction sets of the faces assigned to one surface."""
    sets = list(prediction_sets)
    if not sets:
        raise ValueError(f"surface {surface_id} has no assigned faces")
    votes = tally_votes(sets)
    label, mode = decide(votes, len(sets), priority)
    return SurfaceClassification(surface_id, label, tuple(int(v) for v in votes), mode, len(sets))


def classify_surfaces(
    assignments: Sequence[SurfaceAssignment],
    prediction_sets: Sequence,
    surface_ids: Sequence[int] | None = None,
    priority: RefinementPriority = DEFAULT_PRIORITY,
) -> list[SurfaceClassification]:
    """Classify every surface that received at least one face.

    Surfaces listed in ``surface_ids`` that received no faces are skipped; the
    caller decides how to handle them.
    """
    if len(assignments) != len(prediction_sets):
        raise ValueError("every assigned face needs a prediction set")
    groups: dict[int, list] = {}
    for a in assignments:
        groups.setdefault(a.surface_id, []).append(prediction_sets[a.face_id])
    ids = sorted(groups) if surface_ids is None else [s for s in sorted(surface_ids) if s in groups]
    return [classify_surface(s, groups[s], priority) for s in ids]


def masks_to_sets(masks) -> list[frozenset[int]]:
    return [frozenset(int(i) for i in np.flatnonzero(row)) for row in np.asarray(masks)]


def top1_sets(probs) -> list[frozenset[int]]:
    return [frozenset([int(c)]) for c in np.argmax(np.asarray(probs), axis=1)]


@dataclass(frozen=True)
class SurfaceReport:
    total: int
    incorrect: int
    under_refined: int
    over_refined: int

    @property
    def accuracy(self) -> float:
        return (self.total - self.incorrect) / self.total if self.total else float("nan")

    def __add__(self, other: "SurfaceReport") -> "SurfaceReport":
        return SurfaceReport(
            self.total + other.total,
            self.incorrect + other.incorrect,
            self.under_refined + other.under_refined,
            self.over_refined + other.over_refined,
        )


def evaluate_surfaces(
    classifications: Sequence[SurfaceClassification],
    truths,
    priority: RefinementPriority = DEFAULT_PRIORITY,
) -> SurfaceReport:
    """``truths`` maps surface id to its true label (dict) or is aligned by position."""
    incorrect = under = over = 0
    for i, c in enumerate(classifications):
        truth = truths[c.surface_id] if isinstance(truths, dict) else truths[i]
        truth = PartLabel.parse(truth)
        if c.label == truth:
            continue
        incorrect += 1
        if priority.rank(c.label) < priority.rank(truth):
            under += 1
        else:
            over += 1
    return SurfaceReport(len(classifications), incorrect, under, over)


def classifications_to_csv(classifications: Sequence[SurfaceClassification]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for c in classifications:
        writer.writerow([c.surface_id, c.label.key, c.mode, *c.votes])
    return buf.getvalue()


def save_classifications(classifications, path) -> None:
    atomic_write_text(path, classifications_to_csv(classifications))


def load_classifications(path) -> list[SurfaceClassification]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}")
        for row in reader:
            votes = tuple(int(row[f"votes_{n}"]) for n in LABEL_NAMES)
            out.append(
                SurfaceClassification(int(row["surface_id"]), PartLabel.parse(row["label"]), votes, row["mode"], -1)
            )
    return out
