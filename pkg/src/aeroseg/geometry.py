"""Mesh and CAD-surface data model.

Meshes are plain triangle soups with optional per-face part labels. Everything
here is pure: operations return new objects and never mutate their inputs.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class PartLabel(enum.IntEnum):
    FUSELAGE = 0
    WING = 1
    STABILIZER = 2
    ENGINE = 3

    @classmethod
    def parse(cls, token) -> "PartLabel":
        """Accept an integer id, a numeric string, or a (case-insensitive) name."""
        if isinstance(token, PartLabel):
            return token
        if isinstance(token, (int, np.integer)):
            return cls(int(token))
        text = str(token).strip()
        if text.lstrip("-").isdigit():
            return cls(int(text))
        try:
            return cls[text.upper()]
        except KeyError:
            raise ValueError(f"unknown part label {token!r}") from None

    @property
    def key(self) -> str:
        return self.name.lower()


NUM_CLASSES = len(PartLabel)
LABEL_NAMES = tuple(label.key for label in PartLabel)


class MeshError(ValueError):
    """Invalid mesh content (bad indices, degenerate faces, label mismatch)."""


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LabeledMesh:
    vertices: np.ndarray
    faces: np.ndarray
    face_labels: np.ndarray | None = None

    def __post_init__(self):
        verts = np.array(self.vertices, dtype=np.float64)
        faces = np.array(self.faces, dtype=np.int64)
        if verts.ndim != 2 or verts.shape[1] != 3:
            raise MeshError(f"vertices must have shape (n, 3), got {verts.shape}")
        if faces.size == 0:
            faces = faces.reshape(0, 3)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise MeshError(f"faces must be vertex-index triples, got shape {faces.shape}")
        if not np.all(np.isfinite(verts)):
            raise MeshError("vertex coordinates must be finite")
        if faces.size:
            if faces.min() < 0 or faces.max() >= len(verts):
                bad = int(np.argmax((faces < 0).any(1) | (faces >= len(verts)).any(1)))
                raise MeshError(
                    f"face {bad} references vertex outside 0..{len(verts) - 1}: {faces[bad].tolist()}"
                )
            degenerate = (
                (faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]) | (faces[:, 0] == faces[:, 2])
            )
            if degenerate.any():
                bad = int(np.argmax(degenerate))
                raise MeshError(f"face {bad} is degenerate: {faces[bad].tolist()}")
        labels = None
        if self.face_labels is not None:
            labels = np.array(self.face_labels, dtype=np.int64).reshape(-1)
            if len(labels) != len(faces):
                raise MeshError(f"{len(labels)} labels for {len(faces)} faces")
            if labels.size and (labels.min() < 0 or labels.max() >= NUM_CLASSES):
                raise MeshError(f"label ids must lie in 0..{NUM_CLASSES - 1}")
            labels = _readonly(labels)
        object.__setattr__(self, "vertices", _readonly(verts))
        object.__setattr__(self, "faces", _readonly(faces))
        object.__setattr__(self, "face_labels", labels)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def with_vertices(self, vertices: np.ndarray, faces: np.ndarray | None = None) -> "LabeledMesh":
        return LabeledMesh(vertices, self.faces if faces is None else faces, self.face_labels)

    def with_labels(self, labels) -> "LabeledMesh":
        return LabeledMesh(self.vertices, self.faces, labels)


@dataclass(frozen=True, eq=False)
class MeshGraph:
    """Vertex graph of a mesh: undirected edges with i < j, sorted lexicographically."""

    n_nodes: int
    edges: np.ndarray
    faces: np.ndarray

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def attention_index(self) -> tuple[np.ndarray, np.ndarray]:
        """Directed (src, dst) pairs over both edge directions plus one self-loop per node."""
        loops = np.arange(self.n_nodes, dtype=np.int64)
        src = np.concatenate([self.edges[:, 0], self.edges[:, 1], loops])
        dst = np.concatenate([self.edges[:, 1], self.edges[:, 0], loops])
        order = np.lexsort((src, dst))
        return _readonly(src[order]), _readonly(dst[order])


@dataclass(frozen=True, eq=False)
class SurfaceGrid:
    surface_id: int
    points: np.ndarray
    true_label: PartLabel | None = None
    name: str | None = field(default=None)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim == 2 and pts.shape[1] == 3:
            pts = pts.reshape(1, -1, 3)
        if pts.ndim != 3 or pts.shape[2] != 3 or pts.shape[0] == 0 or pts.shape[1] == 0:
            raise MeshError(f"surface {self.surface_id}: grid must be non-empty (rows, cols, 3)")
        if not np.all(np.isfinite(pts)):
            raise MeshError(f"surface {self.surface_id}: non-finite grid point")
        object.__setattr__(self, "points", _readonly(pts))
        if self.true_label is not None:
            object.__setattr__(self, "true_label", PartLabel.parse(self.true_label))

    @property
    def flat_points(self) -> np.ndarray:
        return self.points.reshape(-1, 3)


@dataclass(frozen=True)
class NormalizationRecord:
    center: tuple[float, float, float]
    extent: float

    def apply(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - np.asarray(self.center)) / self.extent

    def invert(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) * self.extent + np.asarray(self.center)


def unique_edges(faces: np.ndarray) -> np.ndarray:
    faces = np.asarray(faces, dtype=np.int64)
    if len(faces) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    pairs = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    pairs.sort(axis=1)
    return np.unique(pairs, axis=0)


def build_graph(mesh: LabeledMesh) -> MeshGraph:
    return MeshGraph(mesh.n_vertices, _readonly(unique_edges(mesh.faces)), mesh.faces)


def face_centroids(mesh: LabeledMesh) -> np.ndarray:
    tri = mesh.vertices[mesh.faces]
    return (tri[:, 0] + tri[:, 1] + tri[:, 2]) / 3.0


def edge_face_counts(mesh: LabeledMesh) -> tuple[np.ndarray, np.ndarray]:
    """Unique undirected edges and how many faces use each."""
    f = mesh.faces
    pairs = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    pairs.sort(axis=1)
    edges, counts = np.unique(pairs, axis=0, return_counts=True)
    return edges, counts


def is_closed(mesh: LabeledMesh) -> bool:
    """True when every edge is shared by exactly two faces."""
    if mesh.n_faces == 0:
        return False
    _, counts = edge_face_counts(mesh)
    return bool(np.all(counts == 2))


def bounding_box(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pts = np.asarray(points, dtype=np.float64)
    return pts.min(axis=0), pts.max(axis=0)


def normalize(mesh: LabeledMesh) -> tuple[LabeledMesh, NormalizationRecord]:
    """Center on the bounding-box center and scale the longest box edge to 1."""
    lo, hi = bounding_box(mesh.vertices)
    extent = float(np.max(hi - lo))
    if not extent > 0.0:
        raise MeshError("cannot normalize a mesh with zero-extent bounding box")
    center = (lo + hi) / 2.0
    record = NormalizationRecord(tuple(float(c) for c in center), extent)
    return mesh.with_vertices(record.apply(mesh.vertices)), record


def orient_faces(faces: np.ndarray) -> np.ndarray:
    """Reverse the winding of every face."""
    return np.asarray(faces)[:, [0, 2, 1]]
