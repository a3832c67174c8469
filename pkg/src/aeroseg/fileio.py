"""Text formats for meshes, label sidecars and discretized CAD surfaces.

Mesh file::

    # comment
    v x y z
    f i j k        (0-based vertex indices)

Label sidecar: CSV ``face_index,label_id`` covering every face once.

Surface file::

    surface <id> <rows> <cols> [label=<part>] [name=<text>]
    x y z          (rows * cols lines, row-major)
    end

Floats are written with ``repr`` so a save/load cycle is bit-exact.
"""
from __future__ import annotations

import contextlib
import csv
import io
import os
import tempfile
from pathlib import Path

import numpy as np

from .geometry import LabeledMesh, MeshError, PartLabel, SurfaceGrid


class MeshFormatError(MeshError):
    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        where = f"{path}:{lineno}" if lineno else str(path)
        super().__init__(f"{where}: {message}")


class MeshIndexError(MeshFormatError):
    """A face references a vertex that does not exist."""


class LabelCountError(MeshFormatError):
    """Label sidecar does not cover the faces one-to-one."""


@contextlib.contextmanager
def atomic_writer(path, mode="w", **kwargs):
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode, **kwargs) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    with atomic_writer(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _fmt(x) -> str:
    return repr(float(x))


def _data_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def read_mesh_file(path) -> tuple[np.ndarray, np.ndarray]:
    verts, faces = [], []
    for lineno, tok in _data_lines(path):
        kind = tok[0]
        if kind == "v":
            if len(tok) != 4:
                raise MeshFormatError(path, lineno, "vertex line needs exactly 3 coordinates")
            try:
                verts.append([float(t) for t in tok[1:]])
            except ValueError:
                raise MeshFormatError(path, lineno, f"bad coordinate in {' '.join(tok)!r}") from None
        elif kind == "f":
            if len(tok) != 4:
                raise MeshFormatError(path, lineno, f"only triangles are supported, got {len(tok) - 1} indices")
            try:
                idx = [int(t) for t in tok[1:]]
            except ValueError:
                raise MeshFormatError(path, lineno, f"bad face index in {' '.join(tok)!r}") from None
            if min(idx) < 0:
                raise MeshFormatError(path, lineno, f"negative vertex index {min(idx)}")
            faces.append((lineno, idx))
        else:
            raise MeshFormatError(path, lineno, f"unknown record type {kind!r}")
    n = len(verts)
    for lineno, idx in faces:
        if max(idx) >= n:
            raise MeshIndexError(path, lineno, f"vertex index {max(idx)} out of range for {n} vertices")
        if len(set(idx)) != 3:
            raise MeshFormatError(path, lineno, f"degenerate face {idx}")
    vert_arr = np.array(verts, dtype=np.float64).reshape(-1, 3)
    face_arr = np.array([f for _, f in faces], dtype=np.int64).reshape(-1, 3)
    return vert_arr, face_arr


def read_labels(path, n_faces: int | None = None) -> np.ndarray:
    entries: dict[int, int] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            if lineno == 1 and row[0].strip() == "face_index":
                continue
            if len(row) != 2:
                raise MeshFormatError(path, lineno, "expected 'face_index,label_id'")
            try:
                face = int(row[0])
                label = int(PartLabel.parse(row[1]))
            except ValueError as exc:
                raise MeshFormatError(path, lineno, str(exc)) from None
            if face in entries:
                raise LabelCountError(path, lineno, f"duplicate face index {face}")
            entries[face] = label
    count = len(entries) if n_faces is None else n_faces
    if set(entries) != set(range(count)):
        missing = sorted(set(range(count)) - set(entries))[:5]
        extra = sorted(set(entries) - set(range(count)))[:5]
        raise LabelCountError(
            path, 0, f"labels must cover faces 0..{count - 1} exactly (missing {missing}, unexpected {extra})"
        )
    return np.array([entries[i] for i in range(count)], dtype=np.int64)


def load_mesh(path, labels_path=None) -> LabeledMesh:
    verts, faces = read_mesh_file(path)
    labels = None
    if labels_path is not None:
        labels = read_labels(labels_path, len(faces))
    return LabeledMesh(verts, faces, labels)


def mesh_to_text(mesh: LabeledMesh) -> str:
    buf = io.StringIO()
    buf.write(f"# vertices {mesh.n_vertices} faces {mesh.n_faces}\n")
    for x, y, z in mesh.vertices:
        buf.write(f"v {_fmt(x)} {_fmt(y)} {_fmt(z)}\n")
    for i, j, k in mesh.faces:
        buf.write(f"f {i} {j} {k}\n")
    return buf.getvalue()


def labels_to_text(labels) -> str:
    lines = ["face_index,label_id"]
    lines += [f"{i},{int(lab)}" for i, lab in enumerate(labels)]
    return "\n".join(lines) + "\n"


def save_mesh(mesh: LabeledMesh, path, labels_path=None) -> None:
    atomic_write_text(path, mesh_to_text(mesh))
    if labels_path is not None:
        if mesh.face_labels is None:
            raise MeshError("mesh has no labels to save")
        atomic_write_text(labels_path, labels_to_text(mesh.face_labels))


def surfaces_to_text(grids) -> str:
    buf = io.StringIO()
    buf.write("# surfaces: header 'surface <id> <rows> <cols> [label=..] [name=..]', row-major points, 'end'\n")
    for g in grids:
        rows, cols, _ = g.points.shape
        head = f"surface {g.surface_id} {rows} {cols}"
        if g.true_label is not None:
            head += f" label={g.true_label.key}"
        if g.name:
            head += f" name={g.name}"
        buf.write(head + "\n")
        for x, y, z in g.flat_points:
            buf.write(f"{_fmt(x)} {_fmt(y)} {_fmt(z)}\n")
        buf.write("end\n")
    return buf.getvalue()


def save_surfaces(grids, path) -> None:
    atomic_write_text(path, surfaces_to_text(grids))


def load_surfaces(path) -> list[SurfaceGrid]:
    grids: list[SurfaceGrid] = []
    current = None
    seen: set[int] = set()

    def close(lineno):
        sid, rows, cols, label, name, pts, start = current
        if len(pts) != rows * cols:
            raise MeshFormatError(path, lineno, f"surface {sid} declares {rows}x{cols} points, found {len(pts)}")
        try:
            grids.append(SurfaceGrid(sid, np.array(pts).reshape(rows, cols, 3), label, name))
        except MeshError as exc:
            raise MeshFormatError(path, start, str(exc)) from None

    for lineno, tok in _data_lines(path):
        if tok[0] == "surface":
            if current is not None:
                raise MeshFormatError(path, lineno, "missing 'end' before new surface")
            if len(tok) < 4:
                raise MeshFormatError(path, lineno, "expected 'surface <id> <rows> <cols>'")
            try:
                sid, rows, cols = int(tok[1]), int(tok[2]), int(tok[3])
            except ValueError:
                raise MeshFormatError(path, lineno, "surface id and grid dimensions must be integers") from None
            if rows <= 0 or cols <= 0:
                raise MeshFormatError(path, lineno, "grid dimensions must be positive")
            if sid in seen:
                raise MeshFormatError(path, lineno, f"duplicate surface id {sid}")
            seen.add(sid)
            label = name = None
            for opt in tok[4:]:
                key, _, value = opt.partition("=")
                if key in ("label", "true_label"):
                    try:
                        label = PartLabel.parse(value)
                    except ValueError as exc:
                        raise MeshFormatError(path, lineno, str(exc)) from None
                elif key == "name":
                    name = value
                else:
                    raise MeshFormatError(path, lineno, f"unknown surface option {opt!r}")
            current = (sid, rows, cols, label, name, [], lineno)
        elif tok[0] == "end":
            if current is None:
                raise MeshFormatError(path, lineno, "'end' without open surface")
            close(lineno)
            current = None
        else:
            if current is None:
                raise MeshFormatError(path, lineno, "point outside a surface block")
            if len(tok) != 3:
                raise MeshFormatError(path, lineno, "point line needs exactly 3 coordinates")
            try:
                current[5].append([float(t) for t in tok])
            except ValueError:
                raise MeshFormatError(path, lineno, "bad point coordinate") from None
    if current is not None:
        raise MeshFormatError(path, 0, f"surface {current[0]} not terminated with 'end'")
    return grids
