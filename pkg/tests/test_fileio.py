import numpy as np
import pytest

from aeroseg.fileio import (
    LabelCountError,
    MeshFormatError,
    MeshIndexError,
    atomic_write_text,
    load_mesh,
    load_surfaces,
    save_mesh,
    save_surfaces,
)
from aeroseg.geometry import PartLabel

TETRA = """# tetrahedron
v 0 0 0
v 1 0 0
v 0 1 0
v 0 0 1
f 0 2 1
f 0 1 3
f 0 3 2
f 1 2 3
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_tetrahedron_with_labels(tmp_path):
    mesh = write(tmp_path, "t.mesh", TETRA)
    labels = write(tmp_path, "t.csv", "face_index,label_id\n0,0\n1,wing\n2,2\n3,3\n")
    m = load_mesh(mesh, labels)
    assert m.n_faces == 4
    assert m.face_labels.tolist() == [0, 1, 2, 3]


def test_index_error_names_line(tmp_path):
    p = write(tmp_path, "bad.mesh", "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 0 1 9\n")
    with pytest.raises(MeshIndexError) as info:
        load_mesh(p)
    assert info.value.lineno == 5


def test_parse_error_has_line_number(tmp_path):
    p = write(tmp_path, "bad.mesh", "v 0 0 0\nv 1 zero 0\n")
    with pytest.raises(MeshFormatError, match=":2:"):
        load_mesh(p)


def test_quads_rejected(tmp_path):
    p = write(tmp_path, "q.mesh", "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 0 1 2 3\n")
    with pytest.raises(MeshFormatError, match="only triangles"):
        load_mesh(p)


def test_label_count_mismatch(tmp_path):
    mesh = write(tmp_path, "t.mesh", TETRA)
    labels = write(tmp_path, "t.csv", "0,0\n1,1\n2,2\n")
    with pytest.raises(LabelCountError):
        load_mesh(mesh, labels)


def test_duplicate_label_index(tmp_path):
    mesh = write(tmp_path, "t.mesh", TETRA)
    labels = write(tmp_path, "t.csv", "0,0\n1,1\n1,2\n3,3\n")
    with pytest.raises(LabelCountError):
        load_mesh(mesh, labels)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_mesh(tmp_path / "nope.mesh")


def test_procedural_round_trip_is_bit_exact(tmp_path, small_aircraft):
    mesh, grids = small_aircraft
    save_mesh(mesh, tmp_path / "a.mesh", tmp_path / "a.csv")
    back = load_mesh(tmp_path / "a.mesh", tmp_path / "a.csv")
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.faces, mesh.faces)
    assert np.array_equal(back.face_labels, mesh.face_labels)
    save_surfaces(grids, tmp_path / "a.surfaces")
    back_grids = load_surfaces(tmp_path / "a.surfaces")
    assert len(back_grids) == len(grids)
    for a, b in zip(grids, back_grids):
        assert a.surface_id == b.surface_id and a.true_label == b.true_label and a.name == b.name
        assert np.array_equal(a.points, b.points)


def test_surface_file_errors(tmp_path):
    p = write(tmp_path, "s.surfaces", "surface 0 2 1 label=wing\n0 0 0\nend\n")
    with pytest.raises(MeshFormatError, match="declares 2x1"):
        load_surfaces(p)
    p = write(tmp_path, "s2.surfaces", "surface 0 1 1\n0 0 0\n")
    with pytest.raises(MeshFormatError):
        load_surfaces(p)


def test_surface_label_parsed(tmp_path):
    p = write(tmp_path, "s.surfaces", "surface 7 1 2 label=stabilizer name=fin\n0 0 0\n1 0 0\nend\n")
    (g,) = load_surfaces(p)
    assert g.surface_id == 7 and g.true_label is PartLabel.STABILIZER and g.name == "fin"
    assert g.points.shape == (1, 2, 3)


def test_atomic_write_leaves_no_temp_files(tmp_path):
    target = tmp_path / "out.txt"
    atomic_write_text(target, "hello\n")
    atomic_write_text(target, "again\n")
    assert target.read_text() == "again\n"
    assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]
