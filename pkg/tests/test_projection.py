import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aeroseg.geometry import PartLabel
from aeroseg.projection import (
    DEFAULT_PRIORITY,
    MAJORITY,
    TIEBREAK,
    RefinementPriority,
    SurfaceAssignment,
    SurfaceClassification,
    SurfaceReport,
    assign_faces,
    classify_surface,
    classify_surfaces,
    decide,
    evaluate_surfaces,
    face_surface_distance,
    load_classifications,
    masks_to_sets,
    save_classifications,
    surface_distances,
    top1_sets,
)
from aeroseg.geometry import SurfaceGrid

F, W, S, E = PartLabel.FUSELAGE, PartLabel.WING, PartLabel.STABILIZER, PartLabel.ENGINE


def brute_assign(centroids, grids):
    out = []
    for i, c in enumerate(centroids):
        best, best_id = None, None
        for g in sorted(grids, key=lambda g: g.surface_id):
            d = min(float(np.sqrt(sum((c[k] - p[k]) ** 2 for k in range(3)))) for p in g.flat_points)
            if best is None or d < best:
                best, best_id = d, g.surface_id
        out.append((i, best_id, best))
    return out


def test_distance_examples():
    assert face_surface_distance([0, 0, 0], [[1, 0, 0], [2, 0, 0]]) == 1.0
    assert face_surface_distance([2, 0, 0], [[1, 0, 0], [2, 0, 0]]) == 0.0
    with pytest.raises(ValueError):
        face_surface_distance([0, 0, 0], np.zeros((0, 3)))


def test_single_surface_takes_everything():
    rng = np.random.default_rng(0)
    grid = SurfaceGrid(4, rng.normal(size=(3, 3, 3)))
    assert {a.surface_id for a in assign_faces(rng.normal(size=(20, 3)), [grid])} == {4}


def test_separated_clusters():
    rng = np.random.default_rng(1)
    a = SurfaceGrid(0, rng.normal(size=(4, 4, 3)) * 0.1)
    b = SurfaceGrid(1, rng.normal(size=(4, 4, 3)) * 0.1 + 10.0)
    cents = np.vstack([rng.normal(size=(5, 3)) * 0.2, rng.normal(size=(5, 3)) * 0.2 + 10.0])
    assert [x.surface_id for x in assign_faces(cents, [a, b])] == [0] * 5 + [1] * 5


def test_equidistant_goes_to_lower_id():
    grids = [SurfaceGrid(7, [[1.0, 0, 0]]), SurfaceGrid(3, [[-1.0, 0, 0]])]
    assert assign_faces([[0.0, 0, 0]], grids)[0].surface_id == 3


def test_brute_force_agreement():
    rng = np.random.default_rng(2)
    for _ in range(5):
        grids = [SurfaceGrid(int(k), rng.normal(size=(2, 3, 3))) for k in rng.permutation(6)]
        cents = rng.normal(size=(15, 3))
        got = [(a.face_id, a.surface_id, a.distance) for a in assign_faces(cents, grids)]
        want = brute_assign(cents, grids)
        assert [g[:2] for g in got] == [w[:2] for w in want]
        np.testing.assert_allclose([g[2] for g in got], [w[2] for w in want], atol=1e-12)


def test_chunked_distances_match():
    rng = np.random.default_rng(3)
    grids = [SurfaceGrid(k, rng.normal(size=(3, 3, 3))) for k in range(4)]
    cents = rng.normal(size=(50, 3))
    np.testing.assert_allclose(surface_distances(cents, grids, chunk=7), surface_distances(cents, grids), atol=1e-12)


def test_voting_examples():
    c = classify_surface(0, [{W}] * 7)
    assert (c.label, c.mode, c.votes) == (W, MAJORITY, (0, 7, 0, 0))
    c = classify_surface(0, [{W}] * 3 + [{F}] * 3)
    assert (c.label, c.mode) == (W, TIEBREAK)
    c = classify_surface(0, [{F}] * 4 + [{F, W}])
    assert (c.label, c.mode, c.votes) == (F, MAJORITY, (5, 1, 0, 0))


def test_no_faces_rejected():
    with pytest.raises(ValueError):
        classify_surface(0, [])


def test_priority_ranks():
    assert DEFAULT_PRIORITY.rank(W) > DEFAULT_PRIORITY.rank(S) > DEFAULT_PRIORITY.rank(E) > DEFAULT_PRIORITY.rank(F)
    custom = RefinementPriority.from_names(["wing", "engine", "stabilizer", "fuselage"])
    assert custom.more_refined(E, S) == E
    with pytest.raises(ValueError):
        RefinementPriority((W, S, F))


def test_multiple_majorities():
    # 3 faces, wing and fuselage both on 2 of them: equal counts resolved by priority
    assert decide([2, 2, 0, 0], 3) == (W, TIEBREAK)
    assert decide([3, 2, 0, 0], 3) == (F, MAJORITY)


def test_custom_priority_changes_tiebreak():
    fus_first = RefinementPriority((F, W, S, E))
    assert classify_surface(0, [{W}, {F}], fus_first).label == F


vote_sets = st.lists(st.frozensets(st.sampled_from(list(PartLabel)), min_size=1), min_size=1, max_size=12)


@given(vote_sets, st.randoms(use_true_random=False))
def test_order_invariance(sets, rnd):
    shuffled = list(sets)
    rnd.shuffle(shuffled)
    assert classify_surface(0, sets) == classify_surface(0, shuffled)


@given(vote_sets)
def test_tiebreak_picks_more_refined_of_top_two(sets):
    c = classify_surface(0, sets)
    votes = np.array(c.votes)
    if c.mode == TIEBREAK and not (2 * votes > len(sets)).any():
        top = sorted(range(4), key=lambda k: (-votes[k], -DEFAULT_PRIORITY.rank(k)))[:2]
        assert c.label == DEFAULT_PRIORITY.more_refined(*top)
        assert votes[c.label] >= sorted(votes)[-2]


@given(vote_sets, st.data())
def test_widening_with_higher_class_is_conservative(sets, data):
    before = classify_surface(0, sets)
    i = data.draw(st.integers(0, len(sets) - 1))
    higher = [p for p in PartLabel if DEFAULT_PRIORITY.rank(p) > DEFAULT_PRIORITY.rank(before.label)]
    if not higher:
        return
    added = data.draw(st.sampled_from(higher))
    widened = list(sets)
    widened[i] = widened[i] | {added}
    after = classify_surface(0, widened)
    assert DEFAULT_PRIORITY.rank(after.label) >= DEFAULT_PRIORITY.rank(before.label)


@given(st.lists(st.sampled_from(list(PartLabel)), min_size=1, max_size=10))
def test_correct_singletons_classify_correctly(truths):
    rng = np.random.default_rng(len(truths))
    groups = [[frozenset([t])] * int(rng.integers(1, 6)) for t in truths]
    classes = [classify_surface(k, g) for k, g in enumerate(groups)]
    assert all(c.mode == MAJORITY for c in classes)
    assert evaluate_surfaces(classes, list(truths)) == SurfaceReport(len(truths), 0, 0, 0)


def test_evaluate_examples():
    def cls(label):
        return SurfaceClassification(0, label, (0, 0, 0, 0), MAJORITY, 1)

    assert evaluate_surfaces([cls(W)], [W]) == SurfaceReport(1, 0, 0, 0)
    assert evaluate_surfaces([cls(F)], [W]) == SurfaceReport(1, 1, 1, 0)
    assert evaluate_surfaces([cls(W)], [F]) == SurfaceReport(1, 1, 0, 1)
    assert evaluate_surfaces([cls(W)], {0: "fuselage"}).accuracy == 0.0
    assert SurfaceReport(2, 1, 1, 0) + SurfaceReport(3, 1, 0, 1) == SurfaceReport(5, 2, 1, 1)


def test_classify_surfaces_groups_faces():
    assignments = [SurfaceAssignment(0, 5, 0.1), SurfaceAssignment(1, 2, 0.1), SurfaceAssignment(2, 5, 0.3)]
    sets = [{W}, {F}, {W}]
    out = classify_surfaces(assignments, sets)
    assert [(c.surface_id, c.label, c.n_faces) for c in out] == [(2, F, 1), (5, W, 2)]
    assert classify_surfaces(assignments, sets, surface_ids=[5, 9])[0].surface_id == 5
    with pytest.raises(ValueError):
        classify_surfaces(assignments, sets[:2])


def test_set_helpers():
    assert masks_to_sets([[True, False, True, False]]) == [frozenset({0, 2})]
    assert top1_sets([[0.1, 0.2, 0.6, 0.1]]) == [frozenset({2})]


def test_csv_round_trip(tmp_path):
    classes = [classify_surface(3, [{W}] * 3 + [{F}] * 3), classify_surface(1, [{S}])]
    path = tmp_path / "c.csv"
    save_classifications(classes, path)
    assert path.read_text().splitlines()[0] == (
        "surface_id,label,mode,votes_fuselage,votes_wing,votes_stabilizer,votes_engine"
    )
    back = load_classifications(path)
    assert [(c.surface_id, c.label, c.votes, c.mode) for c in back] == [
        (c.surface_id, c.label, c.votes, c.mode) for c in classes
    ]


def test_csv_bad_header(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("id,label\n1,wing\n")
    with pytest.raises(ValueError):
        load_classifications(path)
