"""Acceptance gate: one test per criterion, each reported as a PASS/FAIL line."""
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.spatial.distance import pdist

from aeroseg.augment import AugmentationParams, apply_mirror, apply_rotation, augment, scheduled_value
from aeroseg.config import config_from_mapping
from aeroseg.conformal import calibrate, empirical_coverage, prediction_masks, synthetic_classification
from aeroseg.datagen import AircraftParams, generate_aircraft, iter_dataset, random_params
from aeroseg.evaluation import evaluate
from aeroseg.geometry import LabeledMesh, PartLabel, SurfaceGrid, build_graph, face_centroids
from aeroseg.nn.autograd import Tensor, softmax
from aeroseg.nn.gradcheck import grad_check, layer_grad_check
from aeroseg.nn.layers import GATLayer, Linear, ResPBlock, TNet, aggregate_face
from aeroseg.nn.losses import cls_loss, total_loss, treg_loss
from aeroseg.projection import (
    DEFAULT_PRIORITY,
    MAJORITY,
    TIEBREAK,
    SurfaceClassification,
    assign_faces,
    classify_surface,
    classify_surfaces,
    evaluate_surfaces,
)
from aeroseg.rules import default_rules, emit_settings
from aeroseg.training import Example, majority_baseline, predict_examples, train

GOLDEN = Path(__file__).parent / "data" / "settings_golden.txt"

TARGETS = (math.pi / 6, 0.001, 0.2, 0.4, 0.15)


@pytest.mark.criterion("schedule exactness")
def test_schedule_exactness(record_property):
    worst = 0.0
    for tau in (1, 2, 10, 50, 200, 201):
        for target in TARGETS:
            for epoch, want in ((0, 0.0), (tau / 2, target / 2), (tau, target)):
                worst = max(worst, abs(scheduled_value(target, epoch, tau) - want))
    record_property("detail", f"max abs error {worst:.1e}")
    assert worst <= 1e-12


def _strip_graph(n):
    faces = [[i, (i + 1) % n, (i + 2) % n] for i in range(n)]
    verts = np.random.default_rng(0).normal(size=(n, 3))
    return build_graph(LabeledMesh(verts, faces))


def _feat(n, w, seed):
    return Tensor(np.random.default_rng(seed).normal(size=(n, w)))


def _jitter(layer, seed):
    rng = np.random.default_rng(seed)
    for _, p in layer.named_parameters():
        p.data = p.data + 0.1 * rng.normal(size=p.shape)
    return layer


@pytest.mark.criterion("gradient suite")
def test_gradient_suite(record_property):
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    errors = {}

    lin = Linear(4, 3, rng)
    x = _feat(6, 4, 1)
    errors["linear"] = layer_grad_check(lin, {"x": x}, lambda: lin(x)).max_rel_error

    for n_in, n_out in ((3, 5), (4, 4)):
        block = _jitter(ResPBlock(n_in, n_out, rng), 2)
        x = _feat(7, n_in, 3)
        errors[f"resp {n_in}->{n_out}"] = layer_grad_check(block, {"x": x}, lambda: block(x)).max_rel_error

    for rank in (None, 2):
        net = _jitter(TNet(4, rng, hidden=6, rank=rank), 4)
        x = _feat(8, 4, 5)
        errors[f"tnet rank={rank}"] = layer_grad_check(net, {"x": x}, lambda: net(x)).max_rel_error

    graph = _strip_graph(10)
    gat = GATLayer(3, rng, heads=2, head_dim=4, dropout=0.1).eval()
    x = _feat(10, 3, 6)
    errors["gat"] = layer_grad_check(gat, {"x": x}, lambda: gat(x, graph)).max_rel_error

    rows = _feat(3, 4, 7)
    errors["aggregate"] = layer_grad_check(None, {"rows": rows}, lambda: aggregate_face(rows)).max_rel_error

    logits = _feat(10, 4, 8)
    logits.requires_grad = True
    labels = np.random.default_rng(9).integers(0, 4, size=10)
    errors["cls_loss"] = grad_check(lambda: cls_loss(softmax(logits), labels), {"logits": logits}).max_rel_error

    mats = [Tensor(np.random.default_rng(10 + k).normal(size=(d, d)), requires_grad=True) for k, d in enumerate((3, 5))]
    errors["treg_loss"] = grad_check(lambda: treg_loss(mats), {f"A{k}": m for k, m in enumerate(mats)}).max_rel_error

    elapsed = time.perf_counter() - start
    worst = max(errors, key=errors.get)
    record_property("detail", f"worst {worst} {errors[worst]:.1e}, {elapsed:.1f}s")
    assert all(e < 1e-4 for e in errors.values()), errors
    assert elapsed < 60


@pytest.mark.criterion("loss identities")
def test_loss_identities(record_property):
    uniform = Tensor(np.full((7, 4), 0.25))
    ce = float(cls_loss(uniform, [0, 1, 2, 3, 0, 1, 2]).data)
    rng = np.random.default_rng(0)
    orthogonal = [Tensor(np.linalg.qr(rng.normal(size=(d, d)))[0]) for d in (3, 8, 16)]
    reg = float(treg_loss(orthogonal).data)
    probs = Tensor(rng.dirichlet(np.ones(4), size=6))
    labels = rng.integers(0, 4, size=6)
    transforms = [Tensor(rng.normal(size=(3, 3)))]
    totals = {g: float(total_loss(probs, labels, transforms, g)[0].data) for g in (0.0, 0.1, 0.3, 1.0)}
    slope = totals[1.0] - totals[0.0]
    affine = max(abs(totals[g] - (totals[0.0] + g * slope)) for g in totals)
    record_property("detail", f"|ce-ln4| {abs(ce - math.log(4)):.1e}, treg {reg:.1e}, affine residual {affine:.1e}")
    assert abs(ce - math.log(4)) <= 1e-9
    assert abs(reg) <= 1e-9
    assert affine <= 1e-9 * max(1.0, abs(slope))


@pytest.mark.criterion("conformal coverage")
def test_conformal_coverage(record_property):
    start = time.perf_counter()
    coverages, monotone = [], True
    for seed in range(20):
        p, y = synthetic_classification(4000, np.random.default_rng(1000 + seed))
        cal_p, cal_y, test_p, test_y = p[:2000], y[:2000], p[2000:], y[2000:]
        coverages.append(empirical_coverage(calibrate(cal_p, cal_y, 0.05), test_p, test_y))
        sizes = [prediction_masks(calibrate(cal_p, cal_y, a), test_p).sum(axis=1).mean()
                 for a in (0.01, 0.05, 0.1, 0.2, 0.5)]
        monotone &= all(a >= b for a, b in zip(sizes, sizes[1:]))
    elapsed = time.perf_counter() - start
    mean = float(np.mean(coverages))
    record_property("detail", f"mean coverage {mean:.4f}, set size monotone {monotone}, {elapsed:.1f}s")
    assert mean >= 0.95 - 0.01
    assert monotone
    assert elapsed < 60


def _brute_force_assign(centroids, grids):
    ids = sorted(range(len(grids)), key=lambda j: grids[j].surface_id)
    out = []
    for c in centroids:
        best_d, best_id = math.inf, None
        for j in ids:
            pts = grids[j].flat_points
            d = math.sqrt(min(((c - q) ** 2).sum() for q in pts))
            if d < best_d:
                best_d, best_id = d, grids[j].surface_id
        out.append(best_id)
    return out


@pytest.mark.criterion("projection oracle equivalence")
def test_projection_oracle(record_property):
    start = time.perf_counter()
    rng = np.random.default_rng(42)
    mismatches = 0
    for k in range(100):
        n_faces = 1000 if k == 0 else int(rng.integers(1, 200))
        n_surf = 100 if k == 0 else int(rng.integers(1, 40))
        grids = [SurfaceGrid(int(s), rng.normal(size=(1, int(rng.integers(1, 4)), 3)) * 2)
                 for s in rng.permutation(n_surf)]
        cents = rng.normal(size=(n_faces, 3)) * 2
        got = [a.surface_id for a in assign_faces(cents, grids)]
        mismatches += sum(g != w for g, w in zip(got, _brute_force_assign(cents, grids)))
    elapsed = time.perf_counter() - start
    record_property("detail", f"{mismatches} mismatches over 100 instances, {elapsed:.1f}s")
    assert mismatches == 0
    assert elapsed < 60


def _tiebreak_oracle(votes):
    order = sorted(range(4), key=lambda c: (-votes[c], -DEFAULT_PRIORITY.rank(c)))
    a, b = order[0], order[1]
    return a if DEFAULT_PRIORITY.rank(a) > DEFAULT_PRIORITY.rank(b) else b


@pytest.mark.criterion("voting conservatism")
def test_voting_conservatism(record_property):
    rng = np.random.default_rng(7)
    checked = violations = 0
    while checked < 10_000:
        n = int(rng.integers(2, 30))
        sets = [frozenset(np.flatnonzero(rng.random(4) < rng.uniform(0.1, 0.6)).tolist() or [int(rng.integers(4))])
                for _ in range(n)]
        votes = np.zeros(4, dtype=int)
        for s in sets:
            votes[list(s)] += 1
        if (2 * votes > n).any():
            continue
        checked += 1
        c = classify_surface(0, sets)
        violations += c.mode != TIEBREAK or int(c.label) != _tiebreak_oracle(votes)

    under = over = 0
    for seed in range(5):
        mesh, grids = generate_aircraft(random_params(np.random.default_rng(seed)))
        sets = [frozenset([int(y)]) for y in mesh.face_labels]
        classes = classify_surfaces(assign_faces(face_centroids(mesh), grids), sets)
        rep = evaluate_surfaces(classes, {g.surface_id: g.true_label for g in grids})
        under, over = under + rep.under_refined, over + rep.over_refined
    truths = rng.integers(0, 4, size=1000)
    classes = [classify_surface(k, [frozenset([int(t)])] * int(rng.integers(1, 20))) for k, t in enumerate(truths)]
    rep = evaluate_surfaces(classes, [PartLabel(int(t)) for t in truths])
    under, over = under + rep.under_refined, over + rep.over_refined

    record_property("detail", f"{violations} violations in {checked} no-majority configs; under {under}, over {over}")
    assert violations == 0
    assert under == 0 and over == 0


# training recipe defaults (lr 1e-4, 15 decays of 0.65, gamma 0.1, full augmentation targets)
E2E = {
    "seed": 0,
    "train": {"epochs": 50},
    "model": "compact",
}


@pytest.fixture(scope="module")
def e2e_run():
    start = time.perf_counter()
    train_set, val_set = [], []
    # 10 bases: 8 for training, the last 2 held out; each base yields itself plus 4 variations
    for sample, mesh, grids in iter_dataset(10, 4, 2, seed=7):
        (train_set if sample.split == "train" else val_set).append(Example.from_mesh(sample.sample_id, mesh, grids))
    cfg = config_from_mapping(E2E)
    result = train(train_set, val_set, cfg)
    probs = predict_examples(result.model, val_set)
    baseline = majority_baseline([ex.labels for ex in train_set], [ex.labels for ex in val_set])
    report = evaluate(val_set, probs, alpha=cfg.alpha, calibration_fraction=cfg.calibration_fraction,
                      seed=cfg.seed, baseline=baseline)
    return len(train_set), len(val_set), result, report, time.perf_counter() - start


@pytest.mark.slow
@pytest.mark.criterion("end-to-end scaled training")
def test_end_to_end_training(e2e_run, record_property):
    n_train, n_val, result, report, elapsed = e2e_run
    conf = report.surfaces["conformal"]
    record_property(
        "detail",
        f"top-1 {report.face_accuracy:.4f} vs baseline {report.baseline:.4f}; best epoch {result.best_epoch}; "
        f"conformal surfaces {conf.total} under {conf.under_refined} over {conf.over_refined}; "
        f"coverage {report.coverage:.4f}; {elapsed / 60:.1f} min",
    )
    assert (n_train, n_val) == (80, 20)
    assert report.face_accuracy >= 0.90
    assert report.face_accuracy - report.baseline >= 0.20
    assert conf.under_refined == 0
    assert elapsed < 30 * 60


@pytest.mark.criterion("rules golden file")
def test_rules_golden_file(tmp_path, record_property):
    out = tmp_path / "settings.txt"
    labels = (PartLabel.WING, PartLabel.STABILIZER, PartLabel.FUSELAGE)
    classes = [SurfaceClassification(i, lab, (0, 0, 0, 0), MAJORITY, 1) for i, lab in enumerate(labels)]
    emit_settings(classes, default_rules(), out)
    same = out.read_bytes() == GOLDEN.read_bytes()
    values = [default_rules().lookup(x) for x in labels]
    expected = all((s.initial_wall_spacing, s.growth_rate, s.collision_buffer) == (4.7e-6, 1.1, 2.0) for s in values)
    dims = [s.surface_mesh_dimension for s in values]
    record_property("detail", f"byte-identical {same}; dimensions {dims}")
    assert same and expected and dims == [0.05, 0.2, 1.0]


@pytest.mark.criterion("augmentation invariants")
def test_augmentation_invariants(record_property):
    mesh, _ = generate_aircraft(AircraftParams(engine_count=0))
    base_dist = pdist(mesh.vertices)
    rng = np.random.default_rng(11)
    worst_iso = 0.0
    shape_ok = True
    for k in range(1000):
        tau = int(rng.integers(1, 300))
        params = AugmentationParams(*(t * rng.uniform(0.5, 2.0) for t in TARGETS[:2]),
                                    min(0.9, TARGETS[2] * rng.uniform(0.5, 2.0)),
                                    *(t * rng.uniform(0.5, 2.0) for t in TARGETS[3:]),
                                    tau=tau, epoch_T=int(rng.integers(0, tau + 1)))
        out = augment(mesh, params, rng)
        shape_ok &= out.n_faces == mesh.n_faces and np.array_equal(out.face_labels, mesh.face_labels)
        if k % 10 == 0:
            iso = apply_rotation(mesh, float(rng.uniform(0, math.pi)), rng) if k % 20 else apply_mirror(mesh, 0.5, rng)
            worst_iso = max(worst_iso, float(np.abs(pdist(iso.vertices) - base_dist).max()))

    params = AugmentationParams(tau=10, epoch_T=7)
    a = augment(mesh, params, np.random.default_rng(5))
    b = augment(mesh, params, np.random.default_rng(5))
    exact = np.array_equal(a.vertices, b.vertices) and np.array_equal(a.faces, b.faces)
    record_property("detail", f"counts/labels kept {shape_ok}; isometry error {worst_iso:.1e}; bit-exact {exact}")
    assert shape_ok
    assert worst_iso <= 1e-9
    assert exact
