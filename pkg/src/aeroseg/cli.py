"""Command-line entry point.

    aeroseg gen        generate a labeled dataset
    aeroseg train      fit the segmentation model
    aeroseg calibrate  fit the conformal threshold
    aeroseg predict    per-face probabilities and prediction sets for one mesh
    aeroseg project    vote face predictions onto CAD surfaces
    aeroseg emit       write mesh settings for classified surfaces
    aeroseg eval       accuracy and surface-refinement report with figures

Exit status: 0 success, 1 user error (bad input, missing file), 2 internal error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .config import COMPACT_MODEL, ConfigError, RunConfig, load_config
from .conformal import ConformalCalibrator, calibrate, prediction_masks
from .datagen import write_dataset
from .fileio import atomic_write_text, load_mesh, load_surfaces
from .geometry import LABEL_NAMES, MeshError, PartLabel
from .projection import assign_faces, classify_surfaces, load_classifications, save_classifications
from .rules import RuleError, emit_settings

log = logging.getLogger("aeroseg")

EXIT_OK, EXIT_USER, EXIT_INTERNAL = 0, 1, 2


class UserError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UserError(message)


# ------------------------------------------------------------------ helpers


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UserError(f"{what} not found: {p}")
    return p


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {
        "seed": getattr(args, "seed", None),
        "epochs": getattr(args, "epochs", None),
        "gamma": getattr(args, "gamma", None),
        "alpha": getattr(args, "alpha", None),
        "lr": getattr(args, "lr", None),
    }
    if getattr(args, "model", None) == "compact":
        overrides["model"] = dict(COMPACT_MODEL)
    return cfg.with_overrides(**overrides)


def predictions_to_csv(probs: np.ndarray, masks: np.ndarray | None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["face_id", *[f"p_{n}" for n in LABEL_NAMES], "top1", "set"])
    for i, row in enumerate(probs):
        top = PartLabel(int(np.argmax(row))).key
        members = np.flatnonzero(masks[i]) if masks is not None else [int(np.argmax(row))]
        w.writerow([i, *[repr(float(x)) for x in row], top, "|".join(PartLabel(int(c)).key for c in members)])
    return buf.getvalue()


def read_prediction_sets(path, use: str = "set") -> list[frozenset[int]]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or "face_id" not in reader.fieldnames:
            raise UserError(f"{path}: not a predictions file")
        for expected, row in enumerate(reader):
            if int(row["face_id"]) != expected:
                raise UserError(f"{path}: face ids must be 0..n-1 in order")
            column = row["set"] if use == "set" else row["top1"]
            out.append(frozenset(int(PartLabel.parse(t)) for t in column.split("|") if t))
    return out


# ------------------------------------------------------------------ commands


def cmd_gen(args) -> int:
    seed = args.seed if args.seed is not None else 0
    manifest = write_dataset(args.out, args.bases, args.variations, args.densities, seed)
    splits = [s["split"] for s in manifest["samples"]]
    print(f"wrote {len(splits)} samples ({splits.count('train')} train, {splits.count('val')} val) to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .plotting import plot_training_curves
    from .training import load_examples, read_metrics, train

    cfg = _run_config(args)
    _require(Path(args.data) / "manifest.json", "dataset manifest")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_set = load_examples(args.data, "train", with_surfaces=False)
    val_set = load_examples(args.data, "val", with_surfaces=False)
    if not train_set:
        raise UserError(f"{args.data}: no training samples")
    metrics = out / "metrics.csv"
    if metrics.exists():
        metrics.unlink()
    ckpt = out / f"checkpoint.{cfg.checkpoint_format}"

    def progress(m):
        print(f"epoch {m.epoch:4d}  loss {m.train_loss:.4f}  val_acc {m.val_acc:.4f}  lr {m.lr:.2e}", flush=True)

    result = train(train_set, val_set, cfg, metrics_path=metrics, checkpoint_path=ckpt,
                   progress=None if args.quiet else progress)
    plot_training_curves(read_metrics(metrics), out / "training.png")
    print(f"best epoch {result.best_epoch} val_acc {result.best_val_acc:.4f}; checkpoint {ckpt}")
    return EXIT_OK


def _load_model(path):
    from .nn.checkpoint import load_checkpoint

    _require(path, "checkpoint")
    model, _ = load_checkpoint(path)
    return model


def cmd_calibrate(args) -> int:
    from .training import load_examples, predict_examples, split_calibration

    cfg = _run_config(args)
    _require(Path(args.data) / "manifest.json", "dataset manifest")
    model = _load_model(args.checkpoint)
    examples = load_examples(args.data, args.split, with_surfaces=False)
    if not examples:
        raise UserError(f"{args.data}: no samples in split {args.split!r}")
    probs = predict_examples(model, examples)
    masks = split_calibration([len(p) for p in probs], cfg.calibration_fraction, cfg.seed)
    p = np.concatenate([q[m] for q, m in zip(probs, masks)])
    y = np.concatenate([ex.labels[m] for ex, m in zip(examples, masks)])
    cal = calibrate(p, y, cfg.alpha)
    cal.save(args.out)
    print(f"qhat {cal.qhat:.6f} from {cal.n_cal} faces (alpha {cal.alpha}); wrote {args.out}")
    if not cal.nontrivial:
        print("warning: too few calibration faces, threshold clamped to 1", file=sys.stderr)
    return EXIT_OK


def cmd_predict(args) -> int:
    from .training import Example

    model = _load_model(args.checkpoint)
    mesh = load_mesh(_require(args.mesh, "mesh"))
    ex = Example.from_mesh(Path(args.mesh).stem, mesh)
    probs = model.predict_proba(ex.graph, ex.mesh.vertices)
    masks = None
    if args.calibrator:
        cal = ConformalCalibrator.load(_require(args.calibrator, "calibrator"))
        masks = prediction_masks(cal, probs)
    atomic_write_text(args.out, predictions_to_csv(probs, masks))
    print(f"wrote predictions for {len(probs)} faces to {args.out}")
    return EXIT_OK


def cmd_project(args) -> int:
    cfg = _run_config(args)
    mesh = load_mesh(_require(args.mesh, "mesh"))
    grids = load_surfaces(_require(args.surfaces, "surfaces file"))
    sets = read_prediction_sets(_require(args.predictions, "predictions file"), args.voting)
    if len(sets) != mesh.n_faces:
        raise UserError(f"{len(sets)} predictions for a mesh with {mesh.n_faces} faces")
    if not grids:
        raise UserError("surfaces file lists no surfaces")
    centroids = mesh.vertices[mesh.faces].mean(axis=1)
    classes = classify_surfaces(assign_faces(centroids, grids), sets, priority=cfg.refinement_priority())
    save_classifications(classes, args.out)
    empty = sorted({g.surface_id for g in grids} - {c.surface_id for c in classes})
    if empty:
        print(f"warning: surfaces without assigned faces: {empty}", file=sys.stderr)
    print(f"classified {len(classes)} surfaces; wrote {args.out}")
    return EXIT_OK


def cmd_emit(args) -> int:
    cfg = _run_config(args)
    classes = load_classifications(_require(args.classifications, "classifications file"))
    emit_settings(classes, cfg.rule_database(), args.out)
    print(f"wrote settings for {len(classes)} surfaces to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .evaluation import evaluate
    from .plotting import plot_confusion, plot_surface_outcomes, plot_training_curves
    from .training import load_examples, majority_baseline, predict_examples, read_metrics

    cfg = _run_config(args)
    _require(Path(args.data) / "manifest.json", "dataset manifest")
    examples = load_examples(args.data, args.split)
    if not examples:
        raise UserError(f"{args.data}: no samples in split {args.split!r}")
    if args.oracle:
        probs = [np.eye(len(LABEL_NAMES))[ex.labels] for ex in examples]
    else:
        if not args.checkpoint:
            raise UserError("eval needs --checkpoint (or --oracle)")
        probs = predict_examples(_load_model(args.checkpoint), examples)
    cal = ConformalCalibrator.load(_require(args.calibrator, "calibrator")) if args.calibrator else None
    train_labels = [ex.labels for ex in load_examples(args.data, "train", with_surfaces=False)]
    baseline = majority_baseline(train_labels, [ex.labels for ex in examples]) if train_labels else None
    report = evaluate(examples, probs, cal, cfg.alpha, cfg.calibration_fraction, cfg.seed,
                      cfg.refinement_priority(), baseline)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "report.csv", report.summary_csv())
    atomic_write_text(out / "surfaces.csv", report.surfaces_csv())
    plot_confusion(report.confusion, out / "confusion.png")
    plot_surface_outcomes(report.surfaces, out / "surfaces.png")
    if args.metrics:
        plot_training_curves(read_metrics(_require(args.metrics, "metrics log")), out / "training.png")
    for key, value in report.summary_rows():
        print(f"{key},{value}")
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML or JSON run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="aeroseg", description="Aircraft part segmentation and expert mesh settings.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common], help="generate a dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--bases", type=int, default=10)
    g.add_argument("--variations", type=int, default=20, help="perturbed shapes per base (base itself included extra)")
    g.add_argument("--densities", type=int, default=5)

    t = sub.add_parser("train", parents=[common], help="train the model")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="output directory for checkpoint and metrics")
    t.add_argument("--epochs", type=int)
    t.add_argument("--gamma", type=float)
    t.add_argument("--lr", type=float)
    t.add_argument("--model", choices=["default", "compact"])
    t.add_argument("--quiet", action="store_true")

    c = sub.add_parser("calibrate", parents=[common], help="fit the conformal threshold")
    c.add_argument("--data", required=True)
    c.add_argument("--checkpoint", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--split", default="val")
    c.add_argument("--alpha", type=float)

    r = sub.add_parser("predict", parents=[common], help="predict one mesh")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--mesh", required=True)
    r.add_argument("--calibrator")
    r.add_argument("--out", required=True)

    j = sub.add_parser("project", parents=[common], help="classify CAD surfaces by voting")
    j.add_argument("--predictions", required=True)
    j.add_argument("--mesh", required=True)
    j.add_argument("--surfaces", required=True)
    j.add_argument("--voting", choices=["set", "top1"], default="set")
    j.add_argument("--out", required=True)

    e = sub.add_parser("emit", parents=[common], help="write mesh settings")
    e.add_argument("--classifications", required=True)
    e.add_argument("--out", required=True)

    v = sub.add_parser("eval", parents=[common], help="evaluation report with figures")
    v.add_argument("--data", required=True)
    v.add_argument("--checkpoint")
    v.add_argument("--calibrator")
    v.add_argument("--split", default="val")
    v.add_argument("--alpha", type=float)
    v.add_argument("--metrics", help="metrics log to plot alongside the report")
    v.add_argument("--oracle", action="store_true", help="use ground-truth labels as predictions")
    v.add_argument("--out", required=True)
    return p


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "calibrate": cmd_calibrate,
    "predict": cmd_predict,
    "project": cmd_project,
    "emit": cmd_emit,
    "eval": cmd_eval,
}

USER_ERRORS = (UserError, ConfigError, MeshError, RuleError, FileNotFoundError, IsADirectoryError,
               json.JSONDecodeError, KeyError, ValueError)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UserError as exc:
        print(f"aeroseg: error: {exc}", file=sys.stderr)
        return EXIT_USER
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except USER_ERRORS as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"aeroseg {args.command}: error: {msg}", file=sys.stderr)
        return EXIT_USER
    except Exception:  # noqa: BLE001
        traceback.print_exc()
        print(f"aeroseg {args.command}: internal error", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
