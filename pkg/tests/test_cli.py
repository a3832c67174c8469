import csv
import subprocess
import sys

import pytest

from aeroseg.cli import main, read_prediction_sets
from aeroseg.rules import parse_settings_json

TINY_YAML = """\
train: {epochs: 3, lr: 0.001}
model:
  prime_widths: [8, 8]
  gat_layers: 1
  gat_heads: 2
  gat_head_dim: 4
  post_widths: [8, 8]
  cls_hidden: 8
  tnet_hidden: 8
  tnet_rank: 2
  tnet_full_max: 8
"""


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "tiny.yaml"
    cfg.write_text(TINY_YAML)
    data, run = root / "data", root / "run"
    sample = "b04_v00_d0"
    steps = [
        ["gen", "--out", str(data), "--bases", "5", "--variations", "0", "--densities", "1", "--seed", "2"],
        ["train", "--config", str(cfg), "--data", str(data), "--out", str(run), "--quiet"],
        ["calibrate", "--config", str(cfg), "--data", str(data), "--checkpoint", str(run / "checkpoint.npz"),
         "--out", str(run / "calibrator.json")],
        ["predict", "--checkpoint", str(run / "checkpoint.npz"), "--mesh", str(data / f"{sample}.mesh"),
         "--calibrator", str(run / "calibrator.json"), "--out", str(run / "pred.csv")],
        ["project", "--predictions", str(run / "pred.csv"), "--mesh", str(data / f"{sample}.mesh"),
         "--surfaces", str(data / f"{sample}.surfaces"), "--out", str(run / "surfaces.csv")],
        ["emit", "--classifications", str(run / "surfaces.csv"), "--out", str(run / "settings.txt")],
        ["eval", "--config", str(cfg), "--data", str(data), "--checkpoint", str(run / "checkpoint.npz"),
         "--calibrator", str(run / "calibrator.json"), "--metrics", str(run / "metrics.csv"),
         "--out", str(run / "report")],
    ]
    codes = [main(s) for s in steps]
    return root, data, run, codes


def test_all_commands_succeed(pipeline):
    _, _, _, codes = pipeline
    assert codes == [0] * 7


def test_artifacts(pipeline):
    _, data, run, _ = pipeline
    assert len(list(data.glob("*.mesh"))) == 5
    for name in ("checkpoint.npz", "metrics.csv", "training.png", "calibrator.json", "pred.csv", "surfaces.csv"):
        assert (run / name).stat().st_size > 0
    for name in ("report.csv", "surfaces.csv", "confusion.png", "surfaces.png", "training.png"):
        assert (run / "report" / name).stat().st_size > 0
    assert len((run / "metrics.csv").read_text().splitlines()) == 4


def test_settings_document(pipeline):
    _, _, run, _ = pipeline
    text = (run / "settings.txt").read_text()
    assert text.strip()
    n = len((run / "surfaces.csv").read_text().splitlines()) - 1
    assert len(parse_settings_json(text)["surfaces"]) == n > 0


def test_predictions_file(pipeline):
    _, _, run, _ = pipeline
    with open(run / "pred.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0].keys() >= {"face_id", "p_fuselage", "p_wing", "p_stabilizer", "p_engine", "top1", "set"}
    for row in rows[:50]:
        total = sum(float(row[f"p_{n}"]) for n in ("fuselage", "wing", "stabilizer", "engine"))
        assert abs(total - 1) < 1e-9
        assert row["top1"] in row["set"].split("|")
    assert len(read_prediction_sets(run / "pred.csv", "top1")) == len(rows)


def test_rerun_is_byte_stable(pipeline, tmp_path):
    root, data, run, _ = pipeline
    code = main(["train", "--config", str(root / "tiny.yaml"), "--data", str(data), "--out", str(tmp_path), "--quiet"])
    assert code == 0
    assert (tmp_path / "checkpoint.npz").read_bytes() == (run / "checkpoint.npz").read_bytes()
    assert (tmp_path / "metrics.csv").read_bytes() == (run / "metrics.csv").read_bytes()


def test_top1_projection(pipeline, tmp_path):
    _, data, run, _ = pipeline
    sample = "b04_v00_d0"
    code = main(["project", "--predictions", str(run / "pred.csv"), "--mesh", str(data / f"{sample}.mesh"),
                 "--surfaces", str(data / f"{sample}.surfaces"), "--voting", "top1", "--out", str(tmp_path / "s.csv")])
    assert code == 0


def test_oracle_eval(pipeline, tmp_path, capsys):
    _, data, _, _ = pipeline
    assert main(["eval", "--data", str(data), "--oracle", "--out", str(tmp_path)]) == 0
    out = dict(line.split(",", 1) for line in capsys.readouterr().out.splitlines())
    assert float(out["face_accuracy"]) == 1.0
    for method in ("top1", "conformal"):
        assert out[f"{method}_under_refined"] == "0" and out[f"{method}_over_refined"] == "0"
        assert float(out[f"{method}_surface_accuracy"]) == 1.0


def test_missing_checkpoint_names_path(pipeline, tmp_path, capsys):
    _, data, _, _ = pipeline
    missing = tmp_path / "nowhere.npz"
    code = main(["predict", "--checkpoint", str(missing), "--mesh", str(data / "b00_v00_d0.mesh"),
                 "--out", str(tmp_path / "p.csv")])
    assert code == 1
    assert str(missing) in capsys.readouterr().err
    assert not (tmp_path / "p.csv").exists()


def test_bad_arguments_exit_one(capsys):
    assert main(["train"]) == 1
    assert main(["frobnicate"]) == 1
    assert "error" in capsys.readouterr().err


def test_bad_config_exit_one(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("train: {epochs: -1}\n")
    assert main(["emit", "--config", str(cfg), "--classifications", "x.csv", "--out", "y.txt"]) == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "aeroseg", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("aeroseg ")
