import json
import math

import pytest

from aeroseg.config import COMPACT_MODEL, ConfigError, RunConfig, config_from_mapping, load_config
from aeroseg.geometry import PartLabel


def test_defaults_follow_training_recipe():
    c = RunConfig()
    assert (c.epochs, c.lr, c.lr_factor, c.lr_decays + 1, c.gamma) == (200, 1e-4, 0.65, 16, 0.1)
    assert c.augmentation().targets == (math.pi / 6, 0.001, 0.2, 0.4, 0.15)
    assert c.tau == 200 and c.alpha == 0.05


def test_yaml_file(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(
        "seed: 3\n"
        "train: {epochs: 7, gamma: 0.2}\n"
        "aug: {tau: 20, xi1: 0.1}\n"
        "model: compact\n"
        "conformal: {alpha: 0.1}\n"
        "priority: [wing, engine, stabilizer, fuselage]\n"
        "rules: {engine_as: wing, overrides: {fuselage: {surface_mesh_dimension: 0.8}}}\n"
    )
    c = load_config(path)
    assert (c.seed, c.epochs, c.gamma, c.tau, c.xi1, c.alpha) == (3, 7, 0.2, 20, 0.1, 0.1)
    assert c.model == COMPACT_MODEL and c.model_config().seed == 3
    assert c.refinement_priority().rank(PartLabel.ENGINE) == 2
    rules = c.rule_database()
    assert rules.lookup("engine").surface_mesh_dimension == 0.05
    assert rules.lookup("fuselage").surface_mesh_dimension == 0.8


def test_json_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"train": {"epochs": 4}}))
    assert load_config(path).epochs == 4


def test_flags_win():
    c = config_from_mapping({"train": {"epochs": 9}}).with_overrides(epochs=2, gamma=None)
    assert c.epochs == 2 and c.gamma == 0.1


@pytest.mark.parametrize(
    "data",
    [
        {"train": {"epoch": 3}},
        {"bogus": 1},
        {"model": "huge"},
        {"train": {"epochs": 0}},
        {"conformal": {"alpha": 1.5}},
        {"priority": ["wing", "fuselage"]},
        {"model": {"gat_heads": 0}},
        {"rules": {"engine_as": "rudder"}},
        {"train": {"checkpoint_format": "pickle"}},
    ],
)
def test_invalid_configs(data):
    with pytest.raises(ConfigError):
        config_from_mapping(data)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "none.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("- just\n- a list\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_to_dict_round_trip():
    c = config_from_mapping({"seed": 2, "model": "compact"})
    d = c.to_dict()
    assert d["seed"] == 2 and d["priority"] == ["wing", "stabilizer", "engine", "fuselage"]
    json.dumps(d)
