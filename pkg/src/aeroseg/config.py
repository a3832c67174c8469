"""Run configuration: one YAML/JSON file plus command-line overrides.

File layout (every key optional)::

    seed: 0
    train:     {epochs, lr, lr_decays, lr_factor, gamma, checkpoint_format}
    aug:       {xi1, xi2, xi3, xi4, xi5, tau, seed, symmetric_noise}
    model:     {... ModelConfig fields ...}
    conformal: {alpha, calibration_fraction}
    priority:  [wing, stabilizer, engine, fuselage]
    rules:     {engine_as: stabilizer, overrides: {wing: {surface_mesh_dimension: 0.05}}}
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .augment import AugmentationParams
from .nn.model import ModelConfig
from .projection import RefinementPriority
from .rules import RuleDatabase, default_rules


class ConfigError(ValueError):
    pass


# smaller network used for desk-scale runs; same topology as the default
COMPACT_MODEL = {
    "prime_widths": [32, 32],
    "gat_heads": 4,
    "gat_head_dim": 16,
    "post_widths": [64, 32],
    "cls_hidden": 32,
    "tnet_hidden": 32,
    "tnet_rank": 8,
    "tnet_full_max": 32,
}


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    epochs: int = 200
    lr: float = 1e-4
    lr_decays: int = 15
    lr_factor: float = 0.65
    gamma: float = 0.1
    checkpoint_format: str = "npz"
    xi1: float = math.pi / 6
    xi2: float = 0.001
    xi3: float = 0.2
    xi4: float = 0.4
    xi5: float = 0.15
    aug_tau: int | None = None  # defaults to epochs
    aug_seed: int | None = None  # defaults to seed
    symmetric_noise: bool = False
    model: dict = field(default_factory=dict)
    alpha: float = 0.05
    calibration_fraction: float = 0.2
    priority: tuple[str, ...] = ("wing", "stabilizer", "engine", "fuselage")
    engine_as: str | None = "stabilizer"
    rule_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.lr <= 0 or not 0 < self.lr_factor <= 1 or self.lr_decays < 0:
            raise ConfigError("learning-rate schedule needs lr > 0, 0 < factor <= 1, decays >= 0")
        if self.gamma < 0:
            raise ConfigError("gamma must be non-negative")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if not 0 < self.calibration_fraction < 1:
            raise ConfigError("calibration_fraction must lie in (0, 1)")
        if self.checkpoint_format not in ("npz", "json"):
            raise ConfigError("checkpoint_format must be npz or json")
        try:
            self.augmentation()
            self.model_config()
            self.refinement_priority()
            self.rule_database()
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def tau(self) -> int:
        return self.aug_tau if self.aug_tau is not None else self.epochs

    def augmentation(self) -> AugmentationParams:
        return AugmentationParams(
            self.xi1, self.xi2, self.xi3, self.xi4, self.xi5, tau=self.tau, symmetric_noise=self.symmetric_noise
        )

    def model_config(self) -> ModelConfig:
        data = {"seed": self.seed, **self.model}
        return ModelConfig.from_dict(data)

    def refinement_priority(self) -> RefinementPriority:
        return RefinementPriority.from_names(self.priority)

    def rule_database(self) -> RuleDatabase:
        return default_rules(self.engine_as).with_overrides(self.rule_overrides)

    def with_overrides(self, **kwargs) -> "RunConfig":
        """Flag values win over file values; ``None`` means not given."""
        given = {k: v for k, v in kwargs.items() if v is not None}
        return dataclasses.replace(self, **given) if given else self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["priority"] = list(self.priority)
        return d


_SECTIONS = {
    "train": {"epochs": "epochs", "lr": "lr", "lr_decays": "lr_decays", "lr_factor": "lr_factor",
              "gamma": "gamma", "checkpoint_format": "checkpoint_format"},
    "aug": {"xi1": "xi1", "xi2": "xi2", "xi3": "xi3", "xi4": "xi4", "xi5": "xi5", "tau": "aug_tau",
            "seed": "aug_seed", "symmetric_noise": "symmetric_noise"},
    "conformal": {"alpha": "alpha", "calibration_fraction": "calibration_fraction"},
}


def config_from_mapping(data: dict | None) -> RunConfig:
    data = dict(data or {})
    kwargs = {}
    for section, keys in _SECTIONS.items():
        values = data.pop(section, None) or {}
        unknown = set(values) - set(keys)
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
        for key, value in values.items():
            kwargs[keys[key]] = value
    if "seed" in data:
        kwargs["seed"] = int(data.pop("seed"))
    if "model" in data:
        model = data.pop("model")
        if isinstance(model, str):
            if model != "compact":
                raise ConfigError(f"unknown model preset {model!r}")
            model = COMPACT_MODEL
        kwargs["model"] = dict(model or {})
    if "priority" in data:
        kwargs["priority"] = tuple(data.pop("priority"))
    rules = data.pop("rules", None) or {}
    if "engine_as" in rules:
        kwargs["engine_as"] = rules.pop("engine_as")
    if "overrides" in rules:
        kwargs["rule_overrides"] = dict(rules.pop("overrides") or {})
    if rules:
        raise ConfigError(f"unknown keys in [rules]: {sorted(rules)}")
    if data:
        raise ConfigError(f"unknown config keys: {sorted(data)}")
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: cannot parse config: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_mapping(data)
