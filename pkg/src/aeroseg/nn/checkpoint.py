"""Checkpoint files: every parameter tensor plus model config and a config hash.

Two formats round-trip exactly: ``npz`` (binary) and ``json`` (text; floats
written with shortest round-trip repr).
"""
from __future__ import annotations

import hashlib
import io
import json
from pathlib import Path

import numpy as np

from ..fileio import atomic_write_text, atomic_writer
from .model import ModelConfig, SegmentationModel

FORMAT_NAME = "aeroseg-checkpoint"
FORMAT_VERSION = 1


def state_hash(state: dict[str, np.ndarray]) -> str:
    h = hashlib.sha256()
    for name in sorted(state):
        arr = np.ascontiguousarray(state[name], dtype=np.float64)
        h.update(name.encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


def _header(model: SegmentationModel, meta: dict | None, config_hash: str | None) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "model_config": model.config.to_dict(),
        "config_hash": config_hash or model.config.digest(),
        "meta": meta or {},
    }


def infer_format(path) -> str:
    return "json" if str(path).endswith(".json") else "npz"


def save_checkpoint(path, model: SegmentationModel, meta: dict | None = None, fmt: str | None = None,
                    config_hash: str | None = None) -> str:
    """Write the checkpoint atomically; returns the parameter hash."""
    fmt = fmt or infer_format(path)
    state = model.state_dict()
    header = _header(model, meta, config_hash)
    header["param_hash"] = state_hash(state)
    if fmt == "json":
        header["params"] = {
            name: {"shape": list(arr.shape), "data": [float(x) for x in arr.reshape(-1)]}
            for name, arr in state.items()
        }
        atomic_write_text(path, json.dumps(header, sort_keys=True) + "\n")
    elif fmt == "npz":
        buf = io.BytesIO()
        arrays = {f"param:{k}": v for k, v in state.items()}
        np.savez(buf, __header__=np.array(json.dumps(header, sort_keys=True)), **arrays)
        with atomic_writer(path, "wb") as fh:
            fh.write(buf.getvalue())
    else:
        raise ValueError(f"unknown checkpoint format {fmt!r}")
    return header["param_hash"]


def load_checkpoint(path) -> tuple[SegmentationModel, dict]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    if infer_format(path) == "json":
        header = json.loads(path.read_text(encoding="utf-8"))
        state = {
            name: np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
            for name, entry in header.pop("params").items()
        }
    else:
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(str(data["__header__"]))
            state = {k[len("param:"):]: data[k] for k in data.files if k.startswith("param:")}
    if header.get("format") != FORMAT_NAME:
        raise ValueError(f"{path}: not a checkpoint file")
    if header.get("version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
    model = SegmentationModel(ModelConfig.from_dict(header["model_config"]))
    model.load_state_dict(state)
    if state_hash(model.state_dict()) != header.get("param_hash"):
        raise ValueError(f"{path}: parameter hash mismatch")
    return model, header
