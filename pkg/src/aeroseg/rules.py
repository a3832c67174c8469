"""Expert meshing rules keyed by part label, and the settings document writer."""
from __future__ import annotations

import json
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field, replace

from .fileio import atomic_write_text
from .geometry import PartLabel

QUAD_DOMINANT = "quad-dominant"
HEX_DOMINANT = "hex-dominant"
YPLUS_ADVISORY = (
    "grow volume cells from surface cells; check Y+ and if > 1 "
    "decrease initial wall spacing proportionally"
)
ENGINE_FALLBACK_NOTE = "engine uses stabilizer settings (fallback, no expert rule)"
UNITS_NOTE = "units unspecified (values as given by the rule source)"


class RuleError(KeyError):
    pass


@dataclass(frozen=True)
class MeshSettings:
    surface_mesh_dimension: float
    initial_wall_spacing: float = 4.7e-6
    growth_rate: float = 1.1
    collision_buffer: float = 2.0
    surface_cell_type: str = QUAD_DOMINANT
    volume_cell_type: str = HEX_DOMINANT
    yplus_advisory: str = YPLUS_ADVISORY
    note: str = ""

    def __post_init__(self):
        for name in ("surface_mesh_dimension", "initial_wall_spacing", "collision_buffer"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.growth_rate > 1:
            raise ValueError("growth_rate must exceed 1")

    def to_dict(self) -> dict:
        return {
            "surface_mesh_dimension": self.surface_mesh_dimension,
            "initial_wall_spacing": self.initial_wall_spacing,
            "growth_rate": self.growth_rate,
            "collision_buffer": self.collision_buffer,
            "surface_cell_type": self.surface_cell_type,
            "volume_cell_type": self.volume_cell_type,
            "yplus_advisory": self.yplus_advisory,
            "note": self.note,
        }


@dataclass(frozen=True)
class FlowCondition:
    mach: float = 0.65
    aoa_deg: float = 0.0
    altitude: str = "sea level"
    reference_length_m: float = 30.0

    @property
    def tag(self) -> str:
        return (
            f"Mach {self.mach!r}, AoA {self.aoa_deg!r} deg, {self.altitude}, "
            f"reference length {self.reference_length_m!r} m"
        )


@dataclass(frozen=True)
class RuleDatabase:
    settings: Mapping[PartLabel, MeshSettings]
    flow: FlowCondition = field(default_factory=FlowCondition)

    def lookup(self, label) -> MeshSettings:
        label = PartLabel.parse(label)
        try:
            return self.settings[label]
        except KeyError:
            raise RuleError(f"no mesh rule for label {label.key!r}") from None

    def with_overrides(self, overrides: Mapping) -> "RuleDatabase":
        """``overrides`` maps label names to dicts of MeshSettings fields."""
        settings = dict(self.settings)
        for key, fields in overrides.items():
            label = PartLabel.parse(key)
            base = settings.get(label)
            settings[label] = replace(base, **fields) if base else MeshSettings(**fields)
        return RuleDatabase(settings, self.flow)


def default_rules(engine_as: PartLabel | str | None = PartLabel.STABILIZER) -> RuleDatabase:
    """Expert settings for wing, stabilizer and fuselage.

    Engines have no expert rule; by default they borrow another part's
    settings (marked in the output). ``engine_as=None`` leaves them out.
    """
    settings = {
        PartLabel.WING: MeshSettings(0.05),
        PartLabel.STABILIZER: MeshSettings(0.2),
        PartLabel.FUSELAGE: MeshSettings(1.0),
    }
    if engine_as is not None:
        donor = settings[PartLabel.parse(engine_as)]
        note = ENGINE_FALLBACK_NOTE.replace("stabilizer", PartLabel.parse(engine_as).key)
        settings[PartLabel.ENGINE] = replace(donor, note=note)
    return RuleDatabase(settings)


def _num(x: float) -> str:
    return repr(float(x))


def render_settings(classifications: Iterable, rules: RuleDatabase) -> str:
    """Text records followed by a JSON section; deterministic for fixed input."""
    rows = sorted(classifications, key=lambda c: c.surface_id)
    lines = [
        "# mesh settings",
        f"# flow: {rules.flow.tag}",
        f"# geometry resized to reference length {rules.flow.reference_length_m!r} m before meshing",
        f"# {UNITS_NOTE}",
        "# surface_id | label | dimension | wall_spacing | growth | buffer | cell_types | advisories",
    ]
    records = []
    for c in rows:
        s = rules.lookup(c.label)
        advisories = s.yplus_advisory + (f"; {s.note}" if s.note else "")
        lines.append(
            " | ".join(
                [
                    str(c.surface_id),
                    PartLabel(c.label).key,
                    _num(s.surface_mesh_dimension),
                    _num(s.initial_wall_spacing),
                    _num(s.growth_rate),
                    _num(s.collision_buffer),
                    f"{s.surface_cell_type}/{s.volume_cell_type}",
                    advisories,
                ]
            )
        )
        records.append({"surface_id": int(c.surface_id), "label": PartLabel(c.label).key, **s.to_dict()})
    machine = {
        "flow": {
            "mach": rules.flow.mach,
            "aoa_deg": rules.flow.aoa_deg,
            "altitude": rules.flow.altitude,
            "reference_length_m": rules.flow.reference_length_m,
        },
        "units": "unspecified",
        "surfaces": records,
    }
    lines.append("# --- json ---")
    lines.append(json.dumps(machine, indent=2, sort_keys=True))
    return "\n".join(lines) + "\n"


def emit_settings(classifications: Iterable, rules: RuleDatabase, out_path) -> str:
    text = render_settings(classifications, rules)
    atomic_write_text(out_path, text)
    return text


def parse_settings_json(text: str) -> dict:
    """Recover the machine section from a settings document."""
    marker = "# --- json ---\n"
    idx = text.find(marker)
    if idx < 0:
        raise ValueError("settings document has no json section")
    return json.loads(text[idx + len(marker) :])
