"""Procedural aircraft-like meshes with per-face part labels and matching CAD grids.

Each part is its own closed triangle surface (parts may interpenetrate where
they join; no boolean merge). Every part is built from a parametric surface
``f(u, v)`` that is also sampled on a regular grid, so the CAD grids and the
mesh describe the same geometry.

Lengths are expressed as ratios of the fuselage length so that random
variations stay plausible at any scale.
"""
from __future__ import annotations

import dataclasses
import json
import math
from collections.abc import Callable, Iterator
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .fileio import atomic_write_text, save_mesh, save_surfaces
from .geometry import LabeledMesh, MeshError, PartLabel, SurfaceGrid

# element size as a fraction of fuselage length, one entry per density level
ELEMENT_FRACTION = (0.06, 0.045, 0.035, 0.027, 0.02)
N_DENSITIES = len(ELEMENT_FRACTION)
GRID_SHAPE = (24, 24)

# acceptable interval of every continuous parameter
RANGES: dict[str, tuple[float, float]] = {
    "fuselage_length": (12.0, 40.0),
    "fuselage_radius": (0.04, 0.08),
    "nose_length": (0.10, 0.20),
    "tail_length": (0.20, 0.30),
    "wing_span": (0.70, 1.30),
    "wing_chord": (0.10, 0.20),
    "wing_taper": (0.25, 0.60),
    "wing_sweep": (0.0, 35.0),
    "wing_thickness": (0.08, 0.16),
    "wing_position": (0.30, 0.45),
    "wing_height": (-0.6, 0.3),
    "wing_dihedral": (0.0, 7.0),
    "htail_span": (0.25, 0.45),
    "htail_chord": (0.06, 0.10),
    "htail_sweep": (15.0, 40.0),
    "vtail_height": (0.12, 0.22),
    "vtail_chord": (0.08, 0.14),
    "vtail_sweep": (25.0, 50.0),
    "engine_radius": (0.020, 0.035),
    "engine_length": (0.08, 0.14),
    "engine_position": (0.25, 0.45),
}
ENGINE_COUNTS = (0, 2, 4)


class InvalidAircraft(MeshError):
    pass


@dataclass(frozen=True)
class AircraftParams:
    """Shape parameters; all but ``fuselage_length`` are ratios or angles.

    Radii, chords, spans and heights are fractions of the fuselage length.
    Angles are in degrees. ``wing_height`` is a fraction of the fuselage
    radius and ``engine_position`` a fraction of the wing semi-span.
    """

    fuselage_length: float = 30.0
    fuselage_radius: float = 0.06
    nose_length: float = 0.15
    tail_length: float = 0.25
    wing_span: float = 1.0
    wing_chord: float = 0.15
    wing_taper: float = 0.4
    wing_sweep: float = 25.0
    wing_thickness: float = 0.12
    wing_position: float = 0.38
    wing_height: float = -0.3
    wing_dihedral: float = 4.0
    htail_span: float = 0.35
    htail_chord: float = 0.08
    htail_sweep: float = 30.0
    vtail_height: float = 0.17
    vtail_chord: float = 0.11
    vtail_sweep: float = 40.0
    engine_count: int = 2
    engine_radius: float = 0.028
    engine_length: float = 0.11
    engine_position: float = 0.35
    density: int = 0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise InvalidAircraft(f"{f.name} must be finite")
        positive = [n for n in RANGES if n not in ("wing_sweep", "wing_height", "wing_dihedral")]
        for name in positive:
            if getattr(self, name) <= 0:
                raise InvalidAircraft(f"{name} must be positive")
        if self.engine_count not in ENGINE_COUNTS:
            raise InvalidAircraft(f"engine_count must be one of {ENGINE_COUNTS}")
        if self.density not in range(N_DENSITIES):
            raise InvalidAircraft(f"density must be in 0..{N_DENSITIES - 1}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "AircraftParams":
        return cls(**data)


# ---------------------------------------------------------------- primitives


def _grid_faces(n_rows: int, n_cols: int, offset: int, wrap: bool) -> np.ndarray:
    """Two triangles per quad of a row-major vertex lattice; columns wrap if asked."""
    cols = n_cols if wrap else n_cols - 1
    i, j = np.meshgrid(np.arange(n_rows - 1), np.arange(cols), indexing="ij")
    i, j = i.ravel(), j.ravel()
    j1 = (j + 1) % n_cols
    a = offset + i * n_cols + j
    b = offset + i * n_cols + j1
    c = offset + (i + 1) * n_cols + j
    d = offset + (i + 1) * n_cols + j1
    return np.concatenate([np.stack([a, b, d], 1), np.stack([a, d, c], 1)])


def _fan(center: int, ring: np.ndarray, reverse: bool) -> np.ndarray:
    nxt = np.roll(ring, -1)
    tris = np.stack([np.full_like(ring, center), ring, nxt], 1)
    return tris[:, [0, 2, 1]] if reverse else tris


def _closed_tube(rings: np.ndarray, start_cap: np.ndarray, end_cap: np.ndarray):
    """Rings (R, C, 3) capped by one vertex at each end -> closed surface."""
    n_rows, n_cols, _ = rings.shape
    verts = np.concatenate([rings.reshape(-1, 3), start_cap[None], end_cap[None]])
    faces = [_grid_faces(n_rows, n_cols, 0, wrap=True)]
    first = np.arange(n_cols)
    last = (n_rows - 1) * n_cols + np.arange(n_cols)
    faces.append(_fan(len(verts) - 2, first, reverse=False))
    faces.append(_fan(len(verts) - 1, last, reverse=True))
    return verts, np.concatenate(faces)


def _count(length: float, h: float, minimum: int, density: int, even: bool = False) -> int:
    n = max(minimum, math.ceil(length / h)) + density
    return n + (n % 2) if even else n


def naca_half_thickness(x: np.ndarray, t: float) -> np.ndarray:
    """Symmetric 4-digit section, chord fraction ``x`` in [0, 1]."""
    x = np.clip(x, 0.0, 1.0)
    return 5.0 * t * (0.2969 * np.sqrt(x) - 0.1260 * x - 0.3516 * x**2 + 0.2843 * x**3 - 0.1015 * x**4)


# ------------------------------------------------------------------ parts


@dataclass
class _Part:
    name: str
    label: PartLabel
    surface: Callable[[np.ndarray, np.ndarray], np.ndarray]  # (u, v) grids -> points
    mesh_uv: tuple[np.ndarray, np.ndarray]  # ring parameters and loop parameters
    caps: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
    panels: list[tuple[str, tuple[float, float], tuple[float, float]]] = field(default_factory=list)


def _fuselage(p: AircraftParams, h: float) -> tuple[_Part, Callable, Callable]:
    L = p.fuselage_length
    R = p.fuselage_radius * L
    ln, lt = p.nose_length * L, p.tail_length * L
    end_ratio = 0.2

    def radius(s):
        s = np.asarray(s, dtype=np.float64)
        nose = R * np.sqrt(np.clip(1.0 - (1.0 - s / ln) ** 2, 0.0, 1.0))
        u = np.clip((s - (L - lt)) / lt, 0.0, 1.0)
        tail = R * (1.0 - (1.0 - end_ratio) * u**1.3)
        return np.where(s < ln, nose, tail)

    def center_z(s):
        u = np.clip((np.asarray(s) - (L - lt)) / lt, 0.0, 1.0)
        return 0.5 * R * u**2

    def surface(s, theta):
        r = radius(s)
        return np.stack([s, r * np.cos(theta), center_z(s) + r * np.sin(theta)], -1)

    n_theta = _count(2 * math.pi * R, h, 12, 2 * p.density, even=True)
    n_nose = _count(ln, h, 4, p.density)
    n_body = _count(L - ln - lt, h, 4, p.density)
    n_tail = _count(lt, h, 4, p.density)
    # nose stations cluster toward the tip where the radius changes fastest
    k = np.arange(1, n_nose + 1) / n_nose
    s_nose = ln * (1.0 - np.cos(0.5 * math.pi * k))
    s_body = np.linspace(ln, L - lt, n_body + 1)[1:]
    s_tail = np.linspace(L - lt, L, n_tail + 1)[1:]
    stations = np.concatenate([s_nose, s_body, s_tail])
    theta = np.linspace(0.0, 2 * math.pi, n_theta, endpoint=False)

    def caps(rings):
        tip = np.array([0.0, 0.0, 0.0])
        end = np.array([L + 0.5 * end_ratio * R, 0.0, float(center_z(L))])
        return tip, end

    part = _Part(
        "fuselage",
        PartLabel.FUSELAGE,
        surface,
        (stations, theta),
        caps,
        panels=[
            ("fuselage_nose", (0.0, ln), (0.0, 2 * math.pi)),
            ("fuselage_body", (ln, L - lt), (0.0, 2 * math.pi)),
            ("fuselage_tail", (L - lt, L), (0.0, 2 * math.pi)),
        ],
    )
    return part, radius, center_z


def _lifting_surface(
    name: str,
    label: PartLabel,
    root: np.ndarray,
    length: float,
    chord_root: float,
    taper: float,
    sweep_deg: float,
    dihedral_deg: float,
    thickness: float,
    h: float,
    density: int,
    axis: str = "y",
    side: float = 1.0,
    upper_lower: bool = True,
) -> _Part:
    """Swept, tapered extrusion of a symmetric section.

    ``axis`` is the span direction ("y" for wings and tailplanes, "z" for a
    fin). ``u`` runs root to tip in [0, 1]; ``v`` runs around the section
    starting at the trailing edge.
    """
    tan_sweep = math.tan(math.radians(sweep_deg))
    tan_dihedral = math.tan(math.radians(dihedral_deg))

    def surface(u, v):
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        span = u * length
        chord = chord_root * (1.0 - (1.0 - taper) * u)
        xc = 0.5 * (1.0 + np.cos(v))
        half = naca_half_thickness(xc, thickness) * chord * np.sign(np.sin(v))
        x = root[0] + span * tan_sweep + xc * chord
        if axis == "y":
            y = root[1] + side * span
            z = root[2] + span * tan_dihedral + half
        else:
            y = root[1] + half
            z = root[2] + span
        return np.stack([x, np.broadcast_to(y, x.shape), np.broadcast_to(z, x.shape)], -1)

    n_loop = _count(2.0 * chord_root, h, 12, 2 * density, even=True)
    n_span = _count(length, h, 6, density)
    u = np.linspace(0.0, 1.0, n_span + 1)
    v = np.linspace(0.0, 2 * math.pi, n_loop, endpoint=False)

    def caps(rings):
        return rings[0].mean(axis=0), rings[-1].mean(axis=0)

    if upper_lower:
        panels = [(f"{name}_upper", (0.0, 1.0), (0.0, math.pi)), (f"{name}_lower", (0.0, 1.0), (math.pi, 2 * math.pi))]
    else:
        panels = [(name, (0.0, 1.0), (0.0, 2 * math.pi))]
    return _Part(name, label, surface, (u, v), caps, panels)


def _nacelle(name: str, front: np.ndarray, length: float, radius: float, h: float, density: int) -> _Part:
    def surface(u, theta):
        u = np.asarray(u, dtype=np.float64)
        r = radius * np.sqrt(np.clip(np.sin(math.pi * u), 0.0, None))
        return np.stack([front[0] + u * length, front[1] + r * np.cos(theta), front[2] + r * np.sin(theta)], -1)

    n_theta = _count(2 * math.pi * radius, h, 10, 2 * density, even=True)
    n_len = _count(length, h, 5, density)
    u = np.linspace(0.0, 1.0, n_len + 2)[1:-1]
    theta = np.linspace(0.0, 2 * math.pi, n_theta, endpoint=False)

    def caps(rings):
        return front.astype(np.float64), front + np.array([length, 0.0, 0.0])

    return _Part(name, PartLabel.ENGINE, surface, (u, theta), caps, [(name, (0.0, 1.0), (0.0, 2 * math.pi))])


def _layout(p: AircraftParams) -> list[_Part]:
    L = p.fuselage_length
    h = ELEMENT_FRACTION[p.density] * L
    fuselage, radius, center_z = _fuselage(p, h)
    R = p.fuselage_radius * L
    parts = [fuselage]

    # wings: root buried halfway into the fuselage
    wing_root_y = 0.5 * R
    wing_z = p.wing_height * R
    semi = 0.5 * p.wing_span * L
    wing_len = semi - wing_root_y
    chord = p.wing_chord * L
    x_wing = p.wing_position * L
    wing_parts = {}
    for side, tag in ((1.0, "right"), (-1.0, "left")):
        root = np.array([x_wing, side * wing_root_y, wing_z])
        wing_parts[side] = _lifting_surface(
            f"wing_{tag}", PartLabel.WING, root, wing_len, chord, p.wing_taper,
            p.wing_sweep, p.wing_dihedral, p.wing_thickness, h, p.density, side=side,
        )
        parts.append(wing_parts[side])

    # horizontal tail at the fuselage centerline height of its root station
    ht_chord = p.htail_chord * L
    x_ht = L - 0.9 * p.tail_length * L
    r_ht = float(radius(x_ht + 0.5 * ht_chord))
    ht_root_y = 0.3 * r_ht
    ht_semi = 0.5 * p.htail_span * L
    z_ht = float(center_z(x_ht))
    for side, tag in ((1.0, "right"), (-1.0, "left")):
        root = np.array([x_ht, side * ht_root_y, z_ht])
        parts.append(
            _lifting_surface(
                f"htail_{tag}", PartLabel.STABILIZER, root, ht_semi - ht_root_y, ht_chord, 0.5,
                p.htail_sweep, 0.0, 0.10, h, p.density, side=side, upper_lower=False,
            )
        )

    # vertical fin rising from inside the tail cone
    vt_chord = p.vtail_chord * L
    x_vt = L - vt_chord - 0.05 * p.tail_length * L
    r_vt = float(radius(x_vt + 0.5 * vt_chord))
    vt_root = np.array([x_vt, 0.0, float(center_z(x_vt)) + 0.3 * r_vt])
    vt_len = p.vtail_height * L + 0.7 * r_vt
    parts.append(
        _lifting_surface(
            "vtail", PartLabel.STABILIZER, vt_root, vt_len, vt_chord, 0.6,
            p.vtail_sweep, 0.0, 0.10, h, p.density, axis="z", upper_lower=False,
        )
    )

    # engines hang below the wing lower surface, no pylons
    if p.engine_count:
        r_e, l_e = p.engine_radius * L, p.engine_length * L
        etas = [p.engine_position] if p.engine_count == 2 else [p.engine_position, p.engine_position + 0.25]
        for k, eta in enumerate(etas):
            y = eta * semi
            u = (y - wing_root_y) / wing_len
            c_local = chord * (1.0 - (1.0 - p.wing_taper) * u)
            x_le = x_wing + u * wing_len * math.tan(math.radians(p.wing_sweep))
            z_wing = wing_z + u * wing_len * math.tan(math.radians(p.wing_dihedral))
            z_axis = z_wing - 0.6 * p.wing_thickness * c_local - 1.4 * r_e
            for side, tag in ((1.0, "right"), (-1.0, "left")):
                front = np.array([x_le - 0.35 * l_e, side * y, z_axis])
                parts.append(_nacelle(f"engine_{tag}_{k}", front, l_e, r_e, h, p.density))
    return parts


def check_params(p: AircraftParams) -> None:
    """Reject combinations whose parts would collide or leave the airframe."""
    L = p.fuselage_length
    R = p.fuselage_radius * L
    if p.nose_length + p.tail_length > 0.7:
        raise InvalidAircraft("nose and tail leave no constant-section body")
    semi = 0.5 * p.wing_span * L
    if semi < 3.0 * R:
        raise InvalidAircraft("wing span does not clear the fuselage")
    if p.wing_position * L < p.nose_length * L * 0.8:
        raise InvalidAircraft("wing root starts inside the nose")
    if p.wing_position * L + p.wing_chord * L > (1.0 - p.tail_length) * L + 0.3 * p.tail_length * L:
        raise InvalidAircraft("wing root overlaps the tail cone")
    if abs(p.wing_height) > 0.8:
        raise InvalidAircraft("wing root leaves the fuselage section")
    if p.htail_chord > 0.6 * p.tail_length:
        raise InvalidAircraft("horizontal tail chord longer than the tail cone allows")
    if p.vtail_chord > 0.8 * p.tail_length:
        raise InvalidAircraft("vertical tail chord longer than the tail cone allows")
    if 0.5 * p.htail_span * L < 2.0 * R * 0.5:
        raise InvalidAircraft("horizontal tail span does not clear the fuselage")
    if p.engine_count:
        r_e = p.engine_radius * L
        etas = [p.engine_position] if p.engine_count == 2 else [p.engine_position, p.engine_position + 0.25]
        if etas[-1] > 0.85:
            raise InvalidAircraft("outboard engine beyond the wing tip region")
        if etas[0] * semi - r_e < 1.15 * R:
            raise InvalidAircraft("engine intersects the fuselage")
        if len(etas) == 2 and (etas[1] - etas[0]) * semi < 2.4 * r_e:
            raise InvalidAircraft("engines intersect each other")
        if etas[0] * semi - 0.5 * R < 0:
            raise InvalidAircraft("engine inboard of the wing root")


def _sample_panel(part: _Part, u_range, v_range, shape=GRID_SHAPE) -> np.ndarray:
    rows, cols = shape
    u = np.linspace(*u_range, rows)
    v = np.linspace(*v_range, cols)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    return part.surface(uu, vv)


def generate_aircraft(
    params: AircraftParams, rng: np.random.Generator | None = None, grid_shape=GRID_SHAPE
) -> tuple[LabeledMesh, list[SurfaceGrid]]:
    """Build the labeled mesh and one CAD grid per part panel.

    Geometry is a pure function of ``params``; ``rng`` is accepted for
    interface symmetry with the samplers and is not consumed.
    """
    check_params(params)
    verts, faces, labels, grids = [], [], [], []
    offset = 0
    for part in _layout(params):
        u, v = part.mesh_uv
        uu, vv = np.meshgrid(u, v, indexing="ij")
        rings = part.surface(uu, vv)
        start, end = part.caps(rings)
        pv, pf = _closed_tube(rings, np.asarray(start), np.asarray(end))
        tri = pv[pf]
        if np.einsum("ij,ij->", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])) < 0:
            pf = pf[:, [0, 2, 1]]  # outward normals
        verts.append(pv)
        faces.append(pf + offset)
        labels.append(np.full(len(pf), int(part.label)))
        offset += len(pv)
        for name, u_range, v_range in part.panels:
            grids.append(SurfaceGrid(len(grids), _sample_panel(part, u_range, v_range, grid_shape), part.label, name))
    mesh = LabeledMesh(np.concatenate(verts), np.concatenate(faces), np.concatenate(labels))
    return mesh, grids


# ------------------------------------------------------------------ sampling


def random_params(rng: np.random.Generator, density: int = 0, max_tries: int = 1000) -> AircraftParams:
    """A valid parameter set drawn uniformly over the acceptable intervals."""
    for _ in range(max_tries):
        values = {name: float(rng.uniform(lo, hi)) for name, (lo, hi) in RANGES.items()}
        engines = int(rng.choice(ENGINE_COUNTS, p=[0.2, 0.5, 0.3]))
        try:
            p = AircraftParams(**values, engine_count=engines, density=density)
            check_params(p)
            return p
        except InvalidAircraft:
            continue
    raise InvalidAircraft("no valid parameter set found")


def variation_interval(base: AircraftParams, name: str, spread: float) -> tuple[float, float]:
    lo, hi = RANGES[name]
    value = getattr(base, name)
    a, b = value - spread * abs(value), value + spread * abs(value)
    if name in ("wing_sweep", "wing_dihedral", "wing_height"):
        # angles and offsets can sit near zero; use an absolute band
        band = spread * (hi - lo)
        a, b = value - band, value + band
    return max(lo, a), min(hi, b)


def sample_variations(
    base: AircraftParams, k: int, rng: np.random.Generator, spread: float = 0.15, max_tries: int = 200
) -> list[AircraftParams]:
    """``k`` perturbed copies of ``base``; engine count and density are kept."""
    if k < 0:
        raise ValueError("k must be non-negative")
    out = []
    for _ in range(k):
        for _ in range(max_tries):
            values = {}
            for name in RANGES:
                lo, hi = variation_interval(base, name, spread)
                values[name] = float(rng.uniform(lo, hi)) if hi > lo else lo
            try:
                p = dataclasses.replace(base, **values)
                check_params(p)
                break
            except InvalidAircraft:
                continue
        else:
            raise InvalidAircraft("could not draw a valid variation")
        out.append(p)
    return out


# ------------------------------------------------------------------ dataset


@dataclass(frozen=True)
class Sample:
    sample_id: str
    base: int
    variation: int
    density: int
    split: str
    mesh: str
    labels: str
    surfaces: str
    n_vertices: int
    n_faces: int
    params: dict

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def split_bases(n_bases: int, val_fraction: float = 0.2) -> list[str]:
    """Last ``round(n * val_fraction)`` bases go to validation (at least one when n > 1)."""
    n_val = int(round(n_bases * val_fraction))
    if n_bases > 1:
        n_val = max(1, n_val)
    return ["train"] * (n_bases - n_val) + ["val"] * n_val


def iter_dataset(
    n_bases: int, n_variations: int, n_densities: int, seed: int, val_fraction: float = 0.2
) -> Iterator[tuple[Sample, LabeledMesh, list[SurfaceGrid]]]:
    """Each base contributes itself plus ``n_variations`` perturbed shapes, at each density."""
    if n_densities < 1 or n_densities > N_DENSITIES:
        raise ValueError(f"densities must be in 1..{N_DENSITIES}")
    if n_bases < 1 or n_variations < 0:
        raise ValueError("need at least one base and a non-negative variation count")
    rng = np.random.default_rng(seed)
    splits = split_bases(n_bases, val_fraction)
    for b in range(n_bases):
        base = random_params(rng)
        shapes = [base] + sample_variations(base, n_variations, rng)
        for v, shape in enumerate(shapes):
            for d in range(n_densities):
                p = dataclasses.replace(shape, density=d)
                mesh, grids = generate_aircraft(p)
                sid = f"b{b:02d}_v{v:02d}_d{d}"
                sample = Sample(
                    sid, b, v, d, splits[b], f"{sid}.mesh", f"{sid}.labels.csv", f"{sid}.surfaces",
                    mesh.n_vertices, mesh.n_faces, p.to_dict(),
                )
                yield sample, mesh, grids


def write_dataset(
    out_dir, n_bases: int, n_variations: int, n_densities: int, seed: int, val_fraction: float = 0.2
) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    samples = []
    for sample, mesh, grids in iter_dataset(n_bases, n_variations, n_densities, seed, val_fraction):
        save_mesh(mesh, out / sample.mesh, out / sample.labels)
        save_surfaces(grids, out / sample.surfaces)
        samples.append(sample.to_dict())
    manifest = {
        "format": "aeroseg-dataset",
        "version": 1,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "seed": seed,
        "bases": n_bases,
        "variations": n_variations,
        "densities": n_densities,
        "samples": samples,
    }
    atomic_write_text(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def read_manifest(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"dataset manifest not found: {path}")
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != "aeroseg-dataset":
        raise ValueError(f"{path}: not a dataset manifest")
    manifest["root"] = str(path.parent)
    return manifest
