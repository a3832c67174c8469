"""Stochastic mesh augmentations with a cosine intensity ramp.

Five geometric transforms (rotation, vertex noise, mirroring, free-form
deformation, scaling) are applied in that fixed order. Their intensities grow
from zero at epoch 0 to the configured targets at the final epoch. Only vertex
positions (and face winding, after mirroring) change; labels never do.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .geometry import LabeledMesh, MeshError, bounding_box, orient_faces

FFD_LATTICE = (4, 4, 4)


def scheduled_value(target: float, epoch: int, tau: int) -> float:
    """Cosine ramp from 0 at ``epoch=0`` to ``target`` at ``epoch=tau``."""
    if tau <= 0:
        raise ValueError("tau must be a positive number of epochs")
    if not 0 <= epoch <= tau:
        raise ValueError(f"epoch {epoch} outside [0, {tau}]")
    return target * (1.0 + math.cos(epoch * math.pi / tau - math.pi)) / 2.0


@dataclass(frozen=True)
class AugmentationParams:
    xi1_target: float = math.pi / 6  # max rotation angle, radians
    xi2_target: float = 0.001  # max vertex noise, normalized units
    xi3_target: float = 0.2  # mirror probability per plane
    xi4_target: float = 0.4  # max FFD control-point displacement
    xi5_target: float = 0.15  # max scale perturbation
    epoch_T: int = 0
    tau: int = 200
    symmetric_noise: bool = False

    def __post_init__(self):
        targets = self.targets
        if any(t < 0 for t in targets):
            raise ValueError("augmentation targets must be non-negative")
        if not self.xi3_target < 1.0:
            raise ValueError("mirror probability target must be < 1")
        if self.tau < 1:
            raise ValueError("tau must be >= 1")
        if not 0 <= self.epoch_T <= self.tau:
            raise ValueError(f"epoch_T {self.epoch_T} outside [0, {self.tau}]")

    @property
    def targets(self) -> tuple[float, float, float, float, float]:
        return (self.xi1_target, self.xi2_target, self.xi3_target, self.xi4_target, self.xi5_target)

    def at_epoch(self, epoch: int) -> "AugmentationParams":
        return replace(self, epoch_T=min(epoch, self.tau))

    def intensities(self) -> tuple[float, ...]:
        return tuple(scheduled_value(t, self.epoch_T, self.tau) for t in self.targets)


def rotation_matrix(angles) -> np.ndarray:
    """Rotation about X, then Y, then Z (right-handed, radians)."""
    ax, ay, az = (float(a) for a in angles)
    cx, sx = math.cos(ax), math.sin(ax)
    cy, sy = math.cos(ay), math.sin(ay)
    cz, sz = math.cos(az), math.sin(az)
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]])
    ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    rz = np.array([[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]])
    return rz @ ry @ rx


def rotate(mesh: LabeledMesh, angles) -> LabeledMesh:
    return mesh.with_vertices(mesh.vertices @ rotation_matrix(angles).T)


def apply_rotation(mesh: LabeledMesh, xi1: float, rng: np.random.Generator) -> LabeledMesh:
    if xi1 == 0:
        return mesh
    return rotate(mesh, rng.uniform(0.0, xi1, size=3))


def apply_noise(mesh: LabeledMesh, xi2: float, rng: np.random.Generator, symmetric: bool = False) -> LabeledMesh:
    if xi2 == 0:
        return mesh
    low = -xi2 if symmetric else 0.0
    eps = rng.uniform(low, xi2, size=mesh.vertices.shape)
    return mesh.with_vertices(mesh.vertices + eps)


# plane name -> coordinate axis negated by reflecting through it
MIRROR_PLANES = {"XY": 2, "XZ": 1, "YZ": 0}


def mirror(mesh: LabeledMesh, planes) -> LabeledMesh:
    planes = list(planes)
    if not planes:
        return mesh
    verts = mesh.vertices.copy()
    for plane in planes:
        verts[:, MIRROR_PLANES[plane]] *= -1.0
    faces = orient_faces(mesh.faces) if len(planes) % 2 else mesh.faces
    return mesh.with_vertices(verts, faces)


def apply_mirror(mesh: LabeledMesh, xi3: float, rng: np.random.Generator) -> LabeledMesh:
    if xi3 == 0:
        return mesh
    draws = rng.random(3)
    planes = [p for p, u in zip(("XY", "XZ", "YZ"), draws) if u < xi3]
    return mirror(mesh, planes)


def bernstein_basis(t: np.ndarray, degree: int) -> np.ndarray:
    """Bernstein polynomials of ``degree`` at ``t``; shape (len(t), degree + 1)."""
    t = np.asarray(t, dtype=np.float64)[:, None]
    i = np.arange(degree + 1)
    coef = np.array([math.comb(degree, k) for k in i], dtype=np.float64)
    return coef * t**i * (1.0 - t) ** (degree - i)


def ffd_deform(vertices: np.ndarray, lower, upper, displacements: np.ndarray) -> np.ndarray:
    """Displace points by the Bernstein-weighted lattice displacements.

    ``displacements`` has shape (l, m, n, 3) for a lattice spanning the box
    ``[lower, upper]``.
    """
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    span = upper - lower
    if np.any(span <= 0):
        raise MeshError("free-form deformation needs a bounding box with positive extent on every axis")
    disp = np.asarray(displacements, dtype=np.float64)
    st = (np.asarray(vertices, dtype=np.float64) - lower) / span
    bx = bernstein_basis(st[:, 0], disp.shape[0] - 1)
    by = bernstein_basis(st[:, 1], disp.shape[1] - 1)
    bz = bernstein_basis(st[:, 2], disp.shape[2] - 1)
    offset = np.einsum("ni,nj,nk,ijkc->nc", bx, by, bz, disp, optimize=True)
    return vertices + offset


def apply_ffd(mesh: LabeledMesh, xi4: float, rng: np.random.Generator, lattice=FFD_LATTICE) -> LabeledMesh:
    if xi4 == 0:
        return mesh
    lo, hi = bounding_box(mesh.vertices)
    disp = rng.uniform(-xi4, xi4, size=(*lattice, 3))
    return mesh.with_vertices(ffd_deform(mesh.vertices, lo, hi, disp))


def scale(mesh: LabeledMesh, sa: float) -> LabeledMesh:
    return mesh.with_vertices(mesh.vertices * (1.0 - sa))


def apply_scale(mesh: LabeledMesh, xi5: float, rng: np.random.Generator) -> LabeledMesh:
    if xi5 == 0:
        return mesh
    return scale(mesh, rng.uniform(-xi5, xi5))


def augment(mesh: LabeledMesh, params: AugmentationParams, rng: np.random.Generator) -> LabeledMesh:
    xi1, xi2, xi3, xi4, xi5 = params.intensities()
    out = apply_rotation(mesh, xi1, rng)
    out = apply_noise(out, xi2, rng, symmetric=params.symmetric_noise)
    out = apply_mirror(out, xi3, rng)
    out = apply_ffd(out, xi4, rng)
    return apply_scale(out, xi5, rng)
