"""Toy valence force field: harmonic bonds, harmonic angles and cosine torsions.

    E = sum k_r (r - r0)^2 + sum k_theta (theta - theta0)^2 + sum V (1 + cos(n psi - gamma))

Energy and forces are evaluated on numpy arrays compiled once per force field.
Angles or torsions whose hinge is collinear contribute nothing and are
reported with a warning.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, PrivateAttr

from chem.molecule import Conformation, Molecule
from config.settings import DEGENERATE_SIN_TOL
from utils.errors import DataError

logger = logging.getLogger(__name__)


class BondTerm(BaseModel):
    i: int
    j: int
    k_r: float = Field(gt=0.0)
    r0: float = Field(gt=0.0)


class AngleTerm(BaseModel):
    i: int
    j: int
    k: int
    k_theta: float = Field(gt=0.0)
    theta0: float = Field(ge=0.0, le=np.pi)


class TorsionTerm(BaseModel):
    a: int
    b: int
    c: int
    d: int
    v: float = Field(ge=0.0)
    n: int = Field(ge=1, le=3)
    gamma: float = 0.0


@dataclass(frozen=True)
class _Arrays:
    bond_idx: np.ndarray
    k_r: np.ndarray
    r0: np.ndarray
    angle_idx: np.ndarray
    k_theta: np.ndarray
    theta0: np.ndarray
    torsion_idx: np.ndarray
    v: np.ndarray
    n: np.ndarray
    gamma: np.ndarray
    max_index: int


class ForceField(BaseModel):
    bonds: List[BondTerm] = []
    angles: List[AngleTerm] = []
    torsions: List[TorsionTerm] = []
    kT: float = Field(1.0, gt=0.0)

    _arrays: Optional[_Arrays] = PrivateAttr(default=None)

    def arrays(self) -> _Arrays:
        if self._arrays is None:
            self._arrays = _Arrays(
                bond_idx=np.array([(t.i, t.j) for t in self.bonds], dtype=np.int64).reshape(-1, 2),
                k_r=np.array([t.k_r for t in self.bonds], dtype=np.float64),
                r0=np.array([t.r0 for t in self.bonds], dtype=np.float64),
                angle_idx=np.array([(t.i, t.j, t.k) for t in self.angles], dtype=np.int64).reshape(-1, 3),
                k_theta=np.array([t.k_theta for t in self.angles], dtype=np.float64),
                theta0=np.array([t.theta0 for t in self.angles], dtype=np.float64),
                torsion_idx=np.array([(t.a, t.b, t.c, t.d) for t in self.torsions], dtype=np.int64).reshape(-1, 4),
                v=np.array([t.v for t in self.torsions], dtype=np.float64),
                n=np.array([t.n for t in self.torsions], dtype=np.float64),
                gamma=np.array([t.gamma for t in self.torsions], dtype=np.float64),
                max_index=max(
                    [max(t.i, t.j) for t in self.bonds]
                    + [max(t.i, t.j, t.k) for t in self.angles]
                    + [max(t.a, t.b, t.c, t.d) for t in self.torsions]
                    + [-1]
                ),
            )
        return self._arrays


def _sin_between(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
    cross = np.linalg.norm(np.cross(u, v), axis=1)
    return np.divide(cross, norms, out=np.zeros_like(cross), where=norms > 0)


def energy_and_gradient(force_field: ForceField, positions: np.ndarray, warn: bool = True) -> Tuple[float, np.ndarray]:
    """Energy and dE/dx for an (N, 3) position array."""
    ff = force_field.arrays()
    if ff.max_index >= len(positions):
        raise DataError(f"Force field references atom {ff.max_index} but the conformation has {len(positions)} atoms")
    grad = np.zeros_like(positions, dtype=np.float64)
    energy = 0.0
    skipped = 0

    if len(ff.bond_idx):
        i, j = ff.bond_idx.T
        d = positions[j] - positions[i]
        r = np.linalg.norm(d, axis=1)
        if np.any(r == 0.0):
            raise DataError("Bonded atoms coincide; bond stretch is undefined")
        stretch = r - ff.r0
        energy += float(np.sum(ff.k_r * stretch**2))
        g = (2.0 * ff.k_r * stretch / r)[:, None] * d
        np.add.at(grad, j, g)
        np.add.at(grad, i, -g)

    if len(ff.angle_idx):
        i, j, k = ff.angle_idx.T
        u = positions[i] - positions[j]
        v = positions[k] - positions[j]
        ok = _sin_between(u, v) > DEGENERATE_SIN_TOL
        skipped += int((~ok).sum())
        i, j, k, u, v = i[ok], j[ok], k[ok], u[ok], v[ok]
        lu = np.linalg.norm(u, axis=1)
        lv = np.linalg.norm(v, axis=1)
        cross = np.linalg.norm(np.cross(u, v), axis=1)
        dot = np.einsum("ij,ij->i", u, v)
        theta = np.arctan2(cross, dot)
        cos_t = dot / (lu * lv)
        sin_t = cross / (lu * lv)
        uh = u / lu[:, None]
        vh = v / lv[:, None]
        bend = theta - ff.theta0[ok]
        energy += float(np.sum(ff.k_theta[ok] * bend**2))
        de = 2.0 * ff.k_theta[ok] * bend
        gi = -(vh - cos_t[:, None] * uh) / (lu * sin_t)[:, None]
        gk = -(uh - cos_t[:, None] * vh) / (lv * sin_t)[:, None]
        np.add.at(grad, i, de[:, None] * gi)
        np.add.at(grad, k, de[:, None] * gk)
        np.add.at(grad, j, -de[:, None] * (gi + gk))

    if len(ff.torsion_idx):
        a, b, c, d = ff.torsion_idx.T
        b1 = positions[b] - positions[a]
        b2 = positions[c] - positions[b]
        b3 = positions[d] - positions[c]
        ok = (_sin_between(-b1, b2) > DEGENERATE_SIN_TOL) & (_sin_between(-b2, b3) > DEGENERATE_SIN_TOL)
        skipped += int((~ok).sum())
        a, b, c, d, b1, b2, b3 = a[ok], b[ok], c[ok], d[ok], b1[ok], b2[ok], b3[ok]
        m = np.cross(b1, b2)
        n = np.cross(b2, b3)
        lb2 = np.linalg.norm(b2, axis=1)
        psi = np.arctan2(lb2 * np.einsum("ij,ij->i", b1, n), np.einsum("ij,ij->i", m, n))
        phase = ff.n[ok] * psi - ff.gamma[ok]
        energy += float(np.sum(ff.v[ok] * (1.0 + np.cos(phase))))
        de = -ff.v[ok] * ff.n[ok] * np.sin(phase)
        ga = -(lb2 / np.einsum("ij,ij->i", m, m))[:, None] * m
        gd = (lb2 / np.einsum("ij,ij->i", n, n))[:, None] * n
        k1 = (np.einsum("ij,ij->i", b1, b2) / lb2**2)[:, None]
        k3 = (np.einsum("ij,ij->i", b3, b2) / lb2**2)[:, None]
        gb = -(1.0 + k1) * ga + k3 * gd
        gc = k1 * ga - (1.0 + k3) * gd
        for atoms, g in ((a, ga), (b, gb), (c, gc), (d, gd)):
            np.add.at(grad, atoms, de[:, None] * g)

    if skipped and warn:
        logger.warning(f"Skipped {skipped} degenerate angle or torsion terms")
    return energy, grad


def energy(force_field: ForceField, molecule: Molecule, conformation: Conformation) -> float:
    molecule.check_conformation(conformation)
    return energy_and_gradient(force_field, conformation.positions)[0]


def forces(force_field: ForceField, molecule: Molecule, conformation: Conformation) -> np.ndarray:
    """-dE/dx as a flat 3N vector."""
    molecule.check_conformation(conformation)
    return -energy_and_gradient(force_field, conformation.positions)[1].reshape(-1)


def boltzmann_score(force_field: ForceField, molecule: Molecule, conformation: Conformation) -> np.ndarray:
    """grad log p(x) = forces / kT."""
    return forces(force_field, molecule, conformation) / force_field.kT
