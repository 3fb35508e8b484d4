"""Chemical-aware noise (RN / VRN), coordinate Gaussian noise and the perturbation scale."""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from chem.molecule import Conformation, Molecule
from noise.geometry import ANGLE, LENGTH, TORSION_FIXED, TORSION_ROT, apply_move, internal_coords, rn_moves
from noise.rng import stream_key
from utils.errors import DegenerateGeometryError, PerturbationError, PreconditionError

logger = logging.getLogger(__name__)


class NoiseKind(str, Enum):
    RN = "RN"
    VRN = "VRN"
    CGN = "CGN"


class NoiseSpec(BaseModel):
    """Noise family and standard deviations (radians for angles, length units for tau)."""

    model_config = ConfigDict(extra="forbid")

    kind: NoiseKind = NoiseKind.RN
    sigma: float = Field(2.0, ge=0.0, description="RN torsion std")
    sigma_r: float = Field(0.058, ge=0.0)
    sigma_theta: float = Field(0.129, ge=0.0)
    sigma_phi: float = Field(0.18, ge=0.0)
    sigma_psi: float = Field(1.0, ge=0.0)
    tau: float = Field(0.04, ge=0.0, description="CGN std")
    randomize_angle_edges: bool = False

    def block_stds(self) -> dict:
        return {LENGTH: self.sigma_r, ANGLE: self.sigma_theta, TORSION_FIXED: self.sigma_phi, TORSION_ROT: self.sigma_psi}


@dataclass(frozen=True)
class PerturbationRecord:
    x_eq: Conformation
    x_med: Conformation
    x_fin: Conformation
    delta_internal: np.ndarray
    delta_cgn: np.ndarray
    blocks: Tuple[str, ...] = ()
    skipped: int = 0
    seed: Optional[Tuple[int, int, int]] = None


def apply_can(molecule: Molecule, x_eq: Conformation, spec: NoiseSpec, rng: np.random.Generator) -> PerturbationRecord:
    """Draw and apply the chemical-aware part of the noise; ``x_fin`` equals ``x_med``."""
    molecule.check_conformation(x_eq)
    positions = x_eq.positions

    try:
        if spec.kind == NoiseKind.CGN:
            moves, stds, skipped = [], np.zeros(0), 0
        elif spec.kind == NoiseKind.RN:
            moves = rn_moves(molecule)
            stds, skipped = np.full(len(moves), spec.sigma), 0
        else:
            coords = internal_coords(molecule, x_eq, strict=False, rng=rng if spec.randomize_angle_edges else None)
            moves, skipped = list(coords.moves), len(coords.skipped)
            block_std = spec.block_stds()
            stds = np.array([block_std[move.block] for move in moves], dtype=np.float64)

        delta = stds * rng.standard_normal(len(moves))
        for move, value in zip(moves, delta):
            positions = apply_move(positions, move, float(value))
    except DegenerateGeometryError as exc:
        raise PerturbationError(f"Noise application aborted, partial state discarded: {exc}") from exc

    x_med = Conformation.from_positions(positions)
    return PerturbationRecord(
        x_eq=x_eq,
        x_med=x_med,
        x_fin=x_med,
        delta_internal=delta,
        delta_cgn=np.zeros_like(x_eq.coords),
        blocks=tuple(move.block for move in moves),
        skipped=skipped,
        seed=stream_key(rng),
    )


def apply_cgn(x_med: Conformation, tau: float, rng: np.random.Generator) -> Tuple[Conformation, np.ndarray]:
    """Add i.i.d. Gaussian noise of std ``tau`` to every coordinate."""
    if tau < 0:
        raise PreconditionError(f"tau must be non-negative, got {tau}")
    delta = tau * rng.standard_normal(x_med.coords.size)
    return Conformation(x_med.coords + delta), delta


def hybrid_noise(molecule: Molecule, x_eq: Conformation, spec: NoiseSpec, rng: np.random.Generator) -> PerturbationRecord:
    """CAN followed by CGN from the same stream."""
    record = apply_can(molecule, x_eq, spec, rng)
    x_fin, delta_cgn = apply_cgn(record.x_med, spec.tau, rng)
    return replace(record, x_fin=x_fin, delta_cgn=delta_cgn)


def perturbation_scale(x_eq: Conformation, x_fin: Conformation) -> float:
    """Mean over atoms of the Euclidean displacement norm."""
    if x_eq.coords.size != x_fin.coords.size:
        raise PreconditionError("Conformations differ in size")
    if x_eq.n_atoms == 0:
        return 0.0
    return float(np.linalg.norm(x_fin.positions - x_eq.positions, axis=1).mean())
