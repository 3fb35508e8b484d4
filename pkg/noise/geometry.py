"""Internal coordinates and the rigid subtree moves that perturb them.

Every noise degree of freedom is an ``InternalMove``: a block name, the atom
tuple that defines the measured value, and the atoms that move when the value
changes.  Bond lengths translate the child subtree along the bond, angles
rotate it about the normal of the angle plane through the hinge atom, and
torsions rotate it about the bond axis.  Only bonds that are not on a ring
carry moves, so no measured tuple lies inside a ring.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from chem.molecule import Conformation, Molecule, RotatableBond, split_subtree
from config.settings import DEGENERATE_SIN_TOL
from utils.errors import DegenerateGeometryError

logger = logging.getLogger(__name__)

LENGTH = "length"
ANGLE = "angle"
TORSION_FIXED = "torsion_fixed"
TORSION_ROT = "torsion_rot"
BLOCKS = (LENGTH, ANGLE, TORSION_FIXED, TORSION_ROT)


@dataclass(frozen=True)
class InternalMove:
    """One internal degree of freedom.

    ``atoms`` is (b, c) for lengths, (i, j, k) for angles with k on the moving
    side, and (a, b, c, d) for torsions about b -> c.
    """

    block: str
    atoms: Tuple[int, ...]
    moving_set: FrozenSet[int]

    @property
    def axis(self) -> Tuple[int, int]:
        if self.block == LENGTH:
            return self.atoms[0], self.atoms[1]
        if self.block == ANGLE:
            return self.atoms[1], self.atoms[2]
        return self.atoms[1], self.atoms[2]


@dataclass(frozen=True)
class InternalCoords:
    """Measured values of every internal move, in noise-application order."""

    moves: Tuple[InternalMove, ...]
    values: np.ndarray
    skipped: Tuple[Tuple[int, ...], ...] = field(default=())

    def block_mask(self, block: str) -> np.ndarray:
        return np.array([move.block == block for move in self.moves], dtype=bool)

    def block(self, block: str) -> np.ndarray:
        return self.values[self.block_mask(block)]

    def tuples(self, block: str) -> List[Tuple[int, ...]]:
        return [move.atoms for move in self.moves if move.block == block]

    @property
    def bond_lengths(self) -> np.ndarray:
        return self.block(LENGTH)

    @property
    def angles(self) -> np.ndarray:
        return self.block(ANGLE)

    @property
    def torsions_fixed(self) -> np.ndarray:
        return self.block(TORSION_FIXED)

    @property
    def torsions_rot(self) -> np.ndarray:
        return self.block(TORSION_ROT)

    @property
    def counts(self) -> Dict[str, int]:
        return {block: int(self.block_mask(block).sum()) for block in BLOCKS}


def wrap_angle(value):
    """Map an angle (or array of angles) into [-pi, pi)."""
    return (np.asarray(value) + np.pi) % (2.0 * np.pi) - np.pi


def bond_length(positions: np.ndarray, i: int, j: int) -> float:
    return float(np.linalg.norm(positions[j] - positions[i]))


def bond_angle(positions: np.ndarray, i: int, j: int, k: int) -> float:
    u = positions[i] - positions[j]
    v = positions[k] - positions[j]
    # atan2 form stays accurate near 0 and pi
    return float(np.arctan2(np.linalg.norm(np.cross(u, v)), np.dot(u, v)))


def hinge_sin(positions: np.ndarray, i: int, j: int, k: int) -> float:
    u = positions[i] - positions[j]
    v = positions[k] - positions[j]
    norms = np.linalg.norm(u) * np.linalg.norm(v)
    if norms == 0.0:
        return 0.0
    return float(np.linalg.norm(np.cross(u, v)) / norms)


def dihedral(positions: np.ndarray, a: int, b: int, c: int, d: int) -> float:
    """Signed torsion in [-pi, pi), right-handed about the b -> c axis."""
    b1 = positions[b] - positions[a]
    b2 = positions[c] - positions[b]
    b3 = positions[d] - positions[c]
    n1 = np.cross(b1, b2)
    n2 = np.cross(b2, b3)
    phi = np.arctan2(np.linalg.norm(b2) * np.dot(b1, n2), np.dot(n1, n2))
    return float(wrap_angle(phi))


def torsion_move(bond: RotatableBond, block: str = TORSION_ROT) -> InternalMove:
    a, d = bond.reference
    return InternalMove(block, (a, bond.b, bond.c, d), bond.moving_set)


def _torsion_bond(molecule: Molecule, b: int, c: int) -> RotatableBond:
    b_side = [n for n in molecule.neighbors(b) if n != c]
    c_side = [n for n in molecule.neighbors(c) if n != b]
    return RotatableBond((b, c), split_subtree(molecule, (b, c)), (b_side[0], c_side[0]), c_side[0])


def enumerate_moves(molecule: Molecule, rng: Optional[np.random.Generator] = None) -> List[InternalMove]:
    """All VRN moves in application order: lengths, angles, fixed torsions, rotatable torsions.

    At each hinge atom only bonds that are not on a ring are eligible.  One
    eligible neighbor is the designated edge (the lowest index, or drawn from
    ``rng`` when given) and every other eligible neighbor forms one angle with
    it, so angles at a hinge are independent.
    """
    bridges = molecule.oriented_bridges
    bfs_rank = {pair: rank for rank, pair in enumerate(bridges)}

    lengths = [InternalMove(LENGTH, (b, c), split_subtree(molecule, (b, c))) for b, c in bridges]

    angles = []
    for j in range(molecule.n_atoms):
        eligible = [n for n in molecule.neighbors(j) if not molecule.is_ring_bond(j, n)]
        if len(eligible) < 2:
            continue
        designated = eligible[int(rng.integers(len(eligible)))] if rng is not None else eligible[0]
        for k in eligible:
            if k == designated:
                continue
            if (j, k) in bfs_rank:
                fixed, moving = designated, k
            else:
                fixed, moving = k, designated
            angles.append((bfs_rank[(j, moving)], InternalMove(ANGLE, (fixed, j, moving), split_subtree(molecule, (j, moving)))))
    angles.sort(key=lambda entry: entry[0])

    rotatable_axes = {bond.axis for bond in molecule.rotatable}
    fixed_torsions = []
    for b, c in bridges:
        if (b, c) in rotatable_axes or molecule.degree(b) < 2 or molecule.degree(c) < 2:
            continue
        fixed_torsions.append(torsion_move(_torsion_bond(molecule, b, c), TORSION_FIXED))

    rotatable = [torsion_move(bond) for bond in molecule.rotatable]
    return lengths + [move for _, move in angles] + fixed_torsions + rotatable


def rn_moves(molecule: Molecule) -> List[InternalMove]:
    return [torsion_move(bond) for bond in molecule.rotatable]


def degenerate_reason(positions: np.ndarray, move: InternalMove) -> Optional[str]:
    """Why a move's value is undefined at these positions, or None."""
    atoms = move.atoms
    if move.block == LENGTH:
        return "zero-length bond" if bond_length(positions, *atoms) == 0.0 else None
    if move.block == ANGLE:
        return "collinear angle" if hinge_sin(positions, *atoms) <= DEGENERATE_SIN_TOL else None
    a, b, c, d = atoms
    if hinge_sin(positions, a, b, c) <= DEGENERATE_SIN_TOL or hinge_sin(positions, b, c, d) <= DEGENERATE_SIN_TOL:
        return "collinear torsion hinge"
    return None


def measure(positions: np.ndarray, move: InternalMove) -> float:
    if move.block == LENGTH:
        return bond_length(positions, *move.atoms)
    if move.block == ANGLE:
        return bond_angle(positions, *move.atoms)
    return dihedral(positions, *move.atoms)


def internal_coords(
    molecule: Molecule,
    conformation: Conformation,
    strict: bool = True,
    rng: Optional[np.random.Generator] = None,
) -> InternalCoords:
    """Measure all internal coordinates.

    With ``strict`` a collinear hinge raises ``DegenerateGeometryError``
    naming the atom tuple; otherwise the coordinate is dropped, counted in
    ``skipped`` and logged.
    """
    molecule.check_conformation(conformation)
    positions = conformation.positions
    kept, values, skipped = [], [], []
    for move in enumerate_moves(molecule, rng):
        reason = degenerate_reason(positions, move)
        if reason is not None:
            if strict or move.block == LENGTH:
                raise DegenerateGeometryError(f"Undefined {move.block} for atoms {move.atoms}: {reason}", move.atoms)
            skipped.append(move.atoms)
            continue
        kept.append(move)
        values.append(measure(positions, move))
    if skipped:
        logger.warning(f"Skipped {len(skipped)} degenerate internal coordinates: {skipped}")
    return InternalCoords(tuple(kept), np.array(values, dtype=np.float64), tuple(skipped))


def _unit_axis(positions: np.ndarray, b: int, c: int) -> np.ndarray:
    axis = positions[c] - positions[b]
    norm = np.linalg.norm(axis)
    if norm == 0.0:
        raise DegenerateGeometryError(f"Atoms {b} and {c} coincide; the bond axis is undefined", (b, c))
    return axis / norm


def _angle_normal(positions: np.ndarray, i: int, j: int, k: int) -> np.ndarray:
    u = positions[i] - positions[j]
    v = positions[k] - positions[j]
    normal = np.cross(u, v)
    norm = np.linalg.norm(normal)
    if norm <= DEGENERATE_SIN_TOL * np.linalg.norm(u) * np.linalg.norm(v):
        raise DegenerateGeometryError(f"Angle ({i}, {j}, {k}) is collinear; its plane normal is undefined", (i, j, k))
    return normal / norm


def _rotate_about(positions: np.ndarray, atoms: np.ndarray, origin: np.ndarray, axis: np.ndarray, delta: float) -> None:
    rotation = Rotation.from_rotvec(axis * delta)
    positions[atoms] = rotation.apply(positions[atoms] - origin) + origin


def apply_move(positions: np.ndarray, move: InternalMove, delta: float) -> np.ndarray:
    """Return new positions with the move's value shifted by ``delta``."""
    out = np.array(positions, dtype=np.float64, copy=True)
    if delta == 0.0:
        return out
    moving = np.fromiter(sorted(move.moving_set), dtype=np.int64)
    if move.block == LENGTH:
        b, c = move.atoms
        out[moving] += delta * _unit_axis(out, b, c)
    elif move.block == ANGLE:
        i, j, k = move.atoms
        _rotate_about(out, moving, out[j].copy(), _angle_normal(out, i, j, k), delta)
    else:
        _, b, c, _ = move.atoms
        _rotate_about(out, moving, out[b].copy(), _unit_axis(out, b, c), delta)
    return out


def tangent(positions: np.ndarray, move: InternalMove) -> np.ndarray:
    """d(positions)/d(delta) at delta = 0, as an (N, 3) array."""
    column = np.zeros_like(positions, dtype=np.float64)
    moving = np.fromiter(sorted(move.moving_set), dtype=np.int64)
    if move.block == LENGTH:
        b, c = move.atoms
        column[moving] = _unit_axis(positions, b, c)
    elif move.block == ANGLE:
        i, j, k = move.atoms
        column[moving] = np.cross(_angle_normal(positions, i, j, k), positions[moving] - positions[j])
    else:
        _, b, c, _ = move.atoms
        column[moving] = np.cross(_unit_axis(positions, b, c), positions[moving] - positions[b])
        # c sits on its own axis
        column[c] = 0.0
    return column


def rotate_torsion(conformation: Conformation, bond: RotatableBond, delta_psi: float) -> Conformation:
    """Rotate the moving subtree of ``bond`` by ``delta_psi`` about b -> c (Rodrigues)."""
    if delta_psi == 0.0:
        return conformation
    positions = apply_move(conformation.positions, torsion_move(bond), float(delta_psi))
    return Conformation.from_positions(positions)
