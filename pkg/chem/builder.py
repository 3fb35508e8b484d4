"""Deterministic 3-D placement of tree-shaped and one-ring skeletons.

Atoms are placed outward from atom 0 (or from the ring holding atom 0) with
ideal bond lengths, tetrahedral or trigonal bond angles and staggered
torsions: the first child of an atom sits anti to the grandparent, siblings
follow at 120 degree (sp3) or 180 degree (sp2) steps about the parent bond.
"""

import logging
from collections import deque
from typing import Dict, List, Optional

import numpy as np

from chem.molecule import Conformation, Molecule
from utils.errors import DataError

logger = logging.getLogger(__name__)

TETRAHEDRAL = float(np.arccos(-1.0 / 3.0))
TRIGONAL = 2.0 * np.pi / 3.0

BOND_LENGTHS: Dict[tuple, Dict[int, float]] = {
    ("C", "C"): {1: 1.54, 2: 1.34, 3: 1.20},
    ("C", "H"): {1: 1.09},
    ("C", "N"): {1: 1.47, 2: 1.28, 3: 1.16},
    ("C", "O"): {1: 1.43, 2: 1.23},
    ("H", "N"): {1: 1.01},
    ("H", "O"): {1: 0.96},
    ("N", "N"): {1: 1.45, 2: 1.25},
    ("N", "O"): {1: 1.40, 2: 1.21},
    ("O", "O"): {1: 1.48},
    ("H", "H"): {1: 0.74},
}
AROMATIC_LENGTH = 1.39


def ideal_length(symbol_a: str, symbol_b: str, order: int = 1) -> float:
    table = BOND_LENGTHS.get(tuple(sorted((symbol_a, symbol_b))), {})
    return table.get(order, table.get(1, 1.5))


def hybrid_angle(molecule: Molecule, atom: int) -> float:
    """Ideal bond angle at an atom from the orders of its bonds."""
    orders = [molecule.bond_order(atom, n) for n in molecule.neighbors(atom)]
    if orders.count(2) >= 2 or 3 in orders:
        return np.pi
    if 2 in orders:
        return TRIGONAL
    return TETRAHEDRAL


def _unit(vector: np.ndarray) -> np.ndarray:
    return vector / np.linalg.norm(vector)


def _perpendicular(w: np.ndarray, hint: Optional[np.ndarray]) -> np.ndarray:
    """Unit vector orthogonal to w, pointing away from hint when one is given."""
    if hint is not None:
        away = -(hint - np.dot(hint, w) * w)
        if np.linalg.norm(away) > 1e-8:
            return _unit(away)
    trial = np.array([0.0, 0.0, 1.0]) if abs(w[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    return _unit(trial - np.dot(trial, w) * w)


def _child_directions(w: np.ndarray, e1: np.ndarray, theta: float, count: int, with_parent_slot: bool) -> List[np.ndarray]:
    e2 = np.cross(w, e1)
    steps = 3 if theta < TRIGONAL - 1e-9 else 2
    slots = []
    if with_parent_slot and count > steps:
        slots.append(w.copy())
        count -= 1
    if theta >= np.pi - 1e-9:
        slots.extend([-w] * count)
        return slots
    if count > steps:
        raise DataError(f"Cannot place {count} children with a {np.degrees(theta):.1f} degree bond angle")
    for k in range(count):
        phi = 2.0 * np.pi * k / steps
        slots.append(np.cos(theta) * w + np.sin(theta) * (np.cos(phi) * e1 + np.sin(phi) * e2))
    return slots


def _ring_cycle(molecule: Molecule) -> List[int]:
    ring_atoms = sorted({a for k in molecule.ring_bonds for a in molecule.bonds[k][:2]})
    if not ring_atoms:
        return []
    for atom in ring_atoms:
        ring_nbrs = [n for n in molecule.neighbors(atom) if molecule.is_ring_bond(atom, n)]
        if len(ring_nbrs) != 2:
            raise DataError("The builder only places molecules with one simple ring")
    if 0 not in ring_atoms:
        raise DataError("The builder needs the ring to contain atom 0")
    cycle, previous = [0], None
    while True:
        current = cycle[-1]
        ring_nbrs = [n for n in molecule.neighbors(current) if molecule.is_ring_bond(current, n) and n != previous]
        nxt = min(ring_nbrs)
        if nxt == 0:
            break
        previous = current
        cycle.append(nxt)
    if len(cycle) != len(ring_atoms):
        raise DataError("The builder only places molecules with one simple ring")
    return cycle


def build_conformation(molecule: Molecule) -> Conformation:
    """Idealized coordinates for a tree or one-ring molecule."""
    n = molecule.n_atoms
    positions = np.full((n, 3), np.nan)
    parent: Dict[int, int] = {}
    queue: deque = deque()

    cycle = _ring_cycle(molecule)
    if cycle:
        aromatic = any(molecule.bonds[k].order == 2 for k in molecule.ring_bonds)
        length = AROMATIC_LENGTH if aromatic else ideal_length(molecule.elements[cycle[0]], molecule.elements[cycle[1]])
        radius = length / (2.0 * np.sin(np.pi / len(cycle)))
        z_axis = np.array([0.0, 0.0, 1.0])
        half_tet = TETRAHEDRAL / 2.0
        for k, atom in enumerate(cycle):
            angle = 2.0 * np.pi * k / len(cycle)
            positions[atom] = radius * np.array([np.cos(angle), np.sin(angle), 0.0])
        for k, atom in enumerate(cycle):
            radial = _unit(positions[atom] * np.array([1.0, 1.0, 0.0]))
            outside = [nb for nb in molecule.neighbors(atom) if not molecule.is_ring_bond(atom, nb)]
            if len(outside) == 1:
                directions = [radial]
            else:
                directions = [np.cos(half_tet) * radial + sgn * np.sin(half_tet) * z_axis for sgn in (1.0, -1.0)][: len(outside)]
            if len(outside) > 2:
                raise DataError(f"Ring atom {atom} has more than two substituents")
            for nb, direction in zip(outside, directions):
                order = molecule.bond_order(atom, nb)
                positions[nb] = positions[atom] + ideal_length(molecule.elements[atom], molecule.elements[nb], order) * direction
                parent[nb] = atom
                queue.append(nb)
    else:
        positions[0] = 0.0
        children = molecule.neighbors(0)
        w = np.array([-1.0, 0.0, 0.0])
        e1 = np.array([0.0, 1.0, 0.0])
        for nb, direction in zip(children, _child_directions(w, e1, hybrid_angle(molecule, 0), len(children), True)):
            order = molecule.bond_order(0, nb)
            positions[nb] = ideal_length(molecule.elements[0], molecule.elements[nb], order) * _unit(direction)
            parent[nb] = 0
            queue.append(nb)

    while queue:
        atom = queue.popleft()
        up = parent[atom]
        children = [nb for nb in molecule.neighbors(atom) if np.isnan(positions[nb, 0])]
        if not children:
            continue
        w = _unit(positions[up] - positions[atom])
        grand = [g for g in molecule.neighbors(up) if g != atom and not np.isnan(positions[g, 0])]
        hint = positions[grand[0]] - positions[up] if grand else None
        e1 = _perpendicular(w, hint)
        for nb, direction in zip(children, _child_directions(w, e1, hybrid_angle(molecule, atom), len(children), False)):
            order = molecule.bond_order(atom, nb)
            positions[nb] = positions[atom] + ideal_length(molecule.elements[atom], molecule.elements[nb], order) * _unit(direction)
            parent[nb] = atom
            queue.append(nb)

    if np.isnan(positions).any():
        raise DataError("Builder left atoms unplaced; the molecule must be a tree or hold one ring")
    return Conformation.from_positions(positions)
