"""Molecular topology: atoms, bonds, ring perception, rotatable bonds and subtrees.

A ``Molecule`` is immutable once built.  Ring membership is the complement of
the bridge edges of the bond graph; rotatable bonds are listed in breadth-first
order over the tree obtained by contracting every ring system to one node,
rooted at atom 0.  That order keeps parent axes ahead of the axes they carry,
which is what gives the linear noise map its block lower-triangular shape.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Sequence, Tuple

import networkx as nx
import numpy as np

from utils.errors import DataError, RingBondError, TopologyError

logger = logging.getLogger(__name__)

ELEMENTS: Dict[str, int] = {
    "H": 1, "He": 2, "Li": 3, "Be": 4, "B": 5, "C": 6, "N": 7, "O": 8, "F": 9, "Ne": 10,
    "Na": 11, "Mg": 12, "Al": 13, "Si": 14, "P": 15, "S": 16, "Cl": 17, "Ar": 18,
    "K": 19, "Ca": 20, "Fe": 26, "Cu": 29, "Zn": 30, "Se": 34, "Br": 35, "I": 53,
}


def element_number(symbol: str) -> int:
    """Atomic number of an element symbol; raises DataError for unknown symbols."""
    key = symbol.strip().capitalize()
    if key not in ELEMENTS:
        raise DataError(f"Unknown element symbol: {symbol!r}")
    return ELEMENTS[key]


class Atom(NamedTuple):
    symbol: str
    number: int


class Bond(NamedTuple):
    i: int
    j: int
    order: int


@dataclass(frozen=True)
class RotatableBond:
    axis: Tuple[int, int]
    moving_set: FrozenSet[int]
    reference: Tuple[int, int]
    key_atom: int

    @property
    def b(self) -> int:
        return self.axis[0]

    @property
    def c(self) -> int:
        return self.axis[1]


@dataclass(frozen=True, eq=False)
class Conformation:
    """Cartesian coordinates of one molecule as a flat, read-only 3N vector."""

    coords: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64).reshape(-1)
        if coords.size % 3 != 0:
            raise DataError(f"Coordinate vector length {coords.size} is not a multiple of 3")
        if not np.all(np.isfinite(coords)):
            raise DataError("Conformation has non-finite coordinates")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    @classmethod
    def from_positions(cls, positions) -> "Conformation":
        return cls(np.asarray(positions, dtype=np.float64).reshape(-1))

    @property
    def n_atoms(self) -> int:
        return self.coords.size // 3

    @property
    def positions(self) -> np.ndarray:
        return self.coords.reshape(-1, 3)

    def __eq__(self, other) -> bool:
        return isinstance(other, Conformation) and np.array_equal(self.coords, other.coords)


@dataclass(frozen=True)
class Molecule:
    atoms: Tuple[Atom, ...]
    bonds: Tuple[Bond, ...]
    ring_bonds: FrozenSet[int] = frozenset()
    rotatable: Tuple[RotatableBond, ...] = ()

    @classmethod
    def from_topology(cls, elements: Sequence[str], bonds: Iterable[Sequence[int]]) -> "Molecule":
        """Validate a bond graph and perceive rings and rotatable bonds."""
        atoms = tuple(Atom(symbol.strip().capitalize(), element_number(symbol)) for symbol in elements)
        bond_list = []
        for bond in bonds:
            i, j = int(bond[0]), int(bond[1])
            order = int(bond[2]) if len(bond) > 2 else 1
            bond_list.append(Bond(i, j, order))
        skeleton = cls(atoms, tuple(bond_list))
        skeleton.validate()
        with_rings = replace(skeleton, ring_bonds=frozenset(detect_rings(skeleton)))
        return replace(with_rings, rotatable=tuple(find_rotatable_bonds(with_rings)))

    def validate(self) -> None:
        n = len(self.atoms)
        if n == 0:
            raise TopologyError("A molecule needs at least one atom")
        seen = set()
        for k, (i, j, order) in enumerate(self.bonds):
            if not (0 <= i < n and 0 <= j < n):
                raise TopologyError(f"Bond {k} ({i}, {j}) has an endpoint out of range [0, {n})")
            if i == j:
                raise TopologyError(f"Bond {k} connects atom {i} to itself")
            if order not in (1, 2, 3):
                raise TopologyError(f"Bond {k} ({i}, {j}) has unsupported order {order}")
            pair = frozenset((i, j))
            if pair in seen:
                raise TopologyError(f"Duplicate bond between atoms {i} and {j}")
            seen.add(pair)
        if not nx.is_connected(self.graph):
            raise TopologyError("The bond graph is not connected")

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def elements(self) -> Tuple[str, ...]:
        return tuple(atom.symbol for atom in self.atoms)

    @property
    def atomic_numbers(self) -> np.ndarray:
        return np.array([atom.number for atom in self.atoms], dtype=np.int64)

    @cached_property
    def graph(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(len(self.atoms)))
        for k, (i, j, order) in enumerate(self.bonds):
            graph.add_edge(i, j, index=k, order=order)
        return graph

    @cached_property
    def _bond_lookup(self) -> Dict[FrozenSet[int], int]:
        return {frozenset((b.i, b.j)): k for k, b in enumerate(self.bonds)}

    def neighbors(self, atom: int) -> List[int]:
        return sorted(self.graph.neighbors(atom))

    def degree(self, atom: int) -> int:
        return self.graph.degree(atom)

    def bond_index(self, i: int, j: int) -> int:
        try:
            return self._bond_lookup[frozenset((i, j))]
        except KeyError:
            raise TopologyError(f"Atoms {i} and {j} are not bonded") from None

    def bond_order(self, i: int, j: int) -> int:
        return self.bonds[self.bond_index(i, j)].order

    def is_ring_bond(self, i: int, j: int) -> bool:
        return self.bond_index(i, j) in self.ring_bonds

    @cached_property
    def oriented_bridges(self) -> Tuple[Tuple[int, int], ...]:
        """Non-ring bonds as (parent, child) pairs in ring-contracted BFS order."""
        return tuple(_bridge_bfs(self))

    def check_conformation(self, conformation: Conformation) -> None:
        if conformation.n_atoms != self.n_atoms:
            raise DataError(
                f"Conformation has {conformation.n_atoms} atoms, molecule has {self.n_atoms}"
            )


def detect_rings(molecule: Molecule) -> set:
    """Indices of bonds lying on at least one simple cycle (all non-bridge edges)."""
    bridges = {frozenset(edge) for edge in nx.bridges(molecule.graph)}
    return {k for k, bond in enumerate(molecule.bonds) if frozenset((bond.i, bond.j)) not in bridges}


def _bridge_bfs(molecule: Molecule) -> List[Tuple[int, int]]:
    graph = molecule.graph
    ring_pairs = {frozenset(molecule.bonds[k][:2]) for k in molecule.ring_bonds}

    # Ring systems contract to one node; acyclic atoms are their own node.
    ring_graph = nx.Graph()
    ring_graph.add_nodes_from(graph.nodes)
    ring_graph.add_edges_from(tuple(pair) for pair in ring_pairs)
    members: List[List[int]] = [sorted(c) for c in nx.connected_components(ring_graph)]
    members.sort(key=lambda c: c[0])
    block_of = {atom: idx for idx, comp in enumerate(members) for atom in comp}

    root = block_of[0]
    visited = {root}
    queue = deque([root])
    order: List[Tuple[int, int]] = []
    while queue:
        block = queue.popleft()
        exits = sorted(
            (u, v)
            for u in members[block]
            for v in graph.neighbors(u)
            if frozenset((u, v)) not in ring_pairs and block_of[v] not in visited
        )
        for u, v in exits:
            if block_of[v] in visited:
                continue
            visited.add(block_of[v])
            queue.append(block_of[v])
            order.append((u, v))
    return order


def split_subtree(molecule: Molecule, axis: Tuple[int, int]) -> FrozenSet[int]:
    """Atoms on the c side of bond (b, c): the component holding c once the bond is cut."""
    b, c = axis
    molecule.bond_index(b, c)
    cut = molecule.graph.copy()
    cut.remove_edge(b, c)
    component = nx.node_connected_component(cut, c)
    if b in component:
        raise RingBondError(f"Bond ({b}, {c}) lies on a ring; removing it does not split the molecule")
    return frozenset(component)


def find_rotatable_bonds(molecule: Molecule) -> List[RotatableBond]:
    """Single, non-ring bonds whose endpoints both carry another neighbor.

    Hydrogens count as neighbors, so methyl and hydroxyl axes are rotatable.
    """
    rotatable = []
    for b, c in molecule.oriented_bridges:
        if molecule.bond_order(b, c) != 1:
            continue
        b_side = [n for n in molecule.neighbors(b) if n != c]
        c_side = [n for n in molecule.neighbors(c) if n != b]
        if not b_side or not c_side:
            continue
        moving = split_subtree(molecule, (b, c))
        rotatable.append(
            RotatableBond(
                axis=(b, c),
                moving_set=moving,
                reference=(b_side[0], c_side[0]),
                key_atom=min(n for n in c_side if n in moving),
            )
        )
    logger.debug(f"Found {len(rotatable)} rotatable bonds among {len(molecule.bonds)} bonds")
    return rotatable
