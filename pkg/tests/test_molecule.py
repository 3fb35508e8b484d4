import itertools
from collections import Counter

import numpy as np
import pytest
from networkx.utils import UnionFind

from chem.molecule import Molecule, detect_rings, element_number, find_rotatable_bonds, split_subtree
from utils.errors import DataError, RingBondError, TopologyError


def test_element_number_is_case_insensitive():
    assert element_number("c") == 6
    assert element_number("Cl") == 17
    with pytest.raises(DataError):
        element_number("Xx")


@pytest.mark.parametrize(
    "elements, bonds",
    [
        ([], []),
        (["C", "C"], [(0, 2, 1)]),
        (["C", "C"], [(0, 0, 1)]),
        (["C", "C"], [(0, 1, 4)]),
        (["C", "C"], [(0, 1, 1), (1, 0, 1)]),
        (["C", "C", "C"], [(0, 1, 1)]),
    ],
)
def test_invalid_topologies_are_rejected(elements, bonds):
    with pytest.raises(TopologyError):
        Molecule.from_topology(elements, bonds)


def test_ethane_has_one_rotatable_bond(ethane):
    molecule, _ = ethane
    assert len(molecule.bonds) == 7
    assert [bond.axis for bond in molecule.rotatable] == [(0, 1)]
    assert molecule.ring_bonds == frozenset()


def test_butane_backbone_and_methyl_axes_in_bfs_order(butane):
    molecule, _ = butane
    assert [bond.axis for bond in molecule.rotatable] == [(0, 1), (1, 2), (2, 3)]
    backbone = molecule.rotatable[1]
    assert backbone.reference == (0, 3)
    assert backbone.key_atom == 3
    assert 2 in backbone.moving_set and 1 not in backbone.moving_set


def test_benzene_ring_and_no_rotatable_bonds(benzene):
    molecule, _ = benzene
    assert len(molecule.ring_bonds) == 6
    assert all(molecule.is_ring_bond(k, (k + 1) % 6) for k in range(6))
    assert molecule.rotatable == ()


def test_fused_triangles_mark_all_five_bonds_as_ring():
    molecule = Molecule.from_topology(["C"] * 4, [(0, 1), (1, 2), (2, 0), (1, 3), (3, 2)])
    assert len(molecule.ring_bonds) == 5
    assert molecule.oriented_bridges == ()


def test_split_subtree_rejects_ring_bond(cyclohexane):
    molecule, _ = cyclohexane
    with pytest.raises(RingBondError):
        split_subtree(molecule, (0, 1))


def test_split_subtree_of_unbonded_pair_raises(butane):
    molecule, _ = butane
    with pytest.raises(TopologyError):
        split_subtree(molecule, (0, 3))


def test_aspirin_like_orders_ring_exits_before_deeper_axes(aspirin_like):
    molecule, _ = aspirin_like
    assert [bond.axis for bond in molecule.rotatable] == [(0, 6), (1, 9), (6, 8)]
    keys = [bond.key_atom for bond in molecule.rotatable]
    assert keys == [7, 15, 14]
    # later axes never carry the key atom of an earlier axis
    for row, bond in enumerate(molecule.rotatable):
        for later in molecule.rotatable[row + 1:]:
            assert bond.key_atom not in later.moving_set


def test_moving_sets_hold_the_c_side(propane):
    molecule, _ = propane
    first, second = molecule.rotatable
    assert first.axis == (0, 1) and second.axis == (0, 2)
    assert first.moving_set == frozenset({1, 5, 6, 7})
    assert first.moving_set.isdisjoint(second.moving_set)


def union_find_moving_set(molecule, axis):
    """Atoms joined to c by every bond except the axis."""
    b, c = axis
    groups = UnionFind(range(molecule.n_atoms))
    for i, j, _ in molecule.bonds:
        if {i, j} != {b, c}:
            groups.union(i, j)
    return frozenset(atom for atom in range(molecule.n_atoms) if groups[atom] == groups[c])


def brute_force_ring_bonds(molecule):
    """Union of all simple cycles, found by checking every subset of candidate bonds."""
    candidates = [k for k, (i, j, _) in enumerate(molecule.bonds) if molecule.degree(i) > 1 and molecule.degree(j) > 1]
    on_cycle = set()
    for size in range(3, len(candidates) + 1):
        for subset in itertools.combinations(candidates, size):
            degree = Counter()
            groups = UnionFind()
            for k in subset:
                i, j, _ = molecule.bonds[k]
                degree[i] += 1
                degree[j] += 1
                groups.union(i, j)
            if set(degree.values()) == {2} and len({groups[atom] for atom in degree}) == 1:
                on_cycle.update(subset)
    return on_cycle


def relabel(molecule, order):
    """Molecule with old atom ``a`` renumbered to ``order[a]``."""
    elements = [None] * molecule.n_atoms
    for old, new in enumerate(order):
        elements[new] = molecule.elements[old]
    bonds = [(order[i], order[j], k) for i, j, k in molecule.bonds]
    return Molecule.from_topology(elements, bonds)


@pytest.mark.parametrize("name", ["butane", "propane", "aspirin_like"])
def test_moving_sets_match_a_union_find_oracle(name, request):
    molecule, _ = request.getfixturevalue(name)
    for bond in molecule.rotatable:
        assert bond.moving_set == union_find_moving_set(molecule, bond.axis)
    for b, c in molecule.oriented_bridges:
        assert split_subtree(molecule, (b, c)) == union_find_moving_set(molecule, (b, c))


def test_generated_moving_sets_match_a_union_find_oracle(small_dataset):
    for entry in small_dataset:
        for bond in entry.molecule.rotatable:
            assert bond.moving_set == union_find_moving_set(entry.molecule, bond.axis)


@pytest.mark.parametrize("name", ["benzene", "cyclohexane", "aspirin_like", "butane"])
def test_ring_bonds_match_brute_force_cycles(name, request):
    molecule, _ = request.getfixturevalue(name)
    assert detect_rings(molecule) == brute_force_ring_bonds(molecule)
    assert set(molecule.ring_bonds) == brute_force_ring_bonds(molecule)


def test_fused_rings_match_brute_force_cycles():
    # decalin skeleton plus a pendant methyl
    bonds = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (4, 6), (6, 7), (7, 8), (8, 9), (9, 5), (9, 10)]
    molecule = Molecule.from_topology(["C"] * 11, bonds)
    rings = detect_rings(molecule)
    assert rings == brute_force_ring_bonds(molecule)
    assert len(rings) == 11


def test_rotatable_bonds_are_deterministic(aspirin_like):
    molecule, _ = aspirin_like
    first = find_rotatable_bonds(molecule)
    assert find_rotatable_bonds(molecule) == first
    assert tuple(first) == molecule.rotatable


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_rotatable_bonds_follow_a_relabeling(aspirin_like, seed):
    molecule, _ = aspirin_like
    # atom 0 roots the breadth-first order, so it keeps its label
    rest = np.random.default_rng(seed).permutation(np.arange(1, molecule.n_atoms))
    order = [0] + [int(a) for a in rest]
    renamed = relabel(molecule, order)
    expected = {(order[bond.b], order[bond.c]): frozenset(order[a] for a in bond.moving_set) for bond in molecule.rotatable}
    assert {bond.axis: bond.moving_set for bond in renamed.rotatable} == expected
