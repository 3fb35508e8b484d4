import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose

from chem.molecule import Conformation, Molecule
from noise.geometry import (
    ANGLE,
    LENGTH,
    TORSION_FIXED,
    TORSION_ROT,
    apply_move,
    bond_angle,
    bond_length,
    dihedral,
    enumerate_moves,
    internal_coords,
    rotate_torsion,
    wrap_angle,
)
from utils.errors import DegenerateGeometryError

TETRAHEDRAL = np.arccos(-1.0 / 3.0)


def all_angles(molecule, positions):
    values = []
    for j in range(molecule.n_atoms):
        for i, k in itertools.combinations(molecule.neighbors(j), 2):
            values.append(bond_angle(positions, i, j, k))
    return np.array(values)


def all_lengths(molecule, positions):
    return np.array([bond_length(positions, i, j) for i, j, _ in molecule.bonds])


def test_dihedral_sign_and_wrap():
    positions = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 1.0]])
    assert dihedral(positions, 0, 1, 2, 3) == pytest.approx(np.pi / 2)
    mirrored = positions * np.array([1.0, -1.0, 1.0])
    assert dihedral(mirrored, 0, 1, 2, 3) == pytest.approx(-np.pi / 2)
    assert wrap_angle(np.pi) == pytest.approx(-np.pi)


def test_methane_angles_are_tetrahedral(methane):
    molecule, conformation = methane
    coords = internal_coords(molecule, conformation)
    assert coords.counts == {LENGTH: 4, ANGLE: 3, TORSION_FIXED: 0, TORSION_ROT: 0}
    assert_allclose(coords.angles, TETRAHEDRAL, atol=1e-12)
    assert_allclose(coords.bond_lengths, 1.09, atol=1e-12)


def test_trans_butane_backbone_torsion(butane):
    molecule, conformation = butane
    assert abs(dihedral(conformation.positions, 0, 1, 2, 3)) == pytest.approx(np.pi, abs=1e-9)
    coords = internal_coords(molecule, conformation)
    assert coords.counts[TORSION_ROT] == 3
    assert coords.tuples(TORSION_ROT)[1] == (0, 1, 2, 3)


def test_collinear_angle_is_rejected_in_strict_mode_and_skipped_otherwise():
    molecule = Molecule.from_topology(["C"] * 4, [(0, 1), (1, 2), (2, 3)])
    conformation = Conformation.from_positions([[0.0, 0, 0], [1.5, 0, 0], [3.0, 0, 0], [4.0, 1.0, 0]])
    with pytest.raises(DegenerateGeometryError) as info:
        internal_coords(molecule, conformation)
    assert info.value.atoms in ((0, 1, 2), (0, 1, 2, 3))

    relaxed = internal_coords(molecule, conformation, strict=False)
    assert (0, 1, 2) in relaxed.skipped
    assert all(move.atoms != (0, 1, 2) for move in relaxed.moves)


def test_zero_length_bond_always_raises():
    molecule = Molecule.from_topology(["C", "C"], [(0, 1)])
    conformation = Conformation.from_positions([[0.0, 0, 0], [0.0, 0, 0]])
    with pytest.raises(DegenerateGeometryError):
        internal_coords(molecule, conformation, strict=False)


def test_ring_tuples_are_never_perturbed(cyclohexane, benzene, aspirin_like):
    for molecule, conformation in (cyclohexane, benzene, aspirin_like):
        for move in enumerate_moves(molecule):
            pairs = zip(move.atoms, move.atoms[1:])
            assert not all(molecule.is_ring_bond(i, j) for i, j in pairs)


@pytest.mark.parametrize("name", ["methane", "ethane", "butane", "propene", "benzene", "cyclohexane", "aspirin_like"])
def test_internal_degrees_of_freedom_fit_in_cartesian_space(name, request):
    molecule, conformation = request.getfixturevalue(name)
    coords = internal_coords(molecule, conformation)
    assert sum(coords.counts.values()) <= 3 * molecule.n_atoms


def test_rotate_by_zero_returns_the_input(butane):
    molecule, conformation = butane
    assert rotate_torsion(conformation, molecule.rotatable[1], 0.0) is conformation


def test_full_turn_is_identity(butane):
    molecule, conformation = butane
    turned = rotate_torsion(conformation, molecule.rotatable[1], 2.0 * np.pi)
    assert_allclose(turned.coords, conformation.coords, atol=1e-9)


def test_rotation_shifts_only_its_torsion(butane):
    molecule, conformation = butane
    bond = molecule.rotatable[1]
    rotated = rotate_torsion(conformation, bond, 0.7)
    before = dihedral(conformation.positions, 0, 1, 2, 3)
    after = dihedral(rotated.positions, 0, 1, 2, 3)
    assert wrap_angle(after - before) == pytest.approx(0.7, abs=1e-9)
    assert_allclose(all_lengths(molecule, rotated.positions), all_lengths(molecule, conformation.positions), atol=1e-9)
    assert_allclose(all_angles(molecule, rotated.positions), all_angles(molecule, conformation.positions), atol=1e-9)


def test_rotations_about_one_axis_compose(butane):
    molecule, conformation = butane
    bond = molecule.rotatable[1]
    twice = rotate_torsion(rotate_torsion(conformation, bond, 0.3), bond, 0.5)
    once = rotate_torsion(conformation, bond, 0.8)
    assert_allclose(twice.coords, once.coords, atol=1e-12)


def test_random_rotations_keep_rigid_geometry(butane, propane, aspirin_like, small_dataset):
    rng = np.random.default_rng(7)
    pool = [butane, propane, aspirin_like]
    pool += [(entry.molecule, entry.conformation) for entry in small_dataset if entry.molecule.rotatable]
    for _ in range(1000):
        molecule, conformation = pool[int(rng.integers(len(pool)))]
        bond = molecule.rotatable[int(rng.integers(len(molecule.rotatable)))]
        rotated = rotate_torsion(conformation, bond, float(rng.uniform(-np.pi, np.pi)))
        p, q = conformation.positions, rotated.positions
        assert_allclose(all_lengths(molecule, q), all_lengths(molecule, p), atol=1e-9)
        assert_allclose(all_angles(molecule, q), all_angles(molecule, p), atol=1e-9)
        moving = sorted(bond.moving_set)
        fixed = sorted(set(range(molecule.n_atoms)) - bond.moving_set)
        for group in (moving, fixed):
            d_before = np.linalg.norm(p[group][:, None] - p[group][None], axis=-1)
            d_after = np.linalg.norm(q[group][:, None] - q[group][None], axis=-1)
            assert_allclose(d_after, d_before, atol=1e-9)


def test_later_rotations_leave_earlier_key_atoms(aspirin_like):
    molecule, conformation = aspirin_like
    first = molecule.rotatable[0]
    moved = conformation
    for bond in molecule.rotatable[1:]:
        moved = rotate_torsion(moved, bond, 1.1)
    assert_allclose(moved.positions[first.key_atom], conformation.positions[first.key_atom], atol=0.0)


def test_length_move_changes_exactly_one_bond(butane):
    molecule, conformation = butane
    moves = enumerate_moves(molecule)
    length = next(move for move in moves if move.block == LENGTH and move.atoms == (1, 2))
    positions = apply_move(conformation.positions, length, 0.05)
    change = all_lengths(molecule, positions) - all_lengths(molecule, conformation.positions)
    k = molecule.bond_index(1, 2)
    assert change[k] == pytest.approx(0.05, abs=1e-12)
    assert_allclose(np.delete(change, k), 0.0, atol=1e-12)
    assert_allclose(all_angles(molecule, positions), all_angles(molecule, conformation.positions), atol=1e-12)


def test_angle_move_changes_its_angle(butane):
    molecule, conformation = butane
    angle = next(move for move in enumerate_moves(molecule) if move.block == ANGLE)
    positions = apply_move(conformation.positions, angle, 0.1)
    assert bond_angle(positions, *angle.atoms) - bond_angle(conformation.positions, *angle.atoms) == pytest.approx(0.1, abs=1e-12)
    assert_allclose(all_lengths(molecule, positions), all_lengths(molecule, conformation.positions), atol=1e-12)
