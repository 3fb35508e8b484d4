import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.spatial.transform import Rotation

from chem.molecule import Conformation
from noise.geometry import dihedral, rotate_torsion
from noise.rng import stream
from pes.dataset import GeneratorConfig, random_force_field
from pes.forcefield import BondTerm, ForceField, TorsionTerm, energy, energy_and_gradient, forces
from pes.minimize import minimize
from utils.errors import DataError


def rest_force_field(molecule, conformation):
    config = GeneratorConfig(jitter_r=0.0, jitter_theta=0.0)
    return random_force_field(molecule, conformation, config, stream(0))


def test_energy_vanishes_at_the_rest_geometry(butane):
    molecule, conformation = butane
    force_field = rest_force_field(molecule, conformation)
    assert energy(force_field, molecule, conformation) == pytest.approx(0.0, abs=1e-12)


def test_stretching_a_terminal_bond(ethane):
    molecule, conformation = ethane
    force_field = rest_force_field(molecule, conformation)
    term = next(t for t in force_field.bonds if (t.i, t.j) == (0, 2))
    positions = conformation.positions.copy()
    axis = positions[2] - positions[0]
    positions[2] += 0.01 * axis / np.linalg.norm(axis)
    stretched = energy(force_field, molecule, Conformation.from_positions(positions))
    assert stretched == pytest.approx(term.k_r * 0.01**2, rel=1e-9, abs=1e-12)


def test_forces_match_finite_differences(aspirin_like):
    molecule, conformation = aspirin_like
    force_field = rest_force_field(molecule, conformation)
    rng = np.random.default_rng(3)
    x = conformation.coords + rng.normal(0.0, 0.05, conformation.coords.size)
    analytic = forces(force_field, molecule, Conformation(x))
    numeric = np.zeros_like(x)
    h = 1e-6
    for k in range(x.size):
        plus, minus = x.copy(), x.copy()
        plus[k] += h
        minus[k] -= h
        numeric[k] = -(energy_and_gradient(force_field, plus.reshape(-1, 3))[0] - energy_and_gradient(force_field, minus.reshape(-1, 3))[0]) / (2 * h)
    assert np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric) < 1e-5


def test_no_net_force_or_torque(butane):
    molecule, conformation = butane
    force_field = rest_force_field(molecule, conformation)
    x = Conformation(conformation.coords + np.random.default_rng(4).normal(0.0, 0.05, conformation.coords.size))
    f = forces(force_field, molecule, x).reshape(-1, 3)
    scale = np.abs(f).max()
    assert_allclose(f.sum(axis=0), 0.0, atol=1e-10 * scale)
    assert_allclose(np.cross(x.positions, f).sum(axis=0), 0.0, atol=1e-9 * scale)


def test_energy_invariant_and_forces_equivariant_under_rigid_motion(butane):
    molecule, conformation = butane
    force_field = rest_force_field(molecule, conformation)
    x = Conformation(conformation.coords + np.random.default_rng(5).normal(0.0, 0.05, conformation.coords.size))
    rotation = Rotation.random(random_state=6).as_matrix()
    moved = Conformation.from_positions(x.positions @ rotation.T + np.array([1.0, -2.0, 0.5]))
    assert energy(force_field, molecule, moved) == pytest.approx(energy(force_field, molecule, x), rel=1e-9)
    assert_allclose(
        forces(force_field, molecule, moved).reshape(-1, 3),
        forces(force_field, molecule, x).reshape(-1, 3) @ rotation.T,
        atol=1e-8,
    )


def test_coincident_bonded_atoms_raise():
    force_field = ForceField(bonds=[BondTerm(i=0, j=1, k_r=100.0, r0=1.5)])
    with pytest.raises(DataError):
        energy_and_gradient(force_field, np.zeros((2, 3)))


def test_force_field_larger_than_the_conformation_raises():
    force_field = ForceField(bonds=[BondTerm(i=0, j=3, k_r=100.0, r0=1.5)])
    with pytest.raises(DataError):
        energy_and_gradient(force_field, np.zeros((2, 3)))


def test_degenerate_torsion_is_skipped_with_a_warning(caplog):
    positions = np.array([[0.0, 0, 0], [1.5, 0, 0], [3.0, 0, 0], [4.0, 1.0, 0]])
    force_field = ForceField(torsions=[TorsionTerm(a=0, b=1, c=2, d=3, v=1.0, n=3)])
    with caplog.at_level(logging.WARNING):
        value, grad = energy_and_gradient(force_field, positions)
    assert value == 0.0
    assert_allclose(grad, 0.0)
    assert "degenerate" in caplog.text


def test_minimizer_at_equilibrium_takes_no_steps(butane):
    molecule, conformation = butane
    result = minimize(rest_force_field(molecule, conformation), molecule, conformation)
    assert result.converged and result.iterations == 0


def test_minimizer_leaves_the_eclipsed_backbone(butane):
    molecule, conformation = butane
    force_field = rest_force_field(molecule, conformation)
    torsions = [t for t in force_field.torsions if (t.b, t.c) != (1, 2)]
    torsions.append(TorsionTerm(a=0, b=1, c=2, d=3, v=1.0, n=3, gamma=0.0))
    force_field = ForceField(bonds=force_field.bonds, angles=force_field.angles, torsions=torsions)

    eclipsed = rotate_torsion(conformation, molecule.rotatable[1], -np.pi + 1e-3)
    result = minimize(force_field, molecule, eclipsed)
    assert result.converged
    assert np.all(np.diff(result.energies) <= 0.0)
    psi = dihedral(result.conformation.positions, 0, 1, 2, 3)
    assert np.cos(3.0 * psi) == pytest.approx(-1.0, abs=1e-6)
