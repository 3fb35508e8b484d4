import numpy as np
import pytest
import torch
from numpy.testing import assert_allclose
from scipy.spatial.transform import Rotation

from models.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from models.equivariant import CosineCutoff, ModelConfig, build_model, flat_parameters
from utils.errors import CoincidentAtomsError, DataError

SMALL = ModelConfig(layers=2, features=16, rbf=8, cutoff=5.0)


def run(model, molecule, positions):
    z = torch.tensor(molecule.atomic_numbers)
    with torch.no_grad():
        output = model(z, torch.tensor(positions, dtype=torch.float64))
    return output.noise.numpy(), float(output.prop)


def test_outputs_are_rotation_equivariant(aspirin_like):
    molecule, conformation = aspirin_like
    model = build_model(SMALL, seed=0)
    noise, prop = run(model, molecule, conformation.positions)
    for k in range(20):
        rotation = Rotation.random(random_state=k).as_matrix()
        shift = np.random.default_rng(k).normal(size=3)
        moved_noise, moved_prop = run(model, molecule, conformation.positions @ rotation.T + shift)
        assert_allclose(moved_noise, noise @ rotation.T, atol=1e-6)
        assert moved_prop == pytest.approx(prop, abs=1e-6)


def test_outputs_follow_atom_permutations(butane):
    molecule, conformation = butane
    model = build_model(SMALL, seed=1)
    noise, prop = run(model, molecule, conformation.positions)
    order = np.random.default_rng(2).permutation(molecule.n_atoms)
    z = torch.tensor(molecule.atomic_numbers[order])
    with torch.no_grad():
        output = model(z, torch.tensor(conformation.positions[order]))
    assert_allclose(output.noise.numpy(), noise[order], atol=1e-9)
    assert float(output.prop) == pytest.approx(prop, abs=1e-9)


def test_vector_channels_are_normalized_to_their_gain(aspirin_like):
    molecule, conformation = aspirin_like
    model = build_model(SMALL, seed=3)
    gain = np.random.default_rng(3).uniform(0.5, 2.0, SMALL.features)
    with torch.no_grad():
        model.layers[-1].gain_v.copy_(torch.tensor(gain))
        _, v = model.encode(torch.tensor(molecule.atomic_numbers), torch.tensor(conformation.positions))
    norms = np.linalg.norm(v.numpy(), axis=1)
    assert norms.shape == (molecule.n_atoms, SMALL.features)
    assert_allclose(norms, np.broadcast_to(gain, norms.shape), rtol=1e-6)


def test_single_atom_has_no_noise_prediction():
    model = build_model(SMALL)
    with torch.no_grad():
        output = model(torch.tensor([6]), torch.zeros(1, 3, dtype=torch.float64))
    assert_allclose(output.noise.numpy(), 0.0, atol=0.0)
    assert np.isfinite(float(output.prop))


def test_coincident_atoms_are_reported():
    model = build_model(SMALL)
    with pytest.raises(CoincidentAtomsError) as info:
        model(torch.tensor([6, 6, 1]), torch.tensor([[0.0, 0, 0], [1.0, 0, 0], [1.0, 0, 0]], dtype=torch.float64))
    assert info.value.pair == (1, 2)


def test_cutoff_goes_smoothly_to_zero():
    cutoff = CosineCutoff(5.0)
    values = cutoff(torch.tensor([0.0, 5.0 - 1e-4, 5.0, 5.1], dtype=torch.float64))
    assert float(values[0]) == pytest.approx(1.0)
    assert 0.0 < float(values[1]) < 1e-7
    assert float(values[2]) == 0.0 and float(values[3]) == 0.0


def test_same_seed_same_parameters():
    assert np.array_equal(flat_parameters(build_model(SMALL, seed=4)), flat_parameters(build_model(SMALL, seed=4)))
    assert not np.array_equal(flat_parameters(build_model(SMALL, seed=4)), flat_parameters(build_model(SMALL, seed=5)))


def test_checkpoint_round_trip(tmp_path, butane):
    molecule, conformation = butane
    model = build_model(SMALL, seed=3)
    path = save_checkpoint(model, tmp_path / "model.ckpt")
    loaded = load_checkpoint(path)
    assert loaded.config == SMALL
    assert np.array_equal(flat_parameters(loaded), flat_parameters(model))
    assert_allclose(run(loaded, molecule, conformation.positions)[0], run(model, molecule, conformation.positions)[0], atol=0.0)


def test_bad_checkpoints_are_data_errors(tmp_path):
    path = save_checkpoint(build_model(SMALL), tmp_path / "model.ckpt")
    data = path.read_bytes()
    assert data.startswith(MAGIC)

    (tmp_path / "magic.ckpt").write_bytes(b"NOTACKPT" + data[8:])
    (tmp_path / "truncated.ckpt").write_bytes(data[:-8])
    (tmp_path / "short.ckpt").write_bytes(b"FRAD")
    for name in ("magic.ckpt", "truncated.ckpt", "short.ckpt", "missing.ckpt"):
        with pytest.raises(DataError):
            load_checkpoint(tmp_path / name)


def test_unknown_checkpoint_version(tmp_path):
    path = save_checkpoint(build_model(SMALL), tmp_path / "model.ckpt")
    data = bytearray(path.read_bytes())
    data[8:12] = (99).to_bytes(4, "little")
    path.write_bytes(bytes(data))
    with pytest.raises(DataError, match="version 99"):
        load_checkpoint(path)
