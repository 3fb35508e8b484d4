import numpy as np
import pytest

from chem.builder import build_conformation
from chem.molecule import Conformation, Molecule
from pes.dataset import GeneratorConfig, generate_dataset


def hydrogenate(heavy, bonds, hydrogens):
    """Append ``hydrogens[a]`` H atoms to each heavy atom ``a`` in heavy-atom order."""
    elements = list(heavy)
    bonds = [tuple(bond) for bond in bonds]
    for atom, count in enumerate(hydrogens):
        for _ in range(count):
            elements.append("H")
            bonds.append((atom, len(elements) - 1, 1))
    return Molecule.from_topology(elements, bonds)


def built(molecule):
    return molecule, build_conformation(molecule)


@pytest.fixture
def methane():
    return built(hydrogenate(["C"], [], [4]))


@pytest.fixture
def ethane():
    return built(hydrogenate(["C", "C"], [(0, 1, 1)], [3, 3]))


@pytest.fixture
def butane():
    """Trans n-butane C0-C1-C2-C3; hydrogens from index 4."""
    return built(hydrogenate(["C"] * 4, [(0, 1, 1), (1, 2, 1), (2, 3, 1)], [3, 2, 2, 3]))


@pytest.fixture
def propane():
    """Atom 0 is the central carbon, so its two C-C axes are siblings."""
    return built(hydrogenate(["C"] * 3, [(0, 1, 1), (0, 2, 1)], [2, 3, 3]))


@pytest.fixture
def propene():
    return built(hydrogenate(["C"] * 3, [(0, 1, 2), (1, 2, 1)], [2, 1, 3]))


@pytest.fixture
def benzene():
    ring = [(k, (k + 1) % 6, 2 if k % 2 == 0 else 1) for k in range(6)]
    return built(hydrogenate(["C"] * 6, ring, [1] * 6))


@pytest.fixture
def cyclohexane():
    ring = [(k, (k + 1) % 6, 1) for k in range(6)]
    return built(hydrogenate(["C"] * 6, ring, [2] * 6))


@pytest.fixture
def aspirin_like():
    """Aromatic ring with a carboxyl on C0 and a hydroxyl on C1: three rotatable axes."""
    heavy = ["C"] * 7 + ["O", "O", "O"]
    bonds = [(k, (k + 1) % 6, 2 if k % 2 == 0 else 1) for k in range(6)]
    bonds += [(0, 6, 1), (6, 7, 2), (6, 8, 1), (1, 9, 1)]
    return built(hydrogenate(heavy, bonds, [0, 0, 1, 1, 1, 1, 0, 0, 1, 1]))


@pytest.fixture
def quartet():
    """C-C-C-C with one moving atom at unit distance from the (1, 2) axis."""
    molecule = Molecule.from_topology(["C"] * 4, [(0, 1, 1), (1, 2, 1), (2, 3, 1)])
    coords = [[-0.5, 1.0, 0.0], [0.0, 0.0, 0.0], [1.5, 0.0, 0.0], [2.0, 1.0, 0.0]]
    return molecule, Conformation.from_positions(coords)


@pytest.fixture
def bent_triatomic():
    theta0 = 1.9
    molecule = Molecule.from_topology(["C"] * 3, [(0, 1, 1), (1, 2, 1)])
    coords = [[1.5, 0.0, 0.0], [0.0, 0.0, 0.0], [1.5 * np.cos(theta0), 1.5 * np.sin(theta0), 0.0]]
    return molecule, Conformation.from_positions(coords), theta0


@pytest.fixture(scope="session")
def small_dataset():
    return generate_dataset(GeneratorConfig(count=4, min_chain=3, max_chain=4, ring_prob=0.0), seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
