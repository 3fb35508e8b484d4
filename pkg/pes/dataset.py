"""Synthetic molecules with verified equilibria, labels and force frames.

Skeletons are random C/N/O trees, optionally holding one saturated carbon
ring that contains atom 0, filled with hydrogens to valence.  Force-field
parameters are drawn around the built geometry, the geometry is minimized,
and only entries whose largest gradient component is below the audit
threshold are kept.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import logsumexp

from chem.builder import build_conformation
from chem.fileio import ManifestRecord, read_manifest, write_manifest
from chem.molecule import Conformation, Molecule
from noise.geometry import bond_angle, bond_length, dihedral, wrap_angle
from noise.perturb import NoiseSpec, hybrid_noise
from noise.rng import stream
from pes.forcefield import AngleTerm, BondTerm, ForceField, TorsionTerm, energy, forces
from pes.minimize import minimize
from utils.errors import DataError

logger = logging.getLogger(__name__)

AUDIT_GTOL = 1e-6
VALENCE = {"C": 4, "N": 3, "O": 2}


class GeneratorConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    count: int = Field(200, ge=0)
    min_chain: int = Field(3, ge=1)
    max_chain: int = Field(6, ge=1)
    branch_prob: float = Field(0.3, ge=0.0, le=1.0)
    ring_prob: float = Field(0.2, ge=0.0, le=1.0)
    ring_sizes: Tuple[int, ...] = (5, 6)
    hetero_prob: float = Field(0.2, ge=0.0, le=1.0)
    double_bond_prob: float = Field(0.1, ge=0.0, le=1.0)
    k_r_range: Tuple[float, float] = (100.0, 400.0)
    k_theta_range: Tuple[float, float] = (50.0, 150.0)
    torsion_v_range: Tuple[float, float] = (0.5, 2.0)
    double_v_range: Tuple[float, float] = (4.0, 8.0)
    jitter_r: float = Field(0.05, ge=0.0)
    jitter_theta: float = Field(0.05, ge=0.0)
    seed: int = 0


@dataclass(frozen=True)
class DatasetEntry:
    molecule: Molecule
    conformation: Conformation
    force_field: ForceField
    label: float
    gap: float = 0.0
    tag: str = ""
    forces: Optional[np.ndarray] = None

    def to_record(self) -> ManifestRecord:
        return ManifestRecord(
            elements=list(self.molecule.elements),
            bonds=[tuple(bond) for bond in self.molecule.bonds],
            coords=self.conformation.coords.tolist(),
            tag=self.tag,
            label=self.label,
            gap=self.gap,
            forces=None if self.forces is None else np.asarray(self.forces).tolist(),
            force_field=self.force_field.model_dump(),
        )

    @classmethod
    def from_record(cls, record: ManifestRecord) -> "DatasetEntry":
        if record.force_field is None or record.label is None:
            raise DataError(f"Manifest record {record.tag!r} carries no force field or label")
        molecule, conformation = record.to_structure()
        return cls(
            molecule=molecule,
            conformation=conformation,
            force_field=ForceField.model_validate(record.force_field),
            label=record.label,
            gap=record.gap or 0.0,
            tag=record.tag,
            forces=None if record.forces is None else np.asarray(record.forces, dtype=np.float64),
        )


@dataclass
class Dataset:
    entries: List[DatasetEntry] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, index: int) -> DatasetEntry:
        return self.entries[index]

    def save(self, path: Path) -> Path:
        return write_manifest(path, (entry.to_record() for entry in self.entries))

    @classmethod
    def load(cls, path: Path) -> "Dataset":
        return cls([DatasetEntry.from_record(record) for record in read_manifest(path)])

    def split(self, fraction: float, seed: int) -> Tuple["Dataset", "Dataset"]:
        """Deterministic random split into (first, rest) with ``fraction`` in the first part."""
        order = stream(seed, 0, 0).permutation(self.n)
        cut = int(round(fraction * self.n))
        return Dataset([self.entries[k] for k in order[:cut]]), Dataset([self.entries[k] for k in order[cut:]])


def random_skeleton(config: GeneratorConfig, rng: np.random.Generator) -> Molecule:
    """Random heavy-atom skeleton filled with hydrogens."""
    n_heavy = int(rng.integers(config.min_chain, max(config.min_chain, config.max_chain) + 1))
    elements: List[str] = []
    bonds: List[List[int]] = []
    free = []

    ring_size = 0
    if config.ring_sizes and rng.random() < config.ring_prob:
        ring_size = int(rng.choice(config.ring_sizes))
        for k in range(ring_size):
            elements.append("C")
            free.append(2)
            bonds.append([k, (k + 1) % ring_size, 1])
        n_heavy = max(n_heavy, ring_size)

    for atom in range(len(elements), n_heavy):
        symbol = "C"
        if rng.random() < config.hetero_prob:
            symbol = "N" if rng.random() < 0.5 else "O"
        candidates = [a for a in range(len(elements)) if free[a] > 0]
        if atom == 0:
            elements.append(symbol)
            free.append(VALENCE[symbol])
            continue
        if not candidates:
            break
        if rng.random() < config.branch_prob or (atom - 1) not in candidates:
            parent = int(rng.choice(candidates))
        else:
            parent = atom - 1
        elements.append(symbol)
        free.append(VALENCE[symbol] - 1)
        free[parent] -= 1
        bonds.append([parent, atom, 1])

    # at most one double bond per atom, never on the ring
    has_double = set()
    for bond in bonds:
        i, j = bond[0], bond[1]
        if i < ring_size or j < ring_size or i in has_double or j in has_double:
            continue
        if free[i] >= 1 and free[j] >= 1 and rng.random() < config.double_bond_prob:
            bond[2] = 2
            free[i] -= 1
            free[j] -= 1
            has_double.update((i, j))

    n_heavy_placed = len(elements)
    for atom in range(n_heavy_placed):
        for _ in range(free[atom]):
            elements.append("H")
            bonds.append([atom, len(elements) - 1, 1])
    return Molecule.from_topology(elements, bonds)


def _uniform(rng: np.random.Generator, bounds: Tuple[float, float]) -> float:
    return float(rng.uniform(bounds[0], bounds[1]))


def random_force_field(
    molecule: Molecule, conformation: Conformation, config: GeneratorConfig, rng: np.random.Generator
) -> ForceField:
    """Parameters centred on the built geometry, with ring internals left unjittered."""
    positions = conformation.positions
    bonds = []
    for i, j, _ in molecule.bonds:
        jitter = 0.0 if molecule.is_ring_bond(i, j) else rng.uniform(-config.jitter_r, config.jitter_r)
        bonds.append(BondTerm(i=i, j=j, k_r=_uniform(rng, config.k_r_range), r0=bond_length(positions, i, j) + jitter))

    angles = []
    for j in range(molecule.n_atoms):
        neighbors = molecule.neighbors(j)
        for x, i in enumerate(neighbors):
            for k in neighbors[x + 1:]:
                in_ring = molecule.is_ring_bond(i, j) and molecule.is_ring_bond(j, k)
                jitter = 0.0 if in_ring else rng.uniform(-config.jitter_theta, config.jitter_theta)
                theta0 = float(np.clip(bond_angle(positions, i, j, k) + jitter, 0.0, np.pi))
                angles.append(AngleTerm(i=i, j=j, k=k, k_theta=_uniform(rng, config.k_theta_range), theta0=theta0))

    torsions = []
    for b, c in molecule.oriented_bridges:
        order = molecule.bond_order(b, c)
        if order > 2 or molecule.degree(b) < 2 or molecule.degree(c) < 2:
            continue
        a = next(n for n in molecule.neighbors(b) if n != c)
        d = next(n for n in molecule.neighbors(c) if n != b)
        n = 3 if order == 1 else 2
        v = _uniform(rng, config.torsion_v_range if order == 1 else config.double_v_range)
        # the built torsion sits at a minimum of the term
        gamma = float(wrap_angle(n * dihedral(positions, a, b, c, d) - np.pi))
        torsions.append(TorsionTerm(a=a, b=b, c=c, d=d, v=v, n=n, gamma=gamma))
    return ForceField(bonds=bonds, angles=angles, torsions=torsions)


def softmin_gap(force_field: ForceField) -> float:
    """-kT log sum_t exp(-2 V_t / kT); 0 without torsion terms."""
    barriers = np.array([2.0 * t.v for t in force_field.torsions], dtype=np.float64)
    if barriers.size == 0:
        return 0.0
    return float(-force_field.kT * logsumexp(-barriers / force_field.kT))


def make_entry(molecule: Molecule, force_field: ForceField, start: Conformation, tag: str) -> Optional[DatasetEntry]:
    """Minimize and audit; None when the equilibrium fails the gradient audit."""
    result = minimize(force_field, molecule, start)
    max_grad = float(np.max(np.abs(forces(force_field, molecule, result.conformation)), initial=0.0))
    if max_grad >= AUDIT_GTOL:
        logger.warning(f"Skipping {tag}: equilibrium audit failed (max |grad| {max_grad:.3e}, converged={result.converged})")
        return None
    return DatasetEntry(
        molecule=molecule,
        conformation=result.conformation,
        force_field=force_field,
        label=energy(force_field, molecule, result.conformation),
        gap=softmin_gap(force_field),
        tag=tag,
    )


def generate_dataset(config: GeneratorConfig, seed: Optional[int] = None) -> Dataset:
    """Generate ``config.count`` audited entries; attempt k uses stream (seed, 0, k)."""
    seed = config.seed if seed is None else seed
    entries: List[DatasetEntry] = []
    attempt = 0
    max_attempts = 3 * config.count
    while len(entries) < config.count and attempt < max_attempts:
        rng = stream(seed, 0, attempt)
        tag = f"mol-{attempt:05d}"
        attempt += 1
        try:
            molecule = random_skeleton(config, rng)
            start = build_conformation(molecule)
            force_field = random_force_field(molecule, start, config, rng)
        except DataError as exc:
            logger.warning(f"Skipping {tag}: {exc}")
            continue
        entry = make_entry(molecule, force_field, start, tag)
        if entry is not None:
            entries.append(entry)
    if len(entries) < config.count:
        logger.warning(f"Generated {len(entries)} of {config.count} requested entries in {max_attempts} attempts")
    logger.info(f"Generated dataset with {len(entries)} entries (seed {seed})")
    return Dataset(entries)


def sample_frames(dataset: Dataset, spec: NoiseSpec, frames_per_entry: int, seed: int) -> Dataset:
    """Non-equilibrium frames around each equilibrium, labelled with energy and forces."""
    frames = []
    for index, entry in enumerate(dataset):
        rng = stream(seed, 1, index)
        for k in range(frames_per_entry):
            frame = hybrid_noise(entry.molecule, entry.conformation, spec, rng).x_fin
            frames.append(
                DatasetEntry(
                    molecule=entry.molecule,
                    conformation=frame,
                    force_field=entry.force_field,
                    label=energy(entry.force_field, entry.molecule, frame),
                    gap=entry.gap,
                    tag=f"{entry.tag}/frame-{k}",
                    forces=forces(entry.force_field, entry.molecule, frame),
                )
            )
    return Dataset(frames)
