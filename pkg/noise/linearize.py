"""Linear maps from internal noise to Cartesian displacement, and the score targets built on them.

Near an equilibrium ``x_eq`` a chemical-aware perturbation moves the atoms by
``dx = C d + o(d)``.  ``C`` comes either analytically from the move tangents,
from central finite differences, or from a least-squares fit over probe
perturbations.  With ``C`` the Gaussian approximations of the noise give
closed-form conditional scores: ``-dx / tau^2`` for coordinate noise,
``-pinv(C S C^T) dx`` for chemical-aware noise and
``-(tau^2 I + C S C^T)^-1 dx`` for the hybrid.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg, stats

from chem.molecule import Conformation, Molecule
from config.settings import CONDITION_WARN, PINV_RTOL, TIKHONOV_DAMPING
from noise.geometry import InternalMove, apply_move, internal_coords, rn_moves, tangent
from noise.perturb import NoiseKind, NoiseSpec
from utils.errors import PreconditionError, UndefinedCorrelationError, UndefinedRatioError

logger = logging.getLogger(__name__)


class TargetKind(str, Enum):
    CGN = "CGN"
    CAN = "CAN"
    HYBRID = "Hybrid"


@dataclass(frozen=True)
class LinearMap:
    """C with its column moves.

    ``matrix`` rows are the 3N Cartesian coordinates in atom order, so it
    applies directly to displacements.  ``row_order`` is the key-atom-first
    atom permutation (the key atoms of the rotatable bonds in bond order,
    then every other atom) and ``arranged`` gives C with its rows in that
    order; its first ``key_count`` atom blocks form a lower-triangular
    block pattern.
    """

    matrix: np.ndarray
    moves: Tuple[InternalMove, ...]
    method: str
    probe_deltas: Optional[np.ndarray] = None
    probe_displacements: Optional[np.ndarray] = None
    row_order: Tuple[int, ...] = ()
    key_count: int = 0

    @property
    def n_columns(self) -> int:
        return self.matrix.shape[1]

    @property
    def arranged(self) -> np.ndarray:
        if not self.row_order:
            return self.matrix
        blocks = self.matrix.reshape(self.matrix.shape[0] // 3, 3, self.n_columns)
        return blocks[list(self.row_order)].reshape(3 * len(self.row_order), self.n_columns)


@dataclass(frozen=True)
class ScoreTarget:
    target: np.ndarray
    covariance: str
    rtol: Optional[float] = None


@dataclass(frozen=True)
class LinearizationReport:
    radius_sq_sums: np.ndarray
    residual: float
    per_atom_residual: np.ndarray
    per_atom_bound: np.ndarray
    bound: float
    c_error: Optional[float]
    bound_satisfied: bool


@dataclass(frozen=True)
class ForceAccuracy:
    pearson: float
    cosine_mean: float


def noise_moves(molecule: Molecule, x: Conformation, kind: NoiseKind = NoiseKind.RN) -> List[InternalMove]:
    if kind == NoiseKind.RN:
        return rn_moves(molecule)
    if kind == NoiseKind.VRN:
        return list(internal_coords(molecule, x, strict=False).moves)
    return []


def noise_covariance(spec: NoiseSpec, moves: Sequence[InternalMove]) -> np.ndarray:
    """Diagonal Sigma of the chemical-aware noise over the given moves."""
    if spec.kind == NoiseKind.RN:
        stds = np.full(len(moves), spec.sigma)
    elif spec.kind == NoiseKind.VRN:
        block_std = spec.block_stds()
        stds = np.array([block_std[move.block] for move in moves], dtype=np.float64)
    else:
        stds = np.zeros(len(moves))
    return np.diag(stds**2)


def analytic_C(molecule: Molecule, x: Conformation, kind: NoiseKind = NoiseKind.RN) -> LinearMap:
    molecule.check_conformation(x)
    moves = noise_moves(molecule, x, kind)
    positions = x.positions
    columns = [tangent(positions, move).reshape(-1) for move in moves]
    matrix = np.stack(columns, axis=1) if columns else np.zeros((x.coords.size, 0))
    return LinearMap(matrix, tuple(moves), "analytic", **row_arrangement(molecule, kind))


def analytic_C_rn(molecule: Molecule, x_eq: Conformation) -> LinearMap:
    """Columns u_j x (p_a - p_b) on the moving atoms of each rotatable bond."""
    return analytic_C(molecule, x_eq, NoiseKind.RN)


def numerical_C(molecule: Molecule, x: Conformation, kind: NoiseKind = NoiseKind.RN, h: float = 1e-5) -> LinearMap:
    """Central finite differences of each single move."""
    moves = noise_moves(molecule, x, kind)
    positions = x.positions
    columns = [
        ((apply_move(positions, move, h) - apply_move(positions, move, -h)) / (2.0 * h)).reshape(-1)
        for move in moves
    ]
    matrix = np.stack(columns, axis=1) if columns else np.zeros((x.coords.size, 0))
    return LinearMap(matrix, tuple(moves), "finite-difference", **row_arrangement(molecule, kind))


def displacement(positions: np.ndarray, moves: Sequence[InternalMove], deltas: np.ndarray) -> np.ndarray:
    """Exact Cartesian displacement of applying all moves in order."""
    moved = positions
    for move, value in zip(moves, deltas):
        moved = apply_move(moved, move, float(value))
    return (moved - positions).reshape(-1)


def lstsq_C(
    molecule: Molecule,
    x_eq: Conformation,
    probe_scale: float,
    n_samples: int,
    rng: np.random.Generator,
    kind: NoiseKind = NoiseKind.RN,
) -> LinearMap:
    """Least-squares C from probe perturbations d ~ N(0, probe_scale^2).

    Probes are drawn in antithetic pairs (d, -d), so ``n_samples`` is rounded
    up to an even count.  The normal equations carry a Tikhonov damping term.
    """
    moves = noise_moves(molecule, x_eq, kind)
    n_moves = len(moves)
    if probe_scale <= 0:
        raise PreconditionError(f"probe_scale must be positive, got {probe_scale}")
    if n_samples < n_moves:
        raise PreconditionError(f"lstsq_C needs at least {n_moves} samples, got {n_samples}")
    if n_moves == 0:
        return LinearMap(np.zeros((x_eq.coords.size, 0)), (), "least-squares", **row_arrangement(molecule, kind))

    half = probe_scale * rng.standard_normal(((n_samples + 1) // 2, n_moves))
    deltas = np.concatenate([half, -half], axis=0)
    positions = x_eq.positions
    displacements = np.stack([displacement(positions, moves, row) for row in deltas])

    gram = deltas.T @ deltas
    condition = np.linalg.cond(gram)
    if condition > CONDITION_WARN:
        logger.warning(f"Ill-conditioned least-squares design (condition {condition:.3e}); using damped solve")
    damped = gram + TIKHONOV_DAMPING * np.eye(n_moves)
    coefficients = linalg.solve(damped, deltas.T @ displacements, assume_a="pos")
    return LinearMap(coefficients.T, tuple(moves), "least-squares", deltas, displacements, **row_arrangement(molecule, kind))


def c_error(C: Union[LinearMap, np.ndarray], deltas: np.ndarray, displacements: np.ndarray) -> float:
    """||dX - dPsi C^T||_F / ||dX||_F over a batch of (delta, displacement) rows."""
    matrix = C.matrix if isinstance(C, LinearMap) else np.asarray(C)
    deltas = np.atleast_2d(deltas)
    displacements = np.atleast_2d(displacements)
    denominator = np.linalg.norm(displacements)
    if denominator == 0.0:
        raise UndefinedRatioError("C_error is undefined for an all-zero displacement batch")
    return float(np.linalg.norm(displacements - deltas @ matrix.T) / denominator)


def key_atom_rows(molecule: Molecule) -> List[int]:
    """Atom order with the key atoms of the rotatable bonds first, in bond order."""
    keys = [bond.key_atom for bond in molecule.rotatable]
    rest = set(keys)
    return keys + [atom for atom in range(molecule.n_atoms) if atom not in rest]


def row_arrangement(molecule: Molecule, kind: NoiseKind) -> dict:
    if kind != NoiseKind.RN:
        return {}
    return {"row_order": tuple(key_atom_rows(molecule)), "key_count": len(molecule.rotatable)}


def upper_block_max(linear_map: LinearMap) -> float:
    """Largest entry of the 3x1 blocks above the diagonal in the key-atom arrangement."""
    arranged = linear_map.arranged
    blocks = arranged.reshape(arranged.shape[0] // 3, 3, linear_map.n_columns)
    worst = 0.0
    for row in range(linear_map.key_count):
        upper = blocks[row, :, row + 1:]
        if upper.size:
            worst = max(worst, float(np.abs(upper).max()))
    return worst


def rotation_excess(delta):
    """Squared chord-minus-arc error of a unit-radius rotation by ``delta``."""
    delta = np.asarray(delta, dtype=np.float64)
    return delta**2 - 2.0 * delta * np.sin(delta) - 2.0 * np.cos(delta) + 2.0


def atom_bounds(radii: np.ndarray, members: np.ndarray, delta_psi: np.ndarray) -> np.ndarray:
    """Per-atom bound on the squared linearization residual.

    Applying the moves in order about their current axes equals applying
    rotations about the equilibrium axes innermost first.  Each rotation of
    atom ``a`` contributes at most ``r' sqrt(E(d)) + |d| e`` to the residual,
    with ``e`` the drift of ``a`` caused by the inner rotations so far and
    ``r' = r + e`` the shifted radius.  An atom carried by one bond only gets
    ``r^2 E(d)``.
    """
    excess = np.sqrt(np.maximum(rotation_excess(delta_psi), 0.0))
    chord = 2.0 * np.abs(np.sin(0.5 * delta_psi))
    bounds = np.zeros(radii.shape[0])
    for atom in range(radii.shape[0]):
        drift = total = 0.0
        for j in reversed(np.flatnonzero(members[atom])):
            radius = radii[atom, j] + drift
            total += radius * excess[j] + abs(delta_psi[j]) * drift
            drift += radius * chord[j]
        bounds[atom] = total**2
    return bounds


def linearization_bound_check(molecule: Molecule, x_eq: Conformation, delta_psi: Sequence[float]) -> LinearizationReport:
    """Exact residual of the RN linearization against the per-atom nested-rotation bound."""
    delta_psi = np.asarray(delta_psi, dtype=np.float64)
    linear_map = analytic_C_rn(molecule, x_eq)
    if delta_psi.shape != (linear_map.n_columns,):
        raise PreconditionError(f"Expected {linear_map.n_columns} torsion deltas, got shape {delta_psi.shape}")
    positions = x_eq.positions
    n_atoms = x_eq.n_atoms

    # tangent norm of a unit-speed rotation is the distance from the axis
    radii = np.linalg.norm(linear_map.matrix.reshape(n_atoms, 3, linear_map.n_columns), axis=1)
    members = np.zeros((n_atoms, linear_map.n_columns), dtype=bool)
    for j, move in enumerate(linear_map.moves):
        members[sorted(move.moving_set), j] = True

    dx = displacement(positions, linear_map.moves, delta_psi)
    diff = (dx - linear_map.matrix @ delta_psi).reshape(-1, 3)
    per_atom = (diff**2).sum(axis=1)
    per_atom_bound = atom_bounds(radii, members, delta_psi)
    residual = float(per_atom.sum())
    bound = float(per_atom_bound.sum())
    norm_dx = float(np.linalg.norm(dx))
    return LinearizationReport(
        radius_sq_sums=(radii**2).sum(axis=0),
        residual=residual,
        per_atom_residual=per_atom,
        per_atom_bound=per_atom_bound,
        bound=bound,
        c_error=float(np.sqrt(residual) / norm_dx) if norm_dx > 0.0 else None,
        bound_satisfied=bool(np.all(per_atom <= per_atom_bound * (1.0 + 1e-9) + 1e-12)),
    )


def rigid_projector(x: Conformation) -> np.ndarray:
    """Orthogonal projector removing infinitesimal translations and rotations."""
    positions = x.positions
    n = x.n_atoms
    centered = positions - positions.mean(axis=0)
    basis = []
    for axis in np.eye(3):
        basis.append(np.tile(axis, n))
        basis.append(np.cross(axis, centered).reshape(-1))
    basis = np.stack(basis, axis=1)
    u, singular, _ = np.linalg.svd(basis, full_matrices=False)
    rank = int((singular > 1e-10 * singular[0]).sum())
    q = u[:, :rank]
    return np.eye(3 * n) - q @ q.T


def covariance_matrix(C: np.ndarray, sigma, tau: float = 0.0) -> np.ndarray:
    """tau^2 I + C Sigma C^T for a scalar, diagonal or full Sigma."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim == 0:
        sigma = sigma * np.eye(C.shape[1])
    elif sigma.ndim == 1:
        sigma = np.diag(sigma)
    gamma = C @ sigma @ C.T
    gamma = 0.5 * (gamma + gamma.T)
    return gamma + tau**2 * np.eye(C.shape[0])


def score_target(
    kind: TargetKind,
    x_query: Conformation,
    x_ref: Conformation,
    C: Optional[Union[LinearMap, np.ndarray]] = None,
    sigma=None,
    tau: float = 0.0,
    project_rigid: bool = False,
) -> ScoreTarget:
    """Conditional score of ``x_query`` under Gaussian noise centred at ``x_ref``."""
    kind = TargetKind(kind)
    delta = x_query.coords - x_ref.coords
    projector = rigid_projector(x_ref) if project_rigid else None
    if projector is not None:
        delta = projector @ delta

    if kind == TargetKind.CGN:
        if tau <= 0:
            raise PreconditionError("The CGN score target needs tau > 0")
        return ScoreTarget(-delta / tau**2, "tau^2 I")

    if C is None or sigma is None:
        raise PreconditionError(f"The {kind.value} score target needs C and Sigma")
    matrix = C.matrix if isinstance(C, LinearMap) else np.asarray(C, dtype=np.float64)
    if projector is not None:
        matrix = projector @ matrix

    if kind == TargetKind.HYBRID and tau <= 0:
        logger.warning("Hybrid score target with tau = 0; falling back to the CAN pseudo-inverse")
        kind = TargetKind.CAN

    if kind == TargetKind.CAN:
        gamma1 = covariance_matrix(matrix, sigma)
        return ScoreTarget(-linalg.pinvh(gamma1, rtol=PINV_RTOL) @ delta, "Gamma1", PINV_RTOL)

    factor = linalg.cho_factor(covariance_matrix(matrix, sigma, tau))
    return ScoreTarget(-linalg.cho_solve(factor, delta), "Gamma2")


def force_accuracy(estimates: Sequence[np.ndarray], oracle: Sequence[np.ndarray]) -> ForceAccuracy:
    """Pearson correlation over all flattened components, plus the mean per-sample cosine."""
    if len(estimates) != len(oracle):
        raise PreconditionError(f"{len(estimates)} estimates for {len(oracle)} oracle samples")
    flat_est = np.concatenate([np.ravel(e) for e in estimates])
    flat_ref = np.concatenate([np.ravel(o) for o in oracle])
    if flat_est.shape != flat_ref.shape:
        raise PreconditionError("Estimated and oracle forces differ in length")
    if flat_est.size < 2 or np.std(flat_est) == 0.0 or np.std(flat_ref) == 0.0:
        raise UndefinedCorrelationError("Pearson correlation is undefined for zero-variance input")
    pearson = float(stats.pearsonr(flat_est, flat_ref)[0])

    cosines = []
    for e, o in zip(estimates, oracle):
        norm = np.linalg.norm(e) * np.linalg.norm(o)
        if norm > 0.0:
            cosines.append(float(np.dot(np.ravel(e), np.ravel(o)) / norm))
    cosine_mean = float(np.mean(cosines)) if cosines else float("nan")
    return ForceAccuracy(pearson, cosine_mean)
