"""Force accuracy of closed-form score targets.

Sampling and force estimation are decoupled: each setting draws hybrid
samples around the equilibria, each target kind turns a sample into a force
estimate, and the estimates are correlated with the oracle score
``-grad E / kT`` at the same sample.
"""

import logging
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from config.run_config import ExperimentConfig
from noise.linearize import LinearMap, TargetKind, analytic_C_rn, force_accuracy, lstsq_C, score_target
from noise.perturb import NoiseKind, NoiseSpec, hybrid_noise
from noise.rng import stream
from pes.dataset import Dataset, DatasetEntry
from pes.forcefield import boltzmann_score
from utils.errors import FradError, with_context

logger = logging.getLogger(__name__)

FORCE_ACCURACY_COLUMNS = ("seed", "setting", "sigma", "tau", "kind", "pearson_rho", "cosine_mean", "c_error")
FORCE_ACCURACY_STREAM = 100


def sampling_spec(sigma: float, tau: float) -> NoiseSpec:
    """Rotation noise of std ``sigma`` plus coordinate noise ``tau``; coordinate noise only when sigma is 0."""
    return NoiseSpec(kind=NoiseKind.RN if sigma > 0 else NoiseKind.CGN, sigma=sigma, tau=tau)


def setting_label(sigma: float, tau: float) -> str:
    return f"tau={tau:g}" if sigma == 0 else f"sigma={sigma:g},tau={tau:g}"


def estimator_map(entry: DatasetEntry, experiment: ExperimentConfig, rng: np.random.Generator, probe_scale: float) -> LinearMap:
    if experiment.c_method == "lstsq":
        n_samples = max(experiment.n_probe_samples, len(entry.molecule.rotatable))
        return lstsq_C(entry.molecule, entry.conformation, probe_scale, n_samples, rng)
    return analytic_C_rn(entry.molecule, entry.conformation)


def force_estimate(
    kind: TargetKind, entry: DatasetEntry, x_query, linear_map: LinearMap, experiment: ExperimentConfig, tau: float
) -> np.ndarray:
    return score_target(
        kind,
        x_query,
        entry.conformation,
        C=linear_map,
        sigma=experiment.estimator_sigma**2,
        tau=tau,
        project_rigid=experiment.project_rigid,
    ).target


def force_accuracy_rows(dataset: Dataset, experiment: ExperimentConfig, seed: int) -> List[Dict]:
    """One row per (sampling setting, target kind)."""
    entries = dataset.entries[: experiment.n_molecules]
    rows = []
    for s, (sigma, tau) in enumerate(experiment.settings):
        label = setting_label(sigma, tau)
        spec = sampling_spec(sigma, tau)
        estimates: Dict[TargetKind, List[np.ndarray]] = {kind: [] for kind in experiment.target_kinds}
        oracle: List[np.ndarray] = []
        residual_sq = total_sq = 0.0

        for index, entry in enumerate(entries):
            rng = stream(seed, FORCE_ACCURACY_STREAM + s, index)
            try:
                linear_map = estimator_map(entry, experiment, rng, sigma if sigma > 0 else experiment.estimator_sigma)
                for _ in range(experiment.samples_per_molecule):
                    record = hybrid_noise(entry.molecule, entry.conformation, spec, rng)
                    oracle.append(boltzmann_score(entry.force_field, entry.molecule, record.x_fin))
                    for kind in experiment.target_kinds:
                        estimates[kind].append(force_estimate(kind, entry, record.x_fin, linear_map, experiment, tau))
                    if record.delta_internal.size:
                        dx = record.x_med.coords - entry.conformation.coords
                        residual_sq += float(np.sum((dx - linear_map.matrix @ record.delta_internal) ** 2))
                        total_sq += float(np.sum(dx**2))
            except FradError as exc:
                raise with_context(exc, f"force-accuracy {label}, molecule {entry.tag}") from exc

        setting_c_error = float(np.sqrt(residual_sq / total_sq)) if total_sq > 0 else float("nan")
        for kind in experiment.target_kinds:
            try:
                accuracy = force_accuracy(estimates[kind], oracle)
            except FradError as exc:
                raise with_context(exc, f"force-accuracy {label}, kind {kind.value}") from exc
            rows.append(
                {
                    "seed": seed,
                    "setting": label,
                    "sigma": sigma,
                    "tau": tau,
                    "kind": kind.value,
                    "pearson_rho": accuracy.pearson,
                    "cosine_mean": accuracy.cosine_mean,
                    "c_error": float("nan") if kind == TargetKind.CGN else setting_c_error,
                }
            )
            logger.info(f"{label} {kind.value}: rho={accuracy.pearson:.4f} cosine={accuracy.cosine_mean:.4f}")
    return rows


def force_accuracy_study(dataset: Dataset, experiment: ExperimentConfig, seeds: Optional[Sequence[int]] = None) -> pd.DataFrame:
    seeds = list(seeds) if seeds is not None else [experiment.seed + k for k in range(experiment.n_seeds)]
    rows = [row for seed in seeds for row in force_accuracy_rows(dataset, experiment, seed)]
    return pd.DataFrame(rows, columns=list(FORCE_ACCURACY_COLUMNS))


def median_by_setting(frame: pd.DataFrame) -> pd.DataFrame:
    """Median correlation and cosine over seeds for each (setting, kind)."""
    grouped = frame.groupby(["setting", "kind"], sort=False)[["pearson_rho", "cosine_mean"]].median()
    return grouped.reset_index()
