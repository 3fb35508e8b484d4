"""Least-squares C against the analytic map over a sweep of probe scales."""

import logging
from typing import Dict, List

import numpy as np
import pandas as pd

from config.run_config import ExperimentConfig
from noise.linearize import TargetKind, analytic_C_rn, force_accuracy, lstsq_C, score_target
from noise.perturb import NoiseKind, NoiseSpec, hybrid_noise
from noise.rng import stream
from pes.dataset import Dataset
from pes.forcefield import boltzmann_score
from utils.errors import FradError, with_context

logger = logging.getLogger(__name__)

ESTIMATE_C_COLUMNS = ("sigma", "tau", "c_error", "c_error_analytic", "pearson_rho", "cosine_mean", "n_molecules")
ESTIMATE_C_STREAM = 200


def estimate_c_rows(dataset: Dataset, experiment: ExperimentConfig, seed: int) -> List[Dict]:
    """One row per probe sigma; molecules without rotatable bonds are skipped."""
    entries = [entry for entry in dataset.entries[: experiment.n_molecules] if entry.molecule.rotatable]
    if not entries:
        logger.warning("No molecule with a rotatable bond; estimate-c rows will be empty")
    tau = experiment.estimate_tau
    rows = []
    for p, probe in enumerate(experiment.probe_sigmas):
        residual_sq = analytic_sq = total_sq = 0.0
        estimates, oracle = [], []
        spec = NoiseSpec(kind=NoiseKind.RN, sigma=probe, tau=tau)
        for index, entry in enumerate(entries):
            rng = stream(seed, ESTIMATE_C_STREAM + p, index)
            molecule, x_eq = entry.molecule, entry.conformation
            try:
                n_samples = max(experiment.n_probe_samples, len(molecule.rotatable))
                fitted = lstsq_C(molecule, x_eq, probe, n_samples, rng)
                analytic = analytic_C_rn(molecule, x_eq)
                deltas, displacements = fitted.probe_deltas, fitted.probe_displacements
                residual_sq += float(np.sum((displacements - deltas @ fitted.matrix.T) ** 2))
                analytic_sq += float(np.sum((displacements - deltas @ analytic.matrix.T) ** 2))
                total_sq += float(np.sum(displacements**2))

                for _ in range(experiment.samples_per_molecule):
                    record = hybrid_noise(molecule, x_eq, spec, rng)
                    oracle.append(boltzmann_score(entry.force_field, molecule, record.x_fin))
                    estimates.append(
                        score_target(
                            TargetKind.HYBRID,
                            record.x_fin,
                            x_eq,
                            C=fitted,
                            sigma=probe**2,
                            tau=tau,
                            project_rigid=experiment.project_rigid,
                        ).target
                    )
            except FradError as exc:
                raise with_context(exc, f"estimate-c sigma={probe:g}, molecule {entry.tag}") from exc

        if not entries:
            continue
        accuracy = force_accuracy(estimates, oracle)
        rows.append(
            {
                "sigma": probe,
                "tau": tau,
                "c_error": float(np.sqrt(residual_sq / total_sq)),
                "c_error_analytic": float(np.sqrt(analytic_sq / total_sq)),
                "pearson_rho": accuracy.pearson,
                "cosine_mean": accuracy.cosine_mean,
                "n_molecules": len(entries),
            }
        )
    return rows


def estimate_c_study(dataset: Dataset, experiment: ExperimentConfig, seed: int) -> pd.DataFrame:
    return pd.DataFrame(estimate_c_rows(dataset, experiment, seed), columns=list(ESTIMATE_C_COLUMNS))
