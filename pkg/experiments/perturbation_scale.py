"""Mean per-atom displacement of a noise setting, as a proxy for how far samples reach."""

import logging
from typing import Dict, List

import numpy as np
import pandas as pd

from config.run_config import ExperimentConfig
from noise.perturb import NoiseKind, NoiseSpec, hybrid_noise, perturbation_scale
from noise.rng import stream
from pes.dataset import Dataset, DatasetEntry
from utils.errors import FradError, with_context

logger = logging.getLogger(__name__)

SCALE_DEFINITION = "mean per-atom displacement norm"
PERTURBATION_SCALE_COLUMNS = ("kind", "sigma", "tau", "perturbation_scale", "n_molecules", "definition")
PERTURBATION_SCALE_STREAM = 300


def molecule_scale(entry: DatasetEntry, spec: NoiseSpec, draws: int, rng: np.random.Generator) -> float:
    """Average perturbation scale of ``draws`` samples around one equilibrium."""
    scales = [
        perturbation_scale(entry.conformation, hybrid_noise(entry.molecule, entry.conformation, spec, rng).x_fin)
        for _ in range(draws)
    ]
    return float(np.mean(scales))


def molecule_scales(dataset: Dataset, spec: NoiseSpec, draws: int, seed: int, setting: int = 0) -> np.ndarray:
    return np.array(
        [
            molecule_scale(entry, spec, draws, stream(seed, PERTURBATION_SCALE_STREAM + setting, index))
            for index, entry in enumerate(dataset)
        ],
        dtype=np.float64,
    )


def perturbation_scale_rows(dataset: Dataset, experiment: ExperimentConfig, seed: int) -> List[Dict]:
    entries = Dataset(dataset.entries[: experiment.n_molecules])
    rows = []
    for s, (kind, sigma, tau) in enumerate(experiment.scale_settings):
        spec = NoiseSpec(kind=NoiseKind(kind), sigma=sigma, tau=tau)
        try:
            scales = molecule_scales(entries, spec, experiment.scale_draws, seed, s)
        except FradError as exc:
            raise with_context(exc, f"perturbation-scale {spec.kind.value} sigma={sigma:g} tau={tau:g}") from exc
        mean = float(scales.mean()) if scales.size else float("nan")
        logger.info(f"{spec.kind.value} sigma={sigma:g} tau={tau:g}: scale {mean:.4f}")
        rows.append(
            {
                "kind": spec.kind.value,
                "sigma": sigma,
                "tau": tau,
                "perturbation_scale": mean,
                "n_molecules": int(scales.size),
                "definition": SCALE_DEFINITION,
            }
        )
    return rows


def perturbation_scale_study(dataset: Dataset, experiment: ExperimentConfig, seed: int) -> pd.DataFrame:
    return pd.DataFrame(perturbation_scale_rows(dataset, experiment, seed), columns=list(PERTURBATION_SCALE_COLUMNS))
