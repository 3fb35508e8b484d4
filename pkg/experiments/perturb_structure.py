"""Perturb one structure file and write the noisy conformations with a JSON sidecar."""

import logging
from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel

from chem.fileio import emit_mol, emit_xyz, read_structure
from experiments.manifest import RunRecorder
from experiments.perturbation_scale import SCALE_DEFINITION
from noise.perturb import NoiseKind, NoiseSpec, apply_cgn, hybrid_noise, perturbation_scale
from noise.rng import stream
from utils.errors import DataError

logger = logging.getLogger(__name__)


class PerturbationSidecar(BaseModel):
    source: str
    noise: NoiseSpec
    seed: int
    blocks: List[str]
    delta_internal: List[float]
    delta_cgn: List[float]
    skipped: int
    perturbation_scale: float
    scale_definition: str = SCALE_DEFINITION


def perturb_file(path: Path, spec: NoiseSpec, seed: int, out_dir: Path, recorder: Optional[RunRecorder] = None) -> PerturbationSidecar:
    """x_med and x_fin as XYZ (and MOL when bonds are known), plus ``perturb.json``."""
    elements, x_eq, molecule = read_structure(path)
    if molecule is None and spec.kind != NoiseKind.CGN:
        raise DataError(f"{path} is XYZ and carries no bonds; {spec.kind.value} noise needs a MOL file")

    rng = stream(seed, 0, 0)
    if molecule is None:
        x_fin, delta_cgn = apply_cgn(x_eq, spec.tau, rng)
        x_med, delta_internal, blocks, skipped = x_eq, [], [], 0
    else:
        record = hybrid_noise(molecule, x_eq, spec, rng)
        x_med, x_fin, delta_cgn = record.x_med, record.x_fin, record.delta_cgn
        delta_internal, blocks, skipped = record.delta_internal.tolist(), list(record.blocks), record.skipped

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = {
        "x_med.xyz": emit_xyz(elements, x_med, comment="x_med"),
        "x_fin.xyz": emit_xyz(elements, x_fin, comment="x_fin"),
    }
    if molecule is not None:
        outputs["x_fin.mol"] = emit_mol(molecule, x_fin, title="x_fin")
    sidecar = PerturbationSidecar(
        source=str(path),
        noise=spec,
        seed=seed,
        blocks=blocks,
        delta_internal=list(delta_internal),
        delta_cgn=list(delta_cgn),
        skipped=skipped,
        perturbation_scale=perturbation_scale(x_eq, x_fin),
    )
    outputs["perturb.json"] = sidecar.model_dump_json(indent=2)

    for name, text in outputs.items():
        target = out_dir / name
        target.write_text(text, encoding="utf-8")
        if recorder is not None:
            recorder.add_output(target)
    if recorder is not None:
        recorder.add_input(Path(path))
    logger.info(f"Perturbed {path} with {spec.kind.value}: scale {sidecar.perturbation_scale:.4f}")
    return sidecar
