"""Per-sample training views and the losses of every objective.

A view fixes, for one dataset entry in one epoch, which conformation feeds
the property head, which noisy conformation feeds the noise head and what the
denoising target is.  Algorithms differ only in these choices:

    frad              denoise x_fin = CAN + CGN,  target = CGN part
    coord             denoise x_fin = CGN,        target = CGN
    finetune          property on x
    noisy_nodes       property and denoise on x_fin = x + CGN
    frad_noisy_nodes  property on x, denoise on x_fin = CAN + CGN
"""

import hashlib
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from models.equivariant import EquivariantTransformer
from noise.perturb import hybrid_noise
from noise.rng import stream
from pes.dataset import DatasetEntry
from training.config import ObjectiveKind, TaskKind, TrainConfig
from utils.errors import DataError, NonFiniteLossError

logger = logging.getLogger(__name__)

DENOISE_OBJECTIVES = (ObjectiveKind.FRAD, ObjectiveKind.COORD)


@dataclass(frozen=True)
class TrainingView:
    index: int
    tag: str
    atomic_numbers: np.ndarray
    prop_input: Optional[np.ndarray]
    denoise_input: Optional[np.ndarray]
    denoise_target: Optional[np.ndarray]
    energy: float
    forces: Optional[np.ndarray] = None

    def input_hashes(self) -> Dict[str, Optional[str]]:
        def digest(array):
            return None if array is None else hashlib.sha256(np.ascontiguousarray(array).tobytes()).hexdigest()

        return {"prop": digest(self.prop_input), "denoise": digest(self.denoise_input)}


def _label(entry: DatasetEntry, task: TaskKind) -> float:
    return entry.gap if task == TaskKind.GAP else entry.label


def training_views(entry: DatasetEntry, index: int, config: TrainConfig, epoch: int = 0) -> TrainingView:
    """Inputs and targets of one sample; noise comes from stream (seed, epoch, index)."""
    objective = config.objective
    x = entry.conformation.positions
    needs_noise = objective != ObjectiveKind.FINETUNE
    prop_input = denoise_input = target = None

    if needs_noise:
        record = hybrid_noise(entry.molecule, entry.conformation, config.effective_noise(), stream(config.seed, epoch, index))
        denoise_input = record.x_fin.positions
        target = record.delta_cgn.reshape(-1, 3)

    if objective in (ObjectiveKind.FINETUNE, ObjectiveKind.FRAD_NOISY_NODES):
        prop_input = x
    elif objective == ObjectiveKind.NOISY_NODES:
        prop_input = denoise_input

    if config.task == TaskKind.FORCE and objective not in DENOISE_OBJECTIVES and entry.forces is None:
        raise DataError(f"Entry {entry.tag!r} has no force labels for the force task")
    return TrainingView(
        index=index,
        tag=entry.tag,
        atomic_numbers=entry.molecule.atomic_numbers,
        prop_input=prop_input,
        denoise_input=denoise_input,
        denoise_target=target,
        energy=_label(entry, config.task),
        forces=None if entry.forces is None else np.asarray(entry.forces).reshape(-1, 3),
    )


def property_loss(model: EquivariantTransformer, view: TrainingView, config: TrainConfig) -> torch.Tensor:
    z = torch.tensor(view.atomic_numbers)
    pos = torch.tensor(view.prop_input, dtype=torch.float64, requires_grad=config.task == TaskKind.FORCE)
    predicted = model(z, pos).prop
    energy_error = (predicted - view.energy) ** 2
    if config.task != TaskKind.FORCE:
        return energy_error
    (gradient,) = torch.autograd.grad(predicted, pos, create_graph=True)
    force_error = ((-gradient - torch.tensor(view.forces)) ** 2).mean()
    return config.w_f * force_error + config.w_e * energy_error


def denoise_loss(model: EquivariantTransformer, view: TrainingView) -> torch.Tensor:
    z = torch.tensor(view.atomic_numbers)
    pos = torch.tensor(view.denoise_input, dtype=torch.float64)
    predicted = model(z, pos).noise
    return ((predicted - torch.tensor(view.denoise_target)) ** 2).sum()


def sample_loss(model: EquivariantTransformer, view: TrainingView, config: TrainConfig) -> Tuple[torch.Tensor, Dict[str, float]]:
    objective = config.objective
    parts: Dict[str, float] = {}
    if objective in DENOISE_OBJECTIVES:
        loss = denoise_loss(model, view)
        parts["denoise"] = float(loss)
    elif objective == ObjectiveKind.FINETUNE:
        loss = property_loss(model, view, config)
        parts["property"] = float(loss)
    else:
        prop = property_loss(model, view, config)
        den = denoise_loss(model, view)
        loss = config.lambda_p * prop + config.lambda_n * den
        parts.update(property=float(prop), denoise=float(den))

    if not torch.isfinite(loss):
        raise NonFiniteLossError(view.tag or view.index, float(loss))
    return loss, parts


def batch_loss(model: EquivariantTransformer, views: Sequence[TrainingView], config: TrainConfig) -> torch.Tensor:
    """Mean sample loss, summed in batch order."""
    if not views:
        raise DataError("Empty batch")
    total = None
    for view in views:
        loss, _ = sample_loss(model, view, config)
        total = loss if total is None else total + loss
    return total / len(views)


def loss_and_grad(model: EquivariantTransformer, views: Sequence[TrainingView], config: TrainConfig) -> Tuple[float, np.ndarray]:
    """Loss and its gradient with respect to the flat parameter vector."""
    params: List[torch.nn.Parameter] = list(model.parameters())
    loss = batch_loss(model, views, config)
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    flat = torch.cat([
        (g if g is not None else torch.zeros_like(p)).reshape(-1) for g, p in zip(grads, params)
    ])
    return float(loss), flat.detach().numpy().copy()
