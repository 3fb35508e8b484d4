"""Frad pre-training, Noisy Nodes fine-tuning (coupled and decoupled) and evaluation."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np
import torch

from models.checkpoint import save_checkpoint
from models.equivariant import EquivariantTransformer
from noise.rng import shuffle_stream
from pes.dataset import Dataset
from training.config import ObjectiveKind, TaskKind, TrainConfig
from training.metrics import Metrics, compute_metrics
from training.objectives import batch_loss, training_views
from training.schedule import build_scheduler
from utils.errors import NumericalError, NonFiniteLossError, PreconditionError

logger = logging.getLogger(__name__)

PRETRAIN_OBJECTIVES = (ObjectiveKind.FRAD, ObjectiveKind.COORD)


@dataclass
class TrainResult:
    model: EquivariantTransformer
    trace: List[dict] = field(default_factory=list)
    metrics: Optional[Metrics] = None
    checkpoints: List[Path] = field(default_factory=list)
    skipped: int = 0


def seed_everything(seed: int) -> None:
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True)


def epoch_batches(n: int, batch_size: int, seed: int, epoch: int) -> List[np.ndarray]:
    """Fixed shuffle per epoch; the last partial batch is kept."""
    order = shuffle_stream(seed, epoch).permutation(n)
    return [order[start:start + batch_size] for start in range(0, n, batch_size)]


def smoothed(losses: List[float], alpha: float = 0.1) -> List[float]:
    out, value = [], None
    for loss in losses:
        value = loss if value is None else (1.0 - alpha) * value + alpha * loss
        out.append(value)
    return out


def train(
    model: EquivariantTransformer,
    dataset: Dataset,
    config: TrainConfig,
    checkpoint_dir: Optional[Path] = None,
    on_step: Optional[Callable[[dict], None]] = None,
) -> TrainResult:
    """Optimize ``model`` on ``dataset`` under ``config.objective``."""
    if dataset.n == 0:
        raise PreconditionError("Training needs a non-empty dataset")
    seed_everything(config.seed)
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=config.lr, betas=(0.9, 0.999), eps=1e-8, weight_decay=config.weight_decay
    )
    steps_per_epoch = -(-dataset.n // config.batch_size)
    total_steps = max(steps_per_epoch * config.epochs, 1)
    scheduler = build_scheduler(optimizer, config, total_steps)
    result = TrainResult(model)
    step = 0

    model.train()
    for epoch in range(config.epochs):
        for batch in epoch_batches(dataset.n, config.batch_size, config.seed, epoch):
            views = []
            for index in batch:
                entry = dataset[int(index)]
                try:
                    views.append(training_views(entry, int(index), config, epoch))
                except NumericalError as exc:
                    result.skipped += 1
                    logger.warning(f"Skipping degenerate sample {entry.tag}: {exc}")
            if not views:
                continue

            lr = optimizer.param_groups[0]["lr"]
            optimizer.zero_grad()
            try:
                loss = batch_loss(model, views, config)
            except NonFiniteLossError as exc:
                exc.trace = list(result.trace)
                logger.error(f"Non-finite loss at step {step}; halting with {len(result.trace)} trace rows")
                raise
            loss.backward()
            optimizer.step()
            scheduler.step()

            row = {"step": step, "epoch": epoch, "lr": lr, "loss": float(loss)}
            result.trace.append(row)
            if on_step is not None:
                on_step(row)
            step += 1

        logger.info(f"Epoch {epoch}: last loss {result.trace[-1]['loss'] if result.trace else float('nan'):.6g}")
        if checkpoint_dir is not None and config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
            result.checkpoints.append(save_checkpoint(model, Path(checkpoint_dir) / f"epoch-{epoch + 1:03d}.ckpt"))
    model.eval()
    return result


def pretrain_frad(config: TrainConfig, dataset: Dataset, model: EquivariantTransformer, **kwargs) -> TrainResult:
    """Denoise the CGN part of CAN + CGN (or pure CGN for coord)."""
    if config.objective not in PRETRAIN_OBJECTIVES:
        raise PreconditionError(f"pretrain_frad needs objective frad or coord, got {config.objective.value}")
    return train(model, dataset, config, **kwargs)


def finetune(config: TrainConfig, dataset: Dataset, model: EquivariantTransformer, validation: Optional[Dataset] = None, **kwargs) -> TrainResult:
    """Plain supervised fine-tuning or either Noisy Nodes variant, then evaluation."""
    if config.objective in PRETRAIN_OBJECTIVES:
        raise PreconditionError(f"{config.objective.value} is a pre-training objective")
    result = train(model, dataset, config, **kwargs)
    result.metrics = evaluate(model, validation if validation is not None and validation.n else dataset, config.task)
    return result


def finetune_noisy_nodes(config: TrainConfig, dataset: Dataset, model: EquivariantTransformer, **kwargs) -> TrainResult:
    """Coupled Noisy Nodes: one coordinate-noised input feeds both heads."""
    return finetune(config.model_copy(update={"objective": ObjectiveKind.NOISY_NODES}), dataset, model, **kwargs)


def finetune_frad_nn(config: TrainConfig, dataset: Dataset, model: EquivariantTransformer, **kwargs) -> TrainResult:
    """Decoupled Noisy Nodes: clean input for the property head, CAN + CGN input for the noise head."""
    return finetune(config.model_copy(update={"objective": ObjectiveKind.FRAD_NOISY_NODES}), dataset, model, **kwargs)


def predict(model: EquivariantTransformer, dataset: Dataset, task: TaskKind) -> Tuple[np.ndarray, np.ndarray]:
    """Predictions and labels, flattened over force components for the force task."""
    predictions, labels = [], []
    for entry in dataset:
        z = torch.tensor(entry.molecule.atomic_numbers)
        pos = torch.tensor(entry.conformation.positions, dtype=torch.float64, requires_grad=task == TaskKind.FORCE)
        output = model(z, pos).prop
        if task == TaskKind.FORCE:
            if entry.forces is None:
                raise PreconditionError(f"Entry {entry.tag!r} has no force labels")
            (gradient,) = torch.autograd.grad(output, pos)
            predictions.append(-gradient.detach().numpy().reshape(-1))
            labels.append(np.asarray(entry.forces).reshape(-1))
        else:
            predictions.append(np.array([float(output)]))
            labels.append(np.array([entry.gap if task == TaskKind.GAP else entry.label]))
    return np.concatenate(predictions), np.concatenate(labels)


def evaluate(model: EquivariantTransformer, dataset: Dataset, task: TaskKind = TaskKind.ENERGY) -> Metrics:
    if dataset.n == 0:
        raise PreconditionError("Evaluation needs a non-empty dataset")
    predictions, labels = predict(model, dataset, TaskKind(task))
    return compute_metrics(predictions, labels)
