"""Stages shared by the CLI and the chained gen-data -> pretrain -> finetune -> eval pipeline."""

import logging
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Tuple

import pandas as pd

from config.run_config import RunConfig
from experiments.manifest import RunRecorder
from models.checkpoint import load_checkpoint, save_checkpoint
from models.equivariant import EquivariantTransformer, build_model
from pes.dataset import Dataset, generate_dataset, sample_frames
from training.config import TaskKind, TrainConfig
from training.loops import TrainResult, evaluate, finetune, pretrain_frad, smoothed
from training.metrics import Metrics
from utils.errors import NonFiniteLossError, StageError
from utils.reports import write_csv

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ("step", "epoch", "lr", "loss", "loss_smoothed")
METRICS_COLUMNS = ("split", "task", "rmse", "mae", "pearson", "spearman", "count")


@dataclass
class PipelineResult:
    dataset: Dataset
    pretrain: TrainResult
    finetune: TrainResult
    metrics: Metrics
    manifest: Path


@contextmanager
def pipeline_stage(name: str, recorder: RunRecorder) -> Iterator[None]:
    """Wrap a stage: on failure its outputs get a ``.failed`` suffix and the error names the stage."""
    mark = len(recorder.outputs)
    logger.info(f"Stage {name} started")
    try:
        yield
    except Exception as exc:
        for path in recorder.outputs[mark:]:
            if path.exists():
                failed = path.with_name(path.name + ".failed")
                path.replace(failed)
                logger.warning(f"Kept partial output of stage {name} as {failed}")
        logger.error(f"Stage {name} failed: {exc}")
        raise StageError(name, exc) from exc
    logger.info(f"Stage {name} finished")


def trace_frame(trace: List[dict]) -> pd.DataFrame:
    frame = pd.DataFrame(trace, columns=list(TRACE_COLUMNS[:-1]))
    frame["loss_smoothed"] = smoothed(list(frame["loss"]))
    return frame


def write_trace(trace: List[dict], path: Path, recorder: RunRecorder) -> Path:
    return write_csv(trace_frame(trace), recorder.add_output(path), recorder.config_hash, TRACE_COLUMNS)


@contextmanager
def keep_trace_on_halt(path: Path, recorder: RunRecorder) -> Iterator[None]:
    """Write the steps completed before a non-finite loss, then re-raise."""
    try:
        yield
    except NonFiniteLossError as exc:
        write_trace(exc.trace, path, recorder)
        raise


def metrics_frame(metrics: Metrics, split: str, task: TaskKind) -> pd.DataFrame:
    return pd.DataFrame([{"split": split, "task": TaskKind(task).value, **metrics.model_dump()}], columns=list(METRICS_COLUMNS))


def load_or_generate(config: RunConfig, out_dir: Path, recorder: RunRecorder, data_path: Optional[Path] = None) -> Dataset:
    """Read ``data_path`` (or ``experiment.dataset_path``) when given, else generate and save."""
    source = data_path or config.experiment.dataset_path
    if source is not None:
        dataset = Dataset.load(Path(source))
        recorder.add_input(Path(source))
        logger.info(f"Loaded {dataset.n} entries from {source}")
        return dataset
    dataset = generate_dataset(config.data)
    dataset.save(recorder.add_output(out_dir / "dataset.jsonl"))
    return dataset


def force_frames(dataset: Dataset, config: TrainConfig, frames_per_entry: int, seed: int) -> Dataset:
    if config.task != TaskKind.FORCE:
        return dataset
    return sample_frames(dataset, config.noise, frames_per_entry, seed)


def finetune_splits(dataset: Dataset, config: RunConfig) -> Tuple[Dataset, Dataset]:
    """Train/validation split of the entries, expanded to force frames for the force task."""
    validation, training = dataset.split(config.experiment.val_fraction, config.seed)
    frames = config.experiment.frames_per_entry
    return (
        force_frames(training, config.finetune, frames, config.seed),
        force_frames(validation, config.finetune, frames, config.seed + 1),
    )


def run_pretrain(config: RunConfig, dataset: Dataset, out_dir: Path, recorder: RunRecorder, model: Optional[EquivariantTransformer] = None) -> TrainResult:
    model = model or build_model(config.model, config.train.seed)
    with keep_trace_on_halt(out_dir / "pretrain_trace.csv", recorder):
        result = pretrain_frad(config.train, dataset, model, checkpoint_dir=out_dir / "checkpoints")
    for path in result.checkpoints:
        recorder.add_output(path)
    save_checkpoint(result.model, recorder.add_output(out_dir / "pretrained.ckpt"))
    write_trace(result.trace, out_dir / "pretrain_trace.csv", recorder)
    return result


def run_finetune(
    config: RunConfig,
    training: Dataset,
    validation: Dataset,
    out_dir: Path,
    recorder: RunRecorder,
    checkpoint: Optional[Path] = None,
    model: Optional[EquivariantTransformer] = None,
) -> TrainResult:
    if model is None:
        if checkpoint is not None:
            recorder.add_input(checkpoint)
            model = load_checkpoint(checkpoint)
        else:
            model = build_model(config.model, config.finetune.seed)
    with keep_trace_on_halt(out_dir / "finetune_trace.csv", recorder):
        result = finetune(config.finetune, training, model, validation=validation)
    save_checkpoint(result.model, recorder.add_output(out_dir / "finetuned.ckpt"))
    write_trace(result.trace, out_dir / "finetune_trace.csv", recorder)
    return result


def run_eval(model: EquivariantTransformer, dataset: Dataset, task: TaskKind, out_dir: Path, recorder: RunRecorder, split: str = "validation") -> Metrics:
    metrics = evaluate(model, dataset, task)
    write_csv(metrics_frame(metrics, split, task), recorder.add_output(out_dir / "metrics.csv"), recorder.config_hash, METRICS_COLUMNS)
    logger.info(f"{split} metrics: MAE {metrics.mae:.6g}, RMSE {metrics.rmse:.6g}")
    return metrics


def run_pipeline(config: RunConfig, out_dir: Path) -> PipelineResult:
    """gen-data, pretrain, finetune and eval with one seed; the manifest is written last."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    recorder = RunRecorder("pipeline", config, out_dir)

    with pipeline_stage("gen-data", recorder):
        dataset = load_or_generate(config, out_dir, recorder)

    with pipeline_stage("pretrain", recorder):
        pretrained = run_pretrain(config, dataset, out_dir, recorder)

    with pipeline_stage("finetune", recorder):
        training, validation = finetune_splits(dataset, config)
        tuned = run_finetune(config, training, validation, out_dir, recorder, model=pretrained.model)

    with pipeline_stage("eval", recorder):
        metrics = run_eval(tuned.model, validation if validation.n else training, config.finetune.task, out_dir, recorder)

    manifest = recorder.write()
    return PipelineResult(dataset, pretrained, tuned, metrics, manifest)

