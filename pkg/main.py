import argparse
import logging
import sys
from pathlib import Path

import torch

from config.logging_config import setup_logging
from config.run_config import RunConfig, load_run_config
from config.settings import DEFAULT_THREADS, OUTPUT_DIR
from experiments.estimate_c import ESTIMATE_C_COLUMNS, estimate_c_study
from experiments.force_accuracy import FORCE_ACCURACY_COLUMNS, force_accuracy_study, median_by_setting
from experiments.manifest import RunRecorder
from experiments.perturb_structure import perturb_file
from experiments.perturbation_scale import PERTURBATION_SCALE_COLUMNS, perturbation_scale_study
from experiments.pipeline import finetune_splits, load_or_generate, run_eval, run_finetune, run_pipeline, run_pretrain
from models.checkpoint import load_checkpoint
from noise.perturb import NoiseKind
from pes.dataset import sample_frames
from training.config import TaskKind
from utils.errors import FradError
from utils.message_formatter import MessageFormatter, Role
from utils.reports import write_csv

logger = logging.getLogger(__name__)

COMMANDS = (
    "gen-data",
    "perturb",
    "estimate-c",
    "force-accuracy",
    "perturbation-scale",
    "pretrain",
    "finetune",
    "eval",
    "pipeline",
)


def parse_args(argv=None):
    """Parse command line arguments."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key=value config file or a previous manifest.json")
    common.add_argument("--seed", type=int, help="Override every seed in the config")
    common.add_argument("--out", type=Path, help="Output directory (default: runs/<command>)")
    common.add_argument("--threads", type=int, default=DEFAULT_THREADS, help="torch intra-op threads")

    parser = argparse.ArgumentParser(description="Fractional denoising for molecular conformations at desk scale")
    subparsers = parser.add_subparsers(dest="command", help="Command to run")

    gen_parser = subparsers.add_parser("gen-data", parents=[common], help="Generate the toy dataset")
    gen_parser.add_argument("--frames", type=int, default=0, help="Also write this many force frames per entry")

    perturb_parser = subparsers.add_parser("perturb", parents=[common], help="Perturb one XYZ or MOL file")
    perturb_parser.add_argument("--input", type=Path, required=True, help="Structure file to perturb")
    perturb_parser.add_argument("--kind", choices=[k.value for k in NoiseKind], help="Noise kind (overrides noise.kind)")
    perturb_parser.add_argument("--sigma", type=float, help="Rotation noise std (overrides noise.sigma)")
    perturb_parser.add_argument("--tau", type=float, help="Coordinate noise std (overrides noise.tau)")

    for name, text in (
        ("estimate-c", "Least-squares C against the analytic map"),
        ("force-accuracy", "Correlation of score targets with oracle forces"),
        ("perturbation-scale", "Mean displacement of each noise setting"),
        ("pretrain", "Frad pre-training"),
    ):
        sub = subparsers.add_parser(name, parents=[common], help=text)
        sub.add_argument("--data", type=Path, help="Dataset manifest (generated when omitted)")

    finetune_parser = subparsers.add_parser("finetune", parents=[common], help="Fine-tune on the property task")
    finetune_parser.add_argument("--data", type=Path, help="Dataset manifest (generated when omitted)")
    finetune_parser.add_argument("--checkpoint", type=Path, help="Start from this checkpoint (random init otherwise)")

    eval_parser = subparsers.add_parser("eval", parents=[common], help="Evaluate a checkpoint")
    eval_parser.add_argument("--checkpoint", type=Path, required=True, help="Checkpoint to evaluate")
    eval_parser.add_argument("--data", type=Path, help="Dataset manifest (generated when omitted)")

    subparsers.add_parser("pipeline", parents=[common], help="gen-data -> pretrain -> finetune -> eval")

    return parser.parse_args(argv)


def show_table(frame, title: str) -> None:
    print(MessageFormatter.format_table(frame, title))


def run_command(args, config: RunConfig, out_dir: Path) -> Path:
    """Dispatch one subcommand; returns the manifest path."""
    recorder = RunRecorder(args.command, config, out_dir)
    seed = config.seed

    if args.command == "gen-data":
        dataset = load_or_generate(config, out_dir, recorder)
        if args.frames:
            frames = sample_frames(dataset, config.noise, args.frames, seed)
            frames.save(recorder.add_output(out_dir / "frames.jsonl"))
        print(MessageFormatter.format_message(Role.RESULT, f"Generated {dataset.n} molecules in {out_dir}"))

    elif args.command == "perturb":
        kind = NoiseKind(args.kind) if args.kind else None
        update = {k: v for k, v in (("kind", kind), ("sigma", args.sigma), ("tau", args.tau)) if v is not None}
        spec = config.noise.model_copy(update=update)
        sidecar = perturb_file(args.input, spec, seed, out_dir, recorder)
        print(MessageFormatter.format_message(Role.RESULT, f"Perturbation scale {sidecar.perturbation_scale:.4f} ({sidecar.scale_definition})"))

    elif args.command == "estimate-c":
        dataset = load_or_generate(config, out_dir, recorder, args.data)
        frame = estimate_c_study(dataset, config.experiment, seed)
        write_csv(frame, recorder.add_output(out_dir / "estimate_c.csv"), recorder.config_hash, ESTIMATE_C_COLUMNS)
        show_table(frame, "C estimation")

    elif args.command == "force-accuracy":
        dataset = load_or_generate(config, out_dir, recorder, args.data)
        frame = force_accuracy_study(dataset, config.experiment)
        write_csv(frame, recorder.add_output(out_dir / "force_accuracy.csv"), recorder.config_hash, FORCE_ACCURACY_COLUMNS)
        show_table(median_by_setting(frame), "Force accuracy (median over seeds)")

    elif args.command == "perturbation-scale":
        dataset = load_or_generate(config, out_dir, recorder, args.data)
        frame = perturbation_scale_study(dataset, config.experiment, seed)
        write_csv(frame, recorder.add_output(out_dir / "perturbation_scale.csv"), recorder.config_hash, PERTURBATION_SCALE_COLUMNS)
        show_table(frame, "Perturbation scale")

    elif args.command == "pretrain":
        dataset = load_or_generate(config, out_dir, recorder, args.data)
        print(MessageFormatter.format_message(Role.STAGE, f"Pre-training ({config.train.objective.value}) on {dataset.n} molecules"))
        result = run_pretrain(config, dataset, out_dir, recorder)
        print(MessageFormatter.format_message(Role.RESULT, f"Final loss {result.trace[-1]['loss']:.6g}" if result.trace else "No steps taken"))

    elif args.command == "finetune":
        dataset = load_or_generate(config, out_dir, recorder, args.data)
        training, validation = finetune_splits(dataset, config)
        print(MessageFormatter.format_message(Role.STAGE, f"Fine-tuning ({config.finetune.objective.value}) on {training.n} samples"))
        result = run_finetune(config, training, validation, out_dir, recorder, checkpoint=args.checkpoint)
        print(MessageFormatter.format_message(Role.RESULT, f"Validation MAE {result.metrics.mae:.6g}, RMSE {result.metrics.rmse:.6g}"))

    elif args.command == "eval":
        recorder.add_input(args.checkpoint)
        model = load_checkpoint(args.checkpoint)
        dataset = load_or_generate(config, out_dir, recorder, args.data)
        task = TaskKind(config.finetune.task)
        if task == TaskKind.FORCE:
            dataset = sample_frames(dataset, config.finetune.noise, config.experiment.frames_per_entry, seed)
        metrics = run_eval(model, dataset, task, out_dir, recorder, split="all")
        print(MessageFormatter.format_message(Role.RESULT, f"MAE {metrics.mae:.6g}, RMSE {metrics.rmse:.6g}, Pearson {metrics.pearson}"))

    elif args.command == "pipeline":
        print(MessageFormatter.format_message(Role.STAGE, f"Running gen-data -> pretrain -> finetune -> eval in {out_dir}"))
        result = run_pipeline(config, out_dir)
        print(MessageFormatter.format_message(Role.RESULT, f"Validation MAE {result.metrics.mae:.6g}"))
        return result.manifest

    return recorder.write()


def main(argv=None) -> int:
    """Main entry point."""
    # Set up logging
    setup_logging()

    # Parse arguments
    args = parse_args(argv)
    if args.command not in COMMANDS:
        print(MessageFormatter.format_message(Role.WARNING, "No command specified. Use --help for available commands."))
        return 2

    try:
        torch.set_num_threads(max(1, args.threads))
        config = load_run_config(args.config, args.seed)
        out_dir = Path(args.out) if args.out else OUTPUT_DIR / args.command
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest = run_command(args, config, out_dir)
    except FradError as e:
        error_message = f"{type(e).__name__}: {e}"
        print(MessageFormatter.format_message(Role.ERROR, error_message))
        logger.error(error_message)
        return e.exit_code

    print(MessageFormatter.format_message(Role.STAGE, f"Manifest written to {manifest}"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
