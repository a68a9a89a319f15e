"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 IO or format error,
4 numerical divergence.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Callable, Optional, Sequence

from crossl.core.config import RunConfig, config_keys, load_run_config
from crossl.core.errors import ConfigError, CrosslError
from crossl.core.log import logger, setup_logging
from crossl.data import SPLITS, MultimodalDataset, generate_synthetic, load_dataset, save_dataset
from crossl.eval import emit_report, macro_f1
from crossl.eval.drift import embedding_drift
from crossl.eval.experiments import run_missing_scenarios, sweep_labels, sweep_mask
from crossl.model import ModelState, load_checkpoint, save_checkpoint
from crossl.train import TrainTrace, finetune, new_model, predict, pretrain, train_supervised

CONFIG_FILE = "config.resolved.json"
CHECKPOINT_FILE = "checkpoint.crsl"
TRACE_FILE = "trace.csv"
DRIFT_FILE = "drift.json"


def _float_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _config_epilog() -> str:
    lines = ["configuration keys (JSON document passed with --config):"]
    for key, default, description in config_keys():
        lines.append(f"  {key} = {json.dumps(default)}")
        if description:
            lines.append(f"      {description}")
    lines.append("environment: CROSSL_SEED overrides train.seed")
    return "\n".join(lines)


def _resolve(args: argparse.Namespace) -> tuple[RunConfig, Path]:
    config = load_run_config(args.config)
    out = args.out or config.out
    if out is None:
        raise ConfigError("an output directory is required (--out or 'out' in the config)")
    data = getattr(args, "data", None) or config.data
    config = config.model_copy(update={"out": str(out), "data": data})
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / CONFIG_FILE).write_text(config.to_json(), encoding="utf-8")
    return config, out_dir


def _dataset(config: RunConfig) -> MultimodalDataset:
    if config.data is None:
        raise ConfigError("a dataset is required (--data or 'data' in the config)")
    return load_dataset(config.data)


def _checkpoint_for(path: str, dataset: MultimodalDataset) -> ModelState:
    state = load_checkpoint(path)
    if [m.name for m in state.modalities] != [m.name for m in dataset.modalities]:
        raise ConfigError(
            f"checkpoint modalities {[m.name for m in state.modalities]} do not match dataset "
            f"modalities {[m.name for m in dataset.modalities]}"
        )
    return state


def _save_run(out_dir: Path, state: ModelState, trace: TrainTrace) -> None:
    save_checkpoint(state, out_dir / CHECKPOINT_FILE)
    trace.to_csv(out_dir / TRACE_FILE)


def _print_test_f1(state: ModelState, dataset: MultimodalDataset) -> None:
    predictions, labels = predict(state, dataset, "test")
    if labels is not None and len(labels):
        macro, _ = macro_f1(predictions, labels, dataset.num_classes)
        print(f"test macro-F1: {macro:.4f}")


def cmd_generate(args: argparse.Namespace) -> int:
    config, out_dir = _resolve(args)
    dataset = generate_synthetic(config.synthetic)
    manifest = save_dataset(dataset, out_dir)
    print(f"dataset written to {manifest}")
    for split in SPLITS:
        print(f"  {split}: {len(dataset.indices(split))} windows")
    for modality, window in zip(dataset.modalities, dataset.windows):
        print(f"  {modality.name}: {list(window.shape)}")
    return 0


def cmd_pretrain(args: argparse.Namespace) -> int:
    config, out_dir = _resolve(args)
    dataset = _dataset(config)
    state = new_model(dataset, config.encoder, config.aggregator, config.train.seed)
    state, trace = pretrain(dataset, state, config.train_config())
    _save_run(out_dir, state, trace)
    print(f"pre-trained {len(trace)} epochs ({trace.stop_reason}), best epoch {trace.best_epoch}")
    return 0


def cmd_finetune(args: argparse.Namespace) -> int:
    config, out_dir = _resolve(args)
    dataset = _dataset(config)
    pretrained = _checkpoint_for(args.ckpt, dataset)
    state, trace = finetune(dataset, pretrained, config.train_config(), args.mode)
    _save_run(out_dir, state, trace)
    _print_test_f1(state, dataset)
    return 0


def cmd_supervised(args: argparse.Namespace) -> int:
    config, out_dir = _resolve(args)
    dataset = _dataset(config)
    state, trace = train_supervised(dataset, config.train_config(), config.encoder, config.aggregator)
    _save_run(out_dir, state, trace)
    _print_test_f1(state, dataset)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    config, out_dir = _resolve(args)
    dataset = _dataset(config)
    train = config.train_config()
    seeds = args.seeds if args.seeds is not None else config.eval.seeds
    jobs = args.jobs if args.jobs is not None else config.eval.jobs
    common = {"encoder": config.encoder, "aggregator": config.aggregator, "out_dir": out_dir, "jobs": jobs}

    if args.scenario:
        missing_count = args.missing_count if args.missing_count is not None else config.eval.missing_count
        report = run_missing_scenarios(dataset, train, seeds, missing_count=missing_count, **common)
    elif args.sweep_mask:
        strategy = args.strategy or config.masking.strategy
        grid = args.grid if args.grid is not None else config.eval.grid
        report = sweep_mask(dataset, train, strategy, grid, seeds, **common)
    else:
        fractions = args.fractions if args.fractions is not None else config.eval.fractions
        report = sweep_labels(dataset, train, fractions, seeds, **common)

    emit_report(report, out_dir)
    for aggregate in report.aggregates:
        std = "n/a" if aggregate.std_macro_f1 is None else f"{aggregate.std_macro_f1:.4f}"
        condition = " ".join(
            f"{name}={value}"
            for name, value in (
                ("scenario", aggregate.scenario),
                ("strategy", aggregate.strategy),
                ("grid", aggregate.grid_value),
                ("fraction", aggregate.label_fraction),
                ("mode", aggregate.mode),
            )
        )
        print(f"{condition}: macro-F1 {aggregate.mean_macro_f1:.4f} ({std})")
    return 0


def cmd_drift(args: argparse.Namespace) -> int:
    config, out_dir = _resolve(args)
    dataset = _dataset(config)
    state = _checkpoint_for(args.ckpt, dataset)
    report = embedding_drift(state, dataset, args.split)
    (out_dir / DRIFT_FILE).write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    for entry in report.modalities:
        print(f"{entry.name}: {entry.drift:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per operation."""
    parser = argparse.ArgumentParser(
        prog="crossl",
        description="Cross-modal self-supervised learning with latent masking",
        epilog=_config_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--log-level", default="INFO", help="Logging level (default: INFO)")
    commands = parser.add_subparsers(dest="command", required=True)

    def command(name: str, handler: Callable[[argparse.Namespace], int], help: str, data: bool = True):
        sub = commands.add_parser(
            name, help=help, epilog=_config_epilog(), formatter_class=argparse.RawDescriptionHelpFormatter
        )
        sub.add_argument("--config", default=None, help="JSON configuration file (defaults if omitted)")
        sub.add_argument("--out", default=None, help="Output directory")
        if data:
            sub.add_argument("--data", default=None, help="Dataset directory or manifest.json")
        sub.set_defaults(handler=handler)
        return sub

    command("generate", cmd_generate, "Write the synthetic benchmark dataset", data=False)
    command("pretrain", cmd_pretrain, "Self-supervised pre-training")

    finetune_parser = command("finetune", cmd_finetune, "Train a classifier on a pre-trained checkpoint")
    finetune_parser.add_argument("--ckpt", required=True, help="Pre-trained checkpoint")
    finetune_parser.add_argument("--mode", choices=["finetuned", "fixed"], default="finetuned", help="Probe mode")

    command("supervised", cmd_supervised, "Supervised baseline from random initialization")

    eval_parser = command("eval", cmd_eval, "Run an experiment matrix and write report.csv/report.json")
    selector = eval_parser.add_mutually_exclusive_group(required=True)
    selector.add_argument("--scenario", action="store_true", help="Missing-modality scenarios")
    selector.add_argument("--sweep-mask", action="store_true", help="Masking rate/count sweep")
    selector.add_argument("--sweep-labels", action="store_true", help="Label-efficiency sweep")
    eval_parser.add_argument("--seeds", type=_int_list, default=None, help="Comma-separated seeds")
    eval_parser.add_argument("--grid", type=_float_list, default=None, help="Comma-separated sweep points")
    eval_parser.add_argument("--strategy", choices=["random", "spatial"], default=None, help="Sweep strategy")
    eval_parser.add_argument("--fractions", type=_float_list, default=None, help="Comma-separated label fractions")
    eval_parser.add_argument("--missing-count", type=int, default=None, help="Modalities removed per window")
    eval_parser.add_argument("--jobs", type=int, default=None, help="Parallel cells")

    drift_parser = command("drift", cmd_drift, "Embedding drift when each modality is hidden")
    drift_parser.add_argument("--ckpt", required=True, help="Checkpoint to probe")
    drift_parser.add_argument("--split", choices=list(SPLITS), default="test", help="Split to average over")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main CLI entrypoint."""
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)

    try:
        return args.handler(args)
    except CrosslError as e:
        logger.error("Command failed", extra={"command": args.command, "error": type(e).__name__})
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        logger.error("Command failed", extra={"command": args.command, "error": type(e).__name__})
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
