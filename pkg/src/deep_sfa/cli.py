"""Command-line interface: ``deep-sfa detect|synth|sweep-r|sweep-strategy|compare``."""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from . import __version__
from .config import (
    PRESETS,
    Activation,
    Criterion,
    Method,
    PipelineConfig,
    SamplingStrategy,
    SynthConfig,
    ThresholdMethod,
    TrainConfig,
)
from .core import ChangeDetectionError
from .pipeline import SweepRow, compare_methods, run_pipeline_safe, sweep_r, sweep_strategy
from .synthetic import write_scene

logger = logging.getLogger(__name__)

DEFAULT_DSFA_RUNS = 10
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _csv_list(value: str) -> list[str]:
    items = [item.strip() for item in value.split(",") if item.strip()]
    if not items:
        raise argparse.ArgumentTypeError("expected a comma-separated list")
    return items


def _int_list(value: str) -> tuple[int, ...]:
    try:
        return tuple(int(item) for item in _csv_list(value))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected integers, got '{value}'") from e


def _float_list(value: str) -> tuple[float, ...]:
    try:
        return tuple(float(item) for item in _csv_list(value))
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected numbers, got '{value}'") from e


def _add_detection_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON PipelineConfig; explicit flags override it")
    parser.add_argument("--method", choices=[m.value for m in Method], help="Change-detection method (default dsfa)")
    parser.add_argument("--t1", type=Path, help="Raster header of the first date")
    parser.add_argument("--t2", type=Path, help="Raster header of the second date")
    parser.add_argument("--gt", type=Path, help="Tri-state ground-truth raster (0 unsampled, 1 unchanged, 2 changed)")
    parser.add_argument("--out", type=Path, help="Output directory")
    parser.add_argument("--threshold", choices=[t.value for t in ThresholdMethod], help="Thresholding algorithm")
    parser.add_argument("--criterion", choices=[c.value for c in Criterion], help="Metric for --threshold best")
    parser.add_argument("--strategy", choices=[s.value for s in SamplingStrategy], help="DSFA training samples")
    parser.add_argument("--runs", type=int, help=f"DSFA runs to sum (default {DEFAULT_DSFA_RUNS} for dsfa)")
    parser.add_argument("--seed", type=int, help="Base seed; run i uses seed + i")
    parser.add_argument("--preset", choices=PRESETS, help="Architecture preset DSFA-<width>-<depth>")
    parser.add_argument("--hidden", type=_int_list, help="Hidden layer widths, e.g. 128,128")
    parser.add_argument("--out-dim", type=int, help="Output feature count (default: band count)")
    parser.add_argument("--lr", type=float, help="Learning rate")
    parser.add_argument("--epochs", type=int, help="Training epochs")
    parser.add_argument("--r", type=float, help="Covariance regularization constant")
    parser.add_argument("--samples", type=int, help="Training pairs per run")
    parser.add_argument("--activation", choices=[a.value for a in Activation], help="Activation function")
    parser.add_argument("--pca-components", type=int, help="Principal components kept by the pca method")
    parser.add_argument("--save-params", action="store_true", default=None, help="Checkpoint trained parameters")
    parser.add_argument("--no-report", dest="write_report", action="store_false", default=None,
                        help="Skip the Markdown reports")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deep-sfa",
        description="Unsupervised change detection with deep and linear slow feature analysis",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="INFO",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="Logging level")
    parser.add_argument("-v", "--verbose", action="store_true", help="Shortcut for --log-level DEBUG")
    commands = parser.add_subparsers(dest="command", required=True)

    detect = commands.add_parser("detect", help="Detect changes between two dates")
    _add_detection_arguments(detect)

    synth = commands.add_parser("synth", help="Write a synthetic scene with planted changes")
    synth.add_argument("--rows", type=int, default=64)
    synth.add_argument("--cols", type=int, default=64)
    synth.add_argument("--bands", type=int, default=6)
    synth.add_argument("--change-frac", type=float, default=0.1, help="Target share of changed pixels")
    synth.add_argument("--noise-std", type=float, default=0.05, help="Noise std on the second date")
    synth.add_argument("--shift", type=float, default=1.0, help="Norm of each planted spectral shift")
    synth.add_argument("--band-noise", type=_float_list, help="Extra per-band noise std, one value per band")
    synth.add_argument("--components", type=int, default=6, help="Latent field components mixed into the bands")
    synth.add_argument("--drift", type=float, default=0.0, help="Cross-band mixing strength on the second date")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", type=Path, required=True, help="Output directory")

    sweep_r_parser = commands.add_parser("sweep-r", help="Accuracy across regularization constants")
    _add_detection_arguments(sweep_r_parser)
    sweep_r_parser.add_argument("--r-values", type=_float_list, default=(1e-8, 1e-6, 1e-4),
                                help="Comma-separated r values")

    sweep_s_parser = commands.add_parser("sweep-strategy", help="Accuracy across training sample strategies")
    _add_detection_arguments(sweep_s_parser)
    sweep_s_parser.add_argument("--strategies", type=_csv_list,
                                default=[s.value for s in SamplingStrategy], help="Comma-separated strategies")

    compare = commands.add_parser("compare", help="Run several methods on one scene")
    _add_detection_arguments(compare)
    compare.add_argument("--methods", type=_csv_list, default=[m.value for m in Method],
                         help="Comma-separated methods")
    return parser


def _train_overrides(args: argparse.Namespace) -> dict[str, Any]:
    overrides: dict[str, Any] = {}
    if args.preset is not None:
        overrides["hidden_sizes"] = TrainConfig.from_preset(args.preset).hidden_sizes
    if args.hidden is not None:
        overrides["hidden_sizes"] = args.hidden
    for flag, field in (("out_dim", "out_dim"), ("lr", "learning_rate"), ("epochs", "max_epochs"),
                        ("r", "reg_r"), ("activation", "activation")):
        value = getattr(args, flag)
        if value is not None:
            overrides[field] = value
    return overrides


def build_config(args: argparse.Namespace) -> PipelineConfig:
    """Merge ``--config`` with explicit flags into a validated PipelineConfig.

    Raises:
        ValidationError: If the merged settings are invalid
    """
    overrides: dict[str, Any] = {
        "method": args.method,
        "t1": args.t1,
        "t2": args.t2,
        "ground_truth": args.gt,
        "output_dir": args.out,
        "threshold": args.threshold,
        "criterion": args.criterion,
        "strategy": args.strategy,
        "runs": args.runs,
        "seed": args.seed,
        "sample_count": args.samples,
        "pca_components": args.pca_components,
        "save_params": args.save_params,
        "write_report": args.write_report,
    }
    train = _train_overrides(args)
    if args.config is not None:
        config = PipelineConfig.from_json(args.config, train=train, **overrides)
    else:
        data = {key: value for key, value in overrides.items() if value is not None}
        if train:
            data["train"] = train
        config = PipelineConfig.model_validate(data)

    # DSFA sums several runs unless the flags or the file pick a count
    if config.method is Method.DSFA and "runs" not in config.model_fields_set:
        config = config.model_copy(update={"runs": DEFAULT_DSFA_RUNS})
    return config


def _print_rows(rows: Sequence[SweepRow], key: str) -> None:
    print(f"{key:>14}  {'oa':>7}  {'kappa':>7}  {'f1':>7}  {'changed':>8}")
    for row in rows:
        if row.metrics is None:
            print(f"{row.value:>14}  {'-':>7}  {'-':>7}  {'-':>7}  {row.changed_pixels:>8}")
        else:
            m = row.metrics
            print(f"{row.value:>14}  {m.oa:7.4f}  {m.kappa:7.4f}  {m.f1:7.4f}  {row.changed_pixels:>8}")


def _detect(args: argparse.Namespace) -> int:
    config = build_config(args)
    report, error = run_pipeline_safe(config)
    if error is not None or report is None:
        stage = error.error.stage if error is not None else None
        print(f"detection failed{f' in stage {stage}' if stage else ''}: "
              f"{error.error.message if error else 'unknown error'}", file=sys.stderr)
        return EXIT_FAILURE
    print(f"{report.changed_pixels} changed pixels (threshold {report.threshold:.6g}); outputs in {config.output_dir}")
    if report.metrics is not None:
        m = report.metrics
        print(f"OA {m.oa:.4f}  OA_CHG {m.oa_chg:.4f}  OA_UN {m.oa_un:.4f}  Kappa {m.kappa:.4f}  F1 {m.f1:.4f}")
    return EXIT_OK


def _synth(args: argparse.Namespace) -> int:
    config = SynthConfig(
        rows=args.rows,
        cols=args.cols,
        bands=args.bands,
        change_fraction=args.change_frac,
        noise_std=args.noise_std,
        shift_magnitude=args.shift,
        band_noise=args.band_noise,
        field_components=args.components,
        spectral_drift=args.drift,
        seed=args.seed,
    )
    paths = write_scene(config, args.out)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return EXIT_OK


def _sweep_r(args: argparse.Namespace) -> int:
    _print_rows(sweep_r(build_config(args), args.r_values), "r")
    return EXIT_OK


def _sweep_strategy(args: argparse.Namespace) -> int:
    strategies = [SamplingStrategy(value) for value in args.strategies]
    _print_rows(sweep_strategy(build_config(args), strategies), "strategy")
    return EXIT_OK


def _compare(args: argparse.Namespace) -> int:
    methods = [Method(value) for value in args.methods]
    _print_rows(compare_methods(build_config(args), methods), "method")
    return EXIT_OK


COMMANDS = {
    "detect": _detect,
    "synth": _synth,
    "sweep-r": _sweep_r,
    "sweep-strategy": _sweep_strategy,
    "compare": _compare,
}


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point of the ``deep-sfa`` console script; returns the exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ValidationError as e:
        print(f"invalid configuration:\n{e}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        print(f"invalid argument: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ChangeDetectionError as e:
        logger.debug("Command failed", exc_info=True)
        print(f"{args.command} failed: {e.message}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
