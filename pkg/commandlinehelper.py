#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Helper utilities for command-line interface."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path
from typing import Any, Optional

# Colored output using termcolor (fallback to plain text if unavailable)
try:  # pylint: disable=import-outside-toplevel
    from termcolor import colored  # pylint: disable=import-error
except ImportError:  # pragma: no cover

    def colored(text, *_args, **_kwargs):  # type: ignore
        """
        Fallback colored function that returns text as-is.
        Args:
            text: The text to colorize.
            *_args: Ignored.
            **_kwargs: Ignored.
        Returns:
            The original text.
        """

        return text


SUBCOMMANDS = ("gen", "fields", "optimize", "train", "finetune", "infer", "eval", "bench")
FINETUNE_GROUPS = ("class_projection", "decoder_projection", "decoder_layers")
MIN_BENCH_PROBLEMS = 5


def _supports_color(stream) -> bool:
    """
    Return True when color output should be used for the given stream.
    Args:
        stream: The output stream (e.g., sys.stdout, sys.stderr).
    Returns:
        True if color output is supported, False otherwise.
    """

    try:
        if os.environ.get("NO_COLOR"):
            return False
        if os.environ.get("FORCE_COLOR"):
            return True
        return hasattr(stream, "isatty") and stream.isatty()
    except (AttributeError, OSError):
        return False


USE_COLOR_STDOUT = _supports_color(sys.stdout)


def _colorize(text: str, color: str | None, enabled: bool, attrs: list[str] | None = None) -> str:
    if not enabled or not color:
        return text
    return colored(text, color, attrs=attrs or [])


def _percent(value: float) -> str:
    if math.isnan(value):
        return "n/a"
    if math.isinf(value):
        return "inf"
    return f"{value:.2f}%"


def format_metrics_report(report: dict[str, Any], title: str = "Validation metrics") -> str:
    """Format an evaluation report (both binarization modes) as an aligned table.

    Args:
        report: Mapping of mode name to MetricsReport.to_dict() output.
        title: Section title.

    Returns:
        Formatted string ready for printing.

    Example:
        >>> print(format_metrics_report({"fixed": {...}, "vf_matched": {...}}))
        Validation metrics:
        ━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
                                  fixed   vf_matched
          Compliance error       1.20%        1.05%
          ...
    """
    separator = "━" * 44
    modes = list(report)
    rows = [
        ("Compliance error", "mean_compliance_error"),
        ("Median CE (<=30%)", "median_compliance_error"),
        ("CE > 30%", "failed_fraction"),
        ("VF error", "mean_vf_error"),
        ("Load discrepancy", "load_discrepancy"),
        ("Floating material", "floating_material"),
    ]
    header = f"  {'':<20}" + "".join(f"{mode:>12}" for mode in modes)
    lines = [f"\n{title}:", separator, _colorize(header, "cyan", USE_COLOR_STDOUT, ["bold"])]
    for label, key in rows:
        values = "".join(f"{_percent(float(report[m][key])):>12}" for m in modes)
        lines.append(f"  {label:<20}{values}")
    first = report[modes[0]]
    lines.append("")
    lines.append(
        f"Evaluated {first['count']} samples "
        f"({first['mean_inference_seconds'] * 1000.0:.1f} ms inference per sample)"
    )
    return "\n".join(lines)


def format_bench_result(result: dict[str, Any]) -> str:
    """Format a speedup benchmark result."""
    separator = "━" * 44
    speedup = _colorize(f"{result['speedup']:.1f}x", "green", USE_COLOR_STDOUT, ["bold"])
    return "\n".join(
        [
            "\nSpeedup benchmark:",
            separator,
            f"  Problems             {result['problems']}",
            f"  Optimizer            {result['optimizer_seconds']:.3f} s/problem",
            f"  Inference            {result['inference_seconds']:.4f} s/problem",
            f"  Speedup              {speedup}",
        ]
    )


def load_json_config(path: Optional[str]) -> dict[str, Any]:
    """Read a JSON object from `path`; empty dict when no path is given.

    Raises:
        FileNotFoundError: The file does not exist.
        ValueError: The file is not a JSON object.
    """
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ValueError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ValueError(f"{path} must hold a JSON object")
    return data


def _add_common_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default: Any = argparse.SUPPRESS if suppress else False
    parser.add_argument("--verbose", action="store_true", default=default, help="Verbose output")
    parser.add_argument(
        "--env-file",
        default=argparse.SUPPRESS if suppress else None,
        help="Path to a .env file with TOPOFORMER_* settings",
    )


def build_parser() -> argparse.ArgumentParser:
    """Build the top-level parser with one subparser per workflow."""
    args_parser = argparse.ArgumentParser(
        prog="topoformer",
        description=(
            "Topoformer - SIMP topology optimization datasets and a vision transformer "
            "surrogate"
        ),
    )
    _add_common_flags(args_parser, suppress=False)
    subparsers = args_parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True

    def sub(name: str, help_text: str) -> argparse.ArgumentParser:
        parser = subparsers.add_parser(name, help=help_text, description=help_text)
        _add_common_flags(parser, suppress=True)
        return parser

    gen = sub("gen", "Generate a TOPODS01 dataset of optimized topologies")
    gen.add_argument("--kind", choices=("static", "dynamic"), required=True, help="Problem kind")
    gen.add_argument("--n", type=int, required=True, help="Number of seeds to generate")
    gen.add_argument("--seed", type=int, help="Root seed (default TOPOFORMER_SEED)")
    gen.add_argument("--out", required=True, help="Output dataset path")
    gen.add_argument("--grid", type=int, help="Square grid size (default TOPOFORMER_GRID)")
    gen.add_argument("--config", help="GeneratorConfig JSON file")
    gen.add_argument("--jobs", type=int, help="Worker processes (default TOPOFORMER_JOBS)")
    gen.add_argument(
        "--validation", type=int, default=0, help="Samples held out into --validation-out"
    )
    gen.add_argument("--validation-out", help="Validation dataset path")
    gen.add_argument("--images", help="Directory for per-sample field and topology images")
    gen.add_argument(
        "--clear-cache", action="store_true", help="Clear the filter weight cache first"
    )

    fields = sub("fields", "Export the normalized input fields of a problem")
    fields.add_argument("--spec", required=True, help="ProblemSpec JSON file")
    fields.add_argument(
        "--out-image", required=True, help="Image path; channels get .sed / .vm suffixes"
    )
    fields.add_argument("--png", action="store_true", help="Write PNG instead of PGM")

    optimize = sub("optimize", "Run the SIMP optimizer on one problem")
    optimize.add_argument("--spec", required=True, help="ProblemSpec JSON file")
    optimize.add_argument("--out", required=True, help="Density image path")
    optimize.add_argument("--config", help="JSON with 'optimizer' and 'dynamics' sections")
    optimize.add_argument("--png", action="store_true", help="Write PNG instead of PGM")

    train = sub("train", "Train the surrogate on a dataset")
    train.add_argument("--config", help="JSON with 'train' and 'vit' sections")
    train.add_argument("--data", required=True, help="Training dataset")
    train.add_argument("--out", required=True, help="Checkpoint path")
    train.add_argument("--validation-data", help="Dataset for the final validation loss")
    train.add_argument("--log", help="Loss CSV path (default <out>.loss.csv)")
    train.add_argument("--iterations", type=int, help="Override training iterations")
    train.add_argument("--batch-size", type=int, help="Override batch size")
    train.add_argument("--lr", type=float, help="Override peak learning rate")
    train.add_argument("--seed", type=int, help="Override seed")
    train.add_argument("--preset", help="ViT preset (tiny, small, base, large, huge, desk)")

    finetune = sub("finetune", "Fine-tune a static checkpoint on dynamic data")
    finetune.add_argument("--base", required=True, help="Static base checkpoint")
    finetune.add_argument(
        "--groups", required=True, help=f"Comma-separated groups from {FINETUNE_GROUPS}"
    )
    finetune.add_argument("--data", required=True, help="Dynamic training dataset")
    finetune.add_argument("--out", required=True, help="Fine-tuned checkpoint path")
    finetune.add_argument("--config", help="JSON with a 'train' section")
    finetune.add_argument("--validation-data", help="Dataset for the final validation loss")
    finetune.add_argument("--log", help="Loss CSV path (default <out>.loss.csv)")
    finetune.add_argument("--iterations", type=int, help="Override training iterations")
    finetune.add_argument("--batch-size", type=int, help="Override batch size")
    finetune.add_argument("--lr", type=float, help="Override peak learning rate")
    finetune.add_argument("--seed", type=int, help="Override seed")

    infer = sub("infer", "Predict a density map for one problem")
    infer.add_argument("--ckpt", required=True, help="Model checkpoint")
    infer.add_argument("--spec", required=True, help="ProblemSpec JSON file")
    infer.add_argument("--out-image", required=True, help="Density image path")
    infer.add_argument("--png", action="store_true", help="Write PNG instead of PGM")

    evaluate = sub("eval", "Compute validation metrics")
    evaluate.add_argument("--ckpt", help="Model checkpoint")
    evaluate.add_argument(
        "--oracle", action="store_true", help="Score the ground truth itself instead of a model"
    )
    evaluate.add_argument("--data", required=True, help="Validation dataset")
    evaluate.add_argument("--report", required=True, help="Metrics JSON path")
    evaluate.add_argument("--csv", help="Per-sample CSV path (default <report>.csv)")
    evaluate.add_argument("--jobs", type=int, help="Worker processes (default TOPOFORMER_JOBS)")
    evaluate.add_argument("--images", help="Directory for ground truth / prediction triptychs")
    evaluate.add_argument("--max-images", type=int, default=16, help="Triptychs to write")
    evaluate.add_argument("--png", action="store_true", help="Write PNG instead of PGM")

    bench = sub("bench", "Time the optimizer against surrogate inference")
    bench.add_argument("--ckpt", required=True, help="Model checkpoint")
    bench.add_argument("--n", type=int, default=MIN_BENCH_PROBLEMS, help="Number of problems")
    bench.add_argument("--seed", type=int, help="Problem seed (default TOPOFORMER_SEED)")
    bench.add_argument("--config", help="JSON with 'optimizer' and 'dynamics' sections")
    bench.add_argument("--report", default="bench.json", help="Result JSON path")
    return args_parser


def parse_args(argv: Optional[list[str]] = None) -> argparse.Namespace:
    """
    Parse command-line arguments.
    Args:
        argv: Arguments without the program name; sys.argv when None.
    Returns:
        Parsed arguments.
    Raises:
        SystemExit: If parsing fails or help was requested.
    """

    return build_parser().parse_args(argv)


def check_args(args: argparse.Namespace) -> argparse.Namespace:
    """
    Validate command-line arguments.
    Args:
        args: Parsed arguments.
    Returns:
        Validated arguments.
    Raises:
        FileNotFoundError: If an input file does not exist.
        ValueError: If any argument is invalid.
    """

    for name in ("spec", "data", "ckpt", "base", "config", "validation_data", "env_file"):
        value = getattr(args, name, None)
        if value and not Path(value).exists():
            raise FileNotFoundError(f"--{name.replace('_', '-')}: {value} does not exist")

    if args.command == "gen":
        if args.n < 0:
            raise ValueError(f"--n must be >= 0, got {args.n}")
        if args.validation < 0 or args.validation > args.n:
            raise ValueError(f"--validation must be in [0, {args.n}], got {args.validation}")
        if args.validation and not args.validation_out:
            raise ValueError("--validation needs --validation-out")
    if getattr(args, "jobs", None) is not None and args.jobs < 1:
        raise ValueError(f"--jobs must be >= 1, got {args.jobs}")
    if args.command == "finetune":
        groups = [g for g in args.groups.split(",") if g]
        if not groups:
            raise ValueError(f"--groups needs at least one of {FINETUNE_GROUPS}")
        unknown = [g for g in groups if g not in FINETUNE_GROUPS]
        if unknown:
            raise ValueError(f"Unknown fine-tune groups {unknown}, expected {FINETUNE_GROUPS}")
        args.groups = groups
    if args.command == "eval" and bool(args.ckpt) == bool(args.oracle):
        raise ValueError("eval needs exactly one of --ckpt or --oracle")
    if args.command == "bench" and args.n < MIN_BENCH_PROBLEMS:
        raise ValueError(f"--n must be >= {MIN_BENCH_PROBLEMS}, got {args.n}")
    if getattr(args, "iterations", None) is not None and args.iterations < 0:
        raise ValueError(f"--iterations must be >= 0, got {args.iterations}")
    if getattr(args, "batch_size", None) is not None and args.batch_size < 1:
        raise ValueError(f"--batch-size must be >= 1, got {args.batch_size}")

    return args


def set_default_args_values(args: argparse.Namespace, settings: Any) -> argparse.Namespace:
    """
    Fill unset optional arguments from environment settings.
    Args:
        args: Parsed arguments.
        settings: TopoformerSettings instance.
    Returns:
        Arguments with defaults set.
    """

    if args.command in ("gen", "bench") and args.seed is None:
        args.seed = settings.seed
    if hasattr(args, "jobs") and args.jobs is None:
        args.jobs = settings.jobs
    if hasattr(args, "grid") and args.grid is None:
        args.grid = settings.grid
    if hasattr(args, "png"):
        args.image_format = "png" if args.png else settings.image_format
    if hasattr(args, "log") and args.log is None:
        args.log = f"{args.out}.loss.csv"
    if hasattr(args, "csv") and args.csv is None:
        args.csv = f"{args.report}.csv"
    return args


__all__ = [
    "build_parser",
    "check_args",
    "format_bench_result",
    "format_metrics_report",
    "load_json_config",
    "parse_args",
    "set_default_args_values",
]
