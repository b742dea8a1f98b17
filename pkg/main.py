#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Command-line interface for topoformer.

CLI:
  python main.py [--verbose] [--env-file PATH] COMMAND [options]

Commands:
  gen | fields | optimize | train | finetune | infer | eval | bench

Exit codes:
  0 success, 1 usage error, 2 I/O error, 3 schema / container error, 4 other failure

"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback
from pathlib import Path
from typing import Any, Callable

from pydevmate.logit import LogIt

from commandlinehelper import (
    check_args,
    format_bench_result,
    format_metrics_report,
    load_json_config,
    parse_args,
    set_default_args_values,
)
from src.topoformer import (
    ContainerError,
    DynamicOptimizer,
    DynamicsConfig,
    Evaluator,
    GeneratorConfig,
    Grid,
    ModelPredictor,
    OptimizerConfig,
    OraclePredictor,
    ProblemSpec,
    SampleGenerator,
    SchemaError,
    StaticOptimizer,
    TopoformerSettings,
    TrainConfig,
    Trainer,
    ViTConfig,
    VisionTransformer,
    bench_speedup,
    read_dataset,
    sample_problem,
    write_dataset,
)
from src.topoformer.datasetgenerator import condition_vector, derive_seeds, fft_load_features
from src.topoformer.datasetstore import split_dataset, split_manifest
from src.topoformer.femsolver import compute_field_image
from src.topoformer.imageexport import write_image, write_triptych
from src.topoformer.runmanifest import RunManifest, manifest_path
from src.topoformer.staticoptimizer import SensitivityFilter, heaviside_binarize
from src.topoformer.trainer import check_compatible, validation_loss

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_SCHEMA = 3
EXIT_FAILURE = 4

PRIMARY_OUTPUT = {
    "gen": "out",
    "fields": "out_image",
    "optimize": "out",
    "train": "out",
    "finetune": "out",
    "infer": "out_image",
    "eval": "report",
    "bench": "report",
}


def _parse_and_validate_args(
    argv: list[str] | None, logger: LogIt
) -> tuple[argparse.Namespace, TopoformerSettings]:
    """Parse and validate command-line arguments.

    Args:
        argv: Arguments without the program name.
        logger: Logger instance for logging messages.

    Returns:
        Parsed and validated arguments with the environment settings they defaulted from.

    Raises:
        SystemExit: 0 for --help, 1 for usage errors, 2 for missing files.
    """

    try:
        args = parse_args(argv)
    except SystemExit as e:
        sys.exit(EXIT_OK if e.code in (0, None) else EXIT_USAGE)

    try:
        settings = TopoformerSettings(env_file=args.env_file, logger=logger)
        args = set_default_args_values(args, settings)
        check_args(args)
    except FileNotFoundError as e:
        logger.error(f"Argument error: {e}")
        sys.exit(EXIT_IO)
    except ValueError as e:
        logger.error(f"Argument error: {e}")
        sys.exit(EXIT_USAGE)

    return args, settings


def _write_json(path: str | Path, data: dict[str, Any]) -> Path:
    path = Path(path)
    path.write_text(json.dumps(data, indent=2) + "\n")
    return path


def _read_spec(path: str) -> ProblemSpec:
    try:
        return ProblemSpec.from_dict(load_json_config(path))
    except (KeyError, TypeError) as e:
        raise SchemaError(f"{path} is not a valid problem spec: {e}") from e


def _optimizer_sections(path: str | None) -> tuple[OptimizerConfig, DynamicsConfig]:
    config = load_json_config(path)
    return (
        OptimizerConfig.from_dict(config.get("optimizer", {})),
        DynamicsConfig.from_dict(config.get("dynamics", {})),
    )


def _load_model(path: str, logger: LogIt) -> tuple[VisionTransformer, dict[str, Any]]:
    logger.info(f"Loading checkpoint {path}...")
    return VisionTransformer.load(path, logger=logger)


def _train_config(args: argparse.Namespace, section: dict[str, Any]) -> TrainConfig:
    """JSON training section with command-line overrides applied"""
    merged = dict(section)
    overrides = {
        "iterations": args.iterations,
        "batch_size": args.batch_size,
        "learning_rate": args.lr,
        "seed": args.seed,
    }
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig.from_dict(merged)


def _cmd_gen(args: argparse.Namespace, settings: TopoformerSettings, logger: LogIt, run) -> None:
    if args.clear_cache:
        logger.info("Clearing filter weight cache...")
        SensitivityFilter().weight_matrix.clear_cache()
        logger.success("Cache cleared successfully.")

    config_data = load_json_config(args.config)
    config_data.update({"kind": args.kind, "grid_size": args.grid, "rtol": settings.solver_rtol})
    config = GeneratorConfig.from_dict(config_data)
    run.config["generator"] = config.to_dict()

    samples = SampleGenerator(config, logger=logger).generate_dataset(
        args.n, args.seed, jobs=args.jobs
    )
    generator = {**config.to_dict(), "seed": args.seed, "n": args.n}
    if args.validation:
        train, validation = split_dataset(samples, args.validation, args.seed)
        train_split = split_manifest("train", validation)
        write_dataset(args.out, train, config.kind, config.grid, generator, train_split)
        validation_split = split_manifest("validation", train)
        write_dataset(
            args.validation_out, validation, config.kind, config.grid, generator, validation_split
        )
        run.add_output(args.validation_out)
        logger.info(f"Split: {len(train)} train / {len(validation)} validation")
    else:
        write_dataset(args.out, samples, config.kind, config.grid, generator)
    run.add_output(args.out)

    if args.images:
        directory = Path(args.images)
        directory.mkdir(parents=True, exist_ok=True)
        ext = args.image_format
        for index, sample in enumerate(samples):
            stem = directory / f"{index:05d}"
            write_image(f"{stem}.sed.{ext}", sample.fields[0], ext)
            write_image(f"{stem}.vm.{ext}", sample.fields[1], ext)
            write_image(f"{stem}.topology.{ext}", sample.topology, ext)
        run.add_output(directory)
    logger.success(f"Wrote {len(samples)} {config.kind} samples to {args.out}")


def _cmd_fields(args: argparse.Namespace, settings: TopoformerSettings, logger: LogIt, run):
    spec = _read_spec(args.spec)
    fields = compute_field_image(spec, rtol=settings.solver_rtol)
    out = Path(args.out_image)
    for name, image in (("sed", fields.sed), ("vm", fields.vm)):
        target = out.with_name(f"{out.stem}.{name}{out.suffix}")
        path = write_image(target, image, args.image_format)
        run.add_output(path)
    logger.success(f"Field images written next to {out}")


def _cmd_optimize(args: argparse.Namespace, settings: TopoformerSettings, logger: LogIt, run):
    spec = _read_spec(args.spec)
    optimizer_config, dynamics = _optimizer_sections(args.config)
    run.config["optimizer"] = optimizer_config.to_dict()
    run.config["dynamics"] = dynamics.to_dict()
    optimizer: Any
    if spec.kind == "dynamic":
        optimizer = DynamicOptimizer(dynamics, optimizer_config, settings.solver_rtol, logger)
    else:
        optimizer = StaticOptimizer(optimizer_config, settings.solver_rtol, logger)
    result = optimizer.optimize(spec)
    density = spec.grid.to_image(result.density)
    write_image(args.out, density, args.image_format)
    summary = {
        "compliance": result.final_compliance,
        "iterations": result.iterations,
        "converged": result.converged,
        "volume_fraction": float(result.density.mean()),
        "binary_volume_fraction": float(heaviside_binarize(result.density).mean()),
        "elapsed_seconds": result.elapsed_seconds,
    }
    run.add_output(args.out)
    run.add_output(_write_json(f"{args.out}.json", summary))
    logger.success(
        f"Optimized in {result.iterations} iterations: compliance {result.final_compliance:.6g}"
    )


def _cmd_train(args: argparse.Namespace, settings: TopoformerSettings, logger: LogIt, run):
    config_file = load_json_config(args.config)
    train_config = _train_config(args, config_file.get("train", {}))
    dataset = read_dataset(args.data)
    if not dataset.samples:
        raise SchemaError(f"{args.data} holds no samples")
    vit_section = dict(config_file.get("vit", {}))
    if args.preset:
        vit_section["preset"] = args.preset
    vit_section.setdefault("preset", "desk")
    vit_section.setdefault("grid", dataset.grid.nelx)
    vit_section.setdefault("condition_dim", dataset.samples[0].condition().shape[0])
    vit_config = ViTConfig.from_dict(vit_section)
    run.config.update({"train": train_config.to_dict(), "vit": vit_config.to_dict()})
    run.seed = train_config.seed

    model = VisionTransformer(vit_config, seed=train_config.seed, logger=logger)
    metadata = {"kind": dataset.kind, "train_seeds": dataset.seeds, "dataset": str(args.data)}
    result = Trainer(train_config, logger).train(
        model, dataset.samples, args.log, args.out, metadata=metadata
    )
    _report_training(args, model, result, logger, run)


def _cmd_finetune(args: argparse.Namespace, settings: TopoformerSettings, logger: LogIt, run):
    model, base_metadata = _load_model(args.base, logger)
    if base_metadata.get("kind", "static") != "static":
        raise SchemaError(f"{args.base} is not a static-trained checkpoint")
    dataset = read_dataset(args.data)
    if dataset.kind != "dynamic":
        raise SchemaError(f"{args.data} holds {dataset.kind} samples; fine-tuning needs dynamic")
    config_file = load_json_config(args.config)
    train_config = _train_config(args, config_file.get("train", {}))
    run.config.update({"train": train_config.to_dict(), "groups": args.groups})
    run.seed = train_config.seed

    metadata = {
        "kind": "dynamic",
        "train_seeds": dataset.seeds,
        "dataset": str(args.data),
        "base": str(args.base),
        "groups": args.groups,
    }
    result = Trainer(train_config, logger).finetune(
        model, args.groups, dataset.samples, args.log, args.out, metadata=metadata
    )
    _report_training(args, model, result, logger, run)


def _report_training(args, model, result, logger: LogIt, run) -> None:
    run.add_output(args.out)
    run.add_output(args.log)
    if args.validation_data:
        validation = read_dataset(args.validation_data)
        loss = validation_loss(model, validation.samples)
        run.config["validation_loss"] = loss
        logger.info(f"Validation loss: {loss:.6f}")
    final = f"final loss {result.final.total:.6f}" if result.final else "no steps run"
    logger.success(
        f"Trained {len(result.history)} steps in {result.elapsed_seconds:.1f}s, "
        f"{final}; checkpoint {args.out}"
    )


def _cmd_infer(args: argparse.Namespace, settings: TopoformerSettings, logger: LogIt, run):
    model, _ = _load_model(args.ckpt, logger)
    spec = _read_spec(args.spec)
    if spec.grid != Grid(model.config.grid, model.config.grid):
        raise SchemaError(
            f"Spec grid {spec.grid.nelx}x{spec.grid.nely} does not match the model grid "
            f"{model.config.grid}"
        )
    fields = compute_field_image(spec, rtol=settings.solver_rtol).stacked()
    fft = fft_load_features(spec.shape) if spec.kind == "dynamic" else None
    density = model.predict(fields[None], condition_vector(spec, fft)[None])[0]
    write_image(args.out_image, density, args.image_format)
    summary = {
        "predicted_volume_fraction": float(density.mean()),
        "binary_volume_fraction": float((density >= 0.5).mean()),
        "target_volume_fraction": spec.vf,
        "image": str(args.out_image),
    }
    run.add_output(args.out_image)
    run.add_output(_write_json(f"{args.out_image}.json", summary))
    logger.success(f"Predicted volume fraction {summary['predicted_volume_fraction']:.4f}")


def _cmd_eval(args: argparse.Namespace, settings: TopoformerSettings, logger: LogIt, run):
    dataset = read_dataset(args.data)
    generator = GeneratorConfig.from_dict(
        {k: v for k, v in dataset.manifest.get("generator", {}).items() if k not in ("seed", "n")}
    )
    training_seeds = None
    if args.oracle:
        predictor: Any = OraclePredictor()
    else:
        model, metadata = _load_model(args.ckpt, logger)
        check_compatible(model, dataset.samples)
        training_seeds = metadata.get("train_seeds")
        predictor = ModelPredictor(model)
    evaluator = Evaluator(generator.dynamics, generator.rtol, args.jobs, logger)
    result = evaluator.evaluate(predictor, dataset.samples, training_seeds)

    report = {**result.to_dict(), "dataset": str(args.data), "oracle": args.oracle}
    run.add_output(_write_json(args.report, report))
    run.add_output(result.write_csv(args.csv))
    if args.images:
        directory = Path(args.images)
        directory.mkdir(parents=True, exist_ok=True)
        densities = predictor.predict(dataset.samples[: args.max_images])
        for index, (sample, density) in enumerate(zip(dataset.samples, densities)):
            write_triptych(
                directory / f"{index:05d}.{args.image_format}",
                sample.topology,
                density,
                args.image_format,
            )
        run.add_output(directory)
    logger.info(format_metrics_report(result.to_dict()))
    logger.success(f"Report written to {args.report}")


def _cmd_bench(args: argparse.Namespace, settings: TopoformerSettings, logger: LogIt, run):
    model, metadata = _load_model(args.ckpt, logger)
    optimizer_config, dynamics = _optimizer_sections(args.config)
    kind = metadata.get("kind", "static")
    grid = Grid(model.config.grid, model.config.grid)
    specs = [sample_problem(s, kind, grid) for s in derive_seeds(args.seed, args.n)]
    result = bench_speedup(
        specs, model, optimizer_config, dynamics, settings.solver_rtol, logger=logger
    )
    run.add_output(_write_json(args.report, {**result.to_dict(), "kind": kind}))
    logger.info(format_bench_result(result.to_dict()))


COMMANDS: dict[str, Callable[..., None]] = {
    "gen": _cmd_gen,
    "fields": _cmd_fields,
    "optimize": _cmd_optimize,
    "train": _cmd_train,
    "finetune": _cmd_finetune,
    "infer": _cmd_infer,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
}


def _main(argv: list[str] | None = None) -> int:
    """Command-line interface main function.

    Exit codes:
        0: Success
        1: Usage error
        2: I/O error
        3: Schema or container error
        4: Any other failure
    """

    logger = LogIt(name="topoformer", level=logging.INFO, console=True, file=False)
    args, settings = _parse_and_validate_args(argv, logger)

    # Set up logger for the workflows using PyDevMate's LogIt
    log_level = logging.DEBUG if args.verbose else logging.INFO
    logger = LogIt(
        name="topoformer",
        level=log_level,
        console=True,
        file=False,
        format="%(message)s",
    )

    run = RunManifest.start(
        args.command,
        config={k: v for k, v in vars(args).items() if k != "command"},
        seed=getattr(args, "seed", None),
    )
    output = getattr(args, PRIMARY_OUTPUT[args.command])
    code = EXIT_OK
    error = None
    try:
        COMMANDS[args.command](args, settings, logger, run)
    except (SchemaError, ContainerError) as e:
        code, error = EXIT_SCHEMA, e
    except OSError as e:
        code, error = EXIT_IO, e
    except Exception as e:  # pylint: disable=broad-except
        code, error = EXIT_FAILURE, e

    if error is not None:
        logger.error(f"An error occurred: {error}")
        print(f"topoformer {args.command}: {error}", file=sys.stderr)
        if args.verbose:
            traceback.print_exception(type(error), error, error.__traceback__)
    try:
        run.finish("ok" if error is None else "failed", None if error is None else str(error))
        run.write(manifest_path(output))
    except OSError as e:
        logger.warning(f"Could not write run manifest: {e}")
    return code


if __name__ == "__main__":
    raise SystemExit(_main())
