#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
evaluator.py

Description:
    Validation metrics for the surrogate and the optimizer-vs-inference speed benchmark.
    Every prediction is binarized twice, at a fixed 0.5 threshold and at the threshold
    that best matches the target volume fraction, and each binary design is scored by
    its compliance error against the stored ground truth, its volume fraction error,
    whether the loaded element is void, and whether the material falls apart into
    several components.

Usage:
    from topoformer.evaluator import Evaluator, ModelPredictor

    evaluator = Evaluator(dynamics=generator_config.dynamics)
    result = evaluator.evaluate(ModelPredictor(model), dataset.samples)
    print(result.fixed.mean_compliance_error)

Requirements:
    - numpy

"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Iterator, Optional, Protocol, Sequence, Union

import numpy as np

from .datasetgenerator import Sample, condition_vector, fft_load_features
from .designcompliance import compliance_of_design
from .dynamicoptimizer import DynamicOptimizer, DynamicsConfig
from .exceptions import SchemaError
from .femsolver import DEFAULT_RTOL, compute_field_image
from .losses import connected_components
from .problem import ProblemSpec
from .staticoptimizer import OptimizerConfig, StaticOptimizer, vf_preserving_binarize
from .visiontransformer import VisionTransformer

FIXED_THRESHOLD = 0.5
FAILED_CE = 30.0
MIN_BENCH_PROBLEMS = 5
MODES = ("fixed", "vf_matched")


class Predictor(Protocol):  # pylint: disable=too-few-public-methods
    def predict(self, samples: Sequence[Sample]) -> list[np.ndarray]: ...


class ModelPredictor:  # pylint: disable=too-few-public-methods
    """Densities from a trained model, in batches"""

    def __init__(self, model: VisionTransformer, batch_size: int = 32):
        self.model = model
        self.batch_size = batch_size

    def predict(self, samples: Sequence[Sample]) -> list[np.ndarray]:
        densities: list[np.ndarray] = []
        for start in range(0, len(samples), self.batch_size):
            chunk = samples[start : start + self.batch_size]
            fields = np.stack([s.fields for s in chunk]).astype(np.float64)
            condition = np.stack([s.condition() for s in chunk])
            densities.extend(self.model.predict(fields, condition))
        return densities


class OraclePredictor:  # pylint: disable=too-few-public-methods
    """Ground-truth passthrough; scores zero on every error metric"""

    def predict(self, samples: Sequence[Sample]) -> list[np.ndarray]:
        return [s.topology.astype(np.float64) for s in samples]


@dataclass(frozen=True)
class SampleScore:
    """Metrics of one binarized prediction"""

    threshold: float
    compliance: float
    compliance_error: float
    vf_error: float
    load_discrepancy: bool
    floating_material: bool
    components: int


@dataclass
class MetricsReport:
    """
    Aggregates over a validation set, in percent

    mean_compliance_error excludes failed (infinite) samples; median_compliance_error is
    taken over samples with CE <= 30% only.
    """

    mode: str
    count: int
    mean_compliance_error: float
    failed_fraction: float
    median_compliance_error: float
    mean_vf_error: float
    load_discrepancy: float
    floating_material: float
    mean_inference_seconds: float = 0.0
    total_seconds: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass
class EvaluationResult:
    fixed: MetricsReport
    vf_matched: MetricsReport
    scores: list[dict[str, SampleScore]]
    seeds: list[Optional[int]]

    def to_dict(self) -> dict[str, Any]:
        return {"fixed": self.fixed.to_dict(), "vf_matched": self.vf_matched.to_dict()}

    def write_csv(self, path: Union[str, Path]) -> Path:
        """One row per sample with both binarization modes side by side"""
        path = Path(path)
        columns = ["index", "seed"]
        fields = [f.name for f in dataclasses.fields(SampleScore)]
        for mode in MODES:
            columns.extend(f"{mode}_{name}" for name in fields)
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(columns)
            for index, (seed, per_mode) in enumerate(zip(self.seeds, self.scores)):
                row: list[Any] = [index, "" if seed is None else seed]
                for mode in MODES:
                    score = per_mode[mode]
                    row.extend(
                        int(v) if isinstance(v, bool) else v
                        for v in dataclasses.astuple(score)
                    )
                writer.writerow(row)
        return path


def score_design(
    spec: ProblemSpec,
    binary: np.ndarray,
    threshold: float,
    gt_compliance: float,
    dynamics: Optional[DynamicsConfig] = None,
    rtol: float = DEFAULT_RTOL,
) -> SampleScore:
    """Metrics of one binary (nely, nelx) design"""
    compliance = compliance_of_design(spec, binary, dynamics, rtol)
    if math.isinf(compliance):
        error = math.inf
    else:
        error = abs(compliance - gt_compliance) / gt_compliance * 100.0
    col, row = spec.point_load.element
    _, components = connected_components(binary)
    return SampleScore(
        threshold=threshold,
        compliance=compliance,
        compliance_error=error,
        vf_error=abs(float(binary.mean()) - spec.vf) * 100.0,
        load_discrepancy=bool(binary[row, col] == 0.0),
        floating_material=components > 1,
        components=components,
    )


def binarize_modes(density: np.ndarray, vf: float) -> dict[str, tuple[np.ndarray, float]]:
    """Fixed-threshold and volume-matched binarizations of a density image"""
    density = np.asarray(density, dtype=np.float64)
    fixed = (density >= FIXED_THRESHOLD).astype(np.float64)
    matched, threshold = vf_preserving_binarize(density, vf, FIXED_THRESHOLD, 0.0, 0.0)
    return {"fixed": (fixed, FIXED_THRESHOLD), "vf_matched": (matched, threshold)}


def _score_sample(
    args: tuple[ProblemSpec, np.ndarray, float, Optional[DynamicsConfig], float],
) -> dict[str, SampleScore]:
    spec, density, gt, dynamics, rtol = args
    return {
        mode: score_design(spec, binary, threshold, gt, dynamics, rtol)
        for mode, (binary, threshold) in binarize_modes(density, spec.vf).items()
    }


def aggregate(
    mode: str, scores: Sequence[SampleScore], inference_seconds: float, total: float
) -> MetricsReport:
    """Reduce per-sample scores to a MetricsReport"""
    count = len(scores)
    errors = np.array([s.compliance_error for s in scores])
    finite = errors[np.isfinite(errors)]
    failed = errors > FAILED_CE
    kept = errors[~failed]
    return MetricsReport(
        mode=mode,
        count=count,
        mean_compliance_error=float(finite.mean()) if finite.size else math.inf,
        failed_fraction=float(failed.mean() * 100.0),
        median_compliance_error=float(np.median(kept)) if kept.size else math.nan,
        mean_vf_error=float(np.mean([s.vf_error for s in scores])),
        load_discrepancy=float(np.mean([s.load_discrepancy for s in scores]) * 100.0),
        floating_material=float(np.mean([s.floating_material for s in scores]) * 100.0),
        mean_inference_seconds=inference_seconds / count,
        total_seconds=total,
    )


class Evaluator:
    """Validation metrics for a predictor over a held-out sample set"""

    def __init__(
        self,
        dynamics: Optional[DynamicsConfig] = None,
        rtol: float = DEFAULT_RTOL,
        jobs: int = 1,
        logger: Optional[logging.Logger] = None,
    ):
        """
        Initialize Evaluator

        Parameters:
            dynamics (DynamicsConfig, optional): Time integration used for dynamic samples;
                must match the one the dataset was generated with
            rtol (float): Solver tolerance
            jobs (int): Worker processes for the per-sample compliance solves
            logger (logging.Logger, optional): Logger instance. If None, uses a NullHandler.
        """
        self.dynamics = dynamics or DynamicsConfig()
        self.rtol = rtol
        self.jobs = jobs

        self.logger = logger or logging.getLogger(__name__)
        if not logger:
            self.logger.addHandler(logging.NullHandler())

    def evaluate(
        self,
        predictor: Predictor,
        samples: Sequence[Sample],
        training_seeds: Optional[Iterable[Optional[int]]] = None,
    ) -> EvaluationResult:
        """
        Score a predictor on validation samples

        Raises:
            ValueError: Empty sample set
            SchemaError: A validation seed also appears in training_seeds
        """
        if not samples:
            raise ValueError("Validation set is empty")
        if training_seeds is not None:
            overlap = {s for s in training_seeds if s is not None} & {
                s.spec.seed for s in samples if s.spec.seed is not None
            }
            if overlap:
                raise SchemaError(
                    f"{len(overlap)} validation seed(s) were used for training, "
                    f"e.g. {sorted(overlap)[:5]}"
                )

        start = time.perf_counter()
        densities = predictor.predict(samples)
        inference = time.perf_counter() - start
        self.logger.info(
            f"Predicted {len(samples)} samples in {inference:.2f}s; "
            f"scoring with {self.jobs} job(s)"
        )
        tasks = [
            (s.spec, np.asarray(d), s.gt_compliance, self.dynamics, self.rtol)
            for s, d in zip(samples, densities)
        ]
        scores = list(self._iterate(tasks))
        total = time.perf_counter() - start
        reports = {
            mode: aggregate(mode, [s[mode] for s in scores], inference, total) for mode in MODES
        }
        for report in reports.values():
            self.logger.info(
                f"[{report.mode}] CE {report.mean_compliance_error:.2f}% "
                f"(median {report.median_compliance_error:.2f}%, "
                f">30% {report.failed_fraction:.1f}%), VF {report.mean_vf_error:.2f}%, "
                f"LD {report.load_discrepancy:.1f}%, FM {report.floating_material:.1f}%"
            )
        return EvaluationResult(
            fixed=reports["fixed"],
            vf_matched=reports["vf_matched"],
            scores=scores,
            seeds=[s.spec.seed for s in samples],
        )

    def _iterate(self, tasks: list[Any]) -> Iterator[dict[str, SampleScore]]:
        if self.jobs <= 1 or len(tasks) <= 1:
            yield from map(_score_sample, tasks)
            return
        with ProcessPoolExecutor(max_workers=self.jobs) as executor:
            yield from executor.map(_score_sample, tasks)


@dataclass
class BenchResult:
    optimizer_seconds: float
    inference_seconds: float
    problems: int

    @property
    def speedup(self) -> float:
        return self.optimizer_seconds / self.inference_seconds

    def to_dict(self) -> dict[str, Any]:
        return {
            "optimizer_seconds": self.optimizer_seconds,
            "inference_seconds": self.inference_seconds,
            "speedup": self.speedup,
            "problems": self.problems,
        }


def bench_speedup(
    specs: Sequence[ProblemSpec],
    model: VisionTransformer,
    optimizer: Optional[OptimizerConfig] = None,
    dynamics: Optional[DynamicsConfig] = None,
    rtol: float = DEFAULT_RTOL,
    logger: Optional[logging.Logger] = None,
) -> BenchResult:
    """
    Mean wall-clock of the optimizer against surrogate inference on the same problems

    Inference time includes the full-material field solve and the condition encoding.

    Raises:
        ValueError: Fewer than five problems
    """
    if len(specs) < MIN_BENCH_PROBLEMS:
        raise ValueError(
            f"Benchmark needs at least {MIN_BENCH_PROBLEMS} problems, got {len(specs)}"
        )
    log = logger or logging.getLogger(__name__)
    optimizer = optimizer or OptimizerConfig()
    dynamics = dynamics or DynamicsConfig()
    optimizer_total = 0.0
    inference_total = 0.0
    for index, spec in enumerate(specs, start=1):
        solver: Any
        if spec.kind == "dynamic":
            solver = DynamicOptimizer(dynamics, optimizer, rtol=rtol)
        else:
            solver = StaticOptimizer(optimizer, rtol=rtol)
        start = time.perf_counter()
        solver.optimize(spec)
        optimizer_total += time.perf_counter() - start

        start = time.perf_counter()
        fields = compute_field_image(spec, rtol=rtol).stacked()
        fft = fft_load_features(spec.shape) if spec.kind == "dynamic" else None
        condition = condition_vector(spec, fft)
        model.predict(fields[None].astype(np.float64), condition[None])
        inference_total += time.perf_counter() - start
        log.debug(f"Bench problem {index}/{len(specs)} done")
    result = BenchResult(optimizer_total / len(specs), inference_total / len(specs), len(specs))
    log.info(
        f"Optimizer {result.optimizer_seconds:.3f}s vs inference {result.inference_seconds:.4f}s "
        f"per problem: {result.speedup:.1f}x"
    )
    return result
