#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Tests for validation metrics and the speedup benchmark."""

import csv
import math

import numpy as np
import pytest

# pylint: disable=import-error
from topoformer.datasetgenerator import sample_problem
from topoformer.evaluator import (
    FAILED_CE,
    BenchResult,
    Evaluator,
    ModelPredictor,
    OraclePredictor,
    SampleScore,
    aggregate,
    bench_speedup,
    binarize_modes,
    score_design,
)
from topoformer.exceptions import SchemaError
from topoformer.problem import Grid
from topoformer.staticoptimizer import OptimizerConfig
from topoformer.visiontransformer import VisionTransformer


class VoidPredictor:  # pylint: disable=too-few-public-methods
    """Predicts no material anywhere."""

    def predict(self, samples):
        return [np.zeros(s.topology.shape) for s in samples]


def score(error: float) -> SampleScore:
    return SampleScore(
        threshold=0.5,
        compliance=1.0,
        compliance_error=error,
        vf_error=2.0,
        load_discrepancy=False,
        floating_material=error > 15.0,
        components=1,
    )


class TestScoreDesign:
    """Per-sample metrics."""

    def test_ground_truth_scores_zero(self, sample_factory):
        """A design scored against its own compliance has no error."""
        sample = sample_factory(1)[0]
        result = score_design(sample.spec, sample.topology, 0.5, sample.gt_compliance)
        assert result.compliance_error == pytest.approx(0.0, abs=1e-9)
        assert not result.load_discrepancy
        assert result.vf_error == pytest.approx(abs(sample.topology.mean() - sample.spec.vf) * 100)

    def test_void_design(self, sample_factory):
        """Without material the compliance and its error are infinite."""
        sample = sample_factory(1)[0]
        result = score_design(sample.spec, np.zeros((8, 8)), 0.5, sample.gt_compliance)
        assert math.isinf(result.compliance)
        assert math.isinf(result.compliance_error)
        assert result.load_discrepancy
        assert result.components == 0

    def test_binarize_modes(self):
        """The fixed mode thresholds at 0.5; the matched mode hits the target volume."""
        density = np.linspace(0.0, 1.0, 64).reshape(8, 8)
        modes = binarize_modes(density, 0.25)
        fixed, threshold = modes["fixed"]
        assert threshold == 0.5
        assert fixed.mean() == pytest.approx(0.5)
        matched, _ = modes["vf_matched"]
        assert matched.mean() == pytest.approx(0.25, abs=1.0 / 64)


class TestAggregate:
    """Reduction of per-sample scores."""

    def test_failed_and_infinite_errors(self):
        """Infinite errors count as failed and stay out of the mean."""
        report = aggregate("fixed", [score(e) for e in (10.0, 40.0, math.inf, 20.0)], 2.0, 5.0)
        assert report.count == 4
        assert report.mean_compliance_error == pytest.approx(70.0 / 3.0)
        assert report.failed_fraction == pytest.approx(50.0)
        assert report.median_compliance_error == pytest.approx(15.0)
        assert report.mean_vf_error == pytest.approx(2.0)
        assert report.floating_material == pytest.approx(75.0)
        assert report.mean_inference_seconds == pytest.approx(0.5)
        assert report.total_seconds == 5.0

    def test_everything_failed(self):
        """Failed finite errors still enter the mean; only the median drops them."""
        report = aggregate("vf_matched", [score(math.inf), score(FAILED_CE + 1)], 1.0, 1.0)
        assert report.mean_compliance_error == pytest.approx(FAILED_CE + 1)
        assert math.isnan(report.median_compliance_error)
        assert report.failed_fraction == 100.0

    def test_only_infinite_errors(self):
        """Without any finite error the mean is infinite."""
        report = aggregate("fixed", [score(math.inf), score(math.inf)], 1.0, 1.0)
        assert math.isinf(report.mean_compliance_error)
        assert report.failed_fraction == 100.0


class TestEvaluator:
    """Scoring predictors on a validation set."""

    def test_oracle_has_no_fixed_error(self, sample_factory):
        """Binary ground truth thresholds to itself."""
        samples = sample_factory(3)
        result = Evaluator().evaluate(OraclePredictor(), samples)
        assert result.fixed.count == 3
        assert result.fixed.mean_compliance_error == pytest.approx(0.0, abs=1e-9)
        assert result.fixed.failed_fraction == 0.0
        assert result.fixed.load_discrepancy == 0.0
        assert result.seeds == [s.spec.seed for s in samples]

    def test_void_predictor_fails_everything(self, sample_factory):
        """An empty prediction fails every sample in the fixed mode."""
        result = Evaluator().evaluate(VoidPredictor(), sample_factory(2))
        assert math.isinf(result.fixed.mean_compliance_error)
        assert result.fixed.failed_fraction == 100.0
        assert result.fixed.load_discrepancy == 100.0

    def test_empty_set(self):
        """Nothing to score is an error."""
        with pytest.raises(ValueError, match="empty"):
            Evaluator().evaluate(OraclePredictor(), [])

    def test_seed_overlap(self, sample_factory):
        """Validation seeds may not appear in the training seeds."""
        samples = sample_factory(2)
        with pytest.raises(SchemaError, match="used for training"):
            Evaluator().evaluate(OraclePredictor(), samples, [samples[1].spec.seed, 99999])

    def test_csv_report(self, sample_factory, tmp_path):
        """The CSV has one row per sample with both modes side by side."""
        result = Evaluator().evaluate(OraclePredictor(), sample_factory(2))
        path = result.write_csv(tmp_path / "scores.csv")
        with path.open(newline="") as handle:
            rows = list(csv.DictReader(handle))
        assert len(rows) == 2
        assert rows[0]["index"] == "0"
        assert rows[0]["fixed_load_discrepancy"] == "0"
        assert "vf_matched_threshold" in rows[0]
        assert set(result.to_dict()) == {"fixed", "vf_matched"}

    def test_model_predictor_shapes(self, tiny_vit_config, sample_factory):
        """The model predictor returns one grid-sized density per sample."""
        predictor = ModelPredictor(VisionTransformer(tiny_vit_config, seed=0), batch_size=2)
        densities = predictor.predict(sample_factory(3))
        assert len(densities) == 3
        assert all(d.shape == (8, 8) for d in densities)


class TestBench:
    """Optimizer against surrogate timing."""

    @pytest.fixture
    def specs(self):
        return [sample_problem(seed, "static", Grid(8, 8)) for seed in range(5)]

    def test_needs_five_problems(self, specs, tiny_vit_config):
        """Fewer than five problems is refused."""
        with pytest.raises(ValueError, match="at least 5"):
            bench_speedup(specs[:4], VisionTransformer(tiny_vit_config))

    def test_small_bench(self, specs, tiny_vit_config):
        """Per-problem means are positive and the speedup is their ratio."""
        optimizer = OptimizerConfig(max_iterations=2, min_iterations=1)
        result = bench_speedup(specs, VisionTransformer(tiny_vit_config), optimizer)
        assert result.problems == 5
        assert result.optimizer_seconds > 0.0 and result.inference_seconds > 0.0
        assert result.speedup == pytest.approx(result.optimizer_seconds / result.inference_seconds)
        assert BenchResult(2.0, 0.5, 5).to_dict()["speedup"] == 4.0
