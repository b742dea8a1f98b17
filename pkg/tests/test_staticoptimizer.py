#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Tests for SIMP sensitivities, the filter, the OC update and the static driver."""

import math

import numpy as np
import pytest

# pylint: disable=import-error
from topoformer.femsolver import assemble_stiffness, compliance, load_vector, solve_static
from topoformer.problem import BoundarySpec, Grid, Material, PointLoad, ProblemSpec
from topoformer.staticoptimizer import (
    OptimizerConfig,
    SensitivityFilter,
    StaticOptimizer,
    filter_sensitivities,
    has_converged,
    heaviside_binarize,
    oc_update,
    sensitivities,
    vf_preserving_binarize,
)


def cantilever(nelx: int, nely: int, vf: float = 0.4) -> ProblemSpec:
    grid = Grid(nelx, nely)
    return ProblemSpec(
        grid=grid,
        bc=BoundarySpec.from_names(["run_left_top", "run_left_bottom"]),
        load=PointLoad.from_angle(grid, nelx - 1, nely - 1, 4),
        vf=vf,
    )


class TestSensitivities:
    """Analytic compliance gradients."""

    def test_match_central_differences(self):
        """dC/drho agrees with central differences of the direct solve."""
        spec = cantilever(6, 4)
        grid, material = spec.grid, Material()
        rho = np.random.default_rng(3).uniform(0.3, 0.9, grid.n_elements)
        f = load_vector(grid, spec.point_load)

        def objective(density):
            k = assemble_stiffness(grid, material, density, 3.0)
            u = solve_static(grid, spec.bc, spec.point_load, k, method="direct")
            return compliance(u, f), u

        _, u = objective(rho)
        analytic = sensitivities(grid, material, rho, u, 3.0)
        h = 1e-6
        for element in (0, 5, 11, 23):
            plus, minus = rho.copy(), rho.copy()
            plus[element] += h
            minus[element] -= h
            numeric = (objective(plus)[0] - objective(minus)[0]) / (2.0 * h)
            assert analytic[element] == pytest.approx(numeric, rel=1e-4, abs=1e-8)

    def test_are_non_positive(self):
        """Adding material never increases compliance."""
        spec = cantilever(6, 4)
        grid = spec.grid
        rho = np.full(grid.n_elements, 0.5)
        k = assemble_stiffness(grid, Material(), rho, 3.0)
        u = solve_static(grid, spec.bc, spec.point_load, k)
        assert np.all(sensitivities(grid, Material(), rho, u, 3.0) <= 0.0)


class TestFilter:
    """Radius-weighted sensitivity filter."""

    def test_small_radius_is_identity(self):
        """rmin <= 1 leaves sensitivities unchanged."""
        grid = Grid(4, 3)
        sens = -np.arange(1.0, 13.0)
        assert np.array_equal(filter_sensitivities(grid, np.full(12, 0.5), sens, 1.0), sens)

    def test_uniform_field_is_preserved(self):
        """Uniform density and sensitivity pass through the filter unchanged."""
        grid = Grid(6, 5)
        filtered = SensitivityFilter().apply(grid, np.full(30, 0.4), np.full(30, -2.0), 2.5)
        assert np.allclose(filtered, -2.0)

    def test_weights_are_row_normalizable(self):
        """Every element has a positive weight sum, including itself."""
        h, hs = SensitivityFilter().weight_matrix(5, 4, 1.5)
        assert h.shape == (20, 20)
        assert np.all(hs >= 1.5 - 1e-12)
        assert np.allclose(h.diagonal(), 1.5)

    def test_weights_are_reused_across_instances(self):
        """A second filter gets the same cached weights for the same grid."""
        first, first_sums = SensitivityFilter().weight_matrix(6, 3, 2.0)
        second, second_sums = SensitivityFilter().weight_matrix(6, 3, 2.0)
        assert (first != second).nnz == 0
        assert np.array_equal(first_sums, second_sums)


class TestOCUpdate:
    """Optimality-criteria update with bisection."""

    def test_hits_volume_within_move_limits(self):
        """The update lands on the target volume without exceeding the move limit."""
        rng = np.random.default_rng(0)
        rho = rng.uniform(0.2, 0.6, 50)
        sens = -rng.uniform(0.1, 2.0, 50)
        updated = oc_update(rho, sens, 0.4, 0.2)
        assert updated.mean() == pytest.approx(0.4, abs=1e-6)
        assert np.all(np.abs(updated - rho) <= 0.2 + 1e-12)
        assert np.all((updated >= 0.0) & (updated <= 1.0))

    def test_positive_sensitivity_raises(self):
        """The OC fixed point needs non-positive sensitivities."""
        with pytest.raises(ValueError, match="non-positive"):
            oc_update(np.full(4, 0.5), np.array([-1.0, 1.0, -1.0, -1.0]), 0.5, 0.2)

    def test_volume_fraction_range(self):
        """vf must lie in (0, 1)."""
        with pytest.raises(ValueError, match="Volume fraction"):
            oc_update(np.full(4, 0.5), -np.ones(4), 1.2, 0.2)

    def test_reaches_volume_with_widely_spread_sensitivities(self):
        """Sensitivities spanning eighty decades still let the multiplier hit the volume."""
        rho = np.full(64, 0.4)
        sens = -np.logspace(0.0, -80.0, 64)
        updated = oc_update(rho, sens, 0.4, 0.2)
        assert updated.mean() == pytest.approx(0.4, abs=1e-6)
        assert updated[0] == pytest.approx(0.6)
        assert updated[-1] == pytest.approx(0.2)

    def test_eta_must_be_positive(self):
        """A non-positive damping exponent is rejected."""
        with pytest.raises(ValueError, match="eta"):
            oc_update(np.full(4, 0.5), -np.ones(4), 0.5, 0.2, eta=0.0)


class TestBinarization:
    """Heaviside projection with volume preservation."""

    def test_heaviside(self):
        """Values at the threshold count as solid."""
        assert list(heaviside_binarize(np.array([0.2, 0.5, 0.7]))) == [0.0, 1.0, 1.0]

    def test_keeps_threshold_when_volume_is_close(self):
        """A small volume shift keeps the 0.5 threshold."""
        binary, threshold = vf_preserving_binarize(np.linspace(0.0, 1.0, 100), 0.5)
        assert threshold == 0.5
        assert binary.mean() == pytest.approx(0.5)

    def test_rebisects_threshold_when_volume_shifts(self):
        """A large shift moves the threshold until the volume matches."""
        binary, threshold = vf_preserving_binarize(np.linspace(0.0, 1.0, 100), 0.2)
        assert threshold > 0.5
        assert abs(binary.mean() - 0.2) <= 0.01


class TestConvergence:
    """Relative-change stopping rule."""

    def test_rules(self):
        """Every recent change must fall below tolerance; inf stops after one iteration."""
        assert has_converged([1.0], math.inf, 5)
        assert has_converged([1.0, 1.0001, 1.0001], 1e-3, 2)
        assert not has_converged([1.0, 2.0, 2.0001], 1e-3, 2)
        assert not has_converged([1.0, 1.0], 1e-3, 2)


class TestStaticOptimizer:
    """End-to-end static SIMP."""

    def test_cantilever_reduces_compliance_at_fixed_volume(self):
        """A 16x8 cantilever ends stiffer than the uniform start at the target volume."""
        spec = cantilever(16, 8)
        config = OptimizerConfig(max_iterations=60, tolerance=1e-2, record_history=True)
        result = StaticOptimizer(config).optimize(spec)

        assert result.iterations <= 60
        assert len(result.density_history) == result.iterations
        assert result.final_compliance < result.compliance_history[0]
        assert result.density.mean() == pytest.approx(0.4, abs=1e-4)
        assert result.density.min() >= 0.0 and result.density.max() <= 1.0

    def test_volume_fraction_override(self):
        """OptimizerConfig.volume_fraction takes precedence over the problem spec."""
        spec = cantilever(8, 4)
        config = OptimizerConfig(volume_fraction=0.3, max_iterations=3)
        result = StaticOptimizer(config).optimize(spec)
        assert result.density.mean() == pytest.approx(0.3, abs=1e-4)

    def test_config_validation_and_round_trip(self):
        """Invalid settings are rejected; inf tolerance survives the dict form."""
        with pytest.raises(ValueError, match="penalty"):
            OptimizerConfig(penalty=0.5)
        with pytest.raises(ValueError, match="move"):
            OptimizerConfig(move=0.0)
        config = OptimizerConfig(tolerance=math.inf)
        assert config.to_dict()["tolerance"] == "inf"
        assert OptimizerConfig.from_dict(config.to_dict()) == config
