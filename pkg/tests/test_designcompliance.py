#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Tests for compliance evaluation of binary designs."""

import math

import numpy as np
import pytest

# pylint: disable=import-error
from topoformer.designcompliance import FAILED_COMPLIANCE, compliance_of_design
from topoformer.dynamicoptimizer import DynamicsConfig
from topoformer.femsolver import assemble_stiffness, compliance, load_vector, solve_static
from topoformer.problem import DynamicLoad, Material


class TestComplianceOfDesign:
    """Static and dynamic design evaluation."""

    def test_void_design_fails(self, cantilever_spec):
        """An empty design has no load path."""
        assert compliance_of_design(cantilever_spec, np.zeros((8, 8))) == FAILED_COMPLIANCE

    def test_solid_design_matches_direct_solve(self, cantilever_spec):
        """A fully solid design equals f^T u of the full-density system."""
        grid = cantilever_spec.grid
        k = assemble_stiffness(grid, Material(), np.ones(grid.n_elements), 3.0)
        u = solve_static(
            grid, cantilever_spec.bc, cantilever_spec.point_load, k, method="direct"
        )
        expected = compliance(u, load_vector(grid, cantilever_spec.point_load))
        value = compliance_of_design(cantilever_spec, np.ones((8, 8)))
        assert value == pytest.approx(expected, rel=1e-6)

    def test_removing_material_increases_compliance(self, cantilever_spec):
        """Hollowing out the solid block makes it softer."""
        solid = np.ones((8, 8))
        hollow = solid.copy()
        hollow[2:6, 2:6] = 0.0
        assert compliance_of_design(cantilever_spec, hollow) > compliance_of_design(
            cantilever_spec, solid
        )

    def test_grey_values_are_thresholded(self, cantilever_spec):
        """Values at or above 0.5 count as solid."""
        grey = np.full((8, 8), 0.7)
        assert compliance_of_design(cantilever_spec, grey) == pytest.approx(
            compliance_of_design(cantilever_spec, np.ones((8, 8))), rel=1e-9
        )

    def test_dynamic_design_is_finite(self, cantilever_spec):
        """A solid design under a sine load has positive finite dynamic compliance."""
        spec = cantilever_spec.with_load(DynamicLoad(cantilever_spec.point_load, "sine"))
        value = compliance_of_design(spec, np.ones((8, 8)), DynamicsConfig(n_steps=20))
        assert math.isfinite(value)
        assert value != 0.0
