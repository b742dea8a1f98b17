#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Tests for element matrices, assembly, the static solve and field images."""

import numpy as np
import pytest

# pylint: disable=import-error
from topoformer.exceptions import SingularSystemError
from topoformer.femsolver import (
    FieldImage,
    assemble_from_moduli,
    assemble_stiffness,
    compliance,
    compute_field_image,
    element_fields,
    element_stiffness,
    free_dofs,
    load_vector,
    normalize_fields,
    solve_static,
    solve_system,
    strain_energy_product,
)
from topoformer.problem import BoundarySpec, Grid, Material, PointLoad


class TestElementStiffness:
    """The 8x8 bilinear element matrix."""

    def test_symmetric_with_three_rigid_modes(self):
        """KE is symmetric positive semidefinite with exactly three zero eigenvalues."""
        ke = element_stiffness(Material())
        assert np.allclose(ke, ke.T)
        eigenvalues = np.linalg.eigvalsh(ke)
        assert np.sum(np.abs(eigenvalues) < 1e-10) == 3
        assert eigenvalues.min() > -1e-12

    def test_translation_is_stress_free(self):
        """Rigid translation in x produces no nodal forces."""
        ke = element_stiffness(Material())
        assert np.allclose(ke @ np.tile([1.0, 0.0], 4), 0.0)

    def test_scales_with_modulus(self):
        """KE is linear in the modulus."""
        material = Material()
        assert np.allclose(element_stiffness(material, 3.0), 3.0 * element_stiffness(material))


class TestAssembly:
    """Global stiffness assembly."""

    def test_shape_and_symmetry(self):
        """K is n_dofs square and symmetric."""
        grid = Grid(4, 3)
        k = assemble_stiffness(grid, Material(), np.full(grid.n_elements, 0.5), 3.0)
        assert k.shape == (grid.n_dofs, grid.n_dofs)
        assert abs(k - k.T).max() < 1e-14

    def test_image_and_vector_densities_agree(self):
        """A (nely, nelx) image assembles the same matrix as its element vector."""
        grid = Grid(4, 3)
        rho = np.random.default_rng(0).uniform(0.1, 1.0, grid.n_elements)
        from_vector = assemble_stiffness(grid, Material(), rho, 3.0)
        from_image = assemble_stiffness(grid, Material(), grid.to_image(rho), 3.0)
        assert abs(from_vector - from_image).max() == 0.0

    def test_invalid_inputs_raise(self):
        """Penalty below 1, out-of-range densities and wrong shapes are rejected."""
        grid = Grid(2, 2)
        with pytest.raises(ValueError, match="penalty"):
            assemble_stiffness(grid, Material(), np.ones(4), 0.5)
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            assemble_stiffness(grid, Material(), np.full(4, 1.5), 3.0)
        with pytest.raises(ValueError, match="does not match"):
            assemble_stiffness(grid, Material(), np.ones(5), 3.0)


class TestStaticSolve:
    """Linear solves with homogeneous Dirichlet conditions."""

    def test_uniform_tension_patch(self):
        """A bar in uniform tension reproduces the exact linear displacement field."""
        grid = Grid(4, 2)
        material = Material()
        k = assemble_from_moduli(grid, material, np.ones(grid.n_elements))
        fixed = [grid.node_dofs(0, iy)[0] for iy in range(3)] + [grid.node_dofs(0, 0)[1]]
        f = np.zeros(grid.n_dofs)
        for iy, share in ((0, 0.25), (1, 0.5), (2, 0.25)):
            f[grid.node_dofs(4, iy)[0]] = share

        u = solve_system(k, f, np.array(fixed), method="direct")

        stress = 0.5
        for ix in range(5):
            for iy in range(3):
                dof_x, dof_y = grid.node_dofs(ix, iy)
                assert u[dof_x] == pytest.approx(stress * ix, abs=1e-10)
                assert u[dof_y] == pytest.approx(-material.nu * stress * iy, abs=1e-10)

        fields = element_fields(grid, material, u)
        assert np.allclose(fields.vm, stress)
        assert np.allclose(fields.sed, 0.5 * stress * stress)

    def test_pcg_matches_dense_solve(self, cantilever_spec):
        """PCG agrees with a dense solve of the reduced system."""
        grid = cantilever_spec.grid
        k = assemble_stiffness(grid, Material(), np.full(grid.n_elements, 0.5), 3.0)
        u = solve_static(grid, cantilever_spec.bc, cantilever_spec.point_load, k)

        f = load_vector(grid, cantilever_spec.point_load)
        free = free_dofs(grid.n_dofs, cantilever_spec.bc.fixed_dofs(grid))
        dense = k.toarray()[np.ix_(free, free)]
        expected = np.zeros(grid.n_dofs)
        expected[free] = np.linalg.solve(dense, f[free])
        assert np.allclose(u, expected, rtol=1e-5, atol=1e-6 * np.abs(expected).max())

    def test_compliance_equals_strain_energy_product(self, cantilever_spec):
        """f^T u equals u^T K u at equilibrium."""
        grid = cantilever_spec.grid
        k = assemble_stiffness(grid, Material(), np.ones(grid.n_elements), 3.0)
        u = solve_static(grid, cantilever_spec.bc, cantilever_spec.point_load, k)
        f = load_vector(grid, cantilever_spec.point_load)
        assert compliance(u, f) == pytest.approx(strain_energy_product(k, u), rel=1e-6)
        assert compliance(u, f) > 0.0

    def test_fixed_dofs_stay_zero(self, cantilever_spec):
        """Constrained DOFs are exactly zero in the solution."""
        grid = cantilever_spec.grid
        k = assemble_stiffness(grid, Material(), np.ones(grid.n_elements), 3.0)
        u = solve_static(grid, cantilever_spec.bc, cantilever_spec.point_load, k)
        assert np.all(u[cantilever_spec.bc.fixed_dofs(grid)] == 0.0)

    def test_single_pinned_node_is_singular(self):
        """One pinned node leaves rotation free."""
        grid = Grid(4, 4)
        k = assemble_stiffness(grid, Material(), np.ones(grid.n_elements), 3.0)
        load = PointLoad.from_angle(grid, 3, 3, 1)
        with pytest.raises(SingularSystemError):
            solve_static(grid, BoundarySpec((0,)), load, k)

    def test_no_fixed_dofs_is_singular(self):
        """A free-floating system cannot be solved."""
        grid = Grid(2, 2)
        k = assemble_stiffness(grid, Material(), np.ones(grid.n_elements), 3.0)
        with pytest.raises(SingularSystemError, match="No fixed DOFs"):
            solve_system(k, np.ones(grid.n_dofs), np.array([], dtype=np.int64))

    def test_direct_solve_limited_to_small_grids(self):
        """Dense LU is refused above 8x8."""
        grid = Grid(10, 10)
        k = assemble_stiffness(grid, Material(), np.ones(grid.n_elements), 3.0)
        load = PointLoad.from_angle(grid, 9, 9, 4)
        with pytest.raises(ValueError, match="8x8"):
            solve_static(grid, BoundarySpec((14, 15)), load, k, method="direct")

    def test_unknown_method_raises(self):
        """Only pcg and direct are supported."""
        grid = Grid(2, 2)
        k = assemble_stiffness(grid, Material(), np.ones(grid.n_elements), 3.0)
        with pytest.raises(ValueError, match="Unknown solver method"):
            solve_system(k, np.ones(grid.n_dofs), np.array([0, 1, 2]), method="cholesky")


class TestFields:
    """Strain energy density and von Mises images."""

    def test_normalized_fields_peak_at_one(self, cantilever_spec):
        """Each channel of the input image is scaled to a maximum of 1."""
        fields = compute_field_image(cantilever_spec)
        assert fields.shape == (8, 8)
        assert fields.sed.max() == pytest.approx(1.0)
        assert fields.vm.max() == pytest.approx(1.0)
        assert fields.sed.min() >= 0.0
        assert fields.stacked().shape == (2, 8, 8)

    def test_zero_channel_stays_zero(self):
        """An all-zero channel is not divided by zero."""
        raw = FieldImage(sed=np.zeros((2, 2)), vm=np.array([[1.0, 2.0], [0.0, 4.0]]))
        normalized = normalize_fields(raw)
        assert np.all(normalized.sed == 0.0)
        assert normalized.vm[1, 1] == 1.0

    def test_negative_or_nan_channel_raises(self):
        """Negative energies and NaN are rejected."""
        with pytest.raises(ValueError, match="negative"):
            normalize_fields(FieldImage(sed=-np.ones((2, 2)), vm=np.ones((2, 2))))
        with pytest.raises(ValueError, match="NaN"):
            normalize_fields(FieldImage(sed=np.ones((2, 2)), vm=np.full((2, 2), np.nan)))

    def test_stacked_round_trip(self):
        """from_stacked inverts stacked."""
        fields = FieldImage(sed=np.eye(3), vm=np.ones((3, 3)))
        again = FieldImage.from_stacked(fields.stacked())
        assert np.array_equal(again.sed, fields.sed)
        assert np.array_equal(again.vm, fields.vm)
