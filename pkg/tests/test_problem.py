#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Tests for grid numbering, fixture sites, loads and problem specs."""

import math

import numpy as np
import pytest

# pylint: disable=import-error
from topoformer.problem import (
    BoundarySpec,
    DynamicLoad,
    Grid,
    LoadShape,
    PointLoad,
    ProblemSpec,
    load_node_for_element,
    site_nodes,
)


class TestGrid:
    """Node, element and DOF numbering."""

    def test_node_index_counts_from_top_of_each_column(self):
        """Nodes are numbered column by column, top to bottom."""
        grid = Grid(3, 2)
        assert grid.node_index(0, 2) == 0
        assert grid.node_index(0, 0) == 2
        assert grid.node_index(1, 2) == 3
        assert grid.n_dofs == 24

    def test_node_outside_grid_raises(self):
        """Out-of-range nodes are rejected."""
        with pytest.raises(ValueError, match="outside grid"):
            Grid(3, 2).node_index(4, 0)

    def test_element_index_and_image_layout_agree(self):
        """image[row, col] holds element row + col * nely."""
        grid = Grid(3, 2)
        image = grid.to_image(np.arange(grid.n_elements))
        assert image.shape == (2, 3)
        for col in range(3):
            for row in range(2):
                assert image[row, col] == grid.element_index(col, row)
                assert grid.element_position(grid.element_index(col, row)) == (col, row)
        assert np.array_equal(grid.to_vector(image), np.arange(grid.n_elements))

    def test_edof_matches_element_corners(self):
        """Each edof row lists the corner DOFs counterclockwise from the lower-left."""
        grid = Grid(4, 3)
        edof = grid.edof_matrix()
        for element in range(grid.n_elements):
            col, row = grid.element_position(element)
            corners = grid.element_corners(col, row)
            expected = [d for node in corners for d in grid.node_dofs(*node)]
            assert list(edof[element]) == expected

    def test_boundary_elements(self):
        """A 4x3 grid has 10 boundary elements, none of them interior."""
        grid = Grid(4, 3)
        cells = grid.boundary_elements()
        assert len(cells) == 10
        assert (1, 1) not in cells and (2, 1) not in cells

    def test_invalid_grid_raises(self):
        """Empty grids are rejected."""
        with pytest.raises(ValueError):
            Grid(0, 4)


class TestBoundarySpec:
    """Canonical fixture sites."""

    def test_site_nodes(self):
        """Corner, midpoint and half-edge runs cover the expected nodes."""
        grid = Grid(4, 4)
        assert site_nodes(grid, 0) == [(0, 0)]
        assert site_nodes(grid, 5) == [(4, 2)]
        assert site_nodes(grid, 15) == [(0, 0), (0, 1), (0, 2)]
        assert site_nodes(grid, 12) == [(2, 4), (3, 4), (4, 4)]
        with pytest.raises(ValueError):
            site_nodes(grid, 16)

    def test_mask_round_trip(self):
        """Site sets survive the 16-bit mask encoding."""
        bc = BoundarySpec((7, 2))
        assert bc.sites == (2, 7)
        assert bc.mask == (1 << 2) | (1 << 7)
        assert BoundarySpec.from_mask(bc.mask) == bc
        assert list(bc.mask_bits()).count(1.0) == 2

    def test_names_round_trip(self):
        """Site names resolve back to the same spec."""
        bc = BoundarySpec.from_names(["corner_bl", "mid_top"])
        assert BoundarySpec.from_names(bc.names) == bc

    def test_invalid_sites_raise(self):
        """Duplicates, empty sets and unknown names are rejected."""
        with pytest.raises(ValueError, match="Duplicate"):
            BoundarySpec((1, 1))
        with pytest.raises(ValueError):
            BoundarySpec(())
        with pytest.raises(ValueError, match="Unknown fixture site"):
            BoundarySpec.from_names(["nowhere"])

    def test_stability(self):
        """A single pinned node leaves rotation free; a run does not."""
        grid = Grid(4, 4)
        assert not BoundarySpec((0,)).is_stable(grid)
        assert BoundarySpec((0, 1)).is_stable(grid)
        assert BoundarySpec((15,)).is_stable(grid)

    def test_fixed_dofs_are_sorted_and_unique(self):
        """Overlapping sites pin each DOF once."""
        grid = Grid(4, 4)
        dofs = BoundarySpec((0, 15)).fixed_dofs(grid)
        assert list(dofs) == sorted(set(dofs))
        assert dofs.size == 6


class TestLoads:
    """Point loads and temporal shapes."""

    def test_from_angle_direction(self):
        """Angle index k points at 60k degrees with unit magnitude."""
        load = PointLoad.from_angle(Grid(4, 4), 3, 3, 1)
        assert load.fx == pytest.approx(0.5)
        assert load.fy == pytest.approx(math.sqrt(3.0) / 2.0)
        assert load.magnitude == pytest.approx(1.0)

    def test_corner_element_loads_domain_corner(self):
        """Corner elements carry their load on the domain corner."""
        grid = Grid(4, 4)
        assert load_node_for_element(grid, 0, 0) == (0, 4)
        assert load_node_for_element(grid, 3, 3) == (4, 0)

    def test_edge_element_loads_first_boundary_corner(self):
        """Top-edge element (2, 0) puts its load on its upper-right node."""
        assert load_node_for_element(Grid(4, 4), 2, 0) == (3, 4)

    def test_interior_element_raises(self):
        """Interior elements cannot carry a load."""
        with pytest.raises(ValueError, match="not on the domain boundary"):
            PointLoad.from_angle(Grid(4, 4), 1, 1, 0)

    def test_angle_index_range(self):
        """Only six load directions exist."""
        with pytest.raises(ValueError):
            PointLoad.from_angle(Grid(4, 4), 0, 0, 6)

    def test_impulse_peaks_at_quarter_second(self):
        """The impulse shape reaches 1 at t = 0.25."""
        values = LoadShape.IMPULSE.evaluate(np.array([0.0, 0.25, 1.0]))
        assert values[0] == 0.0
        assert values[1] == pytest.approx(1.0)
        assert values[2] < values[1]

    def test_dynamic_load_rejects_static_shape(self):
        """A dynamic load needs a time-varying shape."""
        load = PointLoad.from_angle(Grid(4, 4), 0, 0, 0)
        with pytest.raises(ValueError):
            DynamicLoad(load, LoadShape.STATIC)


class TestProblemSpec:
    """Problem validation and the JSON form."""

    def test_volume_fraction_range(self, cantilever_spec):
        """vf must be strictly between 0 and 1."""
        with pytest.raises(ValueError, match="Volume fraction"):
            ProblemSpec(cantilever_spec.grid, cantilever_spec.bc, cantilever_spec.load, 1.0)

    def test_non_unit_load_raises(self, cantilever_spec):
        """Problem loads have unit magnitude."""
        with pytest.raises(ValueError, match="unit magnitude"):
            cantilever_spec.with_load(cantilever_spec.point_load.scaled(2.0))

    def test_dict_round_trip(self, cantilever_spec):
        """to_dict / from_dict preserves the problem."""
        assert ProblemSpec.from_dict(cantilever_spec.to_dict()) == cantilever_spec

    def test_from_dict_with_angle_index(self):
        """A load can be given as element plus angle index."""
        spec = ProblemSpec.from_dict(
            {
                "grid": {"nelx": 6, "nely": 4},
                "bc": ["run_left_top", "run_left_bottom"],
                "load": {"element": [5, 3], "angle_index": 3},
                "vf": 0.5,
            }
        )
        assert spec.kind == "static"
        assert spec.point_load.node == (6, 0)
        assert spec.point_load.fx == pytest.approx(-1.0)

    def test_shape_makes_spec_dynamic(self, cantilever_spec):
        """A non-static shape in the JSON form yields a dynamic spec."""
        data = cantilever_spec.to_dict()
        data["shape"] = "sine"
        spec = ProblemSpec.from_dict(data)
        assert spec.kind == "dynamic"
        assert spec.shape is LoadShape.SINE
        assert spec.point_load == cantilever_spec.point_load
