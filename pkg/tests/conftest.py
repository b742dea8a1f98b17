#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Fixtures and configuration for pytest."""
import os
import sys

import numpy as np
import pytest

# Ensure src/ is on sys.path for imports in tests
ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), os.pardir))
SRC = os.path.join(ROOT, "src")
if SRC not in sys.path:
    sys.path.insert(0, SRC)

# pylint: disable=import-error,wrong-import-position
from topoformer.datasetgenerator import Sample, fft_load_features, sample_problem
from topoformer.designcompliance import compliance_of_design
from topoformer.femsolver import compute_field_image
from topoformer.problem import BoundarySpec, Grid, PointLoad, ProblemSpec
from topoformer.visiontransformer import ViTConfig


@pytest.fixture
def cantilever_spec() -> ProblemSpec:
    """8x8 cantilever: left edge clamped, load at 240 degrees on the bottom-right corner."""
    grid = Grid(8, 8)
    return ProblemSpec(
        grid=grid,
        bc=BoundarySpec.from_names(["run_left_top", "run_left_bottom"]),
        load=PointLoad.from_angle(grid, 7, 7, 4),
        vf=0.4,
        seed=11,
    )


@pytest.fixture
def tiny_vit_config() -> ViTConfig:
    """Smallest useful ViT on an 8x8 grid: four 4x4 patches."""
    return ViTConfig(hidden_dim=8, layers=2, heads=2, patch_size=4, grid=8, mlp_ratio=2)


def build_sample(spec: ProblemSpec, topology: np.ndarray) -> Sample:
    """Sample with real input fields and the exact compliance of `topology`."""
    fft = fft_load_features(spec.shape) if spec.kind == "dynamic" else None
    return Sample(
        spec=spec,
        fields=compute_field_image(spec).stacked(),
        topology=topology,
        gt_compliance=compliance_of_design(spec, topology),
        fft=fft,
    )


@pytest.fixture
def sample_factory():
    """Build n synthetic 8x8 samples with random connected-ish binary topologies."""

    def make(n: int, kind: str = "static", seed: int = 0) -> list[Sample]:
        rng = np.random.default_rng(seed)
        samples = []
        for index in range(n):
            spec = sample_problem(seed * 1000 + index, kind, Grid(8, 8))
            topology = (rng.random((8, 8)) < 0.6).astype(np.float32)
            col, row = spec.point_load.element
            topology[row, col] = 1.0
            samples.append(build_sample(spec, topology))
        return samples

    return make
