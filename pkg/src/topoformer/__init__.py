#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""topoformer - SIMP topology optimization datasets and a vision transformer surrogate"""

from ._about import (
    __author__,
    __description__,
    __email__,
    __license__,
    __package_name__,
    __url__,
    __version__,
)
from .datasetgenerator import GeneratorConfig, Sample, SampleGenerator, sample_problem
from .datasetstore import Dataset, read_dataset, write_dataset
from .dynamicoptimizer import DynamicOptimizer, DynamicsConfig
from .evaluator import Evaluator, ModelPredictor, OraclePredictor, bench_speedup
from .exceptions import (
    ChecksumError,
    ContainerError,
    ConvergenceError,
    SchemaError,
    SingularSystemError,
    TopoformerError,
    TruncatedFileError,
)
from .problem import BoundarySpec, DynamicLoad, Grid, LoadShape, Material, PointLoad, ProblemSpec
from .settings import TopoformerSettings
from .staticoptimizer import OptimizerConfig, StaticOptimizer
from .trainer import TrainConfig, Trainer
from .visiontransformer import ViTConfig, VisionTransformer

__all__ = [
    "BoundarySpec",
    "ChecksumError",
    "ContainerError",
    "ConvergenceError",
    "Dataset",
    "DynamicLoad",
    "DynamicOptimizer",
    "DynamicsConfig",
    "Evaluator",
    "GeneratorConfig",
    "Grid",
    "LoadShape",
    "Material",
    "ModelPredictor",
    "OptimizerConfig",
    "OraclePredictor",
    "PointLoad",
    "ProblemSpec",
    "Sample",
    "SampleGenerator",
    "SchemaError",
    "SingularSystemError",
    "StaticOptimizer",
    "TopoformerError",
    "TopoformerSettings",
    "TrainConfig",
    "Trainer",
    "TruncatedFileError",
    "ViTConfig",
    "VisionTransformer",
    "bench_speedup",
    "read_dataset",
    "sample_problem",
    "write_dataset",
]
