"""Minimal import sanity tests for the package."""

import importlib


def test_package_imports() -> None:
    """The package imports and exposes its version and main classes."""
    mod = importlib.import_module("topoformer")
    assert hasattr(mod, "__version__")
    for name in ("StaticOptimizer", "SampleGenerator", "VisionTransformer", "Evaluator"):
        assert name in mod.__all__
