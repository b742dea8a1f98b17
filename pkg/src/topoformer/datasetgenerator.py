#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
datasetgenerator.py

Description:
    Seeded sampling of topology optimization problems, ground-truth generation with the
    static or dynamic optimizer, FFT load features, the condition vector consumed by the
    surrogate, and dihedral augmentation of finished samples.

Usage:
    from topoformer.datasetgenerator import GeneratorConfig, SampleGenerator

    generator = SampleGenerator(GeneratorConfig(kind="static", grid_size=32))
    samples = generator.generate_dataset(n=100, seed=7, jobs=4)

Requirements:
    - numpy

"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterator, Optional

import numpy as np

from .autodiff import make_rng
from .designcompliance import compliance_of_design
from .dynamicoptimizer import DynamicOptimizer, DynamicsConfig
from .exceptions import ConvergenceError
from .femsolver import DEFAULT_RTOL, compute_field_image
from .problem import (
    ANGLE_COUNT,
    ANGLE_STEP_DEGREES,
    DYNAMIC_SHAPES,
    BoundarySpec,
    DynamicLoad,
    Grid,
    LoadShape,
    PointLoad,
    ProblemSpec,
    site_nodes,
)
from .staticoptimizer import OptimizerConfig, StaticOptimizer, vf_preserving_binarize

KINDS = ("static", "dynamic")
FFT_BINS = 10
DEFAULT_FFT_SAMPLES = 256
MIN_FFT_SAMPLES = 20
STATIC_CONDITION_DIM = 22
DYNAMIC_CONDITION_DIM = STATIC_CONDITION_DIM + FFT_BINS
VF_RANGE = (0.30, 0.50)

# Dihedral transforms as (linear part, uses-offset-per-axis); node p -> R p + n * offset
TRANSFORMS: dict[str, tuple[tuple[tuple[int, int], tuple[int, int]], tuple[int, int]]] = {
    "identity": (((1, 0), (0, 1)), (0, 0)),
    "rot90": (((0, -1), (1, 0)), (1, 0)),
    "rot180": (((-1, 0), (0, -1)), (1, 1)),
    "rot270": (((0, 1), (-1, 0)), (0, 1)),
    "mirror_x": (((-1, 0), (0, 1)), (1, 0)),
    "mirror_y": (((1, 0), (0, -1)), (0, 1)),
    "transpose": (((0, 1), (1, 0)), (0, 0)),
    "antitranspose": (((0, -1), (-1, 0)), (1, 1)),
}
AXIS_PRESERVING = ("identity", "mirror_x", "mirror_y", "rot180")


def sample_problem(
    seed: int,
    kind: str = "static",
    grid: Optional[Grid] = None,
    vf_range: tuple[float, float] = VF_RANGE,
) -> ProblemSpec:
    """
    Draw a random problem from a seed

    Draw order: boundary element, angle index, fixture count, fixture subset (redrawn
    with the same count until at least two nodes are pinned), volume fraction, and for
    dynamic problems the load shape.

    Raises:
        ValueError: Unknown kind
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got '{kind}'")
    grid = grid or Grid(64, 64)
    rng = make_rng(seed)

    cells = grid.boundary_elements()
    col, row = cells[int(rng.integers(len(cells)))]
    angle_index = int(rng.integers(ANGLE_COUNT))
    count = int(rng.integers(1, 5))
    while True:
        sites = tuple(int(s) for s in rng.choice(16, size=count, replace=False))
        bc = BoundarySpec(sites)
        if bc.is_stable(grid):
            break
    vf = float(rng.uniform(*vf_range))
    point = PointLoad.from_angle(grid, col, row, angle_index)
    load: Any = point
    if kind == "dynamic":
        load = DynamicLoad(point, DYNAMIC_SHAPES[int(rng.integers(len(DYNAMIC_SHAPES)))])
    return ProblemSpec(grid=grid, bc=bc, load=load, vf=vf, seed=seed)


def fft_load_features(shape: LoadShape, n_time_samples: int = DEFAULT_FFT_SAMPLES) -> np.ndarray:
    """Magnitudes of DFT bins 0..9 of g(t) sampled at t = k / n, divided by n"""
    if n_time_samples < MIN_FFT_SAMPLES:
        raise ValueError(
            f"n_time_samples must be >= {MIN_FFT_SAMPLES} to resolve {FFT_BINS} bins, "
            f"got {n_time_samples}"
        )
    t = np.arange(n_time_samples) / n_time_samples
    spectrum = np.fft.fft(LoadShape(shape).evaluate(t))
    return np.abs(spectrum[:FFT_BINS]) / n_time_samples


def condition_vector(
    spec: ProblemSpec,
    fft: Optional[np.ndarray] = None,
    n_time_samples: int = DEFAULT_FFT_SAMPLES,
) -> np.ndarray:
    """
    Scalars for the class token

    Layout: load node (x / nelx, y / nely), direction (cos, sin), magnitude, 16 BC bits,
    vf; dynamic problems append the 10 FFT amplitudes.
    """
    load = spec.point_load
    magnitude = load.magnitude
    ix, iy = load.node
    parts = [
        np.array([ix / spec.grid.nelx, iy / spec.grid.nely]),
        np.array([load.fx / magnitude, load.fy / magnitude, magnitude]),
        spec.bc.mask_bits(),
        np.array([spec.vf]),
    ]
    if spec.kind == "dynamic":
        if fft is None:
            fft = fft_load_features(spec.shape, n_time_samples)
        parts.append(np.asarray(fft, dtype=np.float64))
    return np.concatenate(parts)


@dataclass(eq=False)
class Sample:
    """One training example: problem, input fields, binary topology and its compliance"""

    spec: ProblemSpec
    fields: np.ndarray
    topology: np.ndarray
    gt_compliance: float
    fft: Optional[np.ndarray] = None
    threshold: float = 0.5
    iterations: int = 0

    def __post_init__(self) -> None:
        self.fields = np.asarray(self.fields, dtype=np.float32)
        self.topology = np.asarray(self.topology, dtype=np.float32)
        if self.fft is not None:
            self.fft = np.asarray(self.fft, dtype=np.float32)
        shape = self.spec.grid.shape
        if self.fields.shape != (2,) + shape:
            raise ValueError(f"fields shape {self.fields.shape} != {(2,) + shape}")
        if self.topology.shape != shape:
            raise ValueError(f"topology shape {self.topology.shape} != {shape}")
        if self.spec.kind == "dynamic" and (self.fft is None or self.fft.shape != (FFT_BINS,)):
            raise ValueError(f"Dynamic samples carry {FFT_BINS} FFT amplitudes")

    @property
    def kind(self) -> str:
        return self.spec.kind

    def condition(self) -> np.ndarray:
        fft = None if self.fft is None else self.fft.astype(np.float64)
        return condition_vector(self.spec, fft)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Sample):
            return NotImplemented
        same_fft = (self.fft is None and other.fft is None) or (
            self.fft is not None
            and other.fft is not None
            and self.fft.tobytes() == other.fft.tobytes()
        )
        return (
            self.spec == other.spec
            and self.fields.tobytes() == other.fields.tobytes()
            and self.topology.tobytes() == other.topology.tobytes()
            and self.gt_compliance == other.gt_compliance
            and same_fft
            and self.threshold == other.threshold
            and self.iterations == other.iterations
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class GeneratorConfig:
    """Dataset generation settings"""

    kind: str = "static"
    grid_size: int = 64
    n_time_samples: int = DEFAULT_FFT_SAMPLES
    rtol: float = DEFAULT_RTOL
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got '{self.kind}'")
        if self.grid_size < 2:
            raise ValueError(f"grid_size must be >= 2, got {self.grid_size}")

    @property
    def grid(self) -> Grid:
        return Grid(self.grid_size, self.grid_size)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "grid_size": self.grid_size,
            "n_time_samples": self.n_time_samples,
            "rtol": self.rtol,
            "optimizer": self.optimizer.to_dict(),
            "dynamics": self.dynamics.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> GeneratorConfig:
        return cls(
            kind=data.get("kind", "static"),
            grid_size=int(data.get("grid_size", 64)),
            n_time_samples=int(data.get("n_time_samples", DEFAULT_FFT_SAMPLES)),
            rtol=float(data.get("rtol", DEFAULT_RTOL)),
            optimizer=OptimizerConfig.from_dict(data.get("optimizer", {})),
            dynamics=DynamicsConfig.from_dict(data.get("dynamics", {})),
        )


def _generate_for_seed(config: GeneratorConfig, seed: int) -> Optional[Sample]:
    """Worker entry point; returns None when the optimizer hit its cap"""
    generator = SampleGenerator(config)
    spec = sample_problem(seed, config.kind, config.grid)
    try:
        return generator.generate_sample(spec)
    except ConvergenceError as e:
        logging.getLogger(__name__).warning(f"Seed {seed} excluded: {e}")
        return None


class SampleGenerator:
    """Ground-truth sample generation for static and dynamic problems"""

    def __init__(
        self,
        config: Optional[GeneratorConfig] = None,
        logger: Optional[logging.Logger] = None,
    ):
        """
        Initialize SampleGenerator

        Parameters:
            config (GeneratorConfig, optional): Generation settings
            logger (logging.Logger, optional): Logger instance. If None, uses a NullHandler.
        """
        self.config = config or GeneratorConfig()

        self.logger = logger or logging.getLogger(__name__)
        if not logger:
            self.logger.addHandler(logging.NullHandler())

    def generate_sample(self, spec: ProblemSpec) -> Sample:
        """
        Fields, optimized binary topology and compliance for one problem

        Raises:
            ConvergenceError: The optimizer reached its iteration cap
            SingularSystemError: An FEA solve failed
        """
        config = self.config
        fields = compute_field_image(spec, rtol=config.rtol)
        if spec.kind == "dynamic":
            optimizer: Any = DynamicOptimizer(
                config.dynamics, config.optimizer, rtol=config.rtol, logger=self.logger
            )
            fft = fft_load_features(spec.shape, config.n_time_samples)
        else:
            optimizer = StaticOptimizer(config.optimizer, rtol=config.rtol, logger=self.logger)
            fft = None
        result = optimizer.optimize(spec)
        if not result.converged:
            raise ConvergenceError(
                f"Optimizer did not converge within {config.optimizer.max_iterations} iterations"
            )

        binary, threshold = vf_preserving_binarize(
            result.density,
            spec.vf,
            config.optimizer.heaviside_threshold,
            config.optimizer.vf_shift_tolerance,
            config.optimizer.vf_match_tolerance,
        )
        gt = compliance_of_design(spec, binary, config.dynamics, rtol=config.rtol)
        return Sample(
            spec=spec,
            fields=fields.stacked(),
            topology=spec.grid.to_image(binary),
            gt_compliance=gt,
            fft=fft,
            threshold=threshold,
            iterations=result.iterations,
        )

    def generate_dataset(self, n: int, seed: int, jobs: int = 1) -> list[Sample]:
        """
        Generate samples for n seeds derived from `seed`, in seed order

        Seeds come from numpy.random.SeedSequence(seed); unconverged samples are dropped.
        """
        if n < 0:
            raise ValueError(f"n must be >= 0, got {n}")
        seeds = derive_seeds(seed, n)
        self.logger.info(
            f"Generating {n} {self.config.kind} samples on a {self.config.grid_size}^2 grid "
            f"with {jobs} job(s)"
        )
        samples: list[Sample] = []
        for index, sample in enumerate(self._iterate(seeds, jobs), start=1):
            if sample is not None:
                samples.append(sample)
            self.logger.debug(f"Sample {index}/{n} done")
        dropped = n - len(samples)
        if dropped:
            self.logger.warning(f"{dropped} sample(s) excluded for non-convergence")
        return samples

    def _iterate(self, seeds: list[int], jobs: int) -> Iterator[Optional[Sample]]:
        if jobs <= 1 or len(seeds) <= 1:
            for s in seeds:
                yield _generate_for_seed(self.config, s)
            return
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            yield from executor.map(_generate_for_seed, [self.config] * len(seeds), seeds)


def derive_seeds(seed: int, n: int) -> list[int]:
    """n independent 32-bit seeds from a root seed"""
    if n == 0:
        return []
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n)]


def _map_point(name: str, x: Any, y: Any, span_x: int, span_y: int) -> tuple[Any, Any]:
    """Affine dihedral map of a point (or arrays of points) inside [0, span_x] x [0, span_y]"""
    (r00, r01), (r10, r11) = TRANSFORMS[name][0]
    ox, oy = TRANSFORMS[name][1]
    return (r00 * x + r01 * y + span_x * ox, r10 * x + r11 * y + span_y * oy)


def transform_spec(spec: ProblemSpec, name: str) -> ProblemSpec:
    """
    Apply a dihedral transform to a problem

    Rotations and transposes need a square grid. Fixture sites are mapped by their node
    sets; the load node and force vector are mapped exactly.

    Raises:
        ValueError: Unknown transform, rotation of a non-square grid, or a site set that
            does not map onto canonical sites (odd grid sizes)
    """
    if name not in TRANSFORMS:
        raise ValueError(f"Unknown transform '{name}', expected one of {list(TRANSFORMS)}")
    grid = spec.grid
    if name not in AXIS_PRESERVING and grid.nelx != grid.nely:
        raise ValueError(f"Transform '{name}' needs a square grid, got {grid.nelx}x{grid.nely}")
    if name == "identity":
        return spec
    nx, ny = grid.nelx, grid.nely

    def node_map(node: tuple[int, int]) -> tuple[int, int]:
        x, y = _map_point(name, node[0], node[1], nx, ny)
        return (int(x), int(y))

    site_sets = {s: frozenset(site_nodes(grid, s)) for s in range(16)}
    new_sites = []
    for site in spec.bc.sites:
        image = frozenset(node_map(node) for node in site_sets[site])
        match = [s for s, nodes in site_sets.items() if nodes == image]
        if not match:
            raise ValueError(
                f"Fixture site {site} has no canonical image under '{name}' on "
                f"{nx}x{ny}; use an even grid"
            )
        new_sites.append(match[0])

    load = spec.point_load
    col, row = load.element
    # Doubled element-center coordinates keep the map integral
    ncx2, ncy2 = _map_point(name, 2 * col + 1, 2 * (ny - row) - 1, 2 * nx, 2 * ny)
    (r00, r01), (r10, r11) = TRANSFORMS[name][0]
    new_element = ((ncx2 - 1) // 2, ny - (ncy2 + 1) // 2)
    fx = float(r00 * load.fx + r01 * load.fy) + 0.0
    fy = float(r10 * load.fx + r11 * load.fy) + 0.0
    new_load = PointLoad(
        element=new_element,
        node=node_map(load.node),
        fx=fx,
        fy=fy,
        angle_index=_angle_index_of(fx, fy),
    )
    new_spec_load: Any = new_load
    if isinstance(spec.load, DynamicLoad):
        new_spec_load = DynamicLoad(new_load, spec.load.shape)
    return ProblemSpec(
        grid=grid,
        bc=BoundarySpec(tuple(new_sites)),
        load=new_spec_load,
        vf=spec.vf,
        seed=spec.seed,
        material=spec.material,
    )


def _angle_index_of(fx: float, fy: float) -> Optional[int]:
    degrees = math.degrees(math.atan2(fy, fx)) % 360.0
    index = round(degrees / ANGLE_STEP_DEGREES)
    if abs(degrees - index * ANGLE_STEP_DEGREES) < 1e-9:
        return index % ANGLE_COUNT
    return None


def transform_image(image: np.ndarray, name: str) -> np.ndarray:
    """Apply a dihedral transform to (..., nely, nelx) element images"""
    if name not in TRANSFORMS:
        raise ValueError(f"Unknown transform '{name}', expected one of {list(TRANSFORMS)}")
    ny, nx = image.shape[-2:]
    if name not in AXIS_PRESERVING and nx != ny:
        raise ValueError(f"Transform '{name}' needs a square image, got {ny}x{nx}")
    rows, cols = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    ncx2, ncy2 = _map_point(name, 2 * cols + 1, 2 * (ny - rows) - 1, 2 * nx, 2 * ny)
    new_cols = (ncx2 - 1) // 2
    new_rows = ny - (ncy2 + 1) // 2
    out = np.empty_like(image)
    out[..., new_rows, new_cols] = image[..., rows, cols]
    return out


def transform_sample(sample: Sample, name: str) -> Sample:
    return Sample(
        spec=transform_spec(sample.spec, name),
        fields=transform_image(sample.fields, name),
        topology=transform_image(sample.topology, name),
        gt_compliance=sample.gt_compliance,
        fft=None if sample.fft is None else sample.fft.copy(),
        threshold=sample.threshold,
        iterations=sample.iterations,
    )


def augment(sample: Sample) -> list[Sample]:
    """
    Distinct dihedral images of a sample (identity first)

    Square grids use all 8 transforms; other grids the 4 axis-preserving ones. Images
    whose problem coincides with an earlier one are dropped.
    """
    grid = sample.spec.grid
    names = list(TRANSFORMS) if grid.nelx == grid.nely else list(AXIS_PRESERVING)
    seen: list[ProblemSpec] = []
    results: list[Sample] = []
    for name in names:
        transformed = transform_sample(sample, name)
        if any(transformed.spec == other for other in seen):
            continue
        seen.append(transformed.spec)
        results.append(transformed)
    return results
