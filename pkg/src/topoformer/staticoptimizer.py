#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
staticoptimizer.py

Description:
    SIMP compliance minimization under a volume constraint: compliance sensitivities,
    a radius-weighted sensitivity filter, the optimality-criteria (OC) density update,
    Heaviside binarization and the StaticOptimizer driver that produces ground-truth
    topologies and their compliance histories.

Usage:
    from topoformer.staticoptimizer import OptimizerConfig, StaticOptimizer

    optimizer = StaticOptimizer(OptimizerConfig(max_iterations=200))
    result = optimizer.optimize(spec)
    print(result.iterations, result.compliance_history[-1])

Requirements:
    - numpy
    - scipy
    - pydevmate (CacheIt for filter weights)

References:
    - Sigmund: A 99 line topology optimization code written in Matlab (OC update)
    - Andreassen et al.: Efficient topology optimization in MATLAB using 88 lines of code

"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Optional

import numpy as np
import scipy.sparse as sp
from pydevmate import CacheIt

from .femsolver import (
    DEFAULT_RTOL,
    as_element_vector,
    assemble_stiffness,
    compliance,
    element_stiffness,
    load_vector,
    solve_static,
)
from .problem import Grid, Material, ProblemSpec

# (compliance, raw sensitivities) for a density vector
Objective = Callable[[np.ndarray], tuple[float, np.ndarray]]

OC_VOLUME_TOLERANCE = 1e-6
OC_MAX_BISECTIONS = 200
OC_MIN_SENSITIVITY = 1e-300
CONVERGED_VOLUME_TOLERANCE = 1e-3


@dataclass(frozen=True)
class OptimizerConfig:
    """SIMP / OC settings shared by the static and dynamic drivers"""

    penalty: float = 3.0
    volume_fraction: Optional[float] = None
    rmin: float = 1.5
    move: float = 0.2
    tolerance: float = 1e-3
    max_iterations: int = 300
    min_iterations: int = 5
    eta: float = 0.5
    heaviside_threshold: float = 0.5
    vf_shift_tolerance: float = 0.02
    vf_match_tolerance: float = 0.01
    solver_method: str = "pcg"
    record_history: bool = False

    def __post_init__(self) -> None:
        if self.penalty < 1.0:
            raise ValueError(f"penalty must be >= 1, got {self.penalty}")
        if self.volume_fraction is not None and not 0.0 < self.volume_fraction < 1.0:
            raise ValueError(f"volume_fraction must be in (0, 1), got {self.volume_fraction}")
        if self.rmin < 1.0:
            raise ValueError(f"rmin must be >= 1, got {self.rmin}")
        if not 0.0 < self.move <= 0.5:
            raise ValueError(f"move must be in (0, 0.5], got {self.move}")
        if not self.tolerance > 0.0:
            raise ValueError(f"tolerance must be > 0, got {self.tolerance}")
        if self.max_iterations < 1 or self.min_iterations < 1:
            raise ValueError("max_iterations and min_iterations must be >= 1")
        if self.solver_method not in ("pcg", "direct"):
            raise ValueError(f"solver_method must be 'pcg' or 'direct', got {self.solver_method}")

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        if math.isinf(self.tolerance):
            data["tolerance"] = "inf"
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> OptimizerConfig:
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        if "tolerance" in known:
            known["tolerance"] = float(known["tolerance"])
        return cls(**known)


@dataclass
class OptimizationResult:
    """Outcome of one optimization run"""

    density: np.ndarray
    compliance_history: list[float]
    iterations: int
    converged: bool
    elapsed_seconds: float
    density_history: list[np.ndarray] = field(default_factory=list)

    @property
    def final_compliance(self) -> float:
        return self.compliance_history[-1]


def sensitivities(
    grid: Grid, material: Material, density: np.ndarray, u: np.ndarray, penalty: float
) -> np.ndarray:
    """dC/drho_e = -p rho_e^(p-1) (E0 - Emin) u_e^T KE u_e (element vector, all <= 0)"""
    rho = as_element_vector(grid, density)
    u_e = u[grid.edof_matrix()]
    energy = np.einsum("ei,ij,ej->e", u_e, element_stiffness(material), u_e)
    scale = penalty * (material.E0 - material.Emin)
    return -scale * rho ** (penalty - 1.0) * np.maximum(energy, 0.0)


class SensitivityFilter:  # pylint: disable=too-few-public-methods
    """Radius-weighted sensitivity filter; weight matrices are cached on disk per grid"""

    @CacheIt(max_duration=86400, backend="diskcache")  # 24 hour cache
    def weight_matrix(self, nelx: int, nely: int, rmin: float) -> tuple[sp.csr_matrix, np.ndarray]:
        """
        Filter weights H_ij = max(0, rmin - dist(i, j)) between element centers

        Returns:
            tuple: (H as CSR matrix, row sums Hs)
        """
        reach = int(math.ceil(rmin)) - 1
        cols, rows = np.meshgrid(np.arange(nelx), np.arange(nely), indexing="ij")
        cols, rows = cols.ravel(), rows.ravel()
        centre = rows + cols * nely
        i_idx, j_idx, weights = [], [], []
        for dc in range(-reach, reach + 1):
            for dr in range(-reach, reach + 1):
                weight = rmin - math.hypot(dc, dr)
                if weight <= 0.0:
                    continue
                nc, nr = cols + dc, rows + dr
                inside = (nc >= 0) & (nc < nelx) & (nr >= 0) & (nr < nely)
                i_idx.append(centre[inside])
                j_idx.append((nr + nc * nely)[inside])
                weights.append(np.full(int(inside.sum()), weight))
        n = nelx * nely
        h = sp.coo_matrix(
            (np.concatenate(weights), (np.concatenate(i_idx), np.concatenate(j_idx))),
            shape=(n, n),
        ).tocsr()
        return h, np.asarray(h.sum(axis=1)).ravel()

    def apply(self, grid: Grid, density: np.ndarray, sens: np.ndarray, rmin: float) -> np.ndarray:
        rho = as_element_vector(grid, density)
        sens = as_element_vector(grid, sens)
        if rmin <= 1.0:
            return sens.copy()
        h, hs = self.weight_matrix(grid.nelx, grid.nely, float(rmin))
        return np.asarray(h @ (rho * sens)) / hs / np.maximum(1e-3, rho)


def filter_sensitivities(
    grid: Grid, density: np.ndarray, sens: np.ndarray, rmin: float
) -> np.ndarray:
    """Filtered sensitivities H (rho * dc) / Hs / max(1e-3, rho); rmin <= 1 is the identity"""
    return SensitivityFilter().apply(grid, density, sens, rmin)


def oc_update(
    density: np.ndarray, sens: np.ndarray, vf: float, move: float, eta: float = 0.5
) -> np.ndarray:
    """
    Optimality-criteria update with a bisected Lagrange multiplier

    Parameters:
        density (np.ndarray): Current densities in [0, 1]
        sens (np.ndarray): Objective sensitivities, all <= 0
        vf (float): Target mean density
        move (float): Move limit per update
        eta (float): Damping exponent

    Returns:
        np.ndarray: Updated densities with mean(rho) = vf (to OC_VOLUME_TOLERANCE when reachable)

    Raises:
        ValueError: vf outside (0, 1), positive sensitivities or shape mismatch
    """
    rho = np.asarray(density, dtype=np.float64)
    dc = np.asarray(sens, dtype=np.float64)
    if rho.shape != dc.shape:
        raise ValueError(f"Density shape {rho.shape} does not match sensitivity shape {dc.shape}")
    if not 0.0 < vf < 1.0:
        raise ValueError(f"Volume fraction must be in (0, 1), got {vf}")
    if eta <= 0.0:
        raise ValueError(f"eta must be > 0, got {eta}")
    scale = float(np.max(np.abs(dc))) if dc.size else 0.0
    if dc.size and dc.max() > 1e-12 * max(scale, 1e-300):
        raise ValueError(f"OC update expects non-positive sensitivities, max is {dc.max():.3e}")
    # magnitudes floored so far-field elements stay reachable by the multiplier
    dc_n = (
        np.maximum(-np.minimum(dc, 0.0) / scale, OC_MIN_SENSITIVITY)
        if scale > 0.0
        else np.ones_like(dc)
    )

    lower = np.maximum(0.0, rho - move)
    upper = np.minimum(1.0, rho + move)

    log_dc = np.log(dc_n)

    def candidate(log_lam: float) -> np.ndarray:
        growth = np.exp(np.minimum(eta * (log_dc - log_lam), 700.0))
        return np.clip(rho * growth, lower, upper)

    # bracket: every element at its upper bound at lam_lo, below 1e-9 at lam_hi
    positive = rho[rho > 0.0]
    rho_min = float(positive.min()) if positive.size else 1.0
    log_lo = float(log_dc.min()) + math.log(min(rho_min, 1.0)) / eta - 1.0
    log_hi = math.log(1e9) / eta + 1.0
    best = candidate(0.5 * (log_lo + log_hi))
    for _ in range(OC_MAX_BISECTIONS):
        log_mid = 0.5 * (log_lo + log_hi)
        best = candidate(log_mid)
        volume = float(best.mean())
        if abs(volume - vf) <= OC_VOLUME_TOLERANCE:
            break
        if volume > vf:
            log_lo = log_mid
        else:
            log_hi = log_mid
    return best


def heaviside_binarize(density: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """1 where rho >= threshold, else 0"""
    return (np.asarray(density) >= threshold).astype(np.float64)


def vf_preserving_binarize(
    density: np.ndarray,
    vf: float,
    threshold: float = 0.5,
    shift_tolerance: float = 0.02,
    match_tolerance: float = 0.01,
) -> tuple[np.ndarray, float]:
    """
    Binarize at `threshold`, re-bisecting the threshold when the volume shifts too far

    Returns:
        tuple: (binary density, threshold used)
    """
    rho = np.asarray(density, dtype=np.float64)
    binary = heaviside_binarize(rho, threshold)
    if abs(float(binary.mean()) - vf) <= shift_tolerance:
        return binary, threshold

    lo, hi = 0.0, 1.0
    best_t, best_err = threshold, abs(float(binary.mean()) - vf)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        volume = float(heaviside_binarize(rho, mid).mean())
        err = abs(volume - vf)
        if err < best_err:
            best_t, best_err = mid, err
        if err <= match_tolerance:
            break
        if volume > vf:
            lo = mid
        else:
            hi = mid
    return heaviside_binarize(rho, best_t), best_t


def has_converged(history: list[float], tolerance: float, patience: int) -> bool:
    """True when the last `patience` relative compliance changes are all below tolerance"""
    if math.isinf(tolerance):
        return len(history) >= 1
    if len(history) < patience + 1:
        return False
    recent = history[-(patience + 1) :]
    for previous, current in zip(recent[:-1], recent[1:]):
        if previous == 0.0 or abs(current - previous) / abs(previous) >= tolerance:
            return False
    return True


def run_oc_loop(
    grid: Grid,
    vf: float,
    config: OptimizerConfig,
    objective: Objective,
    logger: logging.Logger,
) -> OptimizationResult:
    """Shared iterate -> sensitivities -> filter -> OC loop"""
    start = time.perf_counter()
    rho = np.full(grid.n_elements, vf)
    history: list[float] = []
    densities: list[np.ndarray] = []
    sensitivity_filter = SensitivityFilter()
    converged = False

    for iteration in range(1, config.max_iterations + 1):
        value, dc = objective(rho)
        history.append(value)
        dc_filtered = sensitivity_filter.apply(grid, rho, dc, config.rmin)
        rho = oc_update(rho, dc_filtered, vf, config.move, config.eta)
        if config.record_history:
            densities.append(rho.copy())

        change = abs(history[-1] - history[-2]) / abs(history[-2]) if iteration > 1 else math.nan
        logger.debug(
            f"It.: {iteration:4d} Obj.: {value:.6f} Vol.: {rho.mean():.4f} ch.: {change:.3e}"
        )
        on_volume = abs(float(rho.mean()) - vf) <= CONVERGED_VOLUME_TOLERANCE
        if on_volume and has_converged(history, config.tolerance, config.min_iterations):
            converged = True
            break

    elapsed = time.perf_counter() - start
    logger.info(
        f"Optimization {'converged' if converged else 'hit the iteration cap'} after "
        f"{len(history)} iterations in {elapsed:.2f}s (objective {history[-1]:.6f})"
    )
    return OptimizationResult(
        density=rho,
        compliance_history=history,
        iterations=len(history),
        converged=converged,
        elapsed_seconds=elapsed,
        density_history=densities,
    )


class StaticOptimizer:  # pylint: disable=too-few-public-methods
    """Static SIMP compliance minimization driven by the OC update"""

    def __init__(
        self,
        config: Optional[OptimizerConfig] = None,
        rtol: float = DEFAULT_RTOL,
        logger: Optional[logging.Logger] = None,
    ):
        """
        Initialize StaticOptimizer

        Parameters:
            config (OptimizerConfig, optional): SIMP / OC settings; defaults when omitted
            rtol (float): Relative residual tolerance of each static solve
            logger (logging.Logger, optional): Logger instance. If None, uses a NullHandler.
        """
        self.config = config or OptimizerConfig()
        self.rtol = rtol

        self.logger = logger or logging.getLogger(__name__)
        if not logger:
            self.logger.addHandler(logging.NullHandler())

    def optimize(self, spec: ProblemSpec) -> OptimizationResult:
        """
        Minimize static compliance for `spec`, starting from a uniform density

        Returns:
            OptimizationResult: Final density (element vector) and per-iteration compliance

        Raises:
            SingularSystemError: An FEA solve failed
        """
        grid, material, config = spec.grid, spec.material, self.config
        vf = config.volume_fraction if config.volume_fraction is not None else spec.vf
        f = load_vector(grid, spec.point_load)
        warm: dict[str, np.ndarray] = {}

        def objective(rho: np.ndarray) -> tuple[float, np.ndarray]:
            k = assemble_stiffness(grid, material, rho, config.penalty)
            u = solve_static(
                grid,
                spec.bc,
                spec.point_load,
                k,
                rtol=self.rtol,
                method=config.solver_method,
                x0=warm.get("u"),
            )
            warm["u"] = u
            return compliance(u, f), sensitivities(grid, material, rho, u, config.penalty)

        self.logger.debug(f"Static optimization on {grid.nelx}x{grid.nely}, vf={vf:.3f}")
        return run_oc_loop(grid, vf, config, objective, self.logger)
