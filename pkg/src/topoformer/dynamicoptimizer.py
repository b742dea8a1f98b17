#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
dynamicoptimizer.py

Description:
    Transient dynamic topology optimization. Assembles lumped or consistent mass and
    Rayleigh (or design-dependent) damping, integrates M u'' + C u' + K u = f(t) with the
    Newmark average-acceleration scheme, and minimizes the time-summed dynamic
    compliance with the same filter and OC update as the static driver.

Usage:
    from topoformer.dynamicoptimizer import DynamicOptimizer, DynamicsConfig

    optimizer = DynamicOptimizer(DynamicsConfig(n_steps=100))
    result = optimizer.optimize(dynamic_spec)

Requirements:
    - numpy
    - scipy

References:
    - Newmark: A method of computation for structural dynamics (1959)
    - Chopra: Dynamics of Structures, average-acceleration coefficients a0..a7

"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Any, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import SingularSystemError
from .femsolver import (
    DEFAULT_RTOL,
    as_element_vector,
    assemble_from_moduli,
    assemble_stiffness,
    element_stiffness,
    free_dofs,
    load_vector,
    solve_reduced,
)
from .problem import DynamicLoad, Grid, Material, ProblemSpec
from .staticoptimizer import OptimizationResult, OptimizerConfig, run_oc_loop

MASS_MODES = ("lumped", "consistent")

# Bilinear consistent mass pattern for nodes LL, LR, UR, UL (times m_e / 36)
_CONSISTENT_PATTERN = np.array(
    [[4.0, 2.0, 1.0, 2.0], [2.0, 4.0, 2.0, 1.0], [1.0, 2.0, 4.0, 2.0], [2.0, 1.0, 2.0, 4.0]]
)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time nodes t_i = i * dt, i = 0..n_steps"""

    t_end: float = 1.0
    n_steps: int = 200

    def __post_init__(self) -> None:
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if not self.t_end > 0.0:
            raise ValueError(f"t_end must be > 0, got {self.t_end}")

    @property
    def dt(self) -> float:
        return self.t_end / self.n_steps

    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True)
class DynamicsConfig:  # pylint: disable=too-many-instance-attributes
    """Mass, damping and time-integration settings"""

    alpha: float = 0.1
    beta: float = 0.02
    newmark_beta: float = 0.25
    newmark_gamma: float = 0.5
    mass_mode: str = "lumped"
    mass_density: float = 1.0
    design_damping: bool = False
    c_min: float = 2e-11
    c_0: float = 0.02
    damping_penalty: float = 3.0
    t_end: float = 1.0
    n_steps: int = 200
    solver_method: str = "pcg"

    def __post_init__(self) -> None:
        if self.alpha < 0.0 or self.beta < 0.0:
            raise ValueError(f"Rayleigh coefficients must be >= 0, got {self.alpha}, {self.beta}")
        if self.mass_mode not in MASS_MODES:
            raise ValueError(f"mass_mode must be one of {MASS_MODES}, got '{self.mass_mode}'")
        if not self.mass_density > 0.0:
            raise ValueError(f"mass_density must be > 0, got {self.mass_density}")
        if not 0.0 <= self.c_min <= self.c_0:
            raise ValueError("Damping interpolation needs 0 <= c_min <= c_0")
        if not (self.newmark_beta > 0.0 and self.newmark_gamma >= 0.5):
            raise ValueError(
                f"Newmark parameters ({self.newmark_beta}, {self.newmark_gamma}) are not supported"
            )
        if self.solver_method not in ("pcg", "direct"):
            raise ValueError(f"solver_method must be 'pcg' or 'direct', got {self.solver_method}")
        TimeGrid(self.t_end, self.n_steps)

    @property
    def time_grid(self) -> TimeGrid:
        return TimeGrid(self.t_end, self.n_steps)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> DynamicsConfig:
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})


@dataclass
class TransientResponse:
    """Histories on the time nodes; row i holds the state at t_i"""

    times: np.ndarray
    displacement: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray


def assemble_mass(
    grid: Grid, density: np.ndarray, mode: str = "lumped", mass_density: float = 1.0
) -> sp.csc_matrix:
    """
    Global mass matrix with element mass m_e = rho_e * area * mass_density

    Lumped mode puts m_e / 4 on both DOFs of each element node; consistent mode
    integrates rho N^T N exactly for the bilinear element.
    """
    if mode not in MASS_MODES:
        raise ValueError(f"mass mode must be one of {MASS_MODES}, got '{mode}'")
    rho = as_element_vector(grid, density)
    if rho.size and (rho.min() < 0.0 or rho.max() > 1.0):
        raise ValueError(f"Densities must be in [0, 1], got [{rho.min()}, {rho.max()}]")
    element_mass = rho * grid.element_size**2 * mass_density
    edof = grid.edof_matrix()

    if mode == "lumped":
        diagonal = np.zeros(grid.n_dofs)
        np.add.at(diagonal, edof, np.repeat(element_mass[:, np.newaxis] / 4.0, 8, axis=1))
        return sp.diags(diagonal).tocsc()

    unit = np.kron(_CONSISTENT_PATTERN / 36.0, np.eye(2))
    rows = np.repeat(edof, 8, axis=1).ravel()
    cols = np.tile(edof, (1, 8)).ravel()
    values = (unit.ravel()[np.newaxis, :] * element_mass[:, np.newaxis]).ravel()
    return sp.coo_matrix((values, (rows, cols)), shape=(grid.n_dofs, grid.n_dofs)).tocsc()


def assemble_damping(m: sp.spmatrix, k: sp.spmatrix, alpha: float, beta: float) -> sp.csc_matrix:
    """Rayleigh damping C = alpha M + beta K"""
    if m.shape != k.shape:
        raise ValueError(f"Mass shape {m.shape} does not match stiffness shape {k.shape}")
    return sp.csc_matrix(alpha * m + beta * k)


def assemble_design_damping(
    grid: Grid, material: Material, density: np.ndarray, config: DynamicsConfig
) -> sp.csc_matrix:
    """Element damping c(rho_e) = c_min + rho_e^p (c_0 - c_min) on the unit stiffness pattern"""
    rho = as_element_vector(grid, density)
    coefficients = config.c_min + rho**config.damping_penalty * (config.c_0 - config.c_min)
    return assemble_from_moduli(grid, material, coefficients)


def load_history(grid: Grid, load: DynamicLoad, time_grid: TimeGrid) -> np.ndarray:
    """(n_steps + 1, n_dofs) nodal forces f(t_i) = g(t_i) f"""
    return np.outer(load.samples(time_grid.times()), load_vector(grid, load.base))


def _initial_acceleration(m_ff: sp.csc_matrix, residual: np.ndarray) -> np.ndarray:
    """Solve M a0 = r on the DOFs that carry mass; massless DOFs start at rest"""
    acceleration = np.zeros_like(residual)
    if not np.any(residual):
        return acceleration
    massive = np.flatnonzero(m_ff.diagonal() > 0.0)
    if massive.size == 0:
        return acceleration
    m_sub = m_ff[massive][:, massive]
    try:
        acceleration[massive] = spla.splu(sp.csc_matrix(m_sub)).solve(residual[massive])
    except RuntimeError as e:
        raise SingularSystemError(f"Mass matrix is singular on massive DOFs: {e}") from e
    return acceleration


def newmark_integrate(  # pylint: disable=too-many-arguments,too-many-locals
    m: sp.spmatrix,
    c: sp.spmatrix,
    k: sp.spmatrix,
    forces: np.ndarray,
    time_grid: TimeGrid,
    beta: float = 0.25,
    gamma: float = 0.5,
    fixed: Optional[np.ndarray] = None,
    initial_displacement: Optional[np.ndarray] = None,
    initial_velocity: Optional[np.ndarray] = None,
    rtol: float = DEFAULT_RTOL,
    method: str = "pcg",
) -> TransientResponse:
    """
    Newmark time integration of M u'' + C u' + K u = f(t)

    Parameters:
        m, c, k (scipy.sparse matrices): Mass, damping and stiffness (n x n)
        forces (np.ndarray): (n_steps + 1, n) force history on the time nodes
        time_grid (TimeGrid): Uniform time discretization
        beta, gamma (float): Newmark parameters; (1/4, 1/2) is average acceleration
        fixed (np.ndarray, optional): Constrained DOFs, held at zero
        initial_displacement, initial_velocity (np.ndarray, optional): Zero by default
        rtol (float): Relative residual tolerance of each effective solve
        method (str): "pcg" solves every step with a warm start; "direct" factors the
            effective matrix once

    Returns:
        TransientResponse: Displacement, velocity and acceleration histories

    Raises:
        SingularSystemError: The effective matrix is singular
        ValueError: Shape mismatch between matrices, forces and the time grid
    """
    n = k.shape[0]
    n_nodes = time_grid.n_steps + 1
    if m.shape != (n, n) or c.shape != (n, n):
        raise ValueError(f"Matrix shapes differ: M {m.shape}, C {c.shape}, K {k.shape}")
    if forces.shape != (n_nodes, n):
        raise ValueError(f"Force history shape {forces.shape} != ({n_nodes}, {n})")

    free = free_dofs(n, np.array([], dtype=np.int64) if fixed is None else fixed)
    m_ff = sp.csc_matrix(m)[free][:, free]
    c_ff = sp.csc_matrix(c)[free][:, free]
    k_ff = sp.csc_matrix(k)[free][:, free]
    f_ff = forces[:, free]

    dt = time_grid.dt
    a0 = 1.0 / (beta * dt * dt)
    a1 = gamma / (beta * dt)
    a2 = 1.0 / (beta * dt)
    a3 = 1.0 / (2.0 * beta) - 1.0
    a4 = gamma / beta - 1.0
    a5 = dt / 2.0 * (gamma / beta - 2.0)
    a6 = dt * (1.0 - gamma)
    a7 = dt * gamma

    u = np.zeros((n_nodes, free.size))
    v = np.zeros((n_nodes, free.size))
    a = np.zeros((n_nodes, free.size))
    if initial_displacement is not None:
        u[0] = np.asarray(initial_displacement, dtype=np.float64)[free]
    if initial_velocity is not None:
        v[0] = np.asarray(initial_velocity, dtype=np.float64)[free]
    a[0] = _initial_acceleration(m_ff, f_ff[0] - c_ff @ v[0] - k_ff @ u[0])

    k_eff = sp.csc_matrix(k_ff + a0 * m_ff + a1 * c_ff)
    factor = None
    if method == "direct":
        try:
            factor = spla.splu(k_eff)
        except RuntimeError as e:
            raise SingularSystemError(f"Effective matrix is singular: {e}") from e

    for step in range(1, n_nodes):
        f_eff = (
            f_ff[step]
            + m_ff @ (a0 * u[step - 1] + a2 * v[step - 1] + a3 * a[step - 1])
            + c_ff @ (a1 * u[step - 1] + a4 * v[step - 1] + a5 * a[step - 1])
        )
        if factor is not None:
            u[step] = factor.solve(f_eff)
        else:
            u[step] = solve_reduced(k_eff, f_eff, rtol, "pcg", x0=u[step - 1])
        a[step] = a0 * (u[step] - u[step - 1]) - a2 * v[step - 1] - a3 * a[step - 1]
        v[step] = v[step - 1] + a6 * a[step - 1] + a7 * a[step]

    def expand(history: np.ndarray) -> np.ndarray:
        full = np.zeros((n_nodes, n))
        full[:, free] = history
        return full

    return TransientResponse(time_grid.times(), expand(u), expand(v), expand(a))


def dynamic_compliance(forces: np.ndarray, displacements: np.ndarray, dt: float) -> float:
    """C_dyn = dt * sum_{i=1..N} f(t_i)^T u(t_i); row 0 (t = 0) is excluded"""
    if forces.shape != displacements.shape:
        raise ValueError(
            f"Force history {forces.shape} and displacement history "
            f"{displacements.shape} differ"
        )
    return float(dt * np.einsum("ij,ij->", forces[1:], displacements[1:]))


def dynamic_sensitivities(
    grid: Grid,
    material: Material,
    density: np.ndarray,
    displacements: np.ndarray,
    dt: float,
    penalty: float,
) -> np.ndarray:
    """
    Time-summed stiffness sensitivities -dt * sum_i u_e(t_i)^T dK_e/drho_e u_e(t_i)

    Mass and damping derivative terms are omitted, so this is a descent signal for
    C_dyn rather than its exact adjoint gradient. The sign matches the static case.
    """
    rho = as_element_vector(grid, density)
    ke = element_stiffness(material)
    edof = grid.edof_matrix()
    energy = np.zeros(grid.n_elements)
    for u_step in displacements[1:]:
        u_e = u_step[edof]
        energy += np.einsum("ei,ij,ej->e", u_e, ke, u_e)
    scale = penalty * (material.E0 - material.Emin)
    return -dt * scale * rho ** (penalty - 1.0) * np.maximum(energy, 0.0)


class DynamicOptimizer:  # pylint: disable=too-few-public-methods
    """Dynamic-compliance SIMP driven by Newmark responses and the OC update"""

    def __init__(
        self,
        dynamics: Optional[DynamicsConfig] = None,
        config: Optional[OptimizerConfig] = None,
        rtol: float = DEFAULT_RTOL,
        logger: Optional[logging.Logger] = None,
    ):
        """
        Initialize DynamicOptimizer

        Parameters:
            dynamics (DynamicsConfig, optional): Mass, damping and time settings
            config (OptimizerConfig, optional): SIMP / OC settings
            rtol (float): Relative residual tolerance of each effective solve
            logger (logging.Logger, optional): Logger instance. If None, uses a NullHandler.
        """
        self.dynamics = dynamics or DynamicsConfig()
        self.config = config or OptimizerConfig()
        self.rtol = rtol

        self.logger = logger or logging.getLogger(__name__)
        if not logger:
            self.logger.addHandler(logging.NullHandler())

    def response(
        self, spec: ProblemSpec, density: np.ndarray
    ) -> tuple[np.ndarray, TransientResponse]:
        """Force history and transient response of `spec` on a fixed design"""
        if not isinstance(spec.load, DynamicLoad):
            raise ValueError("Dynamic analysis needs a ProblemSpec with a DynamicLoad")
        grid, material, dyn = spec.grid, spec.material, self.dynamics
        rho = as_element_vector(grid, density)
        k = assemble_stiffness(grid, material, rho, self.config.penalty)
        m = assemble_mass(grid, rho, dyn.mass_mode, dyn.mass_density)
        if dyn.design_damping:
            c = sp.csc_matrix(dyn.alpha * m + assemble_design_damping(grid, material, rho, dyn))
        else:
            c = assemble_damping(m, k, dyn.alpha, dyn.beta)
        if not spec.bc.is_stable(grid):
            raise SingularSystemError(
                f"Fixture set {spec.bc.names} pins fewer than two nodes; "
                "rigid rotation is unconstrained"
            )
        forces = load_history(grid, spec.load, dyn.time_grid)
        response = newmark_integrate(
            m,
            c,
            k,
            forces,
            dyn.time_grid,
            beta=dyn.newmark_beta,
            gamma=dyn.newmark_gamma,
            fixed=spec.bc.fixed_dofs(grid),
            rtol=self.rtol,
            method=dyn.solver_method,
        )
        return forces, response

    def evaluate(self, spec: ProblemSpec, density: np.ndarray) -> tuple[float, np.ndarray]:
        """(C_dyn, sensitivities) for a design"""
        forces, response = self.response(spec, density)
        dt = self.dynamics.time_grid.dt
        value = dynamic_compliance(forces, response.displacement, dt)
        sens = dynamic_sensitivities(
            spec.grid,
            spec.material,
            density,
            response.displacement,
            dt,
            self.config.penalty,
        )
        return value, sens

    def optimize(self, spec: ProblemSpec) -> OptimizationResult:
        """
        Minimize dynamic compliance for `spec`, starting from a uniform density

        Returns:
            OptimizationResult: Final density and per-iteration C_dyn

        Raises:
            ValueError: spec carries a static load
            SingularSystemError: An effective solve failed
        """
        if not isinstance(spec.load, DynamicLoad):
            raise ValueError("DynamicOptimizer needs a ProblemSpec with a DynamicLoad")
        vf = self.config.volume_fraction if self.config.volume_fraction is not None else spec.vf
        self.logger.debug(
            f"Dynamic optimization on {spec.grid.nelx}x{spec.grid.nely}, vf={vf:.3f}, "
            f"shape={spec.shape.value}, steps={self.dynamics.n_steps}"
        )
        return run_oc_loop(
            spec.grid, vf, self.config, lambda rho: self.evaluate(spec, rho), self.logger
        )
