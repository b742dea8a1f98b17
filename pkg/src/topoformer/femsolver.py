#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
femsolver.py

Description:
    Linear-elastic plane-stress finite element analysis on a regular grid of square
    bilinear (Q4) elements: element stiffness, SIMP-scaled global assembly, reduced
    static solves with a Jacobi-preconditioned conjugate gradient, compliance and
    per-element strain energy density / von Mises stress fields.

Usage:
    from topoformer.femsolver import assemble_stiffness, load_vector, solve_static

    K = assemble_stiffness(spec.grid, spec.material, np.ones(spec.grid.n_elements), 3.0)
    u = solve_static(spec.grid, spec.bc, spec.point_load, K)
    c = compliance(u, load_vector(spec.grid, spec.point_load))

Requirements:
    - numpy
    - scipy

References:
    - Andreassen, Clausen, Schevenels, Lazarov, Sigmund: Efficient topology optimization
      in MATLAB using 88 lines of code (element matrix and DOF map)

"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import SingularSystemError
from .problem import BoundarySpec, Grid, Material, PointLoad, ProblemSpec

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

DEFAULT_RTOL = 1e-8
DIRECT_MAX_SIDE = 8
SINGULAR_RESIDUAL = 1e-6

# Shape-function derivatives at the element center, nodes LL, LR, UR, UL (unit element)
_DN_DX = np.array([-1.0, 1.0, 1.0, -1.0]) / 2.0
_DN_DY = np.array([-1.0, -1.0, 1.0, 1.0]) / 2.0


@dataclass(frozen=True)
class FieldImage:
    """Two per-element channels on the (nely, nelx) image"""

    sed: np.ndarray
    vm: np.ndarray

    def __post_init__(self) -> None:
        if self.sed.shape != self.vm.shape or self.sed.ndim != 2:
            raise ValueError(
                f"Field channels must be matching 2D images, got {self.sed.shape} and "
                f"{self.vm.shape}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.sed.shape  # type: ignore[return-value]

    def stacked(self) -> np.ndarray:
        """(2, nely, nelx) array, strain energy density first"""
        return np.stack([self.sed, self.vm], axis=0)

    @classmethod
    def from_stacked(cls, array: np.ndarray) -> FieldImage:
        if array.ndim != 3 or array.shape[0] != 2:
            raise ValueError(f"Expected a (2, H, W) array, got {array.shape}")
        return cls(sed=np.asarray(array[0]), vm=np.asarray(array[1]))


def element_stiffness(material: Material, modulus: float = 1.0) -> np.ndarray:
    """8x8 Q4 plane-stress stiffness for a square element of the given modulus"""
    nu = material.nu
    a11 = np.array([[12, 3, -6, -3], [3, 12, 3, 0], [-6, 3, 12, -3], [-3, 0, -3, 12]])
    a12 = np.array([[-6, -3, 0, 3], [-3, -6, -3, -6], [0, -3, -6, 3], [3, -6, 3, -6]])
    b11 = np.array([[-4, 3, -2, 9], [3, -4, -9, 4], [-2, -9, -4, -3], [9, 4, -3, -4]])
    b12 = np.array([[2, -3, 4, -9], [-3, 2, 9, -2], [4, 9, 2, 3], [-9, -2, 3, 2]])
    a_mat = np.block([[a11, a12], [a12.T, a11]]).astype(np.float64)
    b_mat = np.block([[b11, b12], [b12.T, b11]]).astype(np.float64)
    ke = modulus / (1.0 - nu**2) / 24.0 * (a_mat + nu * b_mat)
    return 0.5 * (ke + ke.T)


def elasticity_matrix(material: Material, modulus: float = 1.0) -> np.ndarray:
    """3x3 plane-stress constitutive matrix"""
    nu = material.nu
    return (
        modulus
        / (1.0 - nu**2)
        * np.array([[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, (1.0 - nu) / 2.0]])
    )


def strain_displacement(element_size: float = 1.0) -> np.ndarray:
    """3x8 B matrix evaluated at the element center"""
    b = np.zeros((3, 8))
    b[0, 0::2] = _DN_DX / element_size
    b[1, 1::2] = _DN_DY / element_size
    b[2, 0::2] = _DN_DY / element_size
    b[2, 1::2] = _DN_DX / element_size
    return b


def as_element_vector(grid: Grid, density: np.ndarray) -> np.ndarray:
    """Accept an element vector or a (nely, nelx) image and return the element vector"""
    density = np.asarray(density, dtype=np.float64)
    if density.ndim == 2:
        return grid.to_vector(density)
    if density.shape != (grid.n_elements,):
        raise ValueError(
            f"Density shape {density.shape} does not match grid {grid.nelx}x{grid.nely} "
            f"({grid.n_elements} elements)"
        )
    return density


def element_moduli(material: Material, density: np.ndarray, penalty: float) -> np.ndarray:
    """SIMP interpolation E_e = Emin + rho_e^p (E0 - Emin)"""
    return material.Emin + density**penalty * (material.E0 - material.Emin)


def assemble_from_moduli(grid: Grid, material: Material, moduli: np.ndarray) -> sp.csc_matrix:
    """Global stiffness with an explicit per-element modulus"""
    moduli = np.asarray(moduli, dtype=np.float64)
    if moduli.shape != (grid.n_elements,):
        raise ValueError(f"Expected {grid.n_elements} moduli, got shape {moduli.shape}")
    ke = element_stiffness(material)
    edof = grid.edof_matrix()
    rows = np.repeat(edof, 8, axis=1).ravel()
    cols = np.tile(edof, (1, 8)).ravel()
    values = (ke.ravel()[np.newaxis, :] * moduli[:, np.newaxis]).ravel()
    k = sp.coo_matrix((values, (rows, cols)), shape=(grid.n_dofs, grid.n_dofs)).tocsc()
    return ((k + k.T) / 2.0).tocsc()


def assemble_stiffness(
    grid: Grid, material: Material, density: np.ndarray, penalty: float
) -> sp.csc_matrix:
    """
    Assemble the global stiffness matrix with SIMP-scaled element moduli

    Parameters:
        grid (Grid): Element grid
        material (Material): Material constants
        density (np.ndarray): Element vector or (nely, nelx) image with values in [0, 1]
        penalty (float): SIMP exponent p >= 1

    Returns:
        scipy.sparse.csc_matrix: Symmetric (n_dofs, n_dofs) stiffness matrix

    Raises:
        ValueError: On shape mismatch, densities outside [0, 1] or penalty < 1
    """
    if penalty < 1.0:
        raise ValueError(f"SIMP penalty must be >= 1, got {penalty}")
    rho = as_element_vector(grid, density)
    if rho.size and (rho.min() < 0.0 or rho.max() > 1.0):
        raise ValueError(f"Densities must be in [0, 1], got [{rho.min()}, {rho.max()}]")
    return assemble_from_moduli(grid, material, element_moduli(material, rho, penalty))


def load_vector(grid: Grid, load: PointLoad, scale: float = 1.0) -> np.ndarray:
    """Global nodal force vector for a point load"""
    f = np.zeros(grid.n_dofs)
    dof_x, dof_y = grid.node_dofs(*load.node)
    f[dof_x] += scale * load.fx
    f[dof_y] += scale * load.fy
    return f


def free_dofs(n_dofs: int, fixed: np.ndarray) -> np.ndarray:
    return np.setdiff1d(np.arange(n_dofs), np.asarray(fixed, dtype=np.int64))


def _direct_solve(k_ff: sp.spmatrix, f_f: np.ndarray) -> np.ndarray:
    try:
        lu_piv = scipy.linalg.lu_factor(k_ff.toarray(), check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as e:
        raise SingularSystemError(f"Dense LU failed: {e}") from e
    if np.any(np.abs(np.diag(lu_piv[0])) == 0.0):
        raise SingularSystemError("Reduced system is singular (zero pivot)")
    return scipy.linalg.lu_solve(lu_piv, f_f)


def _pcg_solve(
    k_ff: sp.spmatrix, f_f: np.ndarray, rtol: float, x0: Optional[np.ndarray]
) -> Optional[np.ndarray]:
    diag = k_ff.diagonal()
    if np.any(diag <= 0.0):
        raise SingularSystemError("Reduced stiffness has a nonpositive diagonal entry")
    preconditioner = sp.diags(1.0 / diag)
    u_f, info = spla.cg(
        k_ff,
        f_f,
        x0=x0,
        rtol=0.1 * rtol,
        atol=0.0,
        maxiter=10 * f_f.size,
        M=preconditioner,
    )
    if info != 0:
        return None
    return u_f


def solve_system(
    k: sp.spmatrix,
    f: np.ndarray,
    fixed: np.ndarray,
    rtol: float = DEFAULT_RTOL,
    method: str = "pcg",
    x0: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Solve K u = f with homogeneous Dirichlet conditions on `fixed`

    Parameters:
        k (scipy.sparse matrix): Symmetric positive (semi)definite matrix
        f (np.ndarray): Right-hand side
        fixed (np.ndarray): Constrained DOF numbers
        rtol (float): Required relative residual ||K u - f|| / ||f|| on the free DOFs
        method (str): "pcg" (Jacobi-preconditioned CG) or "direct" (dense LU)
        x0 (np.ndarray, optional): Full-length warm start for PCG

    Returns:
        np.ndarray: Full-length solution with zeros at fixed DOFs

    Raises:
        SingularSystemError: No constraints, singular reduced system or unmet residual
        ValueError: Unknown method or mismatched sizes
    """
    n = k.shape[0]
    if f.shape != (n,):
        raise ValueError(f"Load vector shape {f.shape} does not match matrix shape {k.shape}")
    if method not in ("pcg", "direct"):
        raise ValueError(f"Unknown solver method '{method}', expected 'pcg' or 'direct'")
    fixed = np.asarray(fixed, dtype=np.int64)
    if fixed.size == 0:
        raise SingularSystemError("No fixed DOFs; the stiffness system is singular")

    free = free_dofs(n, fixed)
    u = np.zeros(n)
    k_ff = sp.csc_matrix(k)[free][:, free]
    u[free] = solve_reduced(k_ff, f[free], rtol, method, None if x0 is None else x0[free])
    return u


def solve_reduced(
    k_ff: sp.spmatrix,
    f_f: np.ndarray,
    rtol: float = DEFAULT_RTOL,
    method: str = "pcg",
    x0: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Solve an already reduced symmetric positive definite system

    PCG runs at a tenth of `rtol`; if it stalls the solve falls back to sparse LU.
    The true relative residual is checked afterwards.

    Raises:
        SingularSystemError: Non-finite result or residual far above `rtol`
    """
    norm_f = float(np.linalg.norm(f_f))
    if norm_f == 0.0:
        return np.zeros_like(f_f)

    if method == "direct":
        u_f = _direct_solve(k_ff, f_f)
    else:
        u_f = _pcg_solve(k_ff, f_f, rtol, x0)
        if u_f is None:
            logger.warning(f"PCG did not reach rtol={rtol} on {f_f.size} DOFs; using sparse LU")
            try:
                u_f = spla.splu(sp.csc_matrix(k_ff)).solve(f_f)
            except RuntimeError as e:
                raise SingularSystemError(f"Sparse LU failed: {e}") from e

    if not np.all(np.isfinite(u_f)):
        raise SingularSystemError("Solve produced non-finite displacements")
    residual = float(np.linalg.norm(k_ff @ u_f - f_f)) / norm_f
    if residual >= max(rtol, SINGULAR_RESIDUAL):
        raise SingularSystemError(
            f"Relative residual {residual:.3e} exceeds {rtol:.1e}; system is likely singular"
        )
    if residual >= rtol:
        logger.warning(f"Relative residual {residual:.3e} above rtol={rtol:.1e}")
    return u_f


def solve_static(
    grid: Grid,
    bc: BoundarySpec,
    load: PointLoad,
    k: sp.spmatrix,
    rtol: float = DEFAULT_RTOL,
    method: str = "pcg",
    x0: Optional[np.ndarray] = None,
    scale: float = 1.0,
) -> np.ndarray:
    """
    Static displacement field for a point load

    Raises:
        SingularSystemError: The fixture set leaves a rigid-body mode or the solve fails
        ValueError: "direct" requested on a grid larger than 8x8
    """
    if method == "direct" and max(grid.nelx, grid.nely) > DIRECT_MAX_SIDE:
        raise ValueError(
            f"Direct solves are limited to grids up to 8x8, got {grid.nelx}x{grid.nely}"
        )
    if not bc.is_stable(grid):
        raise SingularSystemError(
            f"Fixture set {bc.names} pins fewer than two nodes; rigid rotation is unconstrained"
        )
    return solve_system(
        k, load_vector(grid, load, scale), bc.fixed_dofs(grid), rtol=rtol, method=method, x0=x0
    )


def compliance(u: np.ndarray, f: np.ndarray) -> float:
    """C = f^T u"""
    return float(np.dot(f, u))


def strain_energy_product(k: sp.spmatrix, u: np.ndarray) -> float:
    """u^T K u"""
    return float(u @ (k @ u))


def element_fields(
    grid: Grid,
    material: Material,
    u: np.ndarray,
    moduli: Optional[Union[np.ndarray, float]] = None,
) -> FieldImage:
    """
    Center-point strain energy density and von Mises stress per element

    Parameters:
        grid (Grid): Element grid
        material (Material): Material constants
        u (np.ndarray): Global displacement vector
        moduli (np.ndarray | float, optional): Per-element moduli; defaults to E0 everywhere

    Returns:
        FieldImage: Raw (unnormalized) fields on the (nely, nelx) image
    """
    if u.shape != (grid.n_dofs,):
        raise ValueError(f"Displacement shape {u.shape} does not match {grid.n_dofs} DOFs")
    if moduli is None:
        moduli = material.E0
    moduli_vec = np.broadcast_to(np.asarray(moduli, dtype=np.float64), (grid.n_elements,))

    u_e = u[grid.edof_matrix()]
    strain = u_e @ strain_displacement(grid.element_size).T
    stress = (strain @ elasticity_matrix(material).T) * moduli_vec[:, np.newaxis]
    sed = 0.5 * np.sum(stress * strain, axis=1)
    sx, sy, txy = stress[:, 0], stress[:, 1], stress[:, 2]
    vm = np.sqrt(np.maximum(sx**2 - sx * sy + sy**2 + 3.0 * txy**2, 0.0))
    return FieldImage(sed=grid.to_image(np.maximum(sed, 0.0)), vm=grid.to_image(vm))


def normalize_fields(raw: FieldImage) -> FieldImage:
    """Divide each channel by its own maximum; all-zero channels stay zero"""
    channels = []
    for name, channel in (("sed", raw.sed), ("vm", raw.vm)):
        if not np.all(np.isfinite(channel)):
            raise ValueError(f"Field channel '{name}' contains NaN or Inf")
        if np.any(channel < 0.0):
            raise ValueError(f"Field channel '{name}' has negative entries")
        peak = float(channel.max()) if channel.size else 0.0
        channels.append(channel / peak if peak > 0.0 else np.zeros_like(channel))
    return FieldImage(sed=channels[0], vm=channels[1])


def displacement_magnitude(grid: Grid, u: np.ndarray) -> np.ndarray:
    """Per-node |u| on the (nely + 1, nelx + 1) node image"""
    magnitude = np.hypot(u[0::2], u[1::2])
    return magnitude.reshape(grid.nelx + 1, grid.nely + 1).T


def compute_field_image(spec: ProblemSpec, rtol: float = DEFAULT_RTOL) -> FieldImage:
    """Normalized input fields for a problem, solved on the full-material domain"""
    grid = spec.grid
    k = assemble_from_moduli(grid, spec.material, np.full(grid.n_elements, spec.material.E0))
    u = solve_static(grid, spec.bc, spec.point_load, k, rtol=rtol)
    return normalize_fields(element_fields(grid, spec.material, u))
