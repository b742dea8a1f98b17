#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
designcompliance.py

Description:
    Objective value of a fixed binary design: static compliance u^T K u with solid E0 /
    void Emin elements, or dynamic compliance from a Newmark run with the problem's load
    shape. Fully void or singular designs return an infinite sentinel.

Usage:
    from topoformer.designcompliance import compliance_of_design

    c = compliance_of_design(spec, binary_topology)

"""

from __future__ import annotations

import logging
import math
from typing import Optional

import numpy as np

from .dynamicoptimizer import DynamicOptimizer, DynamicsConfig, dynamic_compliance
from .exceptions import SingularSystemError
from .femsolver import (
    DEFAULT_RTOL,
    as_element_vector,
    assemble_from_moduli,
    solve_static,
    strain_energy_product,
)
from .problem import ProblemSpec
from .staticoptimizer import OptimizerConfig

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

FAILED_COMPLIANCE = math.inf


def compliance_of_design(
    spec: ProblemSpec,
    design: np.ndarray,
    dynamics: Optional[DynamicsConfig] = None,
    rtol: float = DEFAULT_RTOL,
) -> float:
    """
    Compliance of a binary design under `spec`

    Parameters:
        spec (ProblemSpec): Problem; static or dynamic by its load
        design (np.ndarray): Binary element vector or (nely, nelx) image
        dynamics (DynamicsConfig, optional): Time-integration settings for dynamic specs
        rtol (float): Solver tolerance

    Returns:
        float: u^T K u (static) or C_dyn (dynamic); FAILED_COMPLIANCE for void or
        singular designs
    """
    rho = as_element_vector(spec.grid, design)
    if not np.any(rho > 0.0):
        return FAILED_COMPLIANCE
    binary = (rho >= 0.5).astype(np.float64)
    material = spec.material
    try:
        if spec.kind == "dynamic":
            # Binary densities make the SIMP penalty irrelevant
            optimizer = DynamicOptimizer(dynamics, OptimizerConfig(), rtol=rtol)
            forces, response = optimizer.response(spec, binary)
            dt = optimizer.dynamics.time_grid.dt
            return dynamic_compliance(forces, response.displacement, dt)
        moduli = np.where(binary > 0.0, material.E0, material.Emin)
        k = assemble_from_moduli(spec.grid, material, moduli)
        u = solve_static(spec.grid, spec.bc, spec.point_load, k, rtol=rtol)
        return strain_energy_product(k, u)
    except SingularSystemError as e:
        logger.debug(f"Design evaluation failed: {e}")
        return FAILED_COMPLIANCE
