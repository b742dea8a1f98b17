#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
problem.py

Description:
    Shared domain types for topology optimization problems: the element grid, the
    material, the 16 canonical boundary fixture sites, point loads, temporal load
    shapes and the ProblemSpec bundle that every workflow consumes.

Usage:
    from topoformer.problem import BoundarySpec, Grid, PointLoad, ProblemSpec

    grid = Grid(16, 8)
    bc = BoundarySpec.from_names(["run_left_bottom", "run_left_top"])
    load = PointLoad.from_angle(grid, col=15, row=7, angle_index=4)
    spec = ProblemSpec(grid=grid, bc=bc, load=load, vf=0.4)

Conventions:
    - Nodes are addressed by physical coordinates (ix, iy), iy counted from the bottom
      edge. Global node number is (nely + 1) * ix + (nely - iy), so nodes run down each
      column from the top, then column by column. Node n owns DOFs 2n (x) and 2n + 1 (y).
    - Elements are addressed by image coordinates (col, row), row counted from the top.
      Flat element number is row + col * nely, and an element vector reshaped with
      vec.reshape(nelx, nely).T gives the (nely, nelx) image.

Requirements:
    - numpy

References:
    - Andreassen et al. style node/element numbering for 88-line SIMP codes

"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Optional, Union

import numpy as np

Node = tuple[int, int]

SITE_NAMES: tuple[str, ...] = (
    "corner_bl",
    "corner_br",
    "corner_tr",
    "corner_tl",
    "mid_bottom",
    "mid_right",
    "mid_top",
    "mid_left",
    "run_bottom_left",
    "run_bottom_right",
    "run_right_bottom",
    "run_right_top",
    "run_top_right",
    "run_top_left",
    "run_left_top",
    "run_left_bottom",
)

ANGLE_STEP_DEGREES = 60.0
ANGLE_COUNT = 6
LOAD_NODE_RULE = "domain corner for corner elements, else first boundary node of LL, LR, UR, UL"


@dataclass(frozen=True)
class Grid:
    """Regular grid of square bilinear elements"""

    nelx: int
    nely: int
    element_size: float = 1.0

    def __post_init__(self) -> None:
        if self.nelx < 1 or self.nely < 1:
            raise ValueError(f"Grid needs nelx >= 1 and nely >= 1, got {self.nelx}x{self.nely}")
        if self.element_size <= 0:
            raise ValueError(f"element_size must be positive, got {self.element_size}")

    @property
    def n_elements(self) -> int:
        return self.nelx * self.nely

    @property
    def n_nodes(self) -> int:
        return (self.nelx + 1) * (self.nely + 1)

    @property
    def n_dofs(self) -> int:
        return 2 * self.n_nodes

    @property
    def shape(self) -> tuple[int, int]:
        """Image shape (rows, columns) = (nely, nelx)"""
        return (self.nely, self.nelx)

    def node_index(self, ix: int, iy: int) -> int:
        if not (0 <= ix <= self.nelx and 0 <= iy <= self.nely):
            raise ValueError(f"Node ({ix}, {iy}) outside grid {self.nelx}x{self.nely}")
        return (self.nely + 1) * ix + (self.nely - iy)

    def node_dofs(self, ix: int, iy: int) -> tuple[int, int]:
        n = self.node_index(ix, iy)
        return (2 * n, 2 * n + 1)

    def element_index(self, col: int, row: int) -> int:
        if not (0 <= col < self.nelx and 0 <= row < self.nely):
            raise ValueError(f"Element ({col}, {row}) outside grid {self.nelx}x{self.nely}")
        return row + col * self.nely

    def element_position(self, element: int) -> tuple[int, int]:
        """Inverse of element_index: flat number -> (col, row)"""
        return (element // self.nely, element % self.nely)

    def element_corners(self, col: int, row: int) -> tuple[Node, Node, Node, Node]:
        """Corner nodes counterclockwise from the lower-left"""
        bottom = self.nely - row - 1
        return ((col, bottom), (col + 1, bottom), (col + 1, bottom + 1), (col, bottom + 1))

    def is_boundary_node(self, ix: int, iy: int) -> bool:
        return ix in (0, self.nelx) or iy in (0, self.nely)

    def is_boundary_element(self, col: int, row: int) -> bool:
        return col in (0, self.nelx - 1) or row in (0, self.nely - 1)

    def boundary_elements(self) -> list[tuple[int, int]]:
        """Boundary elements as (col, row), sorted by flat element number"""
        cells = [
            (col, row)
            for col in range(self.nelx)
            for row in range(self.nely)
            if self.is_boundary_element(col, row)
        ]
        return cells

    def edof_matrix(self) -> np.ndarray:
        """(n_elements, 8) global DOF numbers per element, counterclockwise from LL"""
        elx, ely = np.meshgrid(np.arange(self.nelx), np.arange(self.nely), indexing="ij")
        n1 = ((self.nely + 1) * elx + ely).ravel()
        n2 = ((self.nely + 1) * (elx + 1) + ely).ravel()
        return np.stack(
            [
                2 * n1 + 2,
                2 * n1 + 3,
                2 * n2 + 2,
                2 * n2 + 3,
                2 * n2,
                2 * n2 + 1,
                2 * n1,
                2 * n1 + 1,
            ],
            axis=1,
        ).astype(np.int64)

    def to_image(self, values: np.ndarray) -> np.ndarray:
        """Element vector -> (nely, nelx) image"""
        values = np.asarray(values)
        if values.size != self.n_elements:
            raise ValueError(
                f"Expected {self.n_elements} element values, got shape {values.shape}"
            )
        return values.reshape(self.nelx, self.nely).T

    def to_vector(self, image: np.ndarray) -> np.ndarray:
        """(nely, nelx) image -> element vector"""
        image = np.asarray(image)
        if image.shape != self.shape:
            raise ValueError(f"Expected image shape {self.shape}, got {image.shape}")
        return image.T.reshape(-1)

    def to_dict(self) -> dict[str, Any]:
        return {"nelx": self.nelx, "nely": self.nely, "element_size": self.element_size}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Grid:
        return cls(int(data["nelx"]), int(data["nely"]), float(data.get("element_size", 1.0)))


@dataclass(frozen=True)
class Material:
    """Isotropic linear-elastic material in plane stress"""

    E0: float = 1.0
    Emin: float = 1e-9
    nu: float = 0.3

    def __post_init__(self) -> None:
        if not 0.0 < self.Emin < self.E0:
            raise ValueError(f"Material needs 0 < Emin < E0, got Emin={self.Emin} E0={self.E0}")
        if not 0.0 <= self.nu < 0.5:
            raise ValueError(f"Poisson's ratio must be in [0, 0.5), got {self.nu}")

    def to_dict(self) -> dict[str, float]:
        return {"E0": self.E0, "Emin": self.Emin, "nu": self.nu}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Material:
        return cls(float(data["E0"]), float(data["Emin"]), float(data["nu"]))


def site_nodes(grid: Grid, site: int) -> list[Node]:
    """Nodes of canonical fixture site `site` (0..15) on `grid`"""
    nx, ny = grid.nelx, grid.nely
    mx, my = nx // 2, ny // 2
    table: dict[int, list[Node]] = {
        0: [(0, 0)],
        1: [(nx, 0)],
        2: [(nx, ny)],
        3: [(0, ny)],
        4: [(mx, 0)],
        5: [(nx, my)],
        6: [(mx, ny)],
        7: [(0, my)],
        8: [(i, 0) for i in range(0, mx + 1)],
        9: [(i, 0) for i in range(mx, nx + 1)],
        10: [(nx, j) for j in range(0, my + 1)],
        11: [(nx, j) for j in range(my, ny + 1)],
        12: [(i, ny) for i in range(mx, nx + 1)],
        13: [(i, ny) for i in range(0, mx + 1)],
        14: [(0, j) for j in range(my, ny + 1)],
        15: [(0, j) for j in range(0, my + 1)],
    }
    if site not in table:
        raise ValueError(f"Fixture site must be in 0..15, got {site}")
    return table[site]


@dataclass(frozen=True)
class BoundarySpec:
    """Set of fixed canonical sites; each fixes both x and y at every node it covers"""

    sites: tuple[int, ...]

    def __post_init__(self) -> None:
        ordered = tuple(sorted(set(int(s) for s in self.sites)))
        if len(ordered) != len(self.sites):
            raise ValueError(f"Duplicate fixture sites in {self.sites}")
        if not 1 <= len(ordered) <= 4:
            raise ValueError(f"BoundarySpec needs 1 to 4 sites, got {len(ordered)}")
        if any(s < 0 or s >= len(SITE_NAMES) for s in ordered):
            raise ValueError(f"Fixture sites must be in 0..15, got {self.sites}")
        object.__setattr__(self, "sites", ordered)

    @classmethod
    def from_names(cls, names: Iterable[str]) -> BoundarySpec:
        try:
            return cls(tuple(SITE_NAMES.index(name) for name in names))
        except ValueError as e:
            raise ValueError(f"Unknown fixture site in {list(names)}; known: {SITE_NAMES}") from e

    @classmethod
    def from_mask(cls, mask: int) -> BoundarySpec:
        if not 0 < mask < (1 << 16):
            raise ValueError(f"BC mask must be a nonzero 16-bit value, got {mask}")
        return cls(tuple(bit for bit in range(16) if mask >> bit & 1))

    @property
    def mask(self) -> int:
        return sum(1 << s for s in self.sites)

    @property
    def names(self) -> list[str]:
        return [SITE_NAMES[s] for s in self.sites]

    def mask_bits(self) -> np.ndarray:
        """16 {0,1} values, bit 0 first"""
        return np.array([(self.mask >> bit) & 1 for bit in range(16)], dtype=np.float64)

    def fixed_nodes(self, grid: Grid) -> list[Node]:
        nodes: set[Node] = set()
        for site in self.sites:
            nodes.update(site_nodes(grid, site))
        return sorted(nodes)

    def fixed_dofs(self, grid: Grid) -> np.ndarray:
        dofs = [d for node in self.fixed_nodes(grid) for d in grid.node_dofs(*node)]
        return np.array(sorted(dofs), dtype=np.int64)

    def is_stable(self, grid: Grid) -> bool:
        """True when at least two distinct nodes are fixed (all rigid-body modes removed)"""
        return len(self.fixed_nodes(grid)) >= 2


def load_node_for_element(grid: Grid, col: int, row: int) -> Node:
    """Node that carries a load applied to boundary element (col, row)"""
    if not grid.is_boundary_element(col, row):
        raise ValueError(f"Element ({col}, {row}) is not on the domain boundary")
    corners = grid.element_corners(col, row)
    domain_corners = {(0, 0), (grid.nelx, 0), (grid.nelx, grid.nely), (0, grid.nely)}
    for node in corners:
        if node in domain_corners:
            return node
    for node in corners:
        if grid.is_boundary_node(*node):
            return node
    raise ValueError(f"Element ({col}, {row}) has no boundary corner")  # pragma: no cover


@dataclass(frozen=True)
class PointLoad:
    """Nodal point load applied on behalf of a boundary element"""

    element: tuple[int, int]
    node: Node
    fx: float
    fy: float
    angle_index: Optional[int] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "element", (int(self.element[0]), int(self.element[1])))
        object.__setattr__(self, "node", (int(self.node[0]), int(self.node[1])))
        if self.angle_index is not None and not 0 <= self.angle_index < ANGLE_COUNT:
            raise ValueError(
                f"angle_index must be in 0..{ANGLE_COUNT - 1}, got {self.angle_index}"
            )

    @classmethod
    def from_angle(
        cls, grid: Grid, col: int, row: int, angle_index: int, magnitude: float = 1.0
    ) -> PointLoad:
        if not 0 <= angle_index < ANGLE_COUNT:
            raise ValueError(f"angle_index must be in 0..{ANGLE_COUNT - 1}, got {angle_index}")
        theta = math.radians(ANGLE_STEP_DEGREES * angle_index)
        return cls(
            element=(col, row),
            node=load_node_for_element(grid, col, row),
            fx=magnitude * math.cos(theta),
            fy=magnitude * math.sin(theta),
            angle_index=angle_index,
        )

    @property
    def magnitude(self) -> float:
        return math.hypot(self.fx, self.fy)

    @property
    def theta(self) -> float:
        """Load direction in radians"""
        return math.atan2(self.fy, self.fx)

    def scaled(self, factor: float) -> PointLoad:
        return PointLoad(self.element, self.node, self.fx * factor, self.fy * factor, None)

    def validate(self, grid: Grid) -> None:
        col, row = self.element
        if not grid.is_boundary_element(col, row):
            raise ValueError(f"Load element {self.element} is not on the domain boundary")
        if not grid.is_boundary_node(*self.node):
            raise ValueError(f"Load node {self.node} is not on the domain boundary")
        if self.node not in grid.element_corners(col, row):
            raise ValueError(f"Load node {self.node} is not a corner of element {self.element}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "element": list(self.element),
            "node": list(self.node),
            "fx": self.fx,
            "fy": self.fy,
            "angle_index": self.angle_index,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> PointLoad:
        angle = data.get("angle_index")
        return cls(
            element=tuple(data["element"]),  # type: ignore[arg-type]
            node=tuple(data["node"]),  # type: ignore[arg-type]
            fx=float(data["fx"]),
            fy=float(data["fy"]),
            angle_index=None if angle is None else int(angle),
        )


class LoadShape(str, Enum):
    """Temporal load magnitude g(t) on t in [0, 1] s"""

    STATIC = "static"
    SINE = "sine"
    IMPULSE = "impulse"
    CONSTANT = "constant"
    RAMP = "ramp"

    def evaluate(self, t: Union[float, np.ndarray]) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        if self is LoadShape.SINE:
            return np.sin(2.0 * np.pi * t)
        if self is LoadShape.IMPULSE:
            return (t / 0.25) * np.exp(-t / 0.25 + 1.0)
        if self is LoadShape.RAMP:
            return t.copy()
        return np.ones_like(t)


DYNAMIC_SHAPES = (LoadShape.SINE, LoadShape.IMPULSE)


@dataclass(frozen=True)
class DynamicLoad:
    """Point load scaled in time by a LoadShape"""

    base: PointLoad
    shape: LoadShape

    def __post_init__(self) -> None:
        object.__setattr__(self, "shape", LoadShape(self.shape))
        if self.shape is LoadShape.STATIC:
            raise ValueError("DynamicLoad needs a time-varying shape, got 'static'")

    def samples(self, times: np.ndarray) -> np.ndarray:
        """Magnitude g(t_i) at each time node"""
        return self.shape.evaluate(times)

    def to_dict(self) -> dict[str, Any]:
        return {"base": self.base.to_dict(), "shape": self.shape.value}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> DynamicLoad:
        return cls(PointLoad.from_dict(data["base"]), LoadShape(data["shape"]))


@dataclass(frozen=True)
class ProblemSpec:
    """One topology optimization problem: grid, fixtures, load and target volume fraction"""

    grid: Grid
    bc: BoundarySpec
    load: Union[PointLoad, DynamicLoad]
    vf: float
    seed: Optional[int] = None
    material: Material = field(default_factory=Material)

    def __post_init__(self) -> None:
        if not 0.0 < self.vf < 1.0:
            raise ValueError(f"Volume fraction must be in (0, 1), got {self.vf}")
        self.point_load.validate(self.grid)
        if abs(self.point_load.magnitude - 1.0) > 1e-9:
            raise ValueError(
                f"Problem loads have unit magnitude, got {self.point_load.magnitude:.6g}"
            )

    @property
    def kind(self) -> str:
        return "dynamic" if isinstance(self.load, DynamicLoad) else "static"

    @property
    def point_load(self) -> PointLoad:
        return self.load.base if isinstance(self.load, DynamicLoad) else self.load

    @property
    def shape(self) -> LoadShape:
        return self.load.shape if isinstance(self.load, DynamicLoad) else LoadShape.STATIC

    def with_load(self, load: Union[PointLoad, DynamicLoad]) -> ProblemSpec:
        return ProblemSpec(self.grid, self.bc, load, self.vf, self.seed, self.material)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "grid": self.grid.to_dict(),
            "bc": {"mask": self.bc.mask, "sites": self.bc.names},
            "load": self.point_load.to_dict(),
            "shape": self.shape.value,
            "vf": self.vf,
            "seed": self.seed,
            "material": self.material.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ProblemSpec:
        """Build from the JSON form; missing optional keys take defaults"""
        grid = Grid.from_dict(data["grid"])
        bc_data = data["bc"]
        if isinstance(bc_data, dict) and "mask" in bc_data:
            bc = BoundarySpec.from_mask(int(bc_data["mask"]))
        elif isinstance(bc_data, dict):
            bc = BoundarySpec.from_names(bc_data["sites"])
        else:
            bc = BoundarySpec.from_names(bc_data)
        load_data = data["load"]
        if "fx" not in load_data:
            col, row = load_data["element"]
            point = PointLoad.from_angle(grid, col, row, int(load_data["angle_index"]))
        else:
            point = PointLoad.from_dict(load_data)
        shape = LoadShape(data.get("shape", "static"))
        if data.get("kind", "static") == "dynamic" or shape is not LoadShape.STATIC:
            load: Union[PointLoad, DynamicLoad] = DynamicLoad(point, shape)
        else:
            load = point
        material = Material.from_dict(data["material"]) if "material" in data else Material()
        seed = data.get("seed")
        return cls(
            grid=grid,
            bc=bc,
            load=load,
            vf=float(data["vf"]),
            seed=None if seed is None else int(seed),
            material=material,
        )
