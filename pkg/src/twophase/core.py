"""Uniform-grid geometry, periodic index helpers and field reductions.

Fields are plain ``numpy`` arrays of shape ``(H, W)``: row ``j`` is the
vertical index (``y = (j + 1/2) dx``, increasing upward), column ``i`` the
horizontal, periodic index (``x = (i + 1/2) dx``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

FLUID = 1
SOLID = 0

# obstacle / pore radius bounds and default clearance
RADIUS_RANGE = (0.05, 0.25)
CHARGE_RANGE = (-10.0, -1.0)
MIN_GAP = 0.05


class GeometryError(ValueError):
    """Raised for infeasible geometries (e.g. an obstacle cutting into the pore)."""


class ConfigurationError(ValueError):
    pass


class DropletDisintegrated(RuntimeError):
    """No cell of the phase field exceeds the droplet threshold."""


@dataclass(frozen=True)
class GridSpec:
    width_cells: int = 96
    height_cells: int = 64
    domain_width: float = 3.0
    tube_height: float = 1.0

    def __post_init__(self):
        if self.width_cells < 8 or self.height_cells < 8:
            raise ConfigurationError(
                f"grid must be at least 8x8, got {self.width_cells}x{self.height_cells}")
        if self.domain_width <= 0 or self.tube_height <= 0:
            raise ConfigurationError("domain_width and tube_height must be positive")

    @property
    def dx(self) -> float:
        return self.domain_width / self.width_cells

    @property
    def domain_height(self) -> float:
        return self.height_cells * self.dx

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height_cells, self.width_cells)

    @property
    def tube_bottom(self) -> float:
        # centre tube + largest pore vertically, snapped to a cell face
        margin = 0.5 * (self.domain_height - self.tube_height - RADIUS_RANGE[1])
        return round(margin / self.dx) * self.dx

    @property
    def tube_top(self) -> float:
        return self.tube_bottom + self.tube_height

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(X, Y)`` arrays of cell-centre coordinates, each ``(H, W)``."""
        x = (np.arange(self.width_cells) + 0.5) * self.dx
        y = (np.arange(self.height_cells) + 0.5) * self.dx
        return np.meshgrid(x, y)

    def as_dict(self) -> dict:
        return {"width_cells": self.width_cells, "height_cells": self.height_cells,
                "domain_width": self.domain_width, "tube_height": self.tube_height}


@dataclass(frozen=True)
class ObstacleSpec:
    center_x: float
    center_y: float
    radius: float

    def __post_init__(self):
        lo, hi = RADIUS_RANGE
        if not (lo - 1e-12 <= self.radius <= hi + 1e-12):
            raise ConfigurationError(f"obstacle radius {self.radius} outside [{lo}, {hi}]")


@dataclass(frozen=True)
class ScenarioParams:
    pore_radius: float
    surface_charge: float
    obstacles: tuple[ObstacleSpec, ...] = ()
    rng_seed: int = 0

    def __post_init__(self):
        lo, hi = RADIUS_RANGE
        if not (lo - 1e-12 <= self.pore_radius <= hi + 1e-12):
            raise ConfigurationError(f"pore_radius {self.pore_radius} outside [{lo}, {hi}]")
        if len(self.obstacles) > 2:
            raise ConfigurationError("at most two obstacles are supported")
        # zero charge is allowed for controlled runs; sampled scenarios stay in CHARGE_RANGE
        if not (CHARGE_RANGE[0] - 1e-12 <= self.surface_charge <= 0.0):
            raise ConfigurationError(f"surface_charge {self.surface_charge} outside [-10, 0]")
        object.__setattr__(self, "obstacles", tuple(self.obstacles))

    def with_charge(self, charge: float) -> "ScenarioParams":
        return ScenarioParams(self.pore_radius, charge, self.obstacles, self.rng_seed)

    def as_dict(self) -> dict:
        return {
            "pore_radius": self.pore_radius,
            "surface_charge": self.surface_charge,
            "obstacles": [[o.center_x, o.center_y, o.radius] for o in self.obstacles],
            "rng_seed": self.rng_seed,
        }


@dataclass(frozen=True, eq=False)
class GeometryMask:
    """Fluid/solid labels on the grid plus the pore cavity.

    ``cavity`` flags the FLUID cells of the pore above the tube; faces between a
    cavity cell and a SOLID cell carry the surface charge.
    """

    grid: GridSpec
    fluid: np.ndarray
    cavity: np.ndarray = None
    pore_radius: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        fluid = np.asarray(self.fluid, dtype=bool)
        if fluid.shape != self.grid.shape:
            raise ConfigurationError(f"mask shape {fluid.shape} != grid {self.grid.shape}")
        cavity = np.zeros_like(fluid) if self.cavity is None else np.asarray(self.cavity, bool)
        fluid.setflags(write=False)
        cavity = cavity & fluid
        cavity.setflags(write=False)
        object.__setattr__(self, "fluid", fluid)
        object.__setattr__(self, "cavity", cavity)

    @property
    def solid(self) -> np.ndarray:
        return ~self.fluid

    @property
    def labels(self) -> np.ndarray:
        """Cell labels, FLUID=1 / SOLID=0, as uint8."""
        return self.fluid.astype(np.uint8)

    @property
    def n_fluid(self) -> int:
        return int(self.fluid.sum())

    @property
    def open_x(self) -> np.ndarray:
        """Face between cell ``(j, i)`` and ``(j, i+1)`` connects two FLUID cells."""
        if "open_x" not in self._cache:
            self._cache["open_x"] = self.fluid & np.roll(self.fluid, -1, axis=1)
        return self._cache["open_x"]

    @property
    def open_y(self) -> np.ndarray:
        """Face between cell ``(j, i)`` and ``(j+1, i)`` connects two FLUID cells."""
        if "open_y" not in self._cache:
            self._cache["open_y"] = self.fluid & np.roll(self.fluid, -1, axis=0)
        return self._cache["open_y"]

    @property
    def pore_faces_x(self) -> np.ndarray:
        if "pore_x" not in self._cache:
            c, s = self.cavity, self.solid
            self._cache["pore_x"] = (c & np.roll(s, -1, 1)) | (s & np.roll(c, -1, 1))
        return self._cache["pore_x"]

    @property
    def pore_faces_y(self) -> np.ndarray:
        if "pore_y" not in self._cache:
            c, s = self.cavity, self.solid
            self._cache["pore_y"] = (c & np.roll(s, -1, 0)) | (s & np.roll(c, -1, 0))
        return self._cache["pore_y"]

    @property
    def pore_surface(self) -> np.ndarray:
        """Per FLUID cell, the number of its faces on the charged pore surface."""
        if "pore_count" not in self._cache:
            px, py = self.pore_faces_x, self.pore_faces_y
            n = (px.astype(int) + np.roll(px, 1, 1) + py + np.roll(py, 1, 0)) * self.cavity
            self._cache["pore_count"] = n
        return self._cache["pore_count"]

    @property
    def boundary_adjacent(self) -> np.ndarray:
        """FLUID cells with at least one SOLID 4-neighbour."""
        f = self.fluid
        closed = ~(np.roll(f, 1, 1) & np.roll(f, -1, 1) & np.roll(f, 1, 0) & np.roll(f, -1, 0))
        return f & closed

    @property
    def pore_arc_length(self) -> float:
        return math.pi * self.pore_radius

    def shifted(self, s: int) -> "GeometryMask":
        return GeometryMask(self.grid, np.roll(self.fluid, s, axis=1),
                            np.roll(self.cavity, s, axis=1), self.pore_radius)

    @classmethod
    def channel(cls, grid: GridSpec, bottom_rows: int = 1, top_rows: int = 1) -> "GeometryMask":
        """Straight periodic channel with solid bands of the given thickness."""
        fluid = np.zeros(grid.shape, dtype=bool)
        fluid[bottom_rows:grid.height_cells - top_rows] = True
        return cls(grid, fluid)

    @classmethod
    def all_fluid(cls, grid: GridSpec) -> "GeometryMask":
        return cls(grid, np.ones(grid.shape, dtype=bool))


def periodic_dx(a, b, period: float):
    """Signed minimum-image separation ``a - b`` on a circle of length ``period``."""
    d = np.asarray(a) - b
    return d - period * np.round(d / period)


def pore_center(grid: GridSpec) -> tuple[float, float]:
    return 0.5 * grid.domain_width, grid.tube_top


def build_geometry_mask(scenario: ScenarioParams, grid: GridSpec) -> GeometryMask:
    X, Y = grid.cell_centers()
    px, py = pore_center(grid)
    r = scenario.pore_radius
    if py + r >= grid.domain_height or grid.tube_bottom <= 0:
        raise GeometryError("grid too short for tube + pore")

    tube = (Y > grid.tube_bottom) & (Y < grid.tube_top)
    dpx = periodic_dx(X, px, grid.domain_width)
    cavity = (Y > grid.tube_top) & (dpx ** 2 + (Y - py) ** 2 < r ** 2)
    fluid = tube | cavity

    for ob in scenario.obstacles:
        if math.hypot(periodic_dx(ob.center_x, px, grid.domain_width), ob.center_y - py) < ob.radius + r:
            raise GeometryError(f"obstacle {ob} overlaps the pore cavity")
        d2 = periodic_dx(X, ob.center_x, grid.domain_width) ** 2 + (Y - ob.center_y) ** 2
        fluid &= ~(d2 < ob.radius ** 2)

    return GeometryMask(grid, fluid, cavity, r)


def shift_horizontal(field: np.ndarray, s: int) -> np.ndarray:
    """Column ``i`` of the result is column ``(i - s) mod W`` of ``field``."""
    return np.roll(field, int(s), axis=-1)


def oil_mass(phase: np.ndarray, mask: GeometryMask) -> float:
    """Sum of the oil fraction ``(phi + 1) / 2`` over FLUID cells."""
    return float(0.5 * (np.asarray(phase)[mask.fluid] + 1.0).sum())


def label_periodic(binary: np.ndarray) -> tuple[np.ndarray, int]:
    """4-connected component labels with the horizontal axis wrapped."""
    labels, n = ndimage.label(binary)
    if n == 0:
        return labels, 0
    parent = np.arange(n + 1)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    left, right = labels[:, 0], labels[:, -1]
    for a, b in zip(left[(left > 0) & (right > 0)], right[(left > 0) & (right > 0)]):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(a) for a in range(n + 1)])
    uniq, compact = np.unique(roots, return_inverse=True)
    return compact.reshape(-1)[labels].reshape(labels.shape), len(uniq) - 1


def circular_mean(x: np.ndarray, period: float) -> float:
    """Mean position on a circle of circumference ``period``, in ``[0, period)``."""
    ang = 2 * np.pi * np.asarray(x, dtype=float) / period
    m = math.atan2(np.sin(ang).mean(), np.cos(ang).mean())
    return (m * period / (2 * np.pi)) % period


def droplet_center(phase: np.ndarray, mask: GeometryMask, threshold: float = 0.0) -> tuple[float, float]:
    """Centroid of the largest connected oil blob.

    x is a circular mean over the periodic axis. Raises DropletDisintegrated
    when no FLUID cell exceeds ``threshold``.
    """
    oil = (np.asarray(phase) > threshold) & mask.fluid
    labels, n = label_periodic(oil)
    if n == 0:
        raise DropletDisintegrated("no cell above threshold")
    sizes = np.bincount(labels.ravel())[1:]
    jj, ii = np.nonzero(labels == 1 + int(np.argmax(sizes)))
    dx = mask.grid.dx
    x = circular_mean((ii + 0.5) * dx, mask.grid.domain_width)
    y = float(((jj + 0.5) * dx).mean())
    return x, y


def _power_of_two_ratio(a: int, b: int) -> int:
    big, small = max(a, b), min(a, b)
    r = big // small
    if big % small or r & (r - 1):
        raise ConfigurationError(f"{a} -> {b} is not a power-of-two resampling")
    return r


def resample_labels(fluid: np.ndarray, target_h: int, target_w: int, phase_x: int = 0) -> np.ndarray:
    """Nearest-neighbour resampling of a boolean label field."""
    h, w = fluid.shape
    ry, rx = _power_of_two_ratio(h, target_h), _power_of_two_ratio(w, target_w)
    out = fluid
    out = out[::ry] if target_h < h else np.repeat(out, ry, axis=0)
    out = np.roll(out, -phase_x, axis=1)[:, ::rx] if target_w < w else np.repeat(out, rx, axis=1)
    return out


def resample_mask(mask: GeometryMask, target_w: int, target_h: int) -> GeometryMask:
    """Resample labels to ``target_h x target_w``; the cell size scales accordingly."""
    fluid = resample_labels(mask.fluid, target_h, target_w)
    cavity = resample_labels(mask.cavity, target_h, target_w)
    grid = GridSpec(target_w, target_h, mask.grid.domain_width, mask.grid.tube_height)
    return GeometryMask(grid, fluid, cavity, mask.pore_radius)
