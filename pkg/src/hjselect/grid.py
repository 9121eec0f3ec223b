"""Uniform periodic grids on the unit circle and nodal data living on them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

MIN_POINTS = 8


@dataclass(frozen=True)
class TorusGrid:
    """Node-centred uniform grid ``x_i = i / n_points`` on T = R/Z."""

    n_points: int

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < MIN_POINTS:
            raise ConfigError(f"n_points must be an integer >= {MIN_POINTS}, got {self.n_points}")

    @property
    def spacing(self) -> float:
        return 1.0 / self.n_points

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_points) / self.n_points

    def wrap(self, i):
        return np.mod(i, self.n_points)

    def node_index(self, x: float) -> int:
        """Index of the node nearest to ``x`` (mod 1)."""
        return int(np.rint(np.mod(x, 1.0) * self.n_points)) % self.n_points

    def function(self, values) -> "GridFunction":
        return GridFunction(self, values)

    def constant(self, c: float) -> "GridFunction":
        return GridFunction(self, np.full(self.n_points, float(c)))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real nodal values on a :class:`TorusGrid`. Values are stored read-only."""

    grid: TorusGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True).reshape(-1)
        if vals.size != self.grid.n_points:
            raise ConfigError(f"expected {self.grid.n_points} values, got {vals.size}")
        if not np.all(np.isfinite(vals)):
            raise ConfigError("grid function values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.grid.n_points

    def __getitem__(self, i):
        return self.values[self.grid.wrap(i)]

    def __add__(self, other):
        if isinstance(other, GridFunction):
            other = other.values
        return GridFunction(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            other = other.values
        return GridFunction(self.grid, self.values - other)

    def __mul__(self, c):
        return GridFunction(self.grid, self.values * c)

    __rmul__ = __mul__

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


def slopes(values: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Backward and forward difference quotients at every node, periodic."""
    fwd = (np.roll(values, -1) - values) / h
    return np.roll(fwd, 1), fwd


def one_sided_gradients(u: GridFunction, i: int) -> tuple[float, float]:
    """``((u_i - u_{i-1})/h, (u_{i+1} - u_i)/h)`` with periodic indexing."""
    h = u.grid.spacing
    ui = u[i]
    return float((ui - u[i - 1]) / h), float((u[i + 1] - ui) / h)


def max_norm_distance(a, b) -> float:
    av = a.values if isinstance(a, GridFunction) else np.asarray(a)
    bv = b.values if isinstance(b, GridFunction) else np.asarray(b)
    return float(np.max(np.abs(av - bv)))


def resample(u: GridFunction, grid: TorusGrid) -> GridFunction:
    """Periodic piecewise-linear interpolation of ``u`` onto ``grid``."""
    if u.grid == grid:
        return u
    return GridFunction(grid, np.interp(grid.nodes, u.grid.nodes, u.values, period=1.0))
