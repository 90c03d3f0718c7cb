"""Uniform 1D grids, sampled fields, finite differences, and trapezoid quadrature."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GridTooCoarseError, NonFiniteFieldError


@dataclass(frozen=True)
class Grid1D:
    """Node-centered uniform grid on [0, length] with n nodes."""

    n: int
    length: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"grid needs at least 2 nodes, got n={self.n}")
        if not self.length > 0:
            raise ValueError(f"grid length must be positive, got {self.length}")

    @property
    def dx(self) -> float:
        return self.length / (self.n - 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        x = np.linspace(0.0, self.length, self.n)
        x.flags.writeable = False
        return x

    @cached_property
    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.n, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        w.flags.writeable = False
        return w


@dataclass(eq=False)
class Field:
    """Scalar samples on the nodes of a Grid1D."""

    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != (self.grid.n,):
            raise ValueError(
                f"field has {self.values.shape} values for a grid with n={self.grid.n}"
            )

    @classmethod
    def constant(cls, grid: Grid1D, value: float) -> "Field":
        return cls(grid, np.full(grid.n, float(value)))

    @classmethod
    def from_function(cls, grid: Grid1D, fn) -> "Field":
        return cls(grid, np.asarray(fn(grid.nodes), dtype=np.float64))

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())


@dataclass(frozen=True)
class FieldNorms:
    l2: float
    linf: float
    min: float
    max: float


def _require_finite(values: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(values)):
        raise NonFiniteFieldError(f"{op}: field contains non-finite values")


def _ghost_pad(values: np.ndarray, bc: str, width: int) -> np.ndarray:
    """Extend by `width` ghost nodes per side.

    "neumann" mirrors the field across each wall (even extension, zero normal
    derivative); "dirichlet-zero" reflects it oddly (field pinned to zero at
    the walls).
    """
    if bc == "neumann":
        left = values[width:0:-1]
        right = values[-2:-2 - width:-1]
    elif bc == "dirichlet-zero":
        left = -values[width:0:-1]
        right = -values[-2:-2 - width:-1]
    else:
        raise ValueError(f"unknown boundary closure {bc!r}")
    return np.concatenate([left, values, right])


def derivative(f: Field, order: int = 1, bc: str = "neumann") -> Field:
    """Second-order central difference of the given order with ghost closure.

    Interior nodes use the standard 3-point stencils; the boundary closure
    assumes the field obeys the stated condition, which keeps the stencil
    centered and second order there as well.
    """
    if f.grid.n < 5:
        raise GridTooCoarseError(f"derivative needs n >= 5 nodes, got n={f.grid.n}")
    _require_finite(f.values, "derivative")
    dx = f.grid.dx
    g = _ghost_pad(f.values, bc, 1)
    if order == 1:
        out = (g[2:] - g[:-2]) / (2.0 * dx)
    elif order == 2:
        out = (g[2:] - 2.0 * g[1:-1] + g[:-2]) / dx**2
    else:
        raise ValueError(f"derivative order must be 1 or 2, got {order}")
    return Field(f.grid, out)


def integrate(f: Field) -> float:
    """Composite trapezoid integral over the grid; exact for piecewise-linear data."""
    _require_finite(f.values, "integrate")
    return float(f.grid.trapezoid_weights @ f.values)


def norms(f: Field) -> FieldNorms:
    """L2 (trapezoid-weighted), Linf, min, and max of a field."""
    _require_finite(f.values, "norms")
    v = f.values
    l2sq = float(f.grid.trapezoid_weights @ (v * v))
    return FieldNorms(
        l2=float(np.sqrt(l2sq)),
        linf=float(np.max(np.abs(v))),
        min=float(np.min(v)),
        max=float(np.max(v)),
    )
