"""Grids, measures and L^p geometry on an interval.

Everything downstream (operators, decay diagnostics, variance estimators)
reduces to quadrature sums against an invariant measure.  The default grid
is a composite midpoint rule on N uniform cells: nodes at cell centers,
Lebesgue weights equal to the cell width.  A measure attaches a per-node
mass to the same nodes; integration of f against the measure is then
``sum(f(x_i) * mass_i)``.

Masses are computed three ways, in decreasing order of accuracy:

* exactly from a closed-form CDF (cell mass = F(right) - F(left));
* from density values times cell widths, with an optional power-law
  correction for an integrable singularity at the left endpoint;
* directly, when the measure comes out of an Ulam fixed-vector computation.

In all cases masses are normalized to total mass one.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import IncompatibleGridsError, InvalidInputError

__all__ = [
    "QuadratureGrid",
    "MeasureDensity",
    "GridFunction",
    "integrate",
    "lp_norm",
    "inner_product",
]


@dataclass(frozen=True)
class QuadratureGrid:
    """Midpoint-rule quadrature grid on a closed interval."""

    a: float
    b: float
    nodes: np.ndarray
    weights: np.ndarray
    degree: int = 1  # polynomial degree integrated exactly w.r.t. Lebesgue

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if nodes.ndim != 1 or weights.shape != nodes.shape:
            raise InvalidInputError("nodes and weights must be 1-d and congruent")
        if np.any(np.diff(nodes) <= 0):
            raise InvalidInputError("grid nodes must be strictly increasing")
        if nodes[0] < self.a or nodes[-1] > self.b:
            raise InvalidInputError("grid nodes must lie inside the domain")
        if np.any(weights <= 0):
            raise InvalidInputError("quadrature weights must be positive")

    @classmethod
    def midpoint(cls, a: float, b: float, n: int) -> "QuadratureGrid":
        """Uniform N-cell grid with nodes at cell centers."""
        if n < 1:
            raise InvalidInputError("need at least one cell")
        h = (b - a) / n
        nodes = a + (np.arange(n) + 0.5) * h
        return cls(a, b, nodes, np.full(n, h))

    @classmethod
    def from_nodes(cls, a: float, b: float, nodes) -> "QuadratureGrid":
        """Non-uniform grid from explicit nodes; each node's cell runs to
        the midpoints of its neighbors (boundary cells end at a, b)."""
        nodes = np.asarray(nodes, dtype=float)
        if nodes.size < 2:
            raise InvalidInputError("need at least two nodes")
        edges = np.concatenate([[a], 0.5 * (nodes[1:] + nodes[:-1]), [b]])
        return cls(a, b, nodes, np.diff(edges))

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def cell_width(self) -> float:
        return float(self.weights[0])

    def cell_edges(self) -> np.ndarray:
        return np.concatenate(
            [[self.a], 0.5 * (self.nodes[1:] + self.nodes[:-1]), [self.b]]
        )

    def locate(self, y):
        """Linear-interpolation stencil for arbitrary points.

        Returns (j, t) with y ~ (1-t)*nodes[j] + t*nodes[j+1].  Points
        beyond the first/last node get linear extrapolation from the
        boundary pair; constant extrapolation there would cost O(cell
        width) accuracy exactly where singular densities put their largest
        cell masses.
        """
        y = np.asarray(y, dtype=float)
        j = np.clip(np.searchsorted(self.nodes, y) - 1, 0, self.size - 2)
        t = (y - self.nodes[j]) / (self.nodes[j + 1] - self.nodes[j])
        t = np.clip(t, -1.0, 2.0)
        return j, t

    def same_as(self, other: "QuadratureGrid") -> bool:
        return (
            self.size == other.size
            and self.a == other.a
            and self.b == other.b
            and np.array_equal(self.nodes, other.nodes)
        )


def _fit_left_power_law(nodes, values):
    """Least-squares power law c*y**(-g) through the first three nodes."""
    x = np.log(nodes[:3])
    z = np.log(values[:3])
    slope, intercept = np.polyfit(x, z, 1)
    return np.exp(intercept), -slope


@dataclass(frozen=True)
class MeasureDensity:
    """A probability measure represented by density values on a grid.

    ``masses`` is what quadrature actually uses; it always sums to one.
    ``closed_form`` distinguishes analytically known densities from
    numerically estimated ones (Ulam / histogram output).
    """

    grid: QuadratureGrid
    values: np.ndarray
    masses: np.ndarray
    name: str = "measure"
    closed_form: bool = False
    pdf: Optional[Callable] = None
    cdf: Optional[Callable] = None
    sampler: Optional[Callable] = None  # inverse-CDF sampler, U(0,1) -> Y
    left_power_law: Optional[tuple] = field(default=None, repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        masses = np.asarray(self.masses, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "masses", masses)
        if values.shape != self.grid.nodes.shape or masses.shape != values.shape:
            raise InvalidInputError("density arrays must match the grid")
        if np.any(~np.isfinite(values)) or np.any(values < 0):
            raise InvalidInputError("density must be finite and non-negative")
        if abs(masses.sum() - 1.0) > 1e-8:
            raise InvalidInputError("measure masses must sum to 1 within 1e-8")

    @classmethod
    def from_callable(
        cls,
        grid: QuadratureGrid,
        pdf: Callable,
        name: str,
        cdf: Optional[Callable] = None,
        sampler: Optional[Callable] = None,
        singular_left: bool = False,
    ) -> "MeasureDensity":
        values = np.asarray(pdf(grid.nodes), dtype=float)
        left_pl = None
        if cdf is not None:
            edges = grid.cell_edges()
            masses = np.diff(np.asarray(cdf(edges), dtype=float))
        else:
            masses = values * grid.weights
            if singular_left:
                # Midpoint under-resolves an integrable cusp at the left
                # endpoint; replace the first-cell mass by the integral of a
                # local power-law fit.
                c, g = _fit_left_power_law(grid.nodes, values)
                if 0 < g < 1:
                    r0 = grid.cell_edges()[1]
                    masses = masses.copy()
                    masses[0] = c * r0 ** (1.0 - g) / (1.0 - g)
                    left_pl = (c, g)
        masses = masses / masses.sum()
        return cls(
            grid,
            values,
            masses,
            name=name,
            closed_form=True,
            pdf=pdf,
            cdf=cdf,
            sampler=sampler,
            left_power_law=left_pl,
        )

    @classmethod
    def from_masses(
        cls, grid: QuadratureGrid, masses: np.ndarray, name: str
    ) -> "MeasureDensity":
        """Build from per-cell masses (Ulam fixed vector, orbit histogram)."""
        masses = np.asarray(masses, dtype=float)
        masses = masses / masses.sum()
        values = masses / grid.weights
        return cls(grid, values, masses, name=name, closed_form=False)

    def density_at(self, y):
        """Density evaluated at arbitrary points.

        Uses the closed form when available; otherwise linear interpolation
        of node values, with power-law extrapolation left of the first node
        when the density blows up there.
        """
        if self.pdf is not None:
            return np.asarray(self.pdf(y), dtype=float)
        y = np.asarray(y, dtype=float)
        j, t = self.grid.locate(y)
        out = (1 - t) * self.values[j] + t * self.values[j + 1]
        first = self.grid.nodes[0]
        below = y < first
        if np.any(below):
            v0, v1, v2 = self.values[:3]
            if v0 > v1 > v2 > 0:
                c, g = _fit_left_power_law(self.grid.nodes, self.values)
                out = np.where(below, c * np.maximum(y, 1e-300) ** (-g), out)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# measure={self.name} normalized=True\n")
        buf.write("node,value\n")
        for x, v in zip(self.grid.nodes, self.values):
            buf.write(f"{x!r},{v!r}\n")
        return buf.getvalue()


@dataclass(frozen=True)
class GridFunction:
    """An observable sampled on a quadrature grid, with its measure."""

    grid: QuadratureGrid
    values: np.ndarray
    measure: MeasureDensity

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.shape != self.grid.nodes.shape:
            raise InvalidInputError("value count must match the grid")
        if np.any(~np.isfinite(values)):
            raise InvalidInputError("grid function values must be finite")
        if not self.measure.grid.same_as(self.grid):
            raise IncompatibleGridsError("measure lives on a different grid")

    @classmethod
    def from_callable(cls, fn: Callable, measure: MeasureDensity) -> "GridFunction":
        return cls(measure.grid, np.asarray(fn(measure.grid.nodes), float), measure)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.grid, values, self.measure)

    def __add__(self, other):
        return self.with_values(self.values + _vals(other))

    def __sub__(self, other):
        return self.with_values(self.values - _vals(other))

    def __mul__(self, other):
        return self.with_values(self.values * _vals(other))

    __rmul__ = __mul__

    def interpolate(self, y):
        """Piecewise-linear evaluation at arbitrary points (constant beyond
        the first/last node)."""
        j, t = self.grid.locate(y)
        return (1 - t) * self.values[j] + t * self.values[j + 1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("node,value\n")
        for x, v in zip(self.grid.nodes, self.values):
            buf.write(f"{x!r},{v!r}\n")
        return buf.getvalue()


def _vals(x):
    return x.values if isinstance(x, GridFunction) else x


def _check_compatible(f: GridFunction, g: GridFunction):
    if not f.grid.same_as(g.grid) or f.measure is not g.measure:
        if not f.grid.same_as(g.grid) or not np.array_equal(
            f.measure.masses, g.measure.masses
        ):
            raise IncompatibleGridsError("grid functions are not compatible")


def integrate(f: GridFunction) -> float:
    """Quadrature approximation of the integral of f against its measure."""
    return float(f.values @ f.measure.masses)


def lp_norm(f: GridFunction, p) -> float:
    """L^p(nu) norm for p in {1, 2, inf}."""
    if p == np.inf or p == "inf":
        return float(np.max(np.abs(f.values)))
    if p == 1:
        return float(np.abs(f.values) @ f.measure.masses)
    if p == 2:
        return float(np.sqrt((f.values**2) @ f.measure.masses))
    raise InvalidInputError(f"unsupported exponent {p!r}")


def inner_product(f: GridFunction, g: GridFunction) -> float:
    """Quadrature of f*g against the shared measure."""
    _check_compatible(f, g)
    return float((f.values * g.values) @ f.measure.masses)
