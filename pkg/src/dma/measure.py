"""Source measures, their mesh discretizations, and measure diagnostics.

A source measure is an absolutely continuous part (named analytic
density from a small catalog) plus a finite list of point masses.  The
discretization places density values at interior mesh points and each
point mass at the nearest interior lattice point scaled by 1/h^2, so
the normalized counting measure h^2 * sum f(x) converges weakly to the
source as the mesh is refined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .gridops import ma_grid
from .lattice import LatticeDomain, LatticeError, MeshFunction, Rect, StencilPolicy
from .operators import OperatorKind

__all__ = [
    "MeasureError",
    "Density",
    "SourceMeasure",
    "DiscretizedSource",
    "BorelBox",
    "discretize_measure",
    "dirac_mass_targets",
    "counting_measure",
    "ma_measure_of_set",
    "weak_convergence_report",
    "WeakConvergenceRow",
]


class MeasureError(ValueError):
    pass


@dataclass(frozen=True)
class Density:
    """Analytic density from the catalog.

    * ``constant``: value c everywhere.
    * ``radial_power``: (p-1) r^(2p-4) around x0, the density whose
      convex potential is r^p / p (p > 1).
    * ``zero``: no absolutely continuous part.
    """

    name: str
    c: float = 1.0
    p: float = 2.0
    x0: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.name not in ("constant", "radial_power", "zero"):
            raise MeasureError(f"unknown density {self.name!r}")
        if self.name == "radial_power" and self.p <= 1.0:
            raise MeasureError("radial_power density needs p > 1")

    def __call__(self, x: float, y: float) -> float:
        if self.name == "constant":
            return self.c
        if self.name == "zero":
            return 0.0
        r = math.hypot(x - self.x0[0], y - self.x0[1])
        if r == 0.0:
            return 0.0 if self.p >= 2.0 else math.inf
        return (self.p - 1.0) * r ** (2.0 * self.p - 4.0)


@dataclass(frozen=True)
class SourceMeasure:
    """Finite Borel measure: catalog density plus point masses."""

    density: Density | None = None
    diracs: tuple[tuple[tuple[float, float], float], ...] = ()

    def __post_init__(self):
        for (_, mass) in self.diracs:
            if mass <= 0:
                raise MeasureError("point masses must be positive")

    def dirac_total(self) -> float:
        return sum(m for _, m in self.diracs)


@dataclass(frozen=True)
class BorelBox:
    """Closed axis-aligned rectangle [x0, x1] x [y0, y1]."""

    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise MeasureError("box must have positive extent")

    def contains(self, x: float, y: float, tol: float = 0.0) -> bool:
        return (self.x0 - tol <= x <= self.x1 + tol) and (self.y0 - tol <= y <= self.y1 + tol)

    def strictly_contains(self, x: float, y: float, tol: float = 0.0) -> bool:
        return (self.x0 + tol < x < self.x1 - tol) and (self.y0 + tol < y < self.y1 - tol)

    def on_edge(self, x: float, y: float, tol: float) -> bool:
        return self.contains(x, y, tol) and not self.strictly_contains(x, y, tol)

    def label(self) -> str:
        return f"{self.x0:.17g}:{self.x1:.17g}:{self.y0:.17g}:{self.y1:.17g}"


@dataclass(eq=False)
class DiscretizedSource:
    """Mesh data f with nonnegative values on interior points.

    ``total`` is the normalized counting total h^2 * sum f(x).
    """

    f: MeshFunction
    total: float
    warnings: tuple[str, ...] = ()

    @property
    def domain(self) -> LatticeDomain:
        return self.f.domain


def _interior_grid_values(d: LatticeDomain, values: np.ndarray) -> MeshFunction:
    grid = np.full(d.grid_shape, np.nan)
    grid[d.closure_mask] = 0.0
    grid[d.interior_mask] = values[d.interior_mask]
    return MeshFunction(d, grid)


def discretize_measure(nu: SourceMeasure, d: LatticeDomain) -> DiscretizedSource:
    """Mesh data converging weakly to the source measure.

    Density values are sampled at interior points; each point mass m at
    x0 adds m / h^2 at the interior lattice point nearest to x0 (ties
    broken lexicographically).  Masses outside the open domain are an
    error; a snap farther than 2 h is recorded as a warning.
    """
    vals = np.zeros(d.grid_shape)
    if nu.density is not None:
        for m in d.sorted_interior:
            x, y = d.point(m)
            vals[d.grid_index(m)] += nu.density(x, y)
    warnings = []
    tol = 1e-12 * d.shape.diameter()
    h2 = d.h * d.h
    for (loc, mass) in nu.diracs:
        if d.shape.signed_distance(loc[0], loc[1]) >= -tol:
            raise MeasureError(f"point mass at {loc!r} lies outside the open domain")
        best = min(
            d.sorted_interior,
            key=lambda m: ((m[0] * d.h - loc[0]) ** 2 + (m[1] * d.h - loc[1]) ** 2, m),
        )
        dist = math.hypot(best[0] * d.h - loc[0], best[1] * d.h - loc[1])
        if dist > 2.0 * d.h:
            warnings.append(
                f"point mass at {loc!r} snapped to {d.point(best)!r}, distance {dist:.3g} > 2h"
            )
        vals[d.grid_index(best)] += mass / h2
    if np.any(vals < 0):
        raise MeasureError("discretized source has negative values")
    f = _interior_grid_values(d, vals)
    total = h2 * float(vals[d.interior_mask].sum())
    return DiscretizedSource(f=f, total=total, warnings=tuple(warnings))


def dirac_mass_targets(nu: SourceMeasure, d: LatticeDomain) -> tuple[list, DiscretizedSource]:
    """Snapped mass locations and raw-mass data for the mixed scheme.

    Unlike ``discretize_measure`` the values carry the masses themselves
    (no 1/h^2 scaling): the mixed scheme equates the polar-quadrature
    operator directly with the local mass.
    """
    if nu.density is not None and nu.density.name != "zero":
        raise MeasureError("the mixed scheme takes point masses only")
    vals = np.zeros(d.grid_shape)
    points = []
    tol = 1e-12 * d.shape.diameter()
    for (loc, mass) in nu.diracs:
        if d.shape.signed_distance(loc[0], loc[1]) >= -tol:
            raise MeasureError(f"point mass at {loc!r} lies outside the open domain")
        best = min(
            d.sorted_interior,
            key=lambda m: ((m[0] * d.h - loc[0]) ** 2 + (m[1] * d.h - loc[1]) ** 2, m),
        )
        vals[d.grid_index(best)] += mass
        if best not in points:
            points.append(best)
    f = _interior_grid_values(d, vals)
    total = d.h * d.h * float(vals[d.interior_mask].sum())
    return points, DiscretizedSource(f=f, total=total)


def counting_measure(f: DiscretizedSource, box: BorelBox) -> float:
    """h^2 times the sum of f over interior lattice points in the closed box."""
    d = f.domain
    tol = 1e-12 * d.shape.diameter()
    s = 0.0
    for m in d.sorted_interior:
        x, y = d.point(m)
        if box.contains(x, y, tol):
            s += f.f.value_at(m)
    return d.h * d.h * s


def ma_measure_of_set(
    v: MeshFunction,
    box: BorelBox,
    op: OperatorKind,
    policy: StencilPolicy,
) -> float:
    """Sum of per-point operator values over interior points in the box."""
    if op not in (OperatorKind.MA1, OperatorKind.MA2):
        raise MeasureError("set measures are defined for the MA1 and MA2 operators")
    d = v.domain
    grid = ma_grid(v, op, policy)
    tol = 1e-12 * d.shape.diameter()
    s = 0.0
    for m in d.sorted_interior:
        x, y = d.point(m)
        if box.contains(x, y, tol):
            s += grid[d.grid_index(m)]
    return float(s)


def analytic_measure_of_box(nu: SourceMeasure, d: LatticeDomain, box: BorelBox) -> float:
    """nu(B): adaptive quadrature of the density over B intersected with
    the domain, plus the masses strictly inside B.

    Point masses on the box edge violate the null-boundary requirement
    of weak convergence and are rejected.
    """
    tol = 1e-12 * d.shape.diameter()
    total = 0.0
    for (loc, mass) in nu.diracs:
        if box.on_edge(loc[0], loc[1], tol):
            raise MeasureError(
                f"box {box.label()} cuts the point mass at {loc!r}; "
                "weak convergence needs mass-free box boundaries"
            )
        if box.strictly_contains(loc[0], loc[1]):
            total += mass
    if nu.density is not None and nu.density.name != "zero":
        shape = d.shape
        if isinstance(shape, Rect):
            x0, x1 = max(box.x0, shape.x0), min(box.x1, shape.x1)
            y0, y1 = max(box.y0, shape.y0), min(box.y1, shape.y1)
            if x0 < x1 and y0 < y1:
                val, _ = integrate.dblquad(
                    lambda y, x: nu.density(x, y), x0, x1, y0, y1, epsabs=1e-8
                )
                total += val
        else:
            def integrand(y, x):
                return nu.density(x, y) if shape.signed_distance(x, y) <= 0 else 0.0

            val, _ = integrate.dblquad(
                integrand, box.x0, box.x1, box.y0, box.y1, epsabs=1e-8
            )
            total += val
    return total


@dataclass(frozen=True)
class WeakConvergenceRow:
    h: float
    box: BorelBox
    measured: float
    expected: float

    @property
    def gap(self) -> float:
        return abs(self.measured - self.expected)


def weak_convergence_report(
    v_per_h: list[tuple[float, MeshFunction]],
    nu: SourceMeasure,
    boxes: list[BorelBox],
    op: OperatorKind,
    policy: StencilPolicy,
) -> list[WeakConvergenceRow]:
    """Per-box comparison of the discrete measure against nu across a sweep."""
    rows = []
    for h, v in v_per_h:
        for box in boxes:
            measured = ma_measure_of_set(v, box, op, policy)
            expected = analytic_measure_of_box(nu, v.domain, box)
            rows.append(WeakConvergenceRow(h=h, box=box, measured=measured, expected=expected))
    return rows
