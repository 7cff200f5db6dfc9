"""Discrete Monge-Ampere operators on mesh functions.

Four operators are provided, all reference (per-point) implementations:

* ``ma0`` -- infimum over enumerated orthogonal bases of the normalized
  product of second differences.
* ``ma1`` -- exact area of the gradient polygon cut by one slab per
  basis vector, over every enumerated orthogonal basis.
* ``ma2`` -- exact area of the gradient polygon cut by one slab per
  admissible direction; along each primitive direction the slab is
  tightened over all admissible integer multiples, which reduces to the
  primitive slab whenever the function is discrete convex along that
  line and matches the all-multiples definition otherwise.
* ``ma3`` -- polar-coordinate quadrature approximation of ``ma2`` from
  radial upper/lower envelopes, with each term clamped at zero.

None of these is a consistent discretization of det D^2 u for smooth u;
they are measure-theoretic objects whose totals over Borel sets converge
weakly under mesh refinement.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .geometry import (
    ConvexPolygon,
    SlabConstraint,
    area,
    box_polygon,
    intersect_constraints,
)
from .lattice import (
    LatticeDomain,
    LatticeError,
    MeshFunction,
    Multiplier,
    StencilPolicy,
    admissible_directions,
    orthogonal_bases,
)

#: directions at angles this close to perpendicular are non-binding
COS_CUTOFF = 1e-12

__all__ = [
    "OperatorKind",
    "PolarProfile",
    "lambda1",
    "is_discrete_convex",
    "ma0",
    "ma1",
    "ma2",
    "ma3",
    "nine_point_product",
    "polar_profile",
    "r_bounds",
    "discrete_legendre",
    "subdifferential",
]


class OperatorKind(enum.Enum):
    MA0 = "ma0"
    MA1 = "ma1"
    MA2 = "ma2"
    MA3 = "ma3"
    NINE_POINT_PRODUCT = "nine_point_product"

    @classmethod
    def parse(cls, text: str) -> "OperatorKind":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise LatticeError(f"unknown operator kind: {text!r}") from None


# ---------------------------------------------------------------------------
# pointwise building blocks


def _tight_slab(v: MeshFunction, m: Multiplier, cls: Multiplier, r_max: int) -> tuple[float, float]:
    """Slab bounds on p.e for e = cls*h, tightened over multiples r <= r_max."""
    dom = v.domain
    v0 = v.value_at(m)
    lower = -math.inf
    upper = math.inf
    for r in range(1, r_max + 1):
        plus = v.value_at((m[0] + r * cls[0], m[1] + r * cls[1]))
        minus = v.value_at((m[0] - r * cls[0], m[1] - r * cls[1]))
        lower = max(lower, (v0 - minus) / r)
        upper = min(upper, (plus - v0) / r)
    return lower, upper


def _seed_box_from_axis(l1: float, u1: float, l2: float, u2: float) -> ConvexPolygon:
    # Inflate the axis box by factor 2 plus an absolute pad so degenerate
    # (zero-width) boxes still give the clipping a nonempty seed whose
    # edges stay clear of the feasible set.
    cx, cy = (l1 + u1) / 2.0, (l2 + u2) / 2.0
    hx, hy = (u1 - l1) / 2.0, (u2 - l2) / 2.0
    scale = max(1.0, abs(cx) + hx, abs(cy) + hy)
    pad = 1e-6 * scale
    return box_polygon(cx - 2 * hx - pad, cx + 2 * hx + pad, cy - 2 * hy - pad, cy + 2 * hy + pad)


def _constraints_to_polygon(constraints: list[SlabConstraint], h: float) -> ConvexPolygon:
    ax = [c for c in constraints if c.e[1] == 0.0]
    ay = [c for c in constraints if c.e[0] == 0.0]
    if not ax or not ay:
        raise LatticeError("axis slabs are required to bound the gradient polygon")
    l1 = max(c.lower / c.e[0] for c in ax)
    u1 = min(c.upper / c.e[0] for c in ax)
    l2 = max(c.lower / c.e[1] for c in ay)
    u2 = min(c.upper / c.e[1] for c in ay)
    if l1 > u1 or l2 > u2:
        return ConvexPolygon()
    seed = _seed_box_from_axis(l1, u1, l2, u2)
    return intersect_constraints(constraints, seed)


def subdifferential(v: MeshFunction, x, policy: StencilPolicy, kind: OperatorKind = OperatorKind.MA2) -> ConvexPolygon:
    """Gradient polygon at x for the MA1 (basis-family) or MA2 (all-direction) operator."""
    dom = v.domain
    m = dom.multiplier(x)
    if m not in dom.interior:
        raise LatticeError(f"{x!r} is not an interior mesh point")
    constraints: list[SlabConstraint] = []
    if kind is OperatorKind.MA1:
        seen = set()
        for basis in orthogonal_bases(dom, x, policy):
            for vec in basis.vectors:
                if vec.multiplier in seen:
                    continue
                seen.add(vec.multiplier)
                lo, up = _tight_slab(v, m, vec.multiplier, 1)
                constraints.append(SlabConstraint(vec.e, lo, up))
    elif kind is OperatorKind.MA2:
        for cls in dom.direction_classes(policy):
            r_max = dom.max_multiple(m, cls, policy)
            if r_max == 0:
                continue
            lo, up = _tight_slab(v, m, cls, r_max)
            constraints.append(SlabConstraint((cls[0] * dom.h, cls[1] * dom.h), lo, up))
    else:
        raise LatticeError("subdifferential polygons exist for MA1 and MA2 only")
    return _constraints_to_polygon(constraints, dom.h)


# ---------------------------------------------------------------------------
# operators


def lambda1(v: MeshFunction, x, policy: StencilPolicy) -> float:
    """Minimum of the normalized second difference over admissible directions."""
    from .lattice import delta_e

    best = math.inf
    for d in admissible_directions(v.domain, x, policy):
        best = min(best, delta_e(v, x, d.e) / (d.norm ** 2))
    return best


def is_discrete_convex(v: MeshFunction, policy: StencilPolicy, tol: float = 0.0) -> bool:
    """All second differences >= -tol at every interior point."""
    dom = v.domain
    for m in dom.sorted_interior:
        v0 = v.value_at(m)
        for cls in dom.direction_classes(policy):
            if not dom.admissible_at(m, cls):
                continue
            plus = v.value_at((m[0] + cls[0], m[1] + cls[1]))
            minus = v.value_at((m[0] - cls[0], m[1] - cls[1]))
            if plus - 2.0 * v0 + minus < -tol:
                return False
    return True


def ma0(v: MeshFunction, x, policy: StencilPolicy) -> float:
    """Infimum over enumerated orthogonal bases of prod Delta_e / ||e||.

    Negative values signal non-convexity at x and are returned as-is;
    the solver clamps them inside the residual only.
    """
    from .lattice import delta_e

    best = math.inf
    for basis in orthogonal_bases(v.domain, x, policy):
        prod = 1.0
        for vec in basis.vectors:
            prod *= delta_e(v, x, vec.e) / vec.norm
        best = min(best, prod)
    if best is math.inf:
        raise LatticeError(f"no orthogonal basis admissible at {x!r}")
    return best


def ma1(v: MeshFunction, x, policy: StencilPolicy) -> float:
    """Area of the gradient polygon from slabs of every enumerated basis."""
    return area(subdifferential(v, x, policy, OperatorKind.MA1))


def ma2(v: MeshFunction, x, policy: StencilPolicy) -> float:
    """Area of the gradient polygon from one slab per admissible direction."""
    return area(subdifferential(v, x, policy, OperatorKind.MA2))


def nine_point_product(v: MeshFunction, x) -> float:
    """Product of axis second differences over h (9-point closed form).

    This equals the area of the decoupled bound box of the 9-point
    constraint system; diagonal slabs can cut that box, so it is an
    upper bound for ``ma1`` on the same stencil, exposed as a
    diagnostic rather than as the measure itself.
    """
    dom = v.domain
    m = dom.multiplier(x)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if (m[0] + di, m[1] + dj) not in dom.closure:
                raise LatticeError(f"9-point stencil incomplete at {x!r}")
    v0 = v.value_at(m)
    d1 = v.value_at((m[0] + 1, m[1])) - 2.0 * v0 + v.value_at((m[0] - 1, m[1]))
    d2 = v.value_at((m[0], m[1] + 1)) - 2.0 * v0 + v.value_at((m[0], m[1] - 1))
    return (d1 / dom.h) * (d2 / dom.h)


# ---------------------------------------------------------------------------
# polar form


@dataclass(frozen=True)
class PolarProfile:
    """Directional data for the polar-quadrature operator at one point.

    ``directions`` lists (angle, e, forward difference, backward
    difference) per antipodal class; ``angles`` is the sorted union of
    the class angles and their antipodes over [0, 2 pi).
    """

    directions: tuple
    angles: np.ndarray
    _norms: np.ndarray
    _dir_angles: np.ndarray
    _fwd: np.ndarray
    _bwd: np.ndarray


def polar_profile(v: MeshFunction, x, policy: StencilPolicy) -> PolarProfile:
    dom = v.domain
    m = dom.multiplier(x)
    if m not in dom.interior:
        raise LatticeError(f"{x!r} is not an interior mesh point")
    v0 = v.value_at(m)
    entries = []
    for d in admissible_directions(dom, x, policy):
        a, b = d.multiplier
        fwd = v.value_at((m[0] + a, m[1] + b)) - v0
        bwd = v0 - v.value_at((m[0] - a, m[1] - b))
        entries.append((d.angle, d.e, fwd, bwd, d.norm))
    entries.sort(key=lambda t: t[0])
    dir_angles = np.array([t[0] for t in entries])
    angles = np.sort(np.concatenate([dir_angles, dir_angles + math.pi]))
    return PolarProfile(
        directions=tuple((t[0], t[1], t[2], t[3]) for t in entries),
        angles=angles,
        _norms=np.array([t[4] for t in entries]),
        _dir_angles=dir_angles,
        _fwd=np.array([t[2] for t in entries]),
        _bwd=np.array([t[3] for t in entries]),
    )


def _r_bounds_many(profile: PolarProfile, thetas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Radial envelopes at many angles; antipodal signs are both considered."""
    ang = np.concatenate([profile._dir_angles, profile._dir_angles + math.pi])
    norms = np.concatenate([profile._norms, profile._norms])
    fwd = np.concatenate([profile._fwd, -profile._bwd])
    bwd = np.concatenate([profile._bwd, -profile._fwd])
    cosv = np.cos(thetas[:, None] - ang[None, :])
    denom = norms[None, :] * cosv
    ok = cosv > COS_CUTOFF
    rp = np.where(ok, fwd[None, :] / np.where(ok, denom, 1.0), np.inf)
    rm = np.where(ok, bwd[None, :] / np.where(ok, denom, 1.0), -np.inf)
    return rm.max(axis=1), rp.min(axis=1)


def r_bounds(profile: PolarProfile, theta: float) -> tuple[float, float]:
    """(r_minus, r_plus) radial bounds at angle theta.

    Directions whose angle is within machine tolerance of perpendicular
    to theta are non-binding; with no qualifying direction the sentinels
    (-inf, +inf) are returned.
    """
    rm, rp = _r_bounds_many(profile, np.array([theta], dtype=float))
    return float(rm[0]), float(rp[0])


def ma3(v: MeshFunction, x, policy: StencilPolicy, angle_refinement: int = 1) -> float:
    """Left-endpoint polar quadrature of the radial envelopes.

    The angle list is the sorted union of direction angles and their
    antipodes; each interval may be refined into ``angle_refinement``
    equal parts.  The wrap-around interval back to the first angle plus
    2 pi is included so constant-radius profiles integrate to the full
    disc area; each term is clamped at zero.  Both envelopes are clamped
    at zero before squaring: the term measures the radial slice
    [max(R-,0), max(R+,0)], so polygons that miss the ray (R+ < 0)
    contribute nothing.
    """
    if angle_refinement < 1:
        raise LatticeError("angle_refinement must be >= 1")
    profile = polar_profile(v, x, policy)
    base = profile.angles
    n = base.size
    if n == 0:
        return 0.0
    widths = np.empty(n)
    widths[:-1] = np.diff(base)
    widths[-1] = base[0] + 2.0 * math.pi - base[-1]
    sub = np.arange(angle_refinement) / angle_refinement
    thetas = (base[:, None] + widths[:, None] * sub[None, :]).ravel()
    w = np.repeat(widths / angle_refinement, angle_refinement)
    rm, rp = _r_bounds_many(profile, thetas)
    rm0 = np.maximum(rm, 0.0)
    rp0 = np.maximum(rp, 0.0)
    integrand = np.maximum(rp0 * rp0 - rm0 * rm0, 0.0)
    finite = np.isfinite(integrand)
    return float(0.5 * np.sum(w[finite] * integrand[finite]))


class PolarQuadrature:
    """Reusable polar quadrature at a fixed point.

    The direction set, evaluation angles and trigonometric tables depend
    only on the domain, the policy and the refinement, so a fixed-point
    solver can precompute them once and re-evaluate cheaply per iterate.
    Values agree with ``ma3`` on the same arguments.
    """

    def __init__(self, d: LatticeDomain, x, policy: StencilPolicy, angle_refinement: int = 1):
        if angle_refinement < 1:
            raise LatticeError("angle_refinement must be >= 1")
        m = d.multiplier(x)
        if m not in d.interior:
            raise LatticeError(f"{x!r} is not an interior mesh point")
        dirs = admissible_directions(d, x, policy)
        dirs.sort(key=lambda t: t.angle)
        self._center = d.grid_index(m)
        self._plus = [d.grid_index((m[0] + a, m[1] + b)) for (a, b) in (t.multiplier for t in dirs)]
        self._minus = [d.grid_index((m[0] - a, m[1] - b)) for (a, b) in (t.multiplier for t in dirs)]
        ang = np.array([t.angle for t in dirs])
        norms = np.array([t.norm for t in dirs])
        base = np.sort(np.concatenate([ang, ang + math.pi]))
        n = base.size
        widths = np.empty(n)
        widths[:-1] = np.diff(base)
        widths[-1] = base[0] + 2.0 * math.pi - base[-1]
        sub = np.arange(angle_refinement) / angle_refinement
        thetas = (base[:, None] + widths[:, None] * sub[None, :]).ravel()
        self._w = np.repeat(widths / angle_refinement, angle_refinement)
        ang2 = np.concatenate([ang, ang + math.pi])
        cosv = np.cos(thetas[:, None] - ang2[None, :])
        denom = np.concatenate([norms, norms])[None, :] * cosv
        self._ok = cosv > COS_CUTOFF
        self._inv = np.where(self._ok, 1.0 / np.where(self._ok, denom, 1.0), 0.0)

    def value(self, grid: np.ndarray) -> float:
        v0 = grid[self._center]
        fwd = np.array([grid[idx] for idx in self._plus]) - v0
        bwd = v0 - np.array([grid[idx] for idx in self._minus])
        f2 = np.concatenate([fwd, -bwd])
        b2 = np.concatenate([bwd, -fwd])
        rp = np.where(self._ok, f2[None, :] * self._inv, np.inf).min(axis=1)
        rm = np.where(self._ok, b2[None, :] * self._inv, -np.inf).max(axis=1)
        rp0 = np.maximum(rp, 0.0)
        rm0 = np.maximum(rm, 0.0)
        integrand = np.maximum(rp0 * rp0 - rm0 * rm0, 0.0)
        finite = np.isfinite(integrand)
        return float(0.5 * np.sum(self._w[finite] * integrand[finite]))


# ---------------------------------------------------------------------------
# Legendre transform


def discrete_legendre(v: MeshFunction, p) -> float:
    """sup over open-domain mesh points of x.p - v(x)."""
    dom = v.domain
    best = -math.inf
    p0, p1 = float(p[0]), float(p[1])
    for m in dom.open_points:
        x, y = dom.point(m)
        best = max(best, x * p0 + y * p1 - v.value_at(m))
    return best
