"""Lattice domains, mesh functions and stencil enumeration.

Mesh points are stored as integer multiplier pairs ``m`` with real
coordinates ``x = m * h``, so set membership and direction arithmetic
are exact; real coordinates are derived on demand.  A point of the
closed domain is *interior* when its four axis neighbours also lie in
the closed domain; every other closure lattice point is a boundary
point (this places some points strictly inside the domain into the
boundary set, where values are pinned to the convex boundary
extension).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

Multiplier = tuple[int, int]

#: closed-domain membership tolerance, scaled by the domain diameter
MEMBERSHIP_TOL_FACTOR = 1e-12

__all__ = [
    "LatticeError",
    "EmptyInteriorError",
    "InadmissibleDirectionError",
    "StencilPolicy",
    "Rect",
    "Disc",
    "ConvexPolygonShape",
    "LatticeDirection",
    "OrthogonalBasis",
    "LatticeDomain",
    "MeshFunction",
    "build_domain",
    "delta_e",
    "admissible_directions",
    "orthogonal_bases",
    "canonical_direction",
]


class LatticeError(ValueError):
    pass


class EmptyInteriorError(LatticeError):
    pass


class InadmissibleDirectionError(LatticeError):
    pass


# ---------------------------------------------------------------------------
# stencil policies


@dataclass(frozen=True)
class StencilPolicy:
    """Which admissible lattice directions operators enumerate.

    ``full`` enumerates every primitive direction admissible in the
    domain (one representative per antipodal pair) and is the default;
    ``radius(k)`` caps the direction components at ``k`` lattice steps
    as an explicit speed/accuracy knob; ``nine_point`` keeps only the
    axis and diagonal directions.
    """

    kind: str
    k: int = 0

    def __post_init__(self):
        if self.kind not in ("nine_point", "radius", "full"):
            raise LatticeError(f"unknown stencil policy kind: {self.kind!r}")
        if self.kind == "radius" and self.k < 1:
            raise LatticeError("radius policy needs k >= 1")

    @classmethod
    def nine_point(cls) -> "StencilPolicy":
        return cls("nine_point")

    @classmethod
    def radius(cls, k: int) -> "StencilPolicy":
        return cls("radius", k)

    @classmethod
    def full(cls) -> "StencilPolicy":
        return cls("full")

    @classmethod
    def parse(cls, text: str) -> "StencilPolicy":
        text = text.strip().lower()
        if text == "full":
            return cls.full()
        if text in ("nine_point", "ninepoint", "nine-point"):
            return cls.nine_point()
        if text.startswith("radius:"):
            return cls.radius(int(text.split(":", 1)[1]))
        raise LatticeError(f"cannot parse stencil policy: {text!r}")

    def label(self) -> str:
        return f"radius:{self.k}" if self.kind == "radius" else self.kind

    def cap(self) -> int | None:
        """Max absolute multiplier component, or None for no cap."""
        if self.kind == "nine_point":
            return 1
        if self.kind == "radius":
            return self.k
        return None


# ---------------------------------------------------------------------------
# domain shapes


@dataclass(frozen=True)
class Rect:
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise LatticeError("rectangle must have positive extent")

    def signed_distance(self, x: float, y: float) -> float:
        return max(self.x0 - x, x - self.x1, self.y0 - y, y - self.y1)

    def bounding_box(self) -> tuple[float, float, float, float]:
        return (self.x0, self.y0, self.x1, self.y1)

    def diameter(self) -> float:
        return math.hypot(self.x1 - self.x0, self.y1 - self.y0)

    def norm_bound(self) -> float:
        return max(
            math.hypot(x, y)
            for x in (self.x0, self.x1)
            for y in (self.y0, self.y1)
        )


@dataclass(frozen=True)
class Disc:
    cx: float
    cy: float
    r: float

    def __post_init__(self):
        if self.r <= 0:
            raise LatticeError("disc radius must be positive")

    def signed_distance(self, x: float, y: float) -> float:
        return math.hypot(x - self.cx, y - self.cy) - self.r

    def bounding_box(self) -> tuple[float, float, float, float]:
        return (self.cx - self.r, self.cy - self.r, self.cx + self.r, self.cy + self.r)

    def diameter(self) -> float:
        return 2.0 * self.r

    def norm_bound(self) -> float:
        return math.hypot(self.cx, self.cy) + self.r


@dataclass(frozen=True)
class ConvexPolygonShape:
    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.shape[0] < 3:
            raise LatticeError("polygon shape needs at least 3 vertices")
        d = np.roll(v, -1, axis=0) - v
        cross = d[:, 0] * np.roll(d[:, 1], -1) - d[:, 1] * np.roll(d[:, 0], -1)
        if np.all(cross <= 0):
            object.__setattr__(self, "vertices", tuple(map(tuple, v[::-1])))
            v = v[::-1]
            d = np.roll(v, -1, axis=0) - v
            cross = d[:, 0] * np.roll(d[:, 1], -1) - d[:, 1] * np.roll(d[:, 0], -1)
        if np.any(cross < -1e-12 * float(np.max(np.abs(v))) ** 2):
            raise LatticeError("polygon shape must be convex")

    def _edges(self):
        v = np.asarray(self.vertices, dtype=float)
        out = []
        for i in range(len(v)):
            a = v[i]
            b = v[(i + 1) % len(v)]
            d = b - a
            nrm = math.hypot(d[0], d[1])
            if nrm == 0:
                continue
            n = (d[1] / nrm, -d[0] / nrm)  # outward unit normal (counterclockwise)
            out.append((n, n[0] * a[0] + n[1] * a[1]))
        return out

    def signed_distance(self, x: float, y: float) -> float:
        return max(n[0] * x + n[1] * y - o for n, o in self._edges())

    def bounding_box(self) -> tuple[float, float, float, float]:
        v = np.asarray(self.vertices, dtype=float)
        return (float(v[:, 0].min()), float(v[:, 1].min()), float(v[:, 0].max()), float(v[:, 1].max()))

    def diameter(self) -> float:
        v = np.asarray(self.vertices, dtype=float)
        d2 = ((v[:, None, :] - v[None, :, :]) ** 2).sum(axis=2)
        return math.sqrt(float(d2.max()))

    def norm_bound(self) -> float:
        v = np.asarray(self.vertices, dtype=float)
        return float(np.max(np.hypot(v[:, 0], v[:, 1])))


# ---------------------------------------------------------------------------
# directions and bases


def canonical_direction(m: Multiplier) -> Multiplier:
    """Antipodal-class representative with angle in [0, pi)."""
    a, b = m
    if a == 0 and b == 0:
        raise LatticeError("zero vector has no direction")
    if b < 0 or (b == 0 and a < 0):
        return (-a, -b)
    return (a, b)


def _is_primitive(m: Multiplier) -> bool:
    return math.gcd(abs(m[0]), abs(m[1])) == 1


@dataclass(frozen=True)
class LatticeDirection:
    """A lattice vector e = m * h with its antipodal-class angle."""

    multiplier: Multiplier
    h: float

    @property
    def e(self) -> tuple[float, float]:
        return (self.multiplier[0] * self.h, self.multiplier[1] * self.h)

    @property
    def primitive(self) -> bool:
        return _is_primitive(self.multiplier)

    @property
    def angle(self) -> float:
        a = math.atan2(self.multiplier[1], self.multiplier[0])
        return a + 2.0 * math.pi if a < 0 else a

    @property
    def norm(self) -> float:
        return self.h * math.hypot(self.multiplier[0], self.multiplier[1])


@dataclass(frozen=True)
class OrthogonalBasis:
    """Pair of orthogonal lattice vectors (second is the 90-degree rotation)."""

    vectors: tuple[LatticeDirection, LatticeDirection]

    def __post_init__(self):
        (a1, b1), (a2, b2) = self.vectors[0].multiplier, self.vectors[1].multiplier
        if a1 * a2 + b1 * b2 != 0:
            raise LatticeError("basis vectors must be orthogonal")


NINE_POINT_CLASSES: tuple[Multiplier, ...] = ((1, 0), (1, 1), (0, 1), (-1, 1))


# ---------------------------------------------------------------------------
# domains


@dataclass(eq=False)
class LatticeDomain:
    """Lattice restriction of a closed convex domain.

    Immutable after construction; all derived tables are cached.
    """

    h: float
    dim: int
    shape: object
    interior: frozenset
    boundary: frozenset
    diameter_bound: float
    _caches: dict = field(default_factory=dict, repr=False)

    # -- point helpers ------------------------------------------------

    def point(self, m: Multiplier) -> tuple[float, float]:
        return (m[0] * self.h, m[1] * self.h)

    def multiplier(self, x) -> Multiplier:
        """Snap real coordinates (or an exact multiplier pair) to the lattice."""
        m0 = x[0] / self.h
        m1 = x[1] / self.h
        r0, r1 = round(m0), round(m1)
        if abs(m0 - r0) > 1e-9 or abs(m1 - r1) > 1e-9:
            raise LatticeError(f"{x!r} is not a lattice point for h={self.h}")
        return (int(r0), int(r1))

    def vector_multiplier(self, e) -> Multiplier:
        m = self.multiplier(e)
        if m == (0, 0):
            raise LatticeError("zero lattice vector")
        return m

    @cached_property
    def closure(self) -> frozenset:
        return self.interior | self.boundary

    @cached_property
    def sorted_interior(self) -> list[Multiplier]:
        return sorted(self.interior)

    @cached_property
    def sorted_boundary(self) -> list[Multiplier]:
        return sorted(self.boundary)

    @cached_property
    def sorted_closure(self) -> list[Multiplier]:
        return sorted(self.closure)

    @cached_property
    def open_points(self) -> list[Multiplier]:
        """Lattice points strictly inside the open domain (includes any
        boundary-set points that fail only the neighbour test)."""
        tol = MEMBERSHIP_TOL_FACTOR * self.shape.diameter()
        out = list(self.sorted_interior)
        for m in self.sorted_boundary:
            x, y = self.point(m)
            if self.shape.signed_distance(x, y) < -tol:
                out.append(m)
        return sorted(out)

    # -- grid views ---------------------------------------------------

    @cached_property
    def index_box(self) -> tuple[int, int, int, int]:
        pts = self.sorted_closure
        i = [m[0] for m in pts]
        j = [m[1] for m in pts]
        return (min(i), min(j), max(i), max(j))

    @property
    def grid_shape(self) -> tuple[int, int]:
        i0, j0, i1, j1 = self.index_box
        return (i1 - i0 + 1, j1 - j0 + 1)

    def grid_index(self, m: Multiplier) -> tuple[int, int]:
        i0, j0, _, _ = self.index_box
        return (m[0] - i0, m[1] - j0)

    @cached_property
    def closure_mask(self) -> np.ndarray:
        mask = np.zeros(self.grid_shape, dtype=bool)
        for m in self.closure:
            mask[self.grid_index(m)] = True
        return mask

    @cached_property
    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.grid_shape, dtype=bool)
        for m in self.interior:
            mask[self.grid_index(m)] = True
        return mask

    @cached_property
    def coordinate_grids(self) -> tuple[np.ndarray, np.ndarray]:
        i0, j0, i1, j1 = self.index_box
        xs = np.arange(i0, i1 + 1) * self.h
        ys = np.arange(j0, j1 + 1) * self.h
        return np.meshgrid(xs, ys, indexing="ij")

    # -- direction tables ----------------------------------------------

    def direction_classes(self, policy: StencilPolicy) -> list[Multiplier]:
        """Canonical primitive direction classes under the policy, sorted by angle.

        Admissibility at a specific point is a separate, per-point test.
        """
        key = ("classes", policy)
        if key not in self._caches:
            if policy.kind == "nine_point":
                classes = list(NINE_POINT_CLASSES)
            else:
                i0, j0, i1, j1 = self.index_box
                span_i, span_j = i1 - i0, j1 - j0
                cap = policy.cap()
                ka = span_i if cap is None else min(cap, span_i)
                kb = span_j if cap is None else min(cap, span_j)
                classes = []
                for b in range(0, kb + 1):
                    a_lo = 1 if b == 0 else -ka
                    for a in range(a_lo, ka + 1):
                        if (a, b) != (0, 0) and _is_primitive((a, b)):
                            classes.append((a, b))
            classes.sort(key=lambda m: math.atan2(m[1], m[0]))
            self._caches[key] = classes
        return self._caches[key]

    def admissible_at(self, m: Multiplier, d: Multiplier) -> bool:
        """Whether both m + d and m - d lie in the closed domain."""
        return ((m[0] + d[0], m[1] + d[1]) in self.closure
                and (m[0] - d[0], m[1] - d[1]) in self.closure)

    def max_multiple(self, m: Multiplier, d: Multiplier, policy: StencilPolicy) -> int:
        """Largest r with x +- r*d in the closed domain (and under the policy cap)."""
        cap = policy.cap()
        comp = max(abs(d[0]), abs(d[1]))
        r = 0
        while True:
            if cap is not None and (r + 1) * comp > cap:
                break
            if not self.admissible_at(m, ((r + 1) * d[0], (r + 1) * d[1])):
                break
            r += 1
        return r


def build_domain(shape, h: float, dim: int = 2) -> LatticeDomain:
    """Classify the lattice points of a closed convex domain.

    Closed-domain membership is decided with an absolute tolerance of
    1e-12 times the domain diameter, so points analytically on the
    boundary (e.g. square corners aligned with the lattice) are kept.
    """
    if h <= 0:
        raise LatticeError("mesh length h must be positive")
    if dim != 2:
        raise LatticeError("only dim = 2 is supported")
    tol = MEMBERSHIP_TOL_FACTOR * shape.diameter()
    x0, y0, x1, y1 = shape.bounding_box()
    i_lo = math.ceil((x0 - tol) / h)
    i_hi = math.floor((x1 + tol) / h)
    j_lo = math.ceil((y0 - tol) / h)
    j_hi = math.floor((y1 + tol) / h)

    closure = set()
    open_set = set()
    for i in range(i_lo, i_hi + 1):
        for j in range(j_lo, j_hi + 1):
            sd = shape.signed_distance(i * h, j * h)
            if sd <= tol:
                closure.add((i, j))
                if sd < -tol:
                    open_set.add((i, j))

    interior = set()
    for (i, j) in open_set:
        if ((i + 1, j) in closure and (i - 1, j) in closure
                and (i, j + 1) in closure and (i, j - 1) in closure):
            interior.add((i, j))
    boundary = closure - interior
    if not interior:
        raise EmptyInteriorError(
            f"no interior lattice points for h={h}; refine the mesh"
        )
    norm_bound = shape.norm_bound()
    lattice_norm = max(math.hypot(i * h, j * h) for (i, j) in closure)
    return LatticeDomain(
        h=h,
        dim=dim,
        shape=shape,
        interior=frozenset(interior),
        boundary=frozenset(boundary),
        diameter_bound=max(norm_bound, lattice_norm),
    )


# ---------------------------------------------------------------------------
# mesh functions


@dataclass(eq=False)
class MeshFunction:
    """Real values on the closure lattice points of a domain.

    Backed by a dense grid over the multiplier bounding box with NaN
    off the domain.  Treated as immutable; operations return copies.
    """

    domain: LatticeDomain
    grid: np.ndarray

    @classmethod
    def from_callable(cls, domain: LatticeDomain, fn) -> "MeshFunction":
        grid = np.full(domain.grid_shape, np.nan)
        for m in domain.closure:
            grid[domain.grid_index(m)] = fn(domain.point(m))
        return cls(domain, grid)

    @classmethod
    def from_dict(cls, domain: LatticeDomain, values: dict) -> "MeshFunction":
        missing = domain.closure - set(values)
        if missing:
            raise LatticeError(f"values missing for {len(missing)} mesh points")
        grid = np.full(domain.grid_shape, np.nan)
        for m in domain.closure:
            grid[domain.grid_index(m)] = values[m]
        return cls(domain, grid)

    @classmethod
    def zeros(cls, domain: LatticeDomain) -> "MeshFunction":
        grid = np.full(domain.grid_shape, np.nan)
        for m in domain.closure:
            grid[domain.grid_index(m)] = 0.0
        return cls(domain, grid)

    def value_at(self, m: Multiplier) -> float:
        v = self.grid[self.domain.grid_index(m)]
        if np.isnan(v):
            raise LatticeError(f"{m} is not a mesh point")
        return float(v)

    def value(self, x) -> float:
        return self.value_at(self.domain.multiplier(x))

    def with_grid(self, grid: np.ndarray) -> "MeshFunction":
        return MeshFunction(self.domain, grid)

    def copy(self) -> "MeshFunction":
        return MeshFunction(self.domain, self.grid.copy())

    def as_dict(self) -> dict:
        return {m: self.value_at(m) for m in self.domain.sorted_closure}

    def sup_diff(self, other: "MeshFunction") -> float:
        mask = self.domain.closure_mask
        return float(np.max(np.abs(self.grid[mask] - other.grid[mask])))

    def max_abs(self, points=None) -> float:
        if points is None:
            mask = self.domain.closure_mask
            return float(np.max(np.abs(self.grid[mask])))
        return max(abs(self.value_at(m)) for m in points)


# ---------------------------------------------------------------------------
# operations


def delta_e(v: MeshFunction, x, e) -> float:
    """Second difference v(x+e) - 2 v(x) + v(x-e)."""
    dom = v.domain
    m = dom.multiplier(x)
    d = dom.vector_multiplier(e)
    plus = (m[0] + d[0], m[1] + d[1])
    minus = (m[0] - d[0], m[1] - d[1])
    if plus not in dom.closure or minus not in dom.closure:
        raise InadmissibleDirectionError(
            f"direction {e!r} is inadmissible at {x!r}: x +- e leaves the closed domain"
        )
    return v.value_at(plus) - 2.0 * v.value_at(m) + v.value_at(minus)


def admissible_directions(d: LatticeDomain, x, policy: StencilPolicy) -> list[LatticeDirection]:
    """Primitive admissible directions at x, one per antipodal pair.

    Representatives carry angles in [0, pi); the list is sorted by
    angle.  Axis directions are always admissible for interior x, so
    the list is never empty there.
    """
    m = d.multiplier(x)
    out = []
    for cls in d.direction_classes(policy):
        if d.admissible_at(m, cls):
            out.append(LatticeDirection(cls, d.h))
    return out


def orthogonal_bases(d: LatticeDomain, x, policy: StencilPolicy) -> list[OrthogonalBasis]:
    """Orthogonal bases (e, rot90(e)) with both vectors admissible at x.

    De-duplicated up to sign and order by restricting the first vector
    to angles in [0, pi/2).
    """
    m = d.multiplier(x)
    out = []
    for cls in d.direction_classes(policy):
        a, b = cls
        if not (a > 0 and b >= 0):  # angle in [0, pi/2)
            continue
        perp = (-b, a)
        if d.admissible_at(m, cls) and d.admissible_at(m, perp):
            out.append(OrthogonalBasis((LatticeDirection(cls, d.h), LatticeDirection(perp, d.h))))
    return out
