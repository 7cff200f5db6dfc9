"""Exact 2D convex geometry for gradient-space polygons.

Subdifferentials of mesh functions are intersections of slabs
``{p : lower <= p . e <= upper}``.  This module clips such constraint
systems against a bounded seed polygon, measures areas exactly
(shoelace), and provides an independent brute-force rasterization
oracle used to cross-check the clipping path.

All tolerances are absolute and scaled by the seed-box diameter
(default factor 1e-12), because constraint data spans many orders of
magnitude as the mesh is refined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TOL_FACTOR = 1e-12

__all__ = [
    "HalfPlane",
    "SlabConstraint",
    "ConvexPolygon",
    "GeometryError",
    "SeedBoxActiveError",
    "clip",
    "intersect_constraints",
    "area",
    "polygon_intersect",
    "rasterize_area_oracle",
    "box_polygon",
]


class GeometryError(ValueError):
    pass


class SeedBoxActiveError(GeometryError):
    """A seed-box edge survived clipping although axis slabs were present.

    The bounding heuristic failed to enclose the feasible set; callers
    treat this as a defect, not a recoverable condition.
    """


@dataclass(frozen=True)
class HalfPlane:
    """Closed half-plane ``{p : normal . p <= offset}`` (normal need not be unit)."""

    normal: tuple[float, float]
    offset: float

    def __post_init__(self):
        if self.normal[0] == 0.0 and self.normal[1] == 0.0:
            raise GeometryError("half-plane normal must be nonzero")


@dataclass(frozen=True)
class SlabConstraint:
    """Slab ``{p : lower <= p . e <= upper}`` for a lattice vector e."""

    e: tuple[float, float]
    lower: float
    upper: float

    def half_planes(self) -> tuple[HalfPlane, HalfPlane]:
        e1, e2 = self.e
        return (
            HalfPlane((e1, e2), self.upper),
            HalfPlane((-e1, -e2), -self.lower),
        )

    @property
    def is_axis(self) -> bool:
        return self.e[0] == 0.0 or self.e[1] == 0.0


class ConvexPolygon:
    """Convex polygon given by counterclockwise vertices.

    Empty polygons, single points and segments are first-class values:
    affine mesh functions produce point subdifferentials, so degeneracy
    is not an error.
    """

    __slots__ = ("vertices",)

    def __init__(self, vertices=()):
        arr = np.asarray(vertices, dtype=float)
        if arr.size == 0:
            arr = np.empty((0, 2))
        arr = arr.reshape(-1, 2)
        self.vertices = arr

    def __len__(self) -> int:
        return self.vertices.shape[0]

    def __repr__(self) -> str:
        return f"ConvexPolygon({self.vertices.tolist()!r})"

    @property
    def is_empty(self) -> bool:
        return len(self) == 0

    @property
    def area(self) -> float:
        return area(self)

    def scale_hint(self) -> float:
        """Coordinate magnitude used to derive absolute tolerances."""
        if self.is_empty:
            return 1.0
        return max(1.0, float(np.max(np.abs(self.vertices))))

    def convexity_defect(self) -> float:
        """Most negative consecutive-edge cross product (0 for len < 3)."""
        v = self.vertices
        if len(self) < 3:
            return 0.0
        d = np.roll(v, -1, axis=0) - v
        cross = d[:, 0] * np.roll(d[:, 1], -1) - d[:, 1] * np.roll(d[:, 0], -1)
        return float(min(cross.min(), 0.0))


def box_polygon(x0: float, x1: float, y0: float, y1: float) -> ConvexPolygon:
    """Axis-aligned box as a counterclockwise polygon."""
    return ConvexPolygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])


def _dedupe(points: np.ndarray, tol: float) -> np.ndarray:
    k = points.shape[0]
    if k == 0:
        return points
    prev = np.empty_like(points)
    prev[0] = points[-1]
    prev[1:] = points[:-1]
    keep = np.max(np.abs(points - prev), axis=1) > tol
    keep[0] = True
    out = points[keep]
    while out.shape[0] > 1 and np.max(np.abs(out[0] - out[-1])) <= tol:
        out = out[:-1]
    return out


def _clip_vertices(verts: np.ndarray, n0: float, n1: float, offset: float, tol: float) -> np.ndarray | None:
    """Vertex-array core of ``clip``; None means unchanged."""
    d = verts[:, 0] * n0 + verts[:, 1] * n1 - offset
    inside = d <= tol
    if inside.all():
        return None
    if not inside.any():
        return np.empty((0, 2))
    k = verts.shape[0]
    d_next = np.empty_like(d)
    d_next[:-1] = d[1:]
    d_next[-1] = d[0]
    inside_next = np.empty_like(inside)
    inside_next[:-1] = inside[1:]
    inside_next[-1] = inside[0]
    crossing = inside != inside_next
    t = np.zeros(k)
    t[crossing] = d[crossing] / (d[crossing] - d_next[crossing])
    nxt = np.empty_like(verts)
    nxt[:-1] = verts[1:]
    nxt[-1] = verts[0]
    inter = verts + t[:, None] * (nxt - verts)
    # slots 2i hold kept vertices, slots 2i+1 hold edge crossings, so the
    # traversal order of the boundary is preserved
    out = np.empty((2 * k, 2))
    valid = np.zeros(2 * k, dtype=bool)
    out[0::2] = verts
    valid[0::2] = inside
    out[1::2] = inter
    valid[1::2] = crossing
    return _dedupe(out[valid], tol)


def clip(poly: ConvexPolygon, hp: HalfPlane, tol: float = 0.0) -> ConvexPolygon:
    """Intersect a convex polygon (possibly degenerate) with a half-plane."""
    if len(poly) == 0:
        return poly
    out = _clip_vertices(poly.vertices, hp.normal[0], hp.normal[1], hp.offset, tol)
    if out is None:
        return poly
    return ConvexPolygon(out)


def area(poly: ConvexPolygon) -> float:
    """Shoelace area; 0 for empty, point or segment polygons."""
    if len(poly) < 3:
        return 0.0
    v = poly.vertices
    x, y = v[:, 0], v[:, 1]
    s = np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))
    return abs(float(s)) / 2.0


def _edge_half_planes(poly: ConvexPolygon) -> list[HalfPlane]:
    """Half-plane description of a (possibly degenerate) convex polygon."""
    v = poly.vertices
    k = len(poly)
    if k == 0:
        raise GeometryError("empty polygon has no half-plane description")
    if k == 1:
        x, y = v[0]
        return [
            HalfPlane((1.0, 0.0), x),
            HalfPlane((-1.0, 0.0), -x),
            HalfPlane((0.0, 1.0), y),
            HalfPlane((0.0, -1.0), -y),
        ]
    if k == 2:
        a, b = v
        d = b - a
        n = np.array([d[1], -d[0]])
        return [
            HalfPlane((n[0], n[1]), float(n @ a)),
            HalfPlane((-n[0], -n[1]), float(-(n @ a))),
            HalfPlane((-d[0], -d[1]), float(-(d @ a))),
            HalfPlane((d[0], d[1]), float(d @ b)),
        ]
    planes = []
    for i in range(k):
        a = v[i]
        b = v[(i + 1) % k]
        d = b - a
        n = (d[1], -d[0])  # outward for counterclockwise order
        planes.append(HalfPlane(n, float(n[0] * a[0] + n[1] * a[1])))
    return planes


def polygon_intersect(a: ConvexPolygon, b: ConvexPolygon) -> ConvexPolygon:
    """Intersection of two convex polygons (either may be degenerate)."""
    if a.is_empty or b.is_empty:
        return ConvexPolygon()
    if len(b) < 3 and len(a) >= 3:
        a, b = b, a
    tol = TOL_FACTOR * max(a.scale_hint(), b.scale_hint())
    out = a
    for hp in _edge_half_planes(b):
        out = clip(out, hp, tol)
        if out.is_empty:
            break
    return out


def intersect_constraints(
    constraints: list[SlabConstraint],
    seed_box: ConvexPolygon,
    tol: float | None = None,
) -> ConvexPolygon:
    """Polygon of all p satisfying every slab, intersected with seed_box.

    seed_box must be bounded and contain the feasible set.  If any seed
    edge survives in the output while axis-direction slabs were present,
    the bounding heuristic failed and ``SeedBoxActiveError`` is raised.
    """
    if seed_box.is_empty:
        return ConvexPolygon()
    if tol is None:
        tol = TOL_FACTOR * seed_box.scale_hint()
    for c in constraints:
        if c.lower > c.upper:
            return ConvexPolygon()
    poly = seed_box
    for c in constraints:
        for hp in c.half_planes():
            poly = clip(poly, hp, tol)
            if poly.is_empty:
                return poly
    if any(c.is_axis for c in constraints):
        _check_seed_inactive(poly, seed_box, tol)
    return poly


def _check_seed_inactive(poly: ConvexPolygon, seed_box: ConvexPolygon, tol: float) -> None:
    if len(poly) < 2 or len(seed_box) < 3:
        return
    edge_tol = max(tol, 1e-9 * seed_box.scale_hint())
    for hp in _edge_half_planes(seed_box):
        n = np.asarray(hp.normal)
        nn = math.hypot(n[0], n[1])
        d = (poly.vertices @ n - hp.offset) / nn
        on = np.abs(d) <= edge_tol
        k = len(poly)
        for i in range(k):
            j = (i + 1) % k
            if i == j:
                continue
            if on[i] and on[j]:
                raise SeedBoxActiveError(
                    "seed box edge survives the clipped polygon; "
                    "bounding heuristic failed to enclose the feasible set"
                )


def rasterize_area_oracle(
    constraints: list[SlabConstraint],
    bounds: tuple[float, float, float, float],
    resolution: int,
) -> float:
    """Brute-force area estimate: count satisfying cell centers.

    Independent of the clipping path; error is O(perimeter * cell size).
    """
    if resolution < 16:
        raise GeometryError("rasterization resolution must be >= 16")
    x0, x1, y0, y1 = bounds
    if not (x0 < x1 and y0 < y1):
        raise GeometryError("rasterization bounds must be a nondegenerate box")
    dx = (x1 - x0) / resolution
    dy = (y1 - y0) / resolution
    xs = x0 + (np.arange(resolution) + 0.5) * dx
    ys = y0 + (np.arange(resolution) + 0.5) * dy
    count = 0
    chunk = max(1, (1 << 22) // resolution)
    for start in range(0, resolution, chunk):
        xc = xs[start : start + chunk][:, None]
        yc = ys[None, :]
        mask = np.ones((xc.shape[0], resolution), dtype=bool)
        for c in constraints:
            s = c.e[0] * xc + c.e[1] * yc
            mask &= (s >= c.lower) & (s <= c.upper)
            if not mask.any():
                break
        count += int(mask.sum())
    return count * dx * dy
