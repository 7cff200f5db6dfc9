"""Vectorized whole-grid evaluation of the discrete Monge-Ampere operators.

The fixed-point solver evaluates an operator at every interior point on
every iteration, so these routines compute slab data with shifted-array
arithmetic and fall back to per-point polygon clipping only where a
non-axis slab actually cuts the axis bounding box.  They must agree
with the per-point reference implementations in ``operators`` to
floating tolerance; the test suite enforces that equivalence on random
inputs, convex and not.
"""

from __future__ import annotations

import math

import numpy as np

from . import _kernels
from .geometry import ConvexPolygon, area, _clip_vertices
from .lattice import (
    LatticeDomain,
    LatticeError,
    MeshFunction,
    StencilPolicy,
    canonical_direction,
)
from .operators import OperatorKind

__all__ = ["ma_grid", "convexity_defect_grid", "point_ma_factory"]


def _shift_mask(mask: np.ndarray, a: int, b: int) -> np.ndarray:
    """out[i, j] = mask[i + a, j + b], False outside the array."""
    ni, nj = mask.shape
    out = np.zeros_like(mask)
    di = slice(max(0, -a), min(ni, ni - a))
    si = slice(max(0, a), min(ni, ni + a))
    dj = slice(max(0, -b), min(nj, nj - b))
    sj = slice(max(0, b), min(nj, nj + b))
    if di.start < di.stop and dj.start < dj.stop:
        out[di, dj] = mask[si, sj]
    return out


def _shift_vals(vals: np.ndarray, a: int, b: int) -> np.ndarray:
    ni, nj = vals.shape
    out = np.full_like(vals, np.nan)
    di = slice(max(0, -a), min(ni, ni - a))
    si = slice(max(0, a), min(ni, ni + a))
    dj = slice(max(0, -b), min(nj, nj - b))
    sj = slice(max(0, b), min(nj, nj + b))
    if di.start < di.stop and dj.start < dj.stop:
        out[di, dj] = vals[si, sj]
    return out


class _SlabTable:
    """Per-direction admissibility and (optionally tightened) slab bounds."""

    def __init__(self, dom: LatticeDomain, grid: np.ndarray, policy: StencilPolicy):
        self.dom = dom
        self.grid = grid
        self.policy = policy
        self.closure = dom.closure_mask
        i0, j0, i1, j1 = dom.index_box
        self.span = (i1 - i0, j1 - j0)

    def admissible(self, cls) -> np.ndarray:
        a, b = cls
        return (
            self.closure
            & _shift_mask(self.closure, a, b)
            & _shift_mask(self.closure, -a, -b)
        )

    def slab(self, cls, tighten: bool) -> tuple[np.ndarray, np.ndarray, np.ndarray] | None:
        """(admissible mask, lower, upper) for the slab on p.e with e = cls*h.

        With ``tighten`` the bounds are sharpened over all admissible
        integer multiples of the direction wherever second differences
        along the direction go negative somewhere (otherwise the
        primitive slab is already the tightest).
        """
        a, b = cls
        adm = self.admissible(cls)
        if not adm.any():
            return None
        g = self.grid
        fwd = _shift_vals(g, a, b) - g
        bwd = g - _shift_vals(g, -a, -b)
        upper = np.where(adm, fwd, np.inf)
        lower = np.where(adm, bwd, -np.inf)
        if tighten:
            with np.errstate(invalid="ignore"):
                delta_min = float(np.min(np.where(adm, fwd - bwd, np.inf)))
            if delta_min < 0.0:
                cap = self.policy.cap()
                comp = max(abs(a), abs(b))
                r = 2
                while True:
                    if cap is not None and r * comp > cap:
                        break
                    if r * abs(a) > self.span[0] or r * abs(b) > self.span[1]:
                        break
                    adm_r = self.admissible((r * a, r * b))
                    if not adm_r.any():
                        break
                    fr = (_shift_vals(g, r * a, r * b) - g) / r
                    br = (g - _shift_vals(g, -r * a, -r * b)) / r
                    upper = np.where(adm_r, np.minimum(upper, fr), upper)
                    lower = np.where(adm_r, np.maximum(lower, br), lower)
                    r += 1
        return adm, lower, upper


def _polygon_area_pass(
    dom: LatticeDomain,
    grid: np.ndarray,
    policy: StencilPolicy,
    pair_admissible: bool,
    tighten: bool,
) -> np.ndarray:
    """Shared area evaluation for the slab-intersection operators.

    ``pair_admissible`` restricts each direction to points where its
    90-degree rotation is also admissible (the orthogonal-basis family);
    ``tighten`` sharpens slabs over direction multiples (the
    all-directions family).
    """
    h = dom.h
    interior = dom.interior_mask
    table = _SlabTable(dom, grid, policy)
    classes = dom.direction_classes(policy)

    adm_cache: dict = {}

    def adm(cls):
        if cls not in adm_cache:
            adm_cache[cls] = table.admissible(cls)
        return adm_cache[cls]

    def participation(cls):
        if not pair_admissible:
            return adm(cls)
        rot = canonical_direction((-cls[1], cls[0]))
        return adm(cls) & adm(rot)

    # axis slabs bound the polygon: p1 in [l1, u1], p2 in [l2, u2]
    sx = table.slab((1, 0), tighten)
    sy = table.slab((0, 1), tighten)
    if sx is None or sy is None:
        raise LatticeError("axis directions must be admissible on the interior")
    _, lo_x, up_x = sx
    _, lo_y, up_y = sy
    l1 = np.where(interior, lo_x / h, 0.0)
    u1 = np.where(interior, up_x / h, 0.0)
    l2 = np.where(interior, lo_y / h, 0.0)
    u2 = np.where(interior, up_y / h, 0.0)
    empty = interior & ((l1 > u1) | (l2 > u2))
    box_area = np.maximum(u1 - l1, 0.0) * np.maximum(u2 - l2, 0.0)

    cand_pt: list[np.ndarray] = []
    cand_e1: list[np.ndarray] = []
    cand_e2: list[np.ndarray] = []
    cand_lo: list[np.ndarray] = []
    cand_up: list[np.ndarray] = []
    nj = dom.grid_shape[1]
    for cls in classes:
        a, b = cls
        if a == 0 or b == 0:
            continue
        part = participation(cls) & interior
        if not part.any():
            continue
        s = table.slab(cls, tighten)
        if s is None:
            continue
        _, lo, up = s
        e1, e2 = a * h, b * h
        # canonical non-axis classes have b >= 1, so e2 > 0 here
        with np.errstate(invalid="ignore"):
            newly_empty = part & (lo > up)
            empty |= newly_empty
            max_dot = e1 * (u1 if e1 > 0 else l1) + e2 * u2
            min_dot = e1 * (l1 if e1 > 0 else u1) + e2 * l2
            cuts = part & ~empty & ((up < max_dot) | (lo > min_dot))
        if cuts.any():
            ii, jj = np.nonzero(cuts)
            cand_pt.append(ii * nj + jj)
            cand_e1.append(np.full(ii.size, e1))
            cand_e2.append(np.full(ii.size, e2))
            cand_lo.append(lo[cuts])
            cand_up.append(up[cuts])

    out = np.where(interior & ~empty, box_area, 0.0)
    if not cand_pt:
        return out
    pt = np.concatenate(cand_pt)
    ee1 = np.concatenate(cand_e1)
    ee2 = np.concatenate(cand_e2)
    llo = np.concatenate(cand_lo)
    uup = np.concatenate(cand_up)
    order = np.argsort(pt, kind="stable")
    pt, ee1, ee2, llo, uup = pt[order], ee1[order], ee2[order], llo[order], uup[order]

    # The polygon sits inside the narrowest candidate band across the
    # axis box, so a vanishing band width pins the area at zero to float
    # tolerance without any clipping (degenerate slabs are the common
    # case for edge-supported functions).
    widths = (uup - llo) / np.hypot(ee1, ee2)
    min_width = np.full(out.size, np.inf)
    np.minimum.at(min_width, pt, widths)
    min_width = min_width.reshape(out.shape)
    diam = np.hypot(u1 - l1, u2 - l2)
    scale = np.maximum.reduce([np.ones_like(l1), np.abs(l1), np.abs(u1), np.abs(l2), np.abs(u2)])
    with np.errstate(invalid="ignore"):
        sliver = min_width * diam <= 1e-13 * scale * scale

    starts = np.flatnonzero(np.r_[True, pt[1:] != pt[:-1]])
    ends = np.r_[starts[1:], pt.size]
    for s0, s1 in zip(starts, ends):
        ii, jj = divmod(int(pt[s0]), nj)
        if empty[ii, jj]:
            out[ii, jj] = 0.0
            continue
        if sliver[ii, jj]:
            out[ii, jj] = 0.0
            continue
        out[ii, jj] = _area_from_candidates(
            float(l1[ii, jj]),
            float(u1[ii, jj]),
            float(l2[ii, jj]),
            float(u2[ii, jj]),
            ee1[s0:s1],
            ee2[s0:s1],
            llo[s0:s1],
            uup[s0:s1],
        )
    return out


def _area_from_candidates(l1, u1, l2, u2, e1, e2, lo, up) -> float:
    """Area of the axis box cut by candidate slabs, dropping redundant ones.

    Candidates are re-screened against the shrinking polygon: a typical
    degenerate cut (zero-width slab) eliminates most of the remaining
    candidates in one pass, which keeps the cost near the number of
    truly active constraints.
    """
    scale = max(1.0, abs(l1), abs(u1), abs(l2), abs(u2))
    widths = (up - lo) / np.hypot(e1, e2)
    tol = 1e-12 * scale
    order = np.argsort(widths, kind="stable")  # tightest slabs first
    e1, e2, lo, up = e1[order], e2[order], lo[order], up[order]
    E = np.column_stack([e1, e2])
    verts = np.array([(l1, l2), (u1, l2), (u1, u2), (l1, u2)])
    pending = np.arange(lo.size)
    recheck_every = max(8, lo.size // 8)
    since_check = 0
    pos = 0
    while pending.size:
        if since_check >= recheck_every or pos >= pending.size:
            dots = verts @ E[pending].T
            still = (dots.max(axis=0) > up[pending] + tol) | (dots.min(axis=0) < lo[pending] - tol)
            pending = pending[still]
            since_check = 0
            pos = 0
            if not pending.size:
                break
        j = pending[pos]
        pos += 1
        since_check += 1
        for n0, n1, off in ((E[j, 0], E[j, 1], up[j]), (-E[j, 0], -E[j, 1], -lo[j])):
            new = _clip_vertices(verts, n0, n1, off, tol)
            if new is None:
                continue
            if new.shape[0] == 0:
                return 0.0
            verts = new
    return area(ConvexPolygon(verts))


def _ma0_grid(dom: LatticeDomain, grid: np.ndarray, policy: StencilPolicy) -> np.ndarray:
    h = dom.h
    interior = dom.interior_mask
    table = _SlabTable(dom, grid, policy)
    best = np.full(dom.grid_shape, np.inf)
    for cls in dom.direction_classes(policy):
        a, b = cls
        if not (a > 0 and b >= 0):  # first basis vector has angle in [0, pi/2)
            continue
        perp = (-b, a)
        adm = table.admissible(cls) & table.admissible(perp)
        mask = adm & interior
        if not mask.any():
            continue
        g = grid
        d_main = _shift_vals(g, a, b) - 2.0 * g + _shift_vals(g, -a, -b)
        d_perp = _shift_vals(g, -b, a) - 2.0 * g + _shift_vals(g, b, -a)
        norm = h * float(np.hypot(a, b))
        with np.errstate(invalid="ignore"):
            prod = (d_main / norm) * (d_perp / norm)
            best = np.where(mask, np.minimum(best, prod), best)
    if not np.all(np.isfinite(best[interior])):
        raise LatticeError("some interior point admits no orthogonal basis")
    return np.where(interior, best, 0.0)


def ma_grid(
    v: MeshFunction,
    kind: OperatorKind,
    policy: StencilPolicy,
    backend: str = "auto",
) -> np.ndarray:
    """Operator values at every interior point (zero elsewhere).

    ``backend`` selects the compiled kernels ("numba"), the pure numpy
    path ("numpy"), or whichever is available ("auto").  Both paths
    implement identical semantics and are cross-checked in the tests.
    """
    dom = v.domain
    if backend not in ("auto", "numba", "numpy"):
        raise LatticeError(f"unknown backend {backend!r}")
    use_kernel = _kernels.HAVE_NUMBA if backend == "auto" else backend == "numba"
    if backend == "numba" and not _kernels.HAVE_NUMBA:
        raise LatticeError("numba backend requested but numba is unavailable")
    if use_kernel:
        key = ("grouped_classes", policy)
        if key not in dom._caches:
            dom._caches[key] = _kernels.group_classes(dom.direction_classes(policy))
        cls_a, cls_b, group_start = dom._caches[key]
        cap = policy.cap() or -1
        closure = dom.closure_mask
        interior = dom.interior_mask
        if kind is OperatorKind.MA2:
            return _kernels._polygon_areas_kernel(
                v.grid, closure, interior, cls_a, cls_b, group_start, False, True, cap, dom.h
            )
        if kind is OperatorKind.MA1:
            return _kernels._polygon_areas_kernel(
                v.grid, closure, interior, cls_a, cls_b, group_start, True, False, cap, dom.h
            )
        if kind is OperatorKind.MA0:
            best = _kernels._ma0_kernel(
                v.grid, closure, interior, cls_a, cls_b, group_start, cap, dom.h
            )
            if not np.all(np.isfinite(best[interior])):
                raise LatticeError("some interior point admits no orthogonal basis")
            return np.where(interior, best, 0.0)
        raise LatticeError(f"no grid evaluation for operator {kind}")
    if kind is OperatorKind.MA2:
        return _polygon_area_pass(dom, v.grid, policy, pair_admissible=False, tighten=True)
    if kind is OperatorKind.MA1:
        return _polygon_area_pass(dom, v.grid, policy, pair_admissible=True, tighten=False)
    if kind is OperatorKind.MA0:
        return _ma0_grid(dom, v.grid, policy)
    raise LatticeError(f"no grid evaluation for operator {kind}")


def point_ma_factory(dom: LatticeDomain, kind: OperatorKind, policy: StencilPolicy):
    """fn(grid, multiplier) -> operator value at one interior point.

    Uses the compiled single-point kernels when available, otherwise the
    per-point reference implementations.  The Gauss-Seidel sweep calls
    this inside its scalar root-finding.
    """
    if kind not in (OperatorKind.MA0, OperatorKind.MA1, OperatorKind.MA2):
        raise LatticeError(f"no point evaluation factory for operator {kind}")
    if _kernels.HAVE_NUMBA:
        key = ("grouped_classes", policy)
        if key not in dom._caches:
            dom._caches[key] = _kernels.group_classes(dom.direction_classes(policy))
        cls_a, cls_b, group_start = dom._caches[key]
        cap = policy.cap() or -1
        closure = dom.closure_mask
        h = dom.h
        i0, j0, _, _ = dom.index_box

        if kind is OperatorKind.MA0:
            def eval_point(grid, m):
                return float(
                    _kernels._point_ma0(
                        grid, closure, m[0] - i0, m[1] - j0, cls_a, cls_b, group_start, cap, h
                    )
                )
        else:
            rot_needed = kind is OperatorKind.MA1
            tighten = kind is OperatorKind.MA2

            def eval_point(grid, m):
                return float(
                    _kernels._point_area_kernel(
                        grid, closure, m[0] - i0, m[1] - j0, cls_a, cls_b, group_start,
                        rot_needed, tighten, cap, h,
                    )
                )

        return eval_point

    from .operators import ma0, ma1, ma2

    ref = {OperatorKind.MA0: ma0, OperatorKind.MA1: ma1, OperatorKind.MA2: ma2}[kind]

    def eval_point(grid, m):
        return ref(MeshFunction(dom, grid), dom.point(m), policy)

    return eval_point


def convexity_defect_grid(v: MeshFunction) -> float:
    """-min of second differences over the 9-point directions (0 if convex)."""
    dom = v.domain
    g = v.grid
    closure = dom.closure_mask
    worst = np.inf
    for cls in ((1, 0), (0, 1), (1, 1), (-1, 1)):
        a, b = cls
        adm = closure & _shift_mask(closure, a, b) & _shift_mask(closure, -a, -b) & dom.interior_mask
        if not adm.any():
            continue
        delta = _shift_vals(g, a, b) - 2.0 * g + _shift_vals(g, -a, -b)
        with np.errstate(invalid="ignore"):
            worst = min(worst, float(np.min(np.where(adm, delta, np.inf))))
    if not np.isfinite(worst):
        return 0.0
    return max(-worst, 0.0)
