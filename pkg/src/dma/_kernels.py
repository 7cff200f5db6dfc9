"""Compiled per-point kernels for the grid operator evaluations.

Semantics mirror the numpy path in ``gridops`` exactly: slabs per
antipodal direction class, tightened over admissible integer multiples
(all-directions family), polygon areas by half-plane clipping of the
axis box.  Direction classes arrive grouped by |a| and sorted by b so
each point visits only classes that fit inside its bounds margins.
numba is optional; ``HAVE_NUMBA`` gates usage and the numpy path stays
the reference fallback.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is present in CI
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap(args[0]) if args and callable(args[0]) else wrap


def group_classes(classes) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """CSR layout of canonical classes: grouped by |a|, b ascending.

    Returns (a_signed, b, group_start) where classes with |a| = k occupy
    ``a_signed[group_start[k]:group_start[k+1]]`` sorted by b.
    """
    cls = sorted(classes, key=lambda m: (abs(m[0]), m[1], m[0]))
    a = np.array([c[0] for c in cls], dtype=np.int64)
    b = np.array([c[1] for c in cls], dtype=np.int64)
    amax = int(np.max(np.abs(a))) if a.size else 0
    start = np.zeros(amax + 2, dtype=np.int64)
    for av in np.abs(a):
        start[av + 1] += 1
    start = np.cumsum(start)
    return a, b, start


@njit(cache=True)
def _clip_inplace(verts, nv, n0, n1, off, tol, buf):
    """Clip the polygon verts[:nv] by {p.n <= off}; result into buf.

    Returns the new vertex count (0 for empty, -1 for unchanged).
    """
    all_in = True
    any_in = False
    for i in range(nv):
        d = verts[i, 0] * n0 + verts[i, 1] * n1 - off
        if d > tol:
            all_in = False
        else:
            any_in = True
    if all_in:
        return -1
    if not any_in:
        return 0
    m = 0
    for i in range(nv):
        j = i + 1
        if j == nv:
            j = 0
        xi, yi = verts[i, 0], verts[i, 1]
        xj, yj = verts[j, 0], verts[j, 1]
        di = xi * n0 + yi * n1 - off
        dj = xj * n0 + yj * n1 - off
        if di <= tol:
            buf[m, 0] = xi
            buf[m, 1] = yi
            m += 1
        if (di <= tol) != (dj <= tol):
            t = di / (di - dj)
            buf[m, 0] = xi + t * (xj - xi)
            buf[m, 1] = yi + t * (yj - yi)
            m += 1
    # drop consecutive duplicates (wrap-around last vs first)
    k = 0
    for i in range(m):
        if k == 0 or abs(buf[i, 0] - verts[k - 1, 0]) > tol or abs(buf[i, 1] - verts[k - 1, 1]) > tol:
            verts[k, 0] = buf[i, 0]
            verts[k, 1] = buf[i, 1]
            k += 1
    while k > 1 and abs(verts[0, 0] - verts[k - 1, 0]) <= tol and abs(verts[0, 1] - verts[k - 1, 1]) <= tol:
        k -= 1
    return k


@njit(cache=True)
def _shoelace(verts, nv):
    if nv < 3:
        return 0.0
    s = 0.0
    for i in range(nv):
        j = i + 1
        if j == nv:
            j = 0
        s += verts[i, 0] * verts[j, 1] - verts[j, 0] * verts[i, 1]
    return abs(s) / 2.0


@njit(cache=True, inline="always")
def _slab_at(grid, closure, ii, jj, a, b, cap, tighten, ka, kb):
    """(admissible, lower, upper) for direction (a, b) at one point."""
    if abs(a) > ka or b > kb:
        return False, 0.0, 0.0
    if not (closure[ii + a, jj + b] and closure[ii - a, jj - b]):
        return False, 0.0, 0.0
    v0 = grid[ii, jj]
    upper = grid[ii + a, jj + b] - v0
    lower = v0 - grid[ii - a, jj - b]
    if tighten:
        comp = max(abs(a), abs(b))
        r = 2
        while True:
            if cap > 0 and r * comp > cap:
                break
            if r * abs(a) > ka or r * b > kb:
                break
            ip, jp = ii + r * a, jj + r * b
            im, jm = ii - r * a, jj - r * b
            if not (closure[ip, jp] and closure[im, jm]):
                break
            f = (grid[ip, jp] - v0) / r
            bk = (v0 - grid[im, jm]) / r
            if f < upper:
                upper = f
            if bk > lower:
                lower = bk
            r += 1
    return True, lower, upper


@njit(cache=True)
def _point_area(grid, closure, ii, jj, cls_a, cls_b, group_start, rot_needed, tighten, cap, h,
                ce1, ce2, clo, cup, cw, verts, buf):
    """Polygon area at one interior point (scratch buffers supplied)."""
    ni, nj = closure.shape
    amax = group_start.shape[0] - 2
    ka = min(ii, ni - 1 - ii)
    kb = min(jj, nj - 1 - jj)
    okx, lox, upx = _slab_at(grid, closure, ii, jj, 1, 0, cap, tighten, ka, kb)
    oky, loy, upy = _slab_at(grid, closure, ii, jj, 0, 1, cap, tighten, ka, kb)
    l1, u1 = lox / h, upx / h
    l2, u2 = loy / h, upy / h
    if l1 > u1 or l2 > u2:
        return 0.0
    scale = max(1.0, abs(l1), abs(u1), abs(l2), abs(u2))
    tol = 1e-12 * scale
    ncand = 0
    a_hi = min(ka, amax)
    if cap > 0 and cap < a_hi:
        a_hi = cap
    for av in range(1, a_hi + 1):
        for idx in range(group_start[av], group_start[av + 1]):
            b = cls_b[idx]
            if b > kb or (cap > 0 and b > cap):
                break
            if b == 0:
                continue
            a = cls_a[idx]
            ok, lo, up = _slab_at(grid, closure, ii, jj, a, b, cap, tighten, ka, kb)
            if not ok:
                continue
            if rot_needed:
                # the 90-degree rotation (-b, a) must be admissible too
                if b > ka or abs(a) > kb:
                    continue
                if not (closure[ii - b, jj + a] and closure[ii + b, jj - a]):
                    continue
            if lo > up:
                return 0.0
            e1 = a * h
            e2 = b * h
            mx = e1 * (u1 if e1 > 0 else l1) + e2 * u2
            mn = e1 * (l1 if e1 > 0 else u1) + e2 * l2
            if up < mx or lo > mn:
                ce1[ncand] = e1
                ce2[ncand] = e2
                clo[ncand] = lo
                cup[ncand] = up
                cw[ncand] = (up - lo) / np.hypot(e1, e2)
                ncand += 1
    if ncand == 0:
        return (u1 - l1) * (u2 - l2)
    order = np.argsort(cw[:ncand])  # tightest slabs first
    verts[0, 0], verts[0, 1] = l1, l2
    verts[1, 0], verts[1, 1] = u1, l2
    verts[2, 0], verts[2, 1] = u1, u2
    verts[3, 0], verts[3, 1] = l1, u2
    nv = 4
    for oi in range(ncand):
        c = order[oi]
        k = _clip_inplace(verts, nv, ce1[c], ce2[c], cup[c], tol, buf)
        if k == 0:
            return 0.0
        if k > 0:
            nv = k
        k = _clip_inplace(verts, nv, -ce1[c], -ce2[c], -clo[c], tol, buf)
        if k == 0:
            return 0.0
        if k > 0:
            nv = k
    if nv > 2:
        return _shoelace(verts, nv)
    return 0.0


@njit(cache=True)
def _polygon_areas_kernel(grid, closure, interior, cls_a, cls_b, group_start, rot_needed, tighten, cap, h):
    """Areas of the slab-intersection polygons at every interior point."""
    ni, nj = closure.shape
    ncls = cls_a.shape[0]
    out = np.zeros((ni, nj))
    ce1 = np.empty(ncls)
    ce2 = np.empty(ncls)
    clo = np.empty(ncls)
    cup = np.empty(ncls)
    cw = np.empty(ncls)
    maxv = 8 + 4 * ncls
    verts = np.empty((maxv, 2))
    buf = np.empty((maxv, 2))
    for ii in range(ni):
        for jj in range(nj):
            if not interior[ii, jj]:
                continue
            out[ii, jj] = _point_area(
                grid, closure, ii, jj, cls_a, cls_b, group_start,
                rot_needed, tighten, cap, h, ce1, ce2, clo, cup, cw, verts, buf,
            )
    return out


@njit(cache=True)
def _point_area_kernel(grid, closure, ii, jj, cls_a, cls_b, group_start, rot_needed, tighten, cap, h):
    """Single-point polygon area (allocates its own scratch)."""
    ncls = cls_a.shape[0]
    ce1 = np.empty(ncls)
    ce2 = np.empty(ncls)
    clo = np.empty(ncls)
    cup = np.empty(ncls)
    cw = np.empty(ncls)
    maxv = 8 + 4 * ncls
    verts = np.empty((maxv, 2))
    buf = np.empty((maxv, 2))
    return _point_area(
        grid, closure, ii, jj, cls_a, cls_b, group_start,
        rot_needed, tighten, cap, h, ce1, ce2, clo, cup, cw, verts, buf,
    )


@njit(cache=True)
def _point_ma0(grid, closure, ii, jj, cls_a, cls_b, group_start, cap, h):
    ni, nj = closure.shape
    amax = group_start.shape[0] - 2
    ka = min(ii, ni - 1 - ii)
    kb = min(jj, nj - 1 - jj)
    best = np.inf
    a_hi = min(ka, amax)
    if cap > 0 and cap < a_hi:
        a_hi = cap
    for av in range(1, a_hi + 1):
        for idx in range(group_start[av], group_start[av + 1]):
            b = cls_b[idx]
            if b > kb or (cap > 0 and b > cap):
                break
            a = cls_a[idx]
            if a <= 0:  # first basis vector has angle in [0, pi/2)
                continue
            # rotation (-b, a) admissibility
            if b > ka or a > kb:
                continue
            if not (
                closure[ii + a, jj + b]
                and closure[ii - a, jj - b]
                and closure[ii - b, jj + a]
                and closure[ii + b, jj - a]
            ):
                continue
            v0 = grid[ii, jj]
            d_main = grid[ii + a, jj + b] - 2.0 * v0 + grid[ii - a, jj - b]
            d_perp = grid[ii - b, jj + a] - 2.0 * v0 + grid[ii + b, jj - a]
            norm = h * np.hypot(a, b)
            prod = (d_main / norm) * (d_perp / norm)
            if prod < best:
                best = prod
    return best


@njit(cache=True)
def _ma0_kernel(grid, closure, interior, cls_a, cls_b, group_start, cap, h):
    ni, nj = closure.shape
    out = np.zeros((ni, nj))
    for ii in range(ni):
        for jj in range(nj):
            if not interior[ii, jj]:
                continue
            out[ii, jj] = _point_ma0(grid, closure, ii, jj, cls_a, cls_b, group_start, cap, h)
    return out
