import math

import numpy as np
import pytest

from dma.gridops import convexity_defect_grid, ma_grid
from dma.lattice import Disc, MeshFunction, Rect, StencilPolicy, build_domain
from dma.operators import OperatorKind, ma0, ma1, ma2

FULL = StencilPolicy.full()
POLICIES = [StencilPolicy.full(), StencilPolicy.nine_point(), StencilPolicy.radius(2)]

REFERENCE = {OperatorKind.MA0: ma0, OperatorKind.MA1: ma1, OperatorKind.MA2: ma2}


def random_mesh(domain, rng, convex):
    if convex:
        planes = rng.uniform(-1.0, 1.0, size=(5, 3))

        def fn(p):
            vals = planes[:, 0] * p[0] + planes[:, 1] * p[1] + planes[:, 2]
            return float(np.max(vals)) + 0.05 * (p[0] ** 2 + p[1] ** 2)

        return MeshFunction.from_callable(domain, fn)
    v = MeshFunction.from_callable(domain, lambda p: 0.0)
    mask = domain.closure_mask
    v.grid[mask] = rng.uniform(-1.0, 1.0, size=int(mask.sum()))
    return v


BACKENDS = ["numpy"]
try:
    import numba  # noqa: F401

    BACKENDS.append("numba")
except ImportError:
    pass


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("shape,h", [(Rect(-1, -1, 1, 1), 0.25), (Disc(0.0, 0.0, 1.0), 0.25)])
@pytest.mark.parametrize("convex", [True, False])
@pytest.mark.parametrize("policy", POLICIES, ids=lambda p: p.label())
def test_grid_matches_reference(shape, h, convex, policy, backend):
    dom = build_domain(shape, h)
    rng = np.random.default_rng(hash((str(shape), convex, policy.label())) % 2**32)
    for _ in range(2):
        v = random_mesh(dom, rng, convex)
        for kind in (OperatorKind.MA0, OperatorKind.MA1, OperatorKind.MA2):
            grid = ma_grid(v, kind, policy, backend=backend)
            ref_fn = REFERENCE[kind]
            for m in dom.sorted_interior:
                x = dom.point(m)
                got = grid[dom.grid_index(m)]
                want = ref_fn(v, x, policy)
                assert got == pytest.approx(want, abs=1e-11, rel=1e-9), (kind, m)


def test_grid_quadratic_and_cone_values():
    dom = build_domain(Rect(-1, -1, 1, 1), 0.25)
    quad = MeshFunction.from_callable(dom, lambda p: 0.5 * (p[0] ** 2 + p[1] ** 2))
    g2 = ma_grid(quad, OperatorKind.MA2, FULL)
    for m in dom.sorted_interior:
        assert g2[dom.grid_index(m)] == pytest.approx(0.0625, abs=1e-13)
    cone_dom = build_domain(Rect(-1, -1, 1, 1), 1.0)
    cone = MeshFunction.from_callable(cone_dom, lambda p: math.hypot(p[0], p[1]))
    g = ma_grid(cone, OperatorKind.MA2, FULL)
    assert g[cone_dom.grid_index((0, 0))] == pytest.approx(8 * (math.sqrt(2) - 1), abs=1e-12)


def test_convexity_defect_grid():
    dom = build_domain(Rect(-1, -1, 1, 1), 0.25)
    quad = MeshFunction.from_callable(dom, lambda p: 0.5 * (p[0] ** 2 + p[1] ** 2))
    assert convexity_defect_grid(quad) == 0.0
    bumped = quad.copy()
    bumped.grid[dom.grid_index((0, 0))] += 1.0
    # at the bump the axis second difference becomes h^2 - 2 = -1.9375
    assert convexity_defect_grid(bumped) == pytest.approx(1.9375, abs=1e-13)
