import math

import numpy as np
import pytest

from dma.geometry import (
    ConvexPolygon,
    GeometryError,
    HalfPlane,
    SeedBoxActiveError,
    SlabConstraint,
    area,
    box_polygon,
    clip,
    intersect_constraints,
    polygon_intersect,
    rasterize_area_oracle,
)

OCTAGON_AREA = 8.0 * (math.sqrt(2.0) - 1.0)  # intersection of the four unit slabs below


def octagon_constraints():
    s = math.sqrt(2.0)
    return [
        SlabConstraint((1.0, 0.0), -1.0, 1.0),
        SlabConstraint((0.0, 1.0), -1.0, 1.0),
        SlabConstraint((1.0, 1.0), -s, s),
        SlabConstraint((1.0, -1.0), -s, s),
    ]


def test_clip_halves_unit_square():
    sq = box_polygon(0, 1, 0, 1)
    out = clip(sq, HalfPlane((1.0, 0.0), 0.5))
    assert area(out) == pytest.approx(0.5, abs=1e-15)


def test_clip_to_empty():
    sq = box_polygon(0, 1, 0, 1)
    out = clip(sq, HalfPlane((1.0, 0.0), -1.0))
    assert out.is_empty
    assert area(out) == 0.0


def test_clip_no_op_when_slack():
    sq = box_polygon(0, 1, 0, 1)
    out = clip(sq, HalfPlane((1.0, 1.0), 2.0))
    assert area(out) == pytest.approx(1.0, abs=1e-15)
    assert len(out) == 4


def test_area_examples():
    assert area(box_polygon(0, 1, 0, 1)) == pytest.approx(1.0, abs=1e-15)
    tri = ConvexPolygon([(0, 0), (1, 0), (0, 1)])
    assert area(tri) == pytest.approx(0.5, abs=1e-15)
    assert area(ConvexPolygon()) == 0.0
    assert area(ConvexPolygon([(0.3, 0.4)])) == 0.0
    assert area(ConvexPolygon([(0, 0), (1, 1)])) == 0.0


def test_intersect_constraints_square():
    cons = [
        SlabConstraint((1.0, 0.0), -1.0, 1.0),
        SlabConstraint((0.0, 1.0), -1.0, 1.0),
    ]
    seed = box_polygon(-4, 4, -4, 4)
    poly = intersect_constraints(cons, seed)
    assert area(poly) == pytest.approx(4.0, abs=1e-12)


def test_intersect_constraints_octagon_matches_oracle_and_closed_form():
    cons = octagon_constraints()
    seed = box_polygon(-4, 4, -4, 4)
    poly = intersect_constraints(cons, seed)
    exact = area(poly)
    assert exact == pytest.approx(OCTAGON_AREA, abs=1e-12)
    oracle = rasterize_area_oracle(cons, (-2, 2, -2, 2), 4000)
    assert abs(exact - oracle) <= 1e-3
    assert abs(oracle - OCTAGON_AREA) <= 0.005


def test_intersect_constraints_single_point():
    cons = [
        SlabConstraint((1.0, 0.0), 0.0, 0.0),
        SlabConstraint((0.0, 1.0), 0.0, 0.0),
    ]
    poly = intersect_constraints(cons, box_polygon(-1, 1, -1, 1))
    assert area(poly) == 0.0
    assert len(poly) == 1
    assert np.allclose(poly.vertices[0], [0.0, 0.0])


def test_intersect_constraints_infeasible_slab():
    cons = [SlabConstraint((1.0, 0.0), 1.0, -1.0)]
    poly = intersect_constraints(cons, box_polygon(-2, 2, -2, 2))
    assert poly.is_empty


def test_seed_box_active_flagged():
    # Seed deliberately smaller than the axis-slab box: its edges survive.
    cons = [
        SlabConstraint((1.0, 0.0), -1.0, 1.0),
        SlabConstraint((0.0, 1.0), -1.0, 1.0),
    ]
    with pytest.raises(SeedBoxActiveError):
        intersect_constraints(cons, box_polygon(-0.5, 0.5, -0.5, 0.5))


def test_polygon_intersect_examples():
    a = box_polygon(0, 1, 0, 1)
    b = box_polygon(2, 3, 0, 1)
    assert polygon_intersect(a, b).is_empty
    same = polygon_intersect(a, box_polygon(0, 1, 0, 1))
    assert area(same) == pytest.approx(1.0, abs=1e-12)
    shifted = polygon_intersect(a, box_polygon(0.5, 1.5, 0, 1))
    assert area(shifted) == pytest.approx(0.5, abs=1e-12)


def test_polygon_intersect_degenerate_operands():
    sq = box_polygon(0, 1, 0, 1)
    pt_in = ConvexPolygon([(0.5, 0.5)])
    pt_out = ConvexPolygon([(2.0, 2.0)])
    assert not polygon_intersect(sq, pt_in).is_empty
    assert polygon_intersect(sq, pt_out).is_empty
    seg = ConvexPolygon([(-1.0, 0.5), (2.0, 0.5)])
    chord = polygon_intersect(sq, seg)
    assert area(chord) == 0.0
    assert len(chord) == 2
    assert np.allclose(sorted(chord.vertices[:, 0]), [0.0, 1.0])


def test_rasterize_square_and_infeasible():
    cons = [
        SlabConstraint((1.0, 0.0), -1.0, 1.0),
        SlabConstraint((0.0, 1.0), -1.0, 1.0),
    ]
    est = rasterize_area_oracle(cons, (-2, 2, -2, 2), 2000)
    assert abs(est - 4.0) <= 0.01
    empty = rasterize_area_oracle([SlabConstraint((1.0, 0.0), 1.0, -1.0)], (-2, 2, -2, 2), 64)
    assert empty == 0.0
    with pytest.raises(GeometryError):
        rasterize_area_oracle(cons, (-2, 2, -2, 2), 8)


def _random_slab_set(rng):
    cons = []
    for axis in ((1.0, 0.0), (0.0, 1.0)):
        c = rng.uniform(-1.0, 1.0)
        w = rng.uniform(0.05, 1.5)
        cons.append(SlabConstraint(axis, c - w, c + w))
    extra_dirs = [(1, 1), (-1, 1), (2, 1), (1, 2), (-1, 2), (-2, 1), (3, 1), (1, 3)]
    for _ in range(rng.integers(0, 5)):
        a, b = extra_dirs[rng.integers(0, len(extra_dirs))]
        norm = math.hypot(a, b)
        c = rng.uniform(-1.0, 1.0) * norm
        w = rng.uniform(0.05, 1.5) * norm
        cons.append(SlabConstraint((float(a), float(b)), c - w, c + w))
    return cons


def _seed_from_axis(cons, inflate=2.0, pad=1e-6):
    xs = [c for c in cons if c.e[1] == 0.0]
    ys = [c for c in cons if c.e[0] == 0.0]
    l1 = max(c.lower / c.e[0] for c in xs)
    u1 = min(c.upper / c.e[0] for c in xs)
    l2 = max(c.lower / c.e[1] for c in ys)
    u2 = min(c.upper / c.e[1] for c in ys)
    cx, cy = (l1 + u1) / 2, (l2 + u2) / 2
    hx = inflate * (u1 - l1) / 2 + pad
    hy = inflate * (u2 - l2) / 2 + pad
    return box_polygon(cx - hx, cx + hx, cy - hy, cy + hy)


def test_clipped_area_matches_oracle_on_random_sets():
    rng = np.random.default_rng(42)
    for _ in range(40):
        cons = _random_slab_set(rng)
        seed = _seed_from_axis(cons)
        poly = intersect_constraints(cons, seed)
        x0, y0 = seed.vertices.min(axis=0)
        x1, y1 = seed.vertices.max(axis=0)
        res = 1200
        cell = max(x1 - x0, y1 - y0) / res
        est = rasterize_area_oracle(cons, (x0, x1, y0, y1), res)
        perimeter_bound = 2 * ((x1 - x0) + (y1 - y0))
        assert abs(area(poly) - est) <= 5 * perimeter_bound * cell


def test_area_monotone_under_extra_constraints():
    rng = np.random.default_rng(7)
    for _ in range(25):
        cons = _random_slab_set(rng)
        seed = _seed_from_axis(cons)
        base = area(intersect_constraints(cons, seed))
        extra = cons + [SlabConstraint((1.0, 1.0), -rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0))]
        tighter = area(intersect_constraints(extra, seed))
        assert tighter <= base + 1e-12


def test_clip_never_grows_area():
    rng = np.random.default_rng(3)
    sq = box_polygon(-1, 1, -1, 1)
    for _ in range(50):
        n = rng.normal(size=2)
        if abs(n[0]) + abs(n[1]) < 1e-9:
            continue
        hp = HalfPlane((n[0], n[1]), rng.normal())
        out = clip(sq, hp)
        assert area(out) <= area(sq) + 1e-12


def test_polygon_intersect_commutative_in_area():
    rng = np.random.default_rng(11)
    for _ in range(25):
        a = intersect_constraints(_random_slab_set(rng), box_polygon(-8, 8, -8, 8))
        b = intersect_constraints(_random_slab_set(rng), box_polygon(-8, 8, -8, 8))
        ab = area(polygon_intersect(a, b))
        ba = area(polygon_intersect(b, a))
        assert abs(ab - ba) <= 1e-12 * max(1.0, 64.0)


def test_clip_output_stays_convex():
    rng = np.random.default_rng(19)
    for _ in range(25):
        cons = _random_slab_set(rng)
        poly = intersect_constraints(cons, _seed_from_axis(cons))
        scale = poly.scale_hint()
        assert poly.convexity_defect() >= -1e-12 * scale * scale
