import math

import numpy as np
import pytest
import shapely.geometry as sg
from hypothesis import given, settings, strategies as st

from crowdmob.errors import NoSightings
from crowdmob.locate import (
    GridSpec, HeatGrid, PathLossParams, PositionFix, Sighting, detect_presence, fit_path_loss, heatmap,
    locate_all, presence_all, rssi_to_distance, weighted_centroid,
)
from crowdmob.model import Interval, Point, Rectangle

from conftest import anon

EPOCH = Interval(1_521_763_200, 60)


def sight(node, x, y, rssi, t=1_521_763_200, dev=1):
    return Sighting(node, Point(x, y), rssi, t, anon(dev))


def test_presence_rule_examples():
    six = [sight(f"n{i}", i, 0, -60) for i in range(6)]
    v = detect_presence(anon(1), EPOCH, six)
    assert v.inside and v.supporting_nodes == 6
    assert not detect_presence(anon(1), EPOCH, []).inside
    mixed = [sight(f"n{i}", i, 0, -60) for i in range(5)] + [sight(f"w{i}", i, 1, -90) for i in range(3)]
    v = detect_presence(anon(1), EPOCH, mixed)
    assert not v.inside and v.supporting_nodes == 5


def test_presence_uses_strongest_reading_per_node():
    s = [sight("a", 0, 0, -90), sight("a", 0, 0, -70, t=EPOCH.start + 30)]
    assert detect_presence(anon(1), EPOCH, s, min_nodes=1).inside


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 9), st.integers(-100, -30)), max_size=30),
       st.tuples(st.integers(0, 9), st.integers(-100, -30)))
def test_presence_is_monotone(base, extra):
    sights = [sight(f"n{i}", i, 0, r) for i, r in base]
    before = detect_presence(anon(1), EPOCH, sights)
    after = detect_presence(anon(1), EPOCH, sights + [sight(f"n{extra[0]}", 0, 0, extra[1])])
    assert after.supporting_nodes >= before.supporting_nodes
    assert after.inside or not before.inside


def test_rssi_to_distance_examples():
    p = PathLossParams(-40, 2)
    assert rssi_to_distance(-40, p) == pytest.approx(1.0)
    assert rssi_to_distance(-60, p) == pytest.approx(10.0)
    assert rssi_to_distance(-70, p) == pytest.approx(31.6227766, rel=1e-8)


def test_centroid_examples():
    assert weighted_centroid([sight("a", 3, 4, -55)]).point == Point(3, 4)
    assert weighted_centroid([sight("a", 0, 0, -60), sight("b", 10, 0, -60)]).point == Point(5, 0)
    # hand evaluation: weights 10^-0.5, 0.1, 0.1 -> x = y = 1 / (10^-0.5 + 0.2)
    fix = weighted_centroid([sight("a", 0, 0, -50), sight("b", 10, 0, -60), sight("c", 0, 10, -60)])
    assert fix.point.x == pytest.approx(1.9371294336139655, abs=1e-12)
    assert fix.point.y == pytest.approx(1.9371294336139655, abs=1e-12)
    assert fix.n_nodes_used == 3
    with pytest.raises(NoSightings):
        weighted_centroid([])


def formula_centroid(sights, p0, n, g):
    best = {}
    for s in sights:
        if s.node_id not in best or s.rssi > best[s.node_id].rssi:
            best[s.node_id] = s
    w = {k: 10 ** (g * (s.rssi - p0) / (10 * n)) for k, s in best.items()}
    tot = sum(w.values())
    return (sum(w[k] * best[k].position.x for k in w) / tot, sum(w[k] * best[k].position.y for k in w) / tot)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.floats(-50, -30), st.floats(1.5, 4), st.floats(0.5, 5))
def test_centroid_vs_formula_and_hull(seed, p0, n, g):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 9))
    xy = rng.uniform(-50, 50, (k, 2))
    sights = [sight(f"n{i}", float(x), float(y), float(rng.integers(-95, -35))) for i, (x, y) in enumerate(xy)]
    sights += [sight("n0", float(xy[0, 0]), float(xy[0, 1]), -99.0)]  # weaker duplicate is ignored
    params = PathLossParams(p0, n, g)
    fix = weighted_centroid(sights, params)
    ox, oy = formula_centroid(sights, p0, n, g)
    assert fix.point.x == pytest.approx(ox, abs=1e-9) and fix.point.y == pytest.approx(oy, abs=1e-9)
    hull = sg.MultiPoint([tuple(p) for p in xy]).convex_hull
    assert hull.distance(sg.Point(fix.point.x, fix.point.y)) < 1e-7
    # shifting p0 rescales every weight by the same factor
    moved = weighted_centroid(sights, PathLossParams(p0 + 7.5, n, g))
    assert moved.point.x == pytest.approx(fix.point.x, abs=1e-9)
    # batch kernel agrees with the scalar path
    (batch,) = locate_all(sights, params, window_s=10)
    assert batch.point.x == pytest.approx(fix.point.x, abs=1e-9)
    assert batch.point.y == pytest.approx(fix.point.y, abs=1e-9)


def test_locate_all_windows():
    s = [sight("a", 0, 0, -50, t=100), sight("b", 10, 0, -50, t=105), sight("a", 0, 0, -50, t=112)]
    fixes = locate_all(s, window_s=10)
    assert [(f.t, f.point.x, f.n_nodes_used) for f in fixes] == [(102.5, 5.0, 2), (112.0, 0.0, 1)]
    assert locate_all([]) == []


def test_presence_all_epochs():
    s = [sight(f"n{i}", i, 0, -60, t=EPOCH.start + i) for i in range(6)] + [sight("n0", 0, 0, -60, t=EPOCH.end)]
    vs = presence_all(s)
    assert [(v.epoch.start, v.inside) for v in vs] == [(EPOCH.start, True), (EPOCH.end, False)]


def test_heatmap_examples():
    spec = GridSpec(Point(0, 0), 2.0, 10, 20)
    empty = heatmap([], spec)
    assert empty.total == 0 and not empty.counts.any()
    one = heatmap([PositionFix(anon(1), 0, Point(20.5, 10.5), 1)], spec)
    assert one.counts.sum() == 1 and one.counts[5, 10] == 1


def test_heatmap_vs_direct_count():
    rng = np.random.default_rng(3)
    spec = GridSpec.covering(Rectangle(Point(0, 0), Point(40, 20)), 2.0)
    pts = rng.uniform([-5, -5], [45, 25], (1000, 2))
    grid = heatmap([PositionFix(anon(i), 0, Point(x, y), 1) for i, (x, y) in enumerate(pts)], spec)
    want = np.zeros((spec.rows, spec.cols), dtype=int)
    overflow = 0
    for x, y in pts:
        c, r = math.floor(x / 2.0), math.floor(y / 2.0)
        if 0 <= r < spec.rows and 0 <= c < spec.cols:
            want[r, c] += 1
        else:
            overflow += 1
    assert np.array_equal(grid.counts, want)
    assert grid.overflow == overflow and grid.counts.sum() == 1000 - overflow
    merged = grid.merge(grid)
    assert merged.total == 2000
    with pytest.raises(ValueError):
        grid.merge(HeatGrid(GridSpec(Point(0, 0), 1.0, 1, 1), np.zeros((1, 1), int)))


def test_heatmap_renderings():
    spec = GridSpec(Point(0, 0), 1.0, 2, 3)
    grid = HeatGrid(spec, np.array([[0, 1, 2], [3, 4, 5]]))
    assert grid.to_csv() == "3,4,5\n0,1,2\n"
    assert grid.to_pgm().startswith(b"P2\n3 2\n255\n")
    assert grid.to_svg().count("<rect") == 6


def test_fit_path_loss_recovers_parameters():
    rng = np.random.default_rng(0)
    d = rng.uniform(1, 40, 3000)
    r = -35 - 25 * np.log10(d) + rng.normal(0, 1, d.size)
    p0, n = fit_path_loss(d, r)
    assert p0 == pytest.approx(-35, abs=0.3) and n == pytest.approx(2.5, abs=0.05)
    with pytest.raises(ValueError):
        fit_path_loss([1.0], [-40.0])


def test_params_validation():
    with pytest.raises(ValueError):
        PathLossParams(n=0)
    with pytest.raises(ValueError):
        GridSpec(Point(0, 0), 0, 1, 1)
