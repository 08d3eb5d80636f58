"""Both flavours of every hot loop must agree."""
import numpy as np
import pytest

from zlab import backend_name
from zlab.geometry import whitney, whitney_complement
from zlab.kernels import FLAVOURS


def _polygon(m=37):
    th = 2 * np.pi * np.arange(m) / m
    a = np.stack([np.cos(th), 0.7 * np.sin(th)], 1)
    return a, np.roll(a, -1, axis=0)


def test_backend_name():
    assert backend_name() in ("numba", "numpy")


def test_point_distance_flavours(rng):
    a, b = _polygon()
    p = rng.uniform(-1.5, 1.5, (500, 2))
    nb, npf = FLAVOURS["points_segments_dist"]
    np.testing.assert_allclose(nb(p, a, b), npf(p, a, b), rtol=1e-13, atol=1e-15)


def test_point_distance_brute_force():
    a = np.array([[0.0, 0.0]])
    b = np.array([[1.0, 0.0]])
    p = np.array([[0.5, 2.0], [-3.0, 4.0], [2.0, 0.0]])
    for f in FLAVOURS["points_segments_dist"]:
        np.testing.assert_allclose(f(p, a, b), [2.0, 5.0, 1.0])


def test_box_distance_flavours(rng):
    a, b = _polygon()
    lo = rng.uniform(-1.3, 1.2, (400, 2))
    hi = lo + rng.uniform(1e-3, 0.3, (400, 1))
    (d1, c1), (d2, c2) = (f(lo, hi, a, b) for f in FLAVOURS["boxes_segments"])
    np.testing.assert_allclose(d1, d2, rtol=1e-12, atol=1e-15)
    np.testing.assert_array_equal(c1, c2)
    # a crossed box is at distance zero
    assert np.all(d1[c1] == 0)


def test_point_in_polygon_flavours(rng):
    a, b = _polygon()
    p = rng.uniform(-1.2, 1.2, (2000, 2))
    r1, r2 = (f(p, a, b) for f in FLAVOURS["points_in_polygon"])
    np.testing.assert_array_equal(r1, r2)
    # against the ellipse (the polygon is inscribed, so check well inside / outside)
    q = p[:, 0] ** 2 + (p[:, 1] / 0.7) ** 2
    assert np.all(r1[q < 0.95]) and not np.any(r1[q > 1.0])


def test_ray_hits_flavours(rng):
    a, b = _polygon()
    th = rng.uniform(0, 2 * np.pi, 100)
    dirs = np.stack([np.cos(th), np.sin(th)], 1)
    o = np.array([0.1, -0.05])
    h1, h2 = (f(o, dirs, a, b) for f in FLAVOURS["ray_hits"])
    np.testing.assert_allclose(h1, h2, rtol=1e-13)
    # from an interior point every ray leaves a convex polygon exactly once
    assert np.all(np.isfinite(h1).sum(axis=1) == 1)


def test_reflective_search_flavours(rng):
    qlo = rng.uniform(-1, 1, (60, 2))
    wlo = rng.uniform(-1, 1, (300, 2))
    h = rng.uniform(0.01, 0.3, 60)
    r1, r2 = (f(qlo, qlo + 0.05, h, wlo, wlo + 0.02) for f in FLAVOURS["reflective_search"])
    np.testing.assert_array_equal(r1, r2)


@pytest.mark.parametrize("domain", ["unit_square", "lshape", "disk"])
def test_reflective_hash_flavours(domain):
    W = whitney(domain, 8)
    Wc = whitney_complement(domain, 8)
    H = W._hash()
    args = (np.ascontiguousarray(Wc.lo), np.ascontiguousarray(Wc.hi), 2.0 * Wc.dist,
            np.asarray(W.origin, dtype=float), float(W.L0), H["levels"], H["offsets"], H["keys"],
            H["pos"], 4096)
    r1, r2 = (f(*args) for f in FLAVOURS["reflective_hash"])
    np.testing.assert_array_equal(r1, r2)
    # the hashed search agrees with the linear scan in priority order
    order = np.lexsort((W.index[:, 1], W.index[:, 0], W.level))
    pick = np.random.default_rng(1).choice(len(Wc), 200, replace=False)
    lin = FLAVOURS["reflective_search"][1](args[0][pick], args[1][pick], args[2][pick],
                                           W.lo[order], W.hi[order])
    hashed = r1[pick]
    ok = lin >= 0
    np.testing.assert_array_equal(hashed >= 0, ok)
    np.testing.assert_array_equal(W.side[hashed[ok]], W.side[order][lin[ok]])
