import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zlab.errors import CoverageGap
from zlab.extension import RIM, bump, extend, l1_norm, partition_of_unity, prop3_experiment, smoothstep
from zlab.geometry import whitney, whitney_complement
from zlab.moduli import power


@pytest.fixture(scope="module")
def lshape_cover():
    return whitney("lshape", 8), whitney_complement("lshape", 8)


@given(z=st.floats(-1, 2), order=st.integers(0, 6))
@settings(max_examples=100, deadline=None)
def test_smoothstep_symmetry(z, order):
    s = smoothstep(np.array([z]), order)[0]
    assert 0.0 <= s <= 1.0
    assert s + smoothstep(np.array([1 - z]), order)[0] == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("order", [1, 3, 4])
def test_smoothstep_flat_ends(order):
    # derivatives up to ``order`` vanish at both ends: s(h) = O(h^(order+1))
    h = 1e-3
    assert smoothstep(np.array([h]), order)[0] < 10 * h ** (order + 1) * math.comb(2 * order + 1, order)
    z = np.linspace(0, 1, 101)
    assert np.all(np.diff(smoothstep(z, order)) >= 0)


def test_bump_support():
    c = np.array([[0.0, 0.0]])
    s = np.array([1.0])
    inside = bump(np.array([[0.5 + 0.9 * RIM, 0.0]]), c, s, 3)
    outside = bump(np.array([[0.5 + 1.01 * RIM, 0.0]]), c, s, 3)
    centre = bump(np.array([[0.5 - RIM, 0.3]]), c, s, 3)
    assert inside[0] > 0 and outside[0] == 0 and centre[0] == 1.0


def test_partition_sums_to_one(lshape_cover):
    _, Wc = lshape_cover
    pu = partition_of_unity(Wc)
    rng = np.random.default_rng(3)
    x = rng.uniform(-1, 2, (3000, 2))
    x = x[~Wc.domain.contains(x) & (Wc.domain.boundary_dist(x) > 0.02)]
    M = pu.values(x[:200])
    np.testing.assert_allclose(M.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(pu.total(x) > 0)


def test_partition_reports_gaps(lshape_cover):
    _, Wc = lshape_cover
    # without the terminal layer the thin shell next to the boundary is bare
    D = Wc.domain
    t = np.linspace(0, 1, 400)
    shell = np.stack([t, np.full_like(t, -0.5 * Wc.L0 / 2 ** Wc.k_max)], 1)
    with pytest.raises(CoverageGap):
        partition_of_unity(Wc, include_terminal=False, check_points=shell, layer=0.0)
    assert D.name == "lshape"


def test_extension_restricts_to_f(lshape_cover):
    W, Wc = lshape_cover
    f = lambda x: np.sin(3 * x[:, 0]) + x[:, 1] ** 2
    ext = extend(f, "lshape", power(1), 1, W=W, Wc=Wc)
    x = np.random.default_rng(0).random((500, 2))
    x = x[ext.domain.contains(x)]
    np.testing.assert_array_equal(ext(x), f(x))


def test_extension_reproduces_polynomials_near_boundary(lshape_cover):
    W, Wc = lshape_cover
    P = lambda x: 1 - 2 * x[:, 0] + 0.5 * x[:, 1]
    ext = extend(P, "lshape", power(1), 1, W=W, Wc=Wc)
    D = ext.domain
    rng = np.random.default_rng(1)
    x = rng.uniform(-0.2, 1.2, (8000, 2))
    d = D.boundary_dist(x)
    layer = 2 * math.sqrt(2) * Wc.L0 / 2 ** Wc.k_max
    x = x[~D.contains(x) & (d > layer) & (d < 0.08)]
    assert len(x) > 50
    np.testing.assert_allclose(ext(x), P(x), atol=1e-10)
    assert ext.gaps == 0


def test_gaps_confined_to_truncation_layer(lshape_cover):
    W, Wc = lshape_cover
    ext = extend(lambda x: np.ones(len(x)), "lshape", power(1), 1, W=W, Wc=Wc)
    D = ext.domain
    x = np.random.default_rng(5).uniform(-0.3, 1.3, (20000, 2))
    x = x[~D.contains(x)]
    pi, _, _ = ext.pu.active(x)
    bare = np.setdiff1d(np.arange(len(x)), pi)
    layer = 2 * math.sqrt(2) * Wc.L0 / 2 ** Wc.k_max
    assert bare.size > 0 and np.all(D.boundary_dist(x[bare]) <= layer)


def test_extension_vanishes_far_away(lshape_cover):
    W, Wc = lshape_cover
    ext = extend(lambda x: np.ones(len(x)), "lshape", power(1), 1, W=W, Wc=Wc)
    far = np.array([[3.0, 3.0], [-2.0, 0.5]])
    np.testing.assert_array_equal(ext(far), 0.0)
    # retained cubes have side <= R and sit within 4 diameters of the boundary
    assert ext.support_radius() <= (5 + 2 * RIM) * math.sqrt(2) * ext.R


def test_l1_norm():
    assert l1_norm(lambda x: np.ones(len(x)), "lshape") == pytest.approx(0.75, rel=1e-6)
    assert l1_norm(lambda x: x[:, 0], "unit_square") == pytest.approx(0.5, rel=1e-6)


def test_prop3_ratios_finite():
    fs = {"smooth": lambda x: np.cos(2 * x[:, 0]) * x[:, 1],
          "cusp": lambda x: np.abs(x[:, 0] - 0.4) ** 0.5}
    rows = prop3_experiment(fs, "unit_square", power(1), 1, k_min=2, k_max=4, ext_kmax=7,
                            max_per_level=256)
    for r in rows:
        assert np.isfinite(r["ratio"]) and r["ratio"] > 0
