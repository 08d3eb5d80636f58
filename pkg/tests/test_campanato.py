import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zlab.campanato import (GridFunction, cube_family, cz_decompose, dyadic_family, local_osc, oscillations,
                            p_equivalence_experiment, seminorm, telescoping_experiment)
from zlab.errors import EmptyFamily, ThresholdTooSmall
from zlab.geometry import Cube, make_domain
from zlab.moduli import power

# f = x^2 minus its best affine L2 fit on a cube of side l is l^2 (u^2 - 1/12),
# u uniform on [-1/2, 1/2]; the three means of |u^2 - 1/12| in closed form
OSC_X2 = {1.0: 2 / (9 * math.sqrt(12)), 2.0: math.sqrt(1 / 80 - 1 / 144), "inf": 1 / 6}


def sq(x):
    return x[:, 0] ** 2


def test_family_containment():
    D = make_domain("lshape")
    fam = dyadic_family(D, 2, 5)
    lo = fam.centers - 0.5 * fam.sides[:, None]
    hi = fam.centers + 0.5 * fam.sides[:, None]
    d, crossed = D.box_dist(lo, hi)
    assert not crossed.any() and np.all(D.contains(fam.centers))
    inner = dyadic_family(D, 2, 5, mode="interior")
    assert len(inner) < len(fam)


def test_family_sampling_keeps_focus():
    fam = dyadic_family("unit_square", 8, 8, shifts=False, max_per_level=50, focus=(0.3, 0.7))
    assert len(fam) == 50
    s = fam.sides[0]
    assert np.any(np.all(np.abs(fam.centers - (0.3, 0.7)) <= s / 2, axis=1))


def test_polynomials_have_no_oscillation(rng):
    fam = dyadic_family("disk", 2, 4)
    P = lambda x: 1 + x[:, 0] - 2 * x[:, 0] * x[:, 1] + x[:, 1] ** 2
    raw = oscillations(P, fam, 2)
    for v in raw.values():
        assert np.max(v) < 1e-12


@pytest.mark.parametrize("p", [1.0, 2.0, "inf"])
def test_quadratic_oscillation_adaptive(p):
    Q = Cube((0.3, 0.6), 0.25)
    val = local_osc(sq, Q, 1, np.inf if p == "inf" else p, power(2))
    assert val == pytest.approx(OSC_X2[p], rel=1e-7)


@pytest.mark.parametrize("p,rtol", [(1.0, 2e-2), (2.0, 1e-9), ("inf", 1e-9)])
def test_quadratic_oscillation_fixed_rule(p, rtol):
    # the fixed rule integrates the kinked |residual| only to about 1 %
    fam = dyadic_family("unit_square", 2, 5)
    raw = oscillations(sq, fam, 1, ps=(np.inf if p == "inf" else p,))
    np.testing.assert_allclose(raw[p] / fam.sides ** 2, OSC_X2[p], rtol=rtol)


def test_fixed_rule_refines_towards_exact():
    fam = cube_family("unit_square", [(0.5, 0.5)], [0.25])
    err = [abs(oscillations(sq, fam, 1, ps=(1,), m=4, panels=k)[1.0][0] / 0.0625 / OSC_X2[1.0] - 1)
           for k in (4, 16, 32)]
    assert err[2] < err[1] < err[0] and err[2] < 1e-4


def test_seminorm_report():
    fam = dyadic_family("unit_square", 2, 4)
    rep = seminorm(sq, "unit_square", power(2), 1, 1, fam)
    assert rep.sup == pytest.approx(OSC_X2[1.0], rel=2e-2)
    assert rep.argmax_cube.side in set(fam.sides)
    with pytest.raises(EmptyFamily):
        seminorm(sq, "unit_square", power(2), 1, 1, fam.subset(np.zeros(len(fam), bool)))


def test_fixed_rule_matches_adaptive():
    f = lambda x: np.exp(x[:, 0]) * np.cos(2 * x[:, 1])
    Q = Cube((0.4, 0.6), 0.25)
    fam = cube_family("unit_square", [Q.center], [Q.side])
    raw = oscillations(f, fam, 1, ps=(1, 2))
    om = power(1)
    assert raw[1.0][0] / Q.side == pytest.approx(local_osc(f, Q, 1, 1, om), rel=2e-2)
    assert raw[2.0][0] / Q.side == pytest.approx(local_osc(f, Q, 1, 2, om), rel=1e-6)


def test_p_monotone_and_bounded():
    f = lambda x: np.abs(x[:, 0] - 0.5) ** 0.5
    fam = dyadic_family("unit_square", 2, 5)
    r = p_equivalence_experiment(f, "unit_square", power(1), 1, fam)
    assert r["monotone"]
    assert 1.0 <= r["ratio"]["inf"] <= 50


def test_telescoping_constant_finite():
    f = lambda x: np.abs(x[:, 0] - 0.31) ** 0.5 * (1 + x[:, 1])
    r = telescoping_experiment(f, "unit_square", power(1), 1, 2, 6)
    assert r["pairs"] > 0
    assert 0 < r["constant"] < 20


def test_grid_function_is_exact_on_bilinear():
    g = GridFunction.sample(lambda x: 1 + 2 * x[:, 0] - x[:, 1] + 3 * x[:, 0] * x[:, 1], (0, 0), (1, 1), 9)
    x = np.random.default_rng(0).random((30, 2))
    np.testing.assert_allclose(g(x), 1 + 2 * x[:, 0] - x[:, 1] + 3 * x[:, 0] * x[:, 1], rtol=1e-12)


@given(seed=st.integers(0, 2 ** 31), M=st.integers(2, 6), factor=st.floats(1.01, 20))
@settings(max_examples=60, deadline=None)
def test_cz_decomposition_invariants(seed, M, factor):
    rng = np.random.default_rng(seed)
    vals = rng.exponential(size=(2 ** M, 2 ** M)) * (rng.random((2 ** M, 2 ** M)) < 0.3)
    mean = vals.mean()
    if mean == 0:
        return
    A = factor * mean
    Q = Cube((0.5, 0.5), 1.0)
    res = cz_decompose(vals, Q, A)
    assert res.total_mean == pytest.approx(mean)
    vol = sum(c.volume for c in res.cubes)
    assert vol <= Q.volume * mean / A * (1 + 1e-12)
    if res.cubes:
        assert np.all(res.means > A) and np.all(res.means <= 4 * A * (1 + 1e-12))
    # selected cubes are disjoint dyadic squares
    keys = {(c.level, c.index) for c in res.cubes}
    for lvl, (i, j) in keys:
        for up in range(1, lvl):
            assert (lvl - up, (i >> up, j >> up)) not in keys


def test_cz_callable_and_threshold():
    f = lambda x: np.where(np.hypot(x[:, 0] - 0.3, x[:, 1] - 0.3) < 0.05, 100.0, 0.0)
    Q = Cube((0.5, 0.5), 1.0)
    res = cz_decompose(f, Q, 5.0, max_level=6)
    # the spike centre is covered, the far corner is not
    hit = lambda p: any(c.contains(np.array([p]), closed=True)[0] for c in res.cubes)
    assert hit((0.3, 0.3)) and not hit((0.9, 0.9))
    assert np.all(res.means > 5.0)
    with pytest.raises(ThresholdTooSmall):
        cz_decompose(np.ones((4, 4)), Q, 1.0)
