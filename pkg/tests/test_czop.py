import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import OMEGA, pv_square
from zlab.czop import (annulus_integral, derivative_bound, homogeneity_defect, kernel_builtin, kernel_from_omega,
                       kernel_taylor, line_cut, polar_rule, region_integral, richardson, sphere_mean,
                       taylor_remainder_constant, td_apply, td_poly_field)
from zlab.errors import PointTooCloseToBoundary, RatioViolated, UnknownKernel
from zlab.geometry import make_domain
from zlab.polyapprox import Polynomial

NAMES = sorted(OMEGA)
Y = (0.4, 0.35)

# frozen from oracles.pv_square for f = x^2 + 0.3 y on the unit square at Y
FROZEN_SMOOTH = {
    "beurling_re": 0.29793174402892497,
    "beurling_im": 0.2404152104825783,
    "riesz1": -1.66901649296348,
    "riesz2": -0.83546679685415,
}
# same for f = |x - 0.55| + y^2 (kink inside the square)
FROZEN_KINK = {"beurling_re": -0.17274200045398636, "riesz2": -1.710722597545831}


def smooth(x):
    return x[:, 0] ** 2 + 0.3 * x[:, 1]


def kinked(x):
    return np.abs(x[:, 0] - 0.55) + x[:, 1] ** 2


@pytest.mark.parametrize("name", NAMES)
def test_kernel_matches_profile(name, rng):
    K = kernel_builtin(name)
    z = rng.standard_normal((50, 2))
    r = np.hypot(*z.T)
    np.testing.assert_allclose(K(z), OMEGA[name]((z / r[:, None]).T) / r ** 2, rtol=1e-12)


@pytest.mark.parametrize("name", NAMES)
def test_kernel_structure(name, rng):
    K = kernel_builtin(name)
    assert abs(sphere_mean(K)) < 1e-14
    assert homogeneity_defect(K, rng) < 1e-12
    z = rng.standard_normal((20, 2))
    sign = 1 if K.parity == "even" else -1
    np.testing.assert_allclose(K(-z), sign * K(z), rtol=1e-13)


def test_unknown_kernel():
    with pytest.raises(UnknownKernel):
        kernel_builtin("hilbert")


@pytest.mark.parametrize("name", NAMES)
@pytest.mark.parametrize("j", [1, 2, 3])
def test_directional_derivatives_against_differences(name, j, rng):
    K = kernel_builtin(name)
    y = rng.uniform(0.5, 1.5, (10, 2)) * rng.choice([-1, 1], (10, 2))
    h = np.array([0.6, -0.8])
    step = 1e-3

    def g(t):
        return K.directional(y + t * h, h, j - 1) if j > 1 else K(y + t * h)

    # fourth-order central difference of the (j-1)th analytic derivative
    fd = (8 * (g(step) - g(-step)) - (g(2 * step) - g(-2 * step))) / (12 * step)
    np.testing.assert_allclose(K.directional(y, h, j), fd, rtol=1e-8, atol=1e-9)


def test_mixed_partials_commute_with_directional(rng):
    K = kernel_builtin("beurling_im")
    y = rng.uniform(0.5, 1.0, (5, 2))
    h = np.array([0.3, 0.4])
    # second directional derivative = sum of mixed partials
    d2 = h[0] ** 2 * K.derivative(y, (2, 0)) + 2 * h[0] * h[1] * K.derivative(y, (1, 1)) \
        + h[1] ** 2 * K.derivative(y, (0, 2))
    np.testing.assert_allclose(K.directional(y, h, 2), d2, rtol=1e-12)


def test_generic_kernel_agrees_with_builtin(rng):
    K = kernel_builtin("beurling_re")
    G = kernel_from_omega(lambda u: u[..., 0] ** 2 - u[..., 1] ** 2, parity="even")
    y = rng.uniform(0.5, 1.0, (8, 2))
    h = np.array([0.1, 0.05])
    np.testing.assert_allclose(G(y), K(y), rtol=1e-13)
    np.testing.assert_allclose(G.taylor(y, h, 2), K.taylor(y, h, 2), rtol=1e-6)


@pytest.mark.parametrize("name", NAMES)
def test_derivative_bounds_finite(name, rng):
    for j in (0, 1, 2):
        assert 0 < derivative_bound(kernel_builtin(name), j, rng) < 100


@given(r=st.floats(0.2, 5), th=st.floats(0, 2 * math.pi), frac=st.floats(0.01, 0.45), phi=st.floats(0, 6.28))
@settings(max_examples=60, deadline=None)
def test_taylor_remainder_envelope(r, th, frac, phi):
    K = kernel_builtin("riesz1")
    y = np.array([r * math.cos(th), r * math.sin(th)])
    h = frac * r * np.array([math.cos(phi), math.sin(phi)])
    for n in (1, 2):
        rem = abs(K(y + h)[0] - kernel_taylor(K, y, h, n))
        # with |h| < |y|/2 the remainder is O(|h|^(n+1) / |y|^(n+3))
        assert rem <= 200 * (frac * r) ** (n + 1) / r ** (n + 3)


def test_taylor_needs_small_ratio():
    K = kernel_builtin("riesz2")
    with pytest.raises(RatioViolated):
        kernel_taylor(K, (1.0, 0.0), (0.6, 0.0), 1)


@pytest.mark.parametrize("name", NAMES)
def test_taylor_constant_stable(name):
    K = kernel_builtin(name)
    a = taylor_remainder_constant(K, 2, np.random.default_rng(1), samples=1000)
    b = taylor_remainder_constant(K, 2, np.random.default_rng(2), samples=4000)
    assert 0 < a and abs(a - b) <= 0.1 * max(a, b)


def test_richardson_exact_on_cubic():
    eps = 0.5 ** np.arange(7)
    vals = [1 + 2 * e - e ** 2 + 0.5 * e ** 3 for e in eps]
    assert richardson(vals)[-1] == pytest.approx(1.0, abs=1e-13)


def test_annulus_cancels():
    for name in NAMES:
        assert abs(annulus_integral(kernel_builtin(name), (0.3, -0.2), 1e-3, 0.7)) < 1e-12


@pytest.mark.parametrize("name", NAMES)
def test_pv_against_oracle(name):
    r = td_apply(kernel_builtin(name), "unit_square", smooth, Y)
    assert r.value == pytest.approx(FROZEN_SMOOTH[name], abs=1e-12)


@pytest.mark.slow
def test_oracle_reproduces_frozen_values():
    f = lambda x: x[0] ** 2 + 0.3 * x[1]
    for name, v in FROZEN_SMOOTH.items():
        assert pv_square(OMEGA[name], f, Y) == pytest.approx(v, abs=1e-13)
    g = lambda x: abs(x[0] - 0.55) + x[1] ** 2
    for name, v in FROZEN_KINK.items():
        assert pv_square(OMEGA[name], g, Y, kink_x=0.55) == pytest.approx(v, abs=1e-13)


@pytest.mark.parametrize("name", sorted(FROZEN_KINK))
@pytest.mark.parametrize("res", [1, 4])
def test_pv_kinked_with_cut(name, res):
    cut = line_cut((0, 0), (1, 0), 0.55, (0, 0), (1, 1))
    r = td_apply(kernel_builtin(name), "unit_square", kinked, Y, cuts=[cut], res=res)
    assert r.value == pytest.approx(FROZEN_KINK[name], abs=1e-11)


@pytest.mark.parametrize("name", ["beurling_re", "beurling_im"])
def test_beurling_of_disk_indicator_vanishes(name, rng):
    K = kernel_builtin(name)
    one = lambda x: np.ones(len(x))
    rad = 0.9 * np.sqrt(rng.random(5))
    th = rng.uniform(0, 2 * np.pi, 5)
    for y in np.stack([rad * np.cos(th), rad * np.sin(th)], 1):
        assert abs(td_apply(K, "disk", one, y).value) < 1e-10


def test_riesz_of_square_indicator_symmetric():
    # the centre of the square is a symmetry point for both odd kernels
    one = lambda x: np.ones(len(x))
    for name in ("riesz1", "riesz2"):
        assert abs(td_apply(kernel_builtin(name), "unit_square", one, (0.5, 0.5)).value) < 1e-13


def test_linearity_and_vector_values():
    K = kernel_builtin("beurling_im")
    g = lambda x: np.cos(x[:, 1])
    both = lambda x: np.stack([smooth(x), g(x)], 1)
    a = td_apply(K, "lshape", smooth, (0.25, 0.3)).value
    b = td_apply(K, "lshape", g, (0.25, 0.3)).value
    v = td_apply(K, "lshape", both, (0.25, 0.3)).value
    np.testing.assert_allclose(v, [a, b], rtol=1e-13)
    c = td_apply(K, "lshape", lambda x: 2 * smooth(x) - 3 * g(x), (0.25, 0.3)).value
    assert c == pytest.approx(2 * a - 3 * b, rel=1e-12)


def test_translation_invariance():
    K = kernel_builtin("riesz1")
    D0 = make_domain("lshape")
    shift = np.array([2.5, -1.25])
    D1 = make_domain(D0.vertices + shift)
    v0 = td_apply(K, D0, smooth, (0.3, 0.2)).value
    v1 = td_apply(K, D1, lambda x: smooth(x - shift), (0.3, 0.2) + shift).value
    assert v1 == pytest.approx(v0, rel=1e-11)


def test_rsafe_and_resolution_do_not_matter():
    K = kernel_builtin("beurling_re")
    vals = [td_apply(K, "lshape", smooth, (0.3, 0.7), rsafe_frac=fr, res=res).value
            for fr in (0.2, 0.8) for res in (1, 3)]
    assert np.ptp(vals) < 1e-11


def test_point_too_close():
    K = kernel_builtin("riesz1")
    with pytest.raises(PointTooCloseToBoundary):
        td_apply(K, "unit_square", smooth, (1.5, 0.5))
    with pytest.raises(PointTooCloseToBoundary):
        td_apply(K, "unit_square", smooth, (0.5, 0.5), r_safe=0.7)


def test_poly_field_matches_pointwise():
    K = kernel_builtin("riesz2")
    P = Polynomial.from_terms(2, 2, {(2, 0): 1.0, (0, 1): 0.3})
    pts = np.array([[0.4, 0.35], [0.6, 0.5]])
    vals, errs = td_poly_field(K, "unit_square", P, pts)
    assert vals[0] == pytest.approx(FROZEN_SMOOTH["riesz2"], abs=1e-11)
    assert vals[1] == pytest.approx(td_apply(K, "unit_square", smooth, pts[1]).value, abs=1e-11)
    many, _ = td_poly_field(K, "unit_square", [P, P], pts)
    np.testing.assert_allclose(many[:, 0], vals, rtol=1e-13)


def test_polar_rule_integrates_area():
    for name, area in (("unit_square", 1.0), ("lshape", 0.75), ("disk", math.pi)):
        D = make_domain(name)
        rule = polar_rule(D, np.array([0.3, 0.2]), 0.05)
        assert rule.weights.sum() == pytest.approx(area, rel=1e-12)
    box_lo, box_hi = np.array([0.2, 0.1]), np.array([0.4, 0.3])
    v = region_integral("unit_square", (0.3, 0.2), lambda x: np.ones(len(x)), exclude=(box_lo, box_hi))
    assert v == pytest.approx(1 - 0.04, rel=1e-12)
