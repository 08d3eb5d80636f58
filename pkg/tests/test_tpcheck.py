import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zlab.czop import kernel_builtin
from zlab.errors import EmptyFamily, GammaOutOfRange, ParameterOutOfRange
from zlab.campanato import dyadic_family
from zlab.geometry import Cube
from zlab.moduli import power, powerlog, xi
from zlab.polyapprox import Polynomial
from zlab.tpcheck import (asymmetry_witness, check_condition_i, check_conditions, coeff_growth_experiment,
                          directions, extremal, extremal_poly, gamma_of, lemma11_experiment, lemma11_sweep,
                          near_best_experiment, profile_by_quadrature, superfluous_factor)


def phi_t(u):
    # omega = t, n = 1
    a = abs(u)
    return 1 - a - u * math.log(1 / a) if a > 0 else 1.0


def phi_t2(u):
    # omega = t^2, n = 2
    a = abs(u)
    return (1 - u * u) / 2 - 2 * u * (1 - a) + (u * u * math.log(1 / a) if a > 0 else 0.0)


def test_profile_value():
    assert extremal(power(1)).profile(np.array([0.5]))[0] == pytest.approx(0.153426, abs=5e-7)


@pytest.mark.parametrize("omega,ref", [(power(1), phi_t), (power(2), phi_t2)])
def test_profile_closed_forms(omega, ref):
    phi = extremal(omega)
    u = np.array([-0.99, -0.5, -0.1, -1e-4, 0.0, 1e-6, 0.3, 0.75, 1.0, 1.5])
    want = np.array([ref(v) if abs(v) <= 1 else 0.0 for v in u])
    np.testing.assert_allclose(phi.profile(u), want, atol=1e-11)


@given(u=st.floats(-1.2, 1.2))
@settings(max_examples=30, deadline=None)
def test_profile_against_quadrature(u):
    om = powerlog(1, -0.5)
    phi = extremal(om)
    assert phi.profile(np.array([u]))[0] == pytest.approx(profile_by_quadrature(om, u), abs=1e-9)


def test_directional_function():
    e = np.array([0.6, 0.8])
    phi = extremal(power(1), e, (0.1, -0.2))
    x = np.array([[0.5, 0.1], [0.0, 0.0]])
    u = (x - [0.1, -0.2]) @ e
    np.testing.assert_allclose(phi(x), [phi_t(v) for v in u], atol=1e-11)


@pytest.mark.parametrize("omega", [power(1), power(2), powerlog(1, 1.0)])
def test_top_coefficient_identity(omega, rng):
    n = omega.order_n
    for _ in range(10):
        e = directions(1)[0] if rng.random() < 0.3 else rng.standard_normal(2)
        e = e / np.hypot(*e)
        Q = Cube(tuple(rng.uniform(-0.3, 0.3, 2)), float(rng.uniform(0.01, 0.3)))
        P = extremal_poly(omega, Q, e)
        assert P.gamma == pytest.approx(gamma_of(Q, e, (0, 0)))
        assert P.top == pytest.approx((-1) ** n * xi(omega, P.gamma), abs=1e-7)
        # the plane polynomial restricted to the line x = t e is P_gamma(t)
        t = np.linspace(-1, 1, 7)
        np.testing.assert_allclose(P.poly(t[:, None] * e), np.polyval(P.u_coeffs[::-1], t), atol=1e-10)


def test_gamma_out_of_range():
    with pytest.raises(GammaOutOfRange):
        extremal_poly(power(1), Cube((3.0, 0.0), 0.5))


@pytest.mark.parametrize("omega,bound", [(power(1), 10), (power(2), 60)])
def test_near_best_both_branches(omega, bound):
    r = near_best_experiment(omega, n_dir=8)
    assert r["branches"] == ["large", "small"]
    assert r["top_err"] < 1e-7
    assert 0 < r["constant"] < bound
    lo, hi = r["top_over_xi"]
    assert 0.5 < lo <= hi < 2


def test_coeff_growth_of_polynomial_is_flat():
    P = Polynomial.from_terms(2, 1, {(0, 0): 1.0, (1, 0): 2.0, (0, 1): -1.0})
    r = coeff_growth_experiment(P, "unit_square", power(1), (0.5, 0.5), 1 / 32, 3)
    assert r["increment_constant"] < 1e-8
    np.testing.assert_allclose(r["coeffs"][:, 1:], [[2.0, -1.0]] * 4, atol=1e-9)


def test_coeff_growth_of_extremal_bounded():
    om = power(1)
    phi = extremal(om, (1.0, 0.0), (0.5, 0.5))
    r = coeff_growth_experiment(phi, "unit_square", om, (0.5, 0.5), 1 / 64, 4)
    assert 0 < r["increment_constant"] < 10 and r["total_constant"] < 10


def test_lemma11_polynomial_is_trivial():
    K = kernel_builtin("beurling_re")
    P = lambda x: 1 + x[:, 0] - 0.5 * x[:, 1]
    r = lemma11_experiment(K, "disk", power(1), P, Cube((0.1, 0.05), 0.125))
    assert abs(r["I2"]) < 1e-12 and abs(r["I3"]) < 1e-12


def test_lemma11_needs_room():
    K = kernel_builtin("beurling_re")
    with pytest.raises(ParameterOutOfRange):
        lemma11_experiment(K, "disk", power(1), lambda x: x[:, 0], Cube((0.9, 0.0), 0.25))


@pytest.mark.slow
def test_lemma11_sweep_bounded():
    K = kernel_builtin("beurling_re")
    r = lemma11_sweep(K, "disk", power(1), levels=(3, 4))
    assert 0 < r["I2_max"] < 10 and 0 < r["I3_max"] < 1
    for row in r["rows"]:
        assert row["P3_consistency"] < 1e-10


def test_conditions_on_square():
    K = kernel_builtin("beurling_re")
    fam = dyadic_family("unit_square", 2, 3, mode="interior", shifts=False)
    rep = check_condition_i(K, "unit_square", power(1), 1, fam)
    assert rep.condition == "i"
    assert 0 < rep.sup < 1 and rep.stable
    assert rep.refinement["rel_change"] < 0.2
    assert rep.to_json()


def test_conditions_vanish_for_polynomial_fields():
    # the Beurling transform maps chi_disk P to a polynomial of the same degree
    K = kernel_builtin("beurling_re")
    reps = check_conditions(K, "disk", power(1), 1, levels=(2, 3))
    assert reps["i"].sup < 1e-10 and reps["ii"].sup < 1e-10


def test_empty_family():
    K = kernel_builtin("riesz1")
    fam = dyadic_family("unit_square", 2, 2, mode="interior", shifts=False)
    with pytest.raises(EmptyFamily):
        check_conditions(K, "unit_square", power(1), 1, fam.subset(np.zeros(len(fam), bool)))


def test_superfluous_factor_tracks_dini():
    fam = dyadic_family("disk", 2, 4, mode="interior", shifts=False)
    dini = superfluous_factor("disk", powerlog(1, -2.0), 1, fam)
    plain = superfluous_factor("disk", power(1), 1, fam)
    assert dini < plain
    assert dini == pytest.approx(1.0, abs=0.05)


def test_asymmetry_witness():
    r = asymmetry_witness(power(1))
    assert r["decreasing"] and r["ratio"][-1] < 0.05
    d = asymmetry_witness(powerlog(1, -2.0))
    assert d["ratio"][-1] > 0.3
