"""Experiments whose outcomes are frozen as goldens; shared by the
acceptance suite and ``tests/golden/freeze.py`` so both use the same
parameters."""
import numpy as np

from zlab.czop import kernel_builtin
from zlab.extension import prop3_experiment
from zlab.geometry import vertical_profile, whitney
from zlab.moduli import power
from zlab.polyapprox import random_polynomial
from zlab.tpcheck import directions, extremal, lemma11_sweep

WHITNEY_DOMAINS = ("unit_square", "disk", "lshape")
WHITNEY_DEPTH = 12
EXT_DOMAINS = ("unit_square", "lshape")
LEMMA11_MODULI = {"t": power(1), "t2": power(2)}
LEMMA11_KERNELS = ("beurling_re", "beurling_im")
LEMMA11_LEVELS = (3, 4, 5, 6)


def function_family(omega, D, seed=0):
    """phi_e in four directions, a square-root cusp and a random degree n+1
    polynomial, all centred in the domain."""
    n = omega.order_n
    c = (0.5, 0.5) if D != "lshape" else (0.25, 0.25)
    fs = {f"phi_{i}": extremal(omega, e, c) for i, e in enumerate(directions(4))}
    fs["cusp"] = lambda x: np.abs(x[:, 0] - c[0]) ** 0.5
    P = random_polynomial(np.random.default_rng(seed), 2, n + 1, center=c)
    fs["poly"] = P
    return fs


def vertical_counts(domain, depth=WHITNEY_DEPTH):
    W = whitney(domain, depth)
    return W, vertical_profile(W)


def extension_ratios(domain, omega=None):
    omega = omega or power(1)
    rows = prop3_experiment(function_family(omega, domain), domain, omega, omega.order_n, k_min=2, k_max=5,
                            max_per_level=512)
    return {r["function"]: r["ratio"] for r in rows}


def lemma11_constants(key, kernel):
    om = LEMMA11_MODULI[key]
    r = lemma11_sweep(kernel_builtin(kernel), "disk", om, levels=LEMMA11_LEVELS)
    return {"I2": [row["I2"] for row in r["rows"]], "I3": [row["I3"] for row in r["rows"]],
            "fnorm": r["fnorm"]}
