"""Independent reference integrals (scipy adaptive quadrature, polar
coordinates about the evaluation point) for the singular integral tests."""
import math

import numpy as np
from scipy.integrate import quad


def square_exit(y, th, lo=0.0, hi=1.0):
    u = (math.cos(th), math.sin(th))
    t = math.inf
    for k in range(2):
        if u[k] > 0:
            t = min(t, (hi - y[k]) / u[k])
        elif u[k] < 0:
            t = min(t, (lo - y[k]) / u[k])
    return t


def pv_square(Omega, f, y, lo=0.0, hi=1.0, kink_x=None):
    """PV int_{[lo,hi]^2} f(x) K(y - x) dx with K(z) = Omega(z/|z|)/|z|^2.

    Split as int (f(x) - f(y)) K(y - x) dx + f(y) PV int K(y - x) dx; the
    second term is ``int Omega(-u) log rho(theta) dtheta`` since Omega has
    zero mean on the circle.  ``kink_x``: f is only piecewise smooth across
    the vertical line x = kink_x."""
    y = np.asarray(y, dtype=float)
    fy = f(y)
    corners = [(lo, lo), (hi, lo), (hi, hi), (lo, hi)]
    brk = [math.atan2(c[1] - y[1], c[0] - y[0]) % (2 * math.pi) for c in corners]
    if kink_x is not None:
        # the kink line meets the boundary where the ray geometry changes
        brk += [math.atan2(c - y[1], kink_x - y[0]) % (2 * math.pi) for c in (lo, hi)]
    brk = sorted(brk)
    edges = [0.0] + brk + [2 * math.pi]

    def inner(th):
        u = np.array([math.cos(th), math.sin(th)])
        w = Omega(-u)
        rho = square_exit(y, th, lo, hi)
        pts = None
        if kink_x is not None and abs(u[0]) > 1e-15:
            rk = (kink_x - y[0]) / u[0]
            pts = [rk] if 0 < rk < rho else None
        reg, _ = quad(lambda r: (f(y + r * u) - fy) * w / r, 0.0, rho, epsabs=1e-14, epsrel=1e-13, limit=200,
                      points=pts)
        return reg + fy * w * math.log(rho)

    total = 0.0
    for a, b in zip(edges, edges[1:]):
        if b > a:
            v, _ = quad(inner, a, b, epsabs=1e-14, epsrel=1e-13, limit=200)
            total += v
    return total


OMEGA = {
    "beurling_re": lambda u: u[0] ** 2 - u[1] ** 2,
    "beurling_im": lambda u: 2 * u[0] * u[1],
    "riesz1": lambda u: u[0],
    "riesz2": lambda u: u[1],
}
