"""Polynomials of bounded total degree and the L2 projector on cubes.

Coefficients are stored against multi-indices in graded lexicographic
order: by total degree, then lexicographically descending, so in two
variables ``1, x, y, x^2, xy, y^2, ...``.
"""
from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from math import comb, sqrt

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.optimize import minimize

from .errors import DegenerateCube, NotNested, QuadratureFailure
from .quadrature import cube_rule, integrate_box, lattice

PROJ_RTOL = 1e-9


@lru_cache(maxsize=None)
def multi_indices(d, n):
    out = []
    for deg in range(n + 1):
        layer = [k for k in product(range(deg + 1), repeat=d) if sum(k) == deg]
        out += sorted(layer, reverse=True)
    return tuple(out)


def _as_points(x, d):
    x = np.asarray(x, dtype=float)
    if d == 1 and x.ndim <= 1:
        return x.reshape(-1, 1)
    return np.atleast_2d(x)


def monomials(x, d, n):
    """Values of all monomials ``x^k`` (|k| <= n) at points x: (N, nb)."""
    x = _as_points(x, d)
    idx = np.array(multi_indices(d, n))
    out = np.ones((x.shape[0], idx.shape[0]))
    for v in range(d):
        pw = np.ones((x.shape[0], n + 1))
        for j in range(1, n + 1):
            pw[:, j] = pw[:, j - 1] * x[:, v]
        out *= pw[:, idx[:, v]]
    return out


@dataclass
class Polynomial:
    d: int
    n: int
    center: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(self.d)
        self.coeffs = np.asarray(self.coeffs, dtype=float).reshape(len(multi_indices(self.d, self.n)))

    @classmethod
    def zero(cls, d, n, center=None):
        return cls(d, n, np.zeros(d) if center is None else center, np.zeros(len(multi_indices(d, n))))

    @classmethod
    def from_terms(cls, d, n, terms, center=None):
        """From ``{multi-index: coefficient}``."""
        P = cls.zero(d, n, center)
        pos = {k: i for i, k in enumerate(multi_indices(d, n))}
        for k, a in terms.items():
            k = (k,) if isinstance(k, int) else tuple(k)
            P.coeffs[pos[k]] += a
        return P

    @property
    def indices(self):
        return multi_indices(self.d, self.n)

    def coeff(self, k):
        k = (k,) if isinstance(k, int) else tuple(k)
        return float(self.coeffs[self.indices.index(k)])

    def __call__(self, x):
        x = _as_points(x, self.d)
        return monomials(x - self.center, self.d, self.n) @ self.coeffs

    def eval_horner(self, x):
        """Nested Horner evaluation (first variable outermost)."""
        x = _as_points(x, self.d) - self.center
        table = dict(zip(self.indices, self.coeffs))

        def rec(prefix, var):
            if var == self.d:
                return np.full(x.shape[0], table.get(prefix, 0.0))
            used = sum(prefix)
            acc = np.zeros(x.shape[0])
            for j in range(self.n - used, -1, -1):
                acc = acc * x[:, var] + rec(prefix + (j,), var + 1)
            return acc

        return rec((), 0)

    def recenter(self, new_center):
        new_center = np.asarray(new_center, dtype=float).reshape(self.d)
        delta = new_center - self.center
        idx = self.indices
        out = np.zeros_like(self.coeffs)
        for i, k in enumerate(idx):
            a = self.coeffs[i]
            if a == 0.0:
                continue
            for j_pos, j in enumerate(idx):
                if all(jj <= kk for jj, kk in zip(j, k)):
                    f = 1.0
                    for jj, kk, dd in zip(j, k, delta):
                        f *= comb(kk, jj) * dd ** (kk - jj)
                    out[j_pos] += a * f
        return Polynomial(self.d, self.n, new_center, out)

    def __add__(self, other):
        other = other.recenter(self.center) if not np.array_equal(other.center, self.center) else other
        if other.n != self.n:
            raise ValueError("degree bounds differ")
        return Polynomial(self.d, self.n, self.center, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return self + other * -1.0

    def __mul__(self, c):
        return Polynomial(self.d, self.n, self.center, self.coeffs * float(c))

    __rmul__ = __mul__

    def homogeneous_part(self, m):
        mask = np.array([sum(k) == m for k in self.indices])
        return Polynomial(self.d, self.n, self.center, np.where(mask, self.coeffs, 0.0))

    def to_json(self):
        return {"d": self.d, "n": self.n, "center": self.center.tolist(),
                "coeffs": [[list(k), float(a)] for k, a in zip(self.indices, self.coeffs)]}

    @classmethod
    def from_json(cls, obj):
        return cls.from_terms(obj["d"], obj["n"], {tuple(k): a for k, a in obj["coeffs"]},
                              obj["center"])


def taylor_recenter(P, x0):
    return P.recenter(x0)


# ---------------------------------------------------------------------------
# projector


class Projector:
    """L2(Q0) orthogonal projector onto P_n, Q0 = [-1/2, 1/2]^d.

    The orthonormal basis is the tensor product of ``sqrt(2m+1) P_m(2x)``
    restricted to total degree <= n, which spans P_n.  ``to_mono`` maps
    basis coefficients to monomial coefficients about the centre.
    """

    def __init__(self, d, n):
        self.d, self.n = d, n
        self.indices = multi_indices(d, n)
        nb = len(self.indices)
        # 1-D orthonormal Legendre in monomial form: row m = coefficients of phi_m
        one_d = np.zeros((n + 1, n + 1))
        for m in range(n + 1):
            c = np.zeros(m + 1)
            c[m] = sqrt(2 * m + 1)
            mono = npleg.leg2poly(c)  # in the variable s = 2x
            one_d[m, :m + 1] = mono * 2.0 ** np.arange(m + 1)
        self.one_d = one_d
        pos = {k: i for i, k in enumerate(self.indices)}
        M = np.zeros((nb, nb))
        for col, k in enumerate(self.indices):
            for j in product(*[range(ki + 1) for ki in k]):
                v = 1.0
                for ji, ki in zip(j, k):
                    v *= one_d[ki, ji]
                M[pos[j], col] = v
        self.to_mono = M

    def basis(self, xhat):
        xhat = _as_points(xhat, self.d)
        vals = np.stack([xhat ** p for p in range(self.n + 1)], axis=-1) @ self.one_d.T  # (N, d, n+1)
        out = np.ones((xhat.shape[0], len(self.indices)))
        for col, k in enumerate(self.indices):
            for i, ki in enumerate(k):
                out[:, col] *= vals[:, i, ki]
        return out


@lru_cache(maxsize=None)
def get_projector(d, n):
    return Projector(d, n)


def _cube_of(Q):
    if Q.side <= 0:
        raise DegenerateCube(f"cube side must be positive, got {Q.side}")
    return np.asarray(Q.center, dtype=float), float(Q.side)


def _poly_from_basis(proj, c, center, side):
    a = proj.to_mono @ c
    scale = np.array([side ** -sum(k) for k in proj.indices])
    return Polynomial(proj.d, proj.n, center, a * scale)


def project(f, Q, n, rtol=PROJ_RTOL, m0=None, max_m=64, adaptive="auto"):
    """Orthogonal projection of ``f`` onto P_n in L2(Q).

    Tensor Gauss-Legendre with ``m0 >= n + 5`` nodes per axis, doubled
    until the basis coefficients settle to ``rtol``; if they do not (kinks,
    jumps, domain masks) the coefficients are computed by adaptive dyadic
    quadrature instead.  ``f`` maps (N, d) points to (N,) values.
    """
    center, side = _cube_of(Q)
    d = len(center)
    proj = get_projector(d, n)

    def fx(xhat):
        v = np.asarray(f(center + side * xhat), dtype=float).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise QuadratureFailure("integrand is not finite at a quadrature node")
        return v

    m = m0 or n + 5
    prev = None
    while adaptive != "always" and m <= max_m:
        nodes, w = cube_rule(d, m)
        c = proj.basis(nodes).T @ (w * fx(nodes))
        if prev is not None:
            scale = max(float(np.max(np.abs(c))), 1e-300)
            if np.max(np.abs(c - prev)) <= rtol * scale:
                return _poly_from_basis(proj, c, center, side)
        prev = c
        m *= 2
    if adaptive is False:
        raise QuadratureFailure("tensor rule did not converge")

    def g(xh):
        return proj.basis(xh) * fx(xh)[:, None]

    c, _ = integrate_box(g, -0.5 * np.ones(d), 1.0, rtol=rtol, atol=1e-13,
                         max_level=30 if d == 1 else 12)
    return _poly_from_basis(proj, c, center, side)


def project_batch(f, centers, sides, n, m=None, panels=1):
    """Projections on many cubes with one fixed composite rule.

    Returns ``(mono, C, F, B, w)``: monomial coefficients about each
    centre (K, nb), orthonormal-basis coefficients (K, nb), f at the nodes
    (K, N), the basis table of the rule (N, nb) and its weights (N,).
    Residuals at the nodes are ``F - C @ B.T``.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    sides = np.asarray(sides, dtype=float).reshape(-1)
    K, d = centers.shape
    proj = get_projector(d, n)
    nodes, w = cube_rule(d, m or n + 6, panels)
    pts = centers[:, None, :] + sides[:, None, None] * nodes[None, :, :]
    F = np.asarray(f(pts.reshape(-1, d)), dtype=float).reshape(K, -1)
    B = proj.basis(nodes)
    C = (F * w[None, :]) @ B
    scale = np.array([[s ** -sum(k) for k in proj.indices] for s in sides])
    mono = (C @ proj.to_mono.T) * scale
    return mono, C, F, B, w


# ---------------------------------------------------------------------------
# norms


def _mean_abs_pow(g, Q, p, rtol=1e-10):
    center, side = _cube_of(Q)
    d = len(center)

    def h(xh):
        return np.abs(g(center + side * xh)) ** p

    val, _ = integrate_box(h, -0.5 * np.ones(d), 1.0, rtol=rtol, atol=1e-15,
                           max_level=40 if d == 1 else 12)
    return float(val[0])


def sup_nodes(d, m=12, panels=4, k=33):
    nodes, _ = cube_rule(d, m, panels)
    return np.concatenate([nodes, lattice(d, k)])


def lp_dist(f, P, Q, p=1):
    """``(mean_Q |f - P|^p)^(1/p)``; p = inf is the max over a composite
    Gauss rule plus a closed lattice including the corners."""
    center, side = _cube_of(Q)
    d = len(center)

    def g(x):
        return np.asarray(f(x), dtype=float).reshape(-1) - P(x)

    if p == np.inf or p == "inf":
        x = center + side * sup_nodes(d)
        return float(np.max(np.abs(g(x))))
    p = float(p)
    return _mean_abs_pow(g, Q, p) ** (1.0 / p)


def poly_sup(P, Q):
    """sup |P| over the closed cube: dense lattice, then local polishing
    (exact critical points in one variable)."""
    center, side = _cube_of(Q)
    d = len(center)
    lo, hi = center - 0.5 * side, center + 0.5 * side
    if d == 1:
        q = np.polynomial.Polynomial(P.coeffs)
        crit = q.deriv().roots() if P.n > 1 else np.array([])
        crit = crit[np.abs(crit.imag) < 1e-12].real + P.center[0]
        xs = np.concatenate([[lo[0], hi[0]], crit[(crit >= lo[0]) & (crit <= hi[0])]])
        return float(np.max(np.abs(P(xs))))
    x = center + side * lattice(d, 65)
    v = np.abs(P(x))
    best = float(v.max())
    for i in np.argsort(v)[-5:]:
        r = minimize(lambda z: -abs(P(z[None, :])[0]), x[i], bounds=list(zip(lo, hi)),
                     method="L-BFGS-B")
        best = max(best, -float(r.fun))
    return best


def poly_mean_abs(P, Q):
    return _mean_abs_pow(P, Q, 1.0)


def poly_sup_bound(P, Q):
    """``(sup_Q |P|, sup_Q |P| / mean_Q |P|)``; the ratio is 1 for P = 0."""
    s = poly_sup(P, Q)
    mean = poly_mean_abs(P, Q)
    return s, (s / mean if mean > 0 else 1.0)


def coeff_sum(P, Q):
    """``sum |a_k| l^|k|`` with P expanded about the centre of Q."""
    center, side = _cube_of(Q)
    a = P.recenter(center).coeffs
    return float(np.sum(np.abs(a) * np.array([side ** sum(k) for k in P.indices])))


def rescaling_ratio(P, Q1, Q2):
    """``(mean_Q2 |P| / mean_Q1 |P|) / (l2/l1)^n``; NaN for P = 0 on Q1."""
    if not (Q1.is_inside(Q2)):
        raise NotNested(f"{Q1} is not contained in {Q2}")
    m1 = poly_mean_abs(P, Q1)
    m2 = poly_mean_abs(P, Q2)
    if m1 == 0:
        return float("nan")
    return (m2 / m1) / (Q2.side / Q1.side) ** P.n


def random_polynomial(rng, d, n, center=None, scale=1.0):
    nb = len(multi_indices(d, n))
    return Polynomial(d, n, np.zeros(d) if center is None else center, scale * rng.standard_normal(nb))
