"""Extremal functions, coefficient-growth ladders, the three-part split of
T_D f on a cube, and the checkers for the two polynomial conditions.

The extremal profile is

    phi(u) = int_{|u|}^1 omega(t) t^(-n-1) (t - u)^n dt
           = sum_j C(n, j) (-u)^(n-j) M_j(|u|),   M_j(a) = int_a^1 omega(t) t^(j-n-1) dt.

In L = log(1/t) the moments are ``M_j = int_0^L g_j``, ``g_j(L) = omega(e^-L)
e^((n-j)L)``, a smooth integrand.  ``ExtremalFunction`` caches the
cumulative integrals of every ``g_j`` on a uniform L grid and finishes
each evaluation with a Gauss rule on the last cell, so the profile is
accurate to quadrature precision.
"""
import math
from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np

from . import czop
from .campanato import dyadic_family, seminorm
from .errors import EmptyFamily, GammaOutOfRange, ParameterOutOfRange
from .geometry import Cube, PolygonDomain, make_domain
from .moduli import xi
from .polyapprox import Polynomial, get_projector, multi_indices, project, sup_nodes
from .quadrature import cube_rule, integrate, leggauss

L_MAX = 60.0
L_STEP = 0.05
LEVELS = (3, 4, 5, 6, 7)


# ---------------------------------------------------------------------------
# extremal functions


class _Moments:
    """Cumulative tables of ``M_j(e^-L)`` for j = 0..n."""

    def __init__(self, omega, m=12):
        self.omega = omega
        self.n = omega.order_n
        self.grid = np.arange(0.0, L_MAX + L_STEP / 2, L_STEP)
        x, w = leggauss(m)
        self._x, self._w = x, w
        a, b = self.grid[:-1], self.grid[1:]
        nodes = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * x[None, :]
        self.table = np.zeros((self.n + 1, self.grid.size))
        for j in range(self.n + 1):
            cell = (self.g(j, nodes) * (0.5 * (b - a))[:, None]) @ w
            # log families may be singular at L = 0 (t = 1): grade the first cell
            cell[0] = self._first(j, L_STEP)
            self.table[j, 1:] = np.cumsum(cell)
        # tail beyond L_MAX only matters for M_n, which converges there
        self.tail_n = float(self.g(self.n, np.array([L_MAX]))[0]) / max(self.n, 1)

    def _first(self, j, L):
        if L <= 0:
            return 0.0
        pts = [L * 2.0 ** -k for k in range(1, 60)]
        val, _ = integrate(lambda v: self.g(j, v), 0.0, L, rtol=1e-13, atol=1e-300, points=pts)
        return val

    def g(self, j, L):
        return self.omega.xi_integrand_log(L) * np.exp(-j * np.asarray(L, dtype=float))

    def __call__(self, j, a):
        """``M_j(a)`` for 0 < a <= 1 (array)."""
        a = np.asarray(a, dtype=float)
        L = -np.log(np.clip(a, 1e-300, 1.0))
        Lc = np.minimum(L, L_MAX)
        i = np.minimum((Lc / L_STEP).astype(np.int64), self.grid.size - 2)
        lo = self.grid[i]
        # Gauss rule on the partial cell [lo, L]; in the first cell the
        # integrand may blow up at L = 0, those entries are redone below
        nodes = 0.5 * (lo + Lc)[..., None] + 0.5 * (Lc - lo)[..., None] * self._x
        with np.errstate(divide="ignore", invalid="ignore"):
            part = (self.g(j, nodes) * (0.5 * (Lc - lo))[..., None]) @ self._w
        out = self.table[j, i] + part
        first = np.flatnonzero(np.ravel(i == 0))
        if first.size:
            flat = np.array(out, dtype=float).reshape(-1)
            Lf = np.ravel(Lc)
            for q in first:
                flat[q] = self._first(j, float(Lf[q]))
            out = flat.reshape(np.shape(out))
        if np.any(L > L_MAX):
            extra = np.maximum(L - L_MAX, 0.0)
            nodes = L_MAX + 0.5 * extra[..., None] * (self._x + 1.0)
            out = out + (self.g(j, nodes) * (0.5 * extra)[..., None]) @ self._w
        return out

    def full(self, j):
        """``M_j(0)``; finite for j = n (the only case used)."""
        return float(self.table[j, -1]) + self.tail_n


@dataclass
class ExtremalFunction:
    omega: object
    e: np.ndarray
    x0: np.ndarray
    moments: _Moments = field(repr=False, default=None)

    def __post_init__(self):
        self.e = np.asarray(self.e, dtype=float)
        self.e = self.e / np.linalg.norm(self.e)
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.moments is None:
            self.moments = _Moments(self.omega)

    @property
    def n(self):
        return self.omega.order_n

    def profile(self, u):
        """phi(u); zero for |u| >= 1."""
        u = np.asarray(u, dtype=float)
        a = np.abs(u)
        inside = (a < 1.0) & (a > 0.0)
        ai = np.where(inside, a, 1.0)
        ui = np.where(inside, u, 0.0)
        n = self.n
        out = np.zeros(u.shape)
        for j in range(n + 1):
            out += comb(n, j) * (-ui) ** (n - j) * self.moments(j, ai)
        out = np.where(inside, out, 0.0)
        return np.where(a == 0.0, self.moments.full(n), out)

    def coordinate(self, x):
        return (np.atleast_2d(x) - self.x0) @ self.e

    def __call__(self, x):
        return self.profile(self.coordinate(x))

    def cuts(self, lo, hi):
        """Lines where phi_e is not smooth (u = 0, u = +-1), clipped to a box."""
        return [czop.line_cut(self.x0, self.e, c, lo, hi) for c in (-1.0, 0.0, 1.0)]


def extremal(omega, e=(1.0, 0.0), x0=(0.0, 0.0)):
    return ExtremalFunction(omega, e, x0)


def profile_by_quadrature(omega, u):
    """The defining integral of phi(u), directly (oracle for the tables)."""
    n = omega.order_n
    a = abs(u)
    if a >= 1:
        return 0.0

    def g(L):
        t = np.exp(-L)
        return omega.xi_integrand_log(L) * (t - u) ** n

    pts = [(-math.log(a)) * 2.0 ** -k for k in range(1, 40)] if a > 0 else None
    hi = -math.log(a) if a > 0 else 200.0
    val, _ = integrate(g, 0.0, hi, rtol=1e-12, atol=1e-15, points=pts)
    return val


@dataclass
class ExtremalPolynomial:
    cube: Cube
    gamma: float
    u_coeffs: np.ndarray     # P_gamma(u) = sum_m u_coeffs[m] u^m
    poly: Polynomial         # composed with u = <x - x0, e>, about x0
    e: np.ndarray
    x0: np.ndarray

    @property
    def top(self):
        return float(self.u_coeffs[-1])


def gamma_of(Q, e, x0):
    c = np.asarray(Q.center, dtype=float) - np.asarray(x0, dtype=float)
    e = np.asarray(e, dtype=float)
    return float(abs(c @ e) + 0.5 * Q.side * np.sum(np.abs(e)))


def compose_direction(u_coeffs, e, x0):
    """Polynomial in x for ``sum_m a_m <x - x0, e>^m``."""
    n = len(u_coeffs) - 1
    terms = {}
    for m, a in enumerate(u_coeffs):
        for i in range(m + 1):
            k = (i, m - i)
            terms[k] = terms.get(k, 0.0) + a * comb(m, i) * e[0] ** i * e[1] ** (m - i)
    return Polynomial.from_terms(2, n, terms, center=x0)


def extremal_poly(omega, Q, e=(1.0, 0.0), x0=(0.0, 0.0), phi=None):
    """``P_gamma(<x - x0, e>)`` with gamma the largest |<x - x0, e>| on Q."""
    e = np.asarray(e, dtype=float)
    e = e / np.linalg.norm(e)
    x0 = np.asarray(x0, dtype=float)
    g = gamma_of(Q, e, x0)
    if g >= 1.0:
        raise GammaOutOfRange(f"gamma = {g:.4g} must be < 1")
    mom = phi.moments if phi is not None else _Moments(omega)
    n = omega.order_n
    a = np.zeros(n + 1)
    for j in range(n + 1):
        a[n - j] = (-1) ** (n - j) * comb(n, j) * float(mom(j, np.array(g)))
    return ExtremalPolynomial(Q, g, a, compose_direction(a, e, x0), e, x0)


def directions(k=16):
    th = np.pi * np.arange(k) / k
    return np.stack([np.cos(th), np.sin(th)], 1)


def near_best_experiment(omega, x0=(0.0, 0.0), n_dir=16, sides=(2.0 ** -3, 2.0 ** -4, 2.0 ** -5),
                         offsets=(0.0, 0.5, 2.0, 6.0)):
    """Sup of ``||phi_e - P_{Q,e}||_inf(Q) / omega(l)`` over directions and
    cubes at several distances from x0 (both ``l < gamma/2`` and
    ``l >= gamma/2`` occur); also the top-coefficient identity error and
    ``|A| / xi(l)`` for cubes centred at x0."""
    x0 = np.asarray(x0, dtype=float)
    n = omega.order_n
    phi = extremal(omega, (1.0, 0.0), x0)
    nodes = sup_nodes(2)
    rows = []
    for e in directions(n_dir):
        phi_e = ExtremalFunction(omega, e, x0, phi.moments)
        for s in sides:
            for off in offsets:
                c = x0 + off * s * np.array([1.0, 0.3])
                Q = Cube(tuple(c), s)
                P = extremal_poly(omega, Q, e, x0, phi=phi_e)
                x = c + s * nodes
                err = float(np.max(np.abs(phi_e(x) - P.poly(x))))
                top_ref = (-1) ** n * xi(omega, P.gamma)
                rows.append({"e": e.tolist(), "side": s, "offset": off, "gamma": P.gamma,
                             "branch": "small" if s < 0.5 * P.gamma else "large",
                             "ratio": err / float(omega(s)),
                             "top": P.top, "top_err": abs(P.top - top_ref),
                             "top_over_xi": abs(P.top) / max(xi(omega, s), 1e-300)})
    ratios = np.array([r["ratio"] for r in rows])
    central = [r["top_over_xi"] for r in rows if r["offset"] == 0.0]
    return {"rows": rows, "constant": float(ratios.max()),
            "branches": sorted({r["branch"] for r in rows}),
            "top_err": max(r["top_err"] for r in rows),
            "top_over_xi": (float(min(central)), float(max(central)))}


def extremal_seminorm_sweep(omega, D="unit_disk", n_dir=16, k_min=2, k_max=6, x0=(0.0, 0.0),
                            max_per_level=256, seed=0):
    """Campanato seminorm (p = 1) of phi_e on D for each direction."""
    D = make_domain(D)
    phi = extremal(omega, (1.0, 0.0), x0)
    vals = []
    for e in directions(n_dir):
        f = ExtremalFunction(omega, e, x0, phi.moments)
        fam = dyadic_family(D, k_min, k_max, "all_inside", max_per_level=max_per_level,
                            focus=np.asarray(x0, dtype=float)[None, :], seed=seed)
        vals.append(seminorm(f, D, omega, omega.order_n, 1, fam).sup)
    return np.array(vals)


# ---------------------------------------------------------------------------
# coefficient growth along a cube ladder


def coeff_growth_experiment(f, D, omega, center, side0, levels, fnorm=1.0, ext=None, rtol=1e-8):
    """Projections on ``Q_i = 2^i Q_0`` (common centre), recentred there.

    Cubes that leave D use ``ext`` (an extension of f) when given.
    Returns per-level coefficients, the normalised increments
    ``|A_{k,2Q} - A_{k,Q}| l^|k| / (omega(l) ||f||)`` and the normalised
    totals ``|A_k| / ||f||`` (|k| < n) and ``|A_k| / (xi(l) ||f||)`` (|k| = n).
    """
    D = make_domain(D)
    n = omega.order_n
    idx = multi_indices(2, n)
    center = np.asarray(center, dtype=float)
    A, sides = [], []
    for i in range(levels + 1):
        s = side0 * 2.0 ** i
        Q = Cube(tuple(center), s)
        lo, hi = Q.lo, Q.hi
        _, crossed = D.box_dist(lo[None, :], hi[None, :])
        g = f if (not crossed[0] and D.contains(center[None, :])[0]) or ext is None else ext
        P = project(g, Q, n, rtol=rtol)
        A.append(P.recenter(center).coeffs)
        sides.append(s)
    A = np.array(A)
    sides = np.array(sides)
    deg = np.array([sum(k) for k in idx])
    w = np.asarray(omega(sides), dtype=float)
    inc = np.abs(A[1:] - A[:-1]) * sides[:-1, None] ** deg[None, :] / (w[:-1, None] * fnorm)
    xis = np.array([max(xi(omega, s), 1.0) if s < 1 else 1.0 for s in sides])
    tot = np.where(deg[None, :] == n, np.abs(A) / (xis[:, None] * fnorm), np.abs(A) / fnorm)
    return {"indices": idx, "sides": sides, "coeffs": A, "increments": inc, "totals": tot,
            "increment_constant": float(inc.max()) if inc.size else 0.0,
            "total_constant": float(tot.max())}


# ---------------------------------------------------------------------------
# the split f = f1 + f2 + f3 on a cube


def _square_domain(lo, side):
    lo = np.asarray(lo, dtype=float)
    v = np.array([lo, lo + [side, 0], lo + [side, side], lo + [0, side]])
    return PolygonDomain(v, name="2Q")


def _remainder_kernel(K, n, x0, xs):
    # u -> [K(x - u) - TK(x0 - u, x - x0)] for every x in xs: (M, len(xs))
    H = xs - x0

    def g(u):
        M = u.shape[0]
        Y = np.repeat(x0[None, :] - u, len(xs), axis=0)
        Hh = np.tile(H, (M, 1))
        out = K(Y + Hh) - K.taylor(Y, Hh, n)
        return out.reshape(M, len(xs))
    return g


def _taylor_moments(K, n, x0, f3, D, cuts, exclude, res):
    # int dK^k(x0 - u) f3(u) du / k! for every |k| <= n: coefficients of P_3 in h
    idx = multi_indices(2, n)

    def g(u):
        y = x0[None, :] - u
        fv = f3(u)
        return np.stack([K.derivative(y, k) * fv / (factorial(k[0]) * factorial(k[1])) for k in idx], 1)
    return idx, czop.region_integral(D, x0, g, cuts=cuts, exclude=exclude, res=res)


def lemma11_experiment(K, D, omega, f, Q, n=None, fnorm=1.0, cuts=None, m=6, res=1):
    """``I2 = mean_Q |T_D f2|`` and ``I3 = mean_Q |T_D f3 - P_3|`` for
    ``f2 = (f - P_Q) chi_2Q`` and ``f3 = (f - P_Q) chi_{D \\ 2Q}``, where
    ``P_3(x) = int_{D \\ 2Q} TK(x0 - u, x - x0) f3(u) du``; both divided by
    ``omega(l) ||f||``.  Means use an m x m Gauss rule on Q."""
    D = make_domain(D)
    n = omega.order_n if n is None else n
    x0 = np.asarray(Q.center, dtype=float)
    s = Q.side
    lo2 = x0 - s
    big = Cube(tuple(x0), 2 * s)
    _, crossed = D.box_dist(big.lo[None, :], big.hi[None, :])
    if crossed[0] or not D.contains(x0[None, :])[0]:
        raise ParameterOutOfRange("the doubled cube must lie inside the domain")
    P = project(f, Q, n, rtol=1e-9)

    def g(x):
        return np.asarray(f(x), dtype=float) - P(x)

    nodes, w = cube_rule(2, m)
    xs = x0 + s * nodes
    sq = _square_domain(lo2, 2 * s)
    t2 = np.array([czop.td_apply(K, sq, g, x, cuts=cuts, res=res).value for x in xs])
    exclude = (big.lo, big.hi)
    r3 = czop.region_integral(D, x0, lambda u: _remainder_kernel(K, n, x0, xs)(u) * g(u)[:, None],
                              cuts=cuts, exclude=exclude, res=res)
    scale = float(omega(s)) * fnorm
    # P_3 from its monomial coefficients against the direct Taylor sum
    idx, mom = _taylor_moments(K, n, x0, g, D, cuts, exclude, res)
    H = xs - x0
    p3_mono = np.array([sum(c * h[0] ** k[0] * h[1] ** k[1] for c, k in zip(mom, idx)) for h in H])

    def taylor_direct(u):
        M = u.shape[0]
        Y = np.repeat(x0[None, :] - u, len(xs), axis=0)
        Hh = np.tile(H, (M, 1))
        return K.taylor(Y, Hh, n).reshape(M, len(xs)) * g(u)[:, None]

    p3_dir = czop.region_integral(D, x0, taylor_direct, cuts=cuts, exclude=exclude, res=res)
    return {"side": s, "I2": float(np.abs(t2) @ w) / scale, "I3": float(np.abs(r3) @ w) / scale,
            "I2_raw": float(np.abs(t2) @ w), "I3_raw": float(np.abs(r3) @ w),
            "P3_coeffs": mom, "P3_consistency": float(np.max(np.abs(p3_mono - p3_dir)))}


def lemma11_sweep(K, D, omega, e=(1.0, 0.0), x0=(0.1, 0.05), levels=(3, 4, 5, 6), fnorm=None,
                  m=6, res=1):
    """The split on cubes of side 2^-k centred at x0 for f = phi_{e,x0}."""
    D = make_domain(D)
    phi = extremal(omega, e, x0)
    box = D.bounding_box
    cuts = phi.cuts(box.lo - 1.0, box.hi + 1.0)
    if fnorm is None:
        fnorm = float(extremal_seminorm_sweep(omega, D, n_dir=1, k_min=2, k_max=5, x0=x0)[0])
    rows = [lemma11_experiment(K, D, omega, phi, Cube(tuple(x0), 2.0 ** -k), fnorm=fnorm,
                               cuts=cuts, m=m, res=res) for k in levels]
    return {"fnorm": fnorm, "rows": rows,
            "I2_max": max(r["I2"] for r in rows), "I3_max": max(r["I3"] for r in rows)}


# ---------------------------------------------------------------------------
# condition checkers


@dataclass
class TPReport:
    condition: str
    records: list
    sup: float
    refinement: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    @property
    def stable(self):
        return bool(self.refinement.get("stable", True))

    def to_json(self):
        return {"condition": self.condition, "sup": self.sup, "refinement": self.refinement,
                "notes": self.notes, "records": self.records}


def domain_sup(P, D, h=0.01):
    """``sup_D |P|`` over an interior lattice plus a boundary sample."""
    D = make_domain(D)
    box = D.bounding_box
    k = int(math.ceil(box.side / h)) + 1
    ax = np.linspace(0.0, 1.0, k)
    g = box.lo + box.side * np.stack(np.meshgrid(ax, ax, indexing="ij"), -1).reshape(-1, 2)
    pts = np.concatenate([g[D.contains(g)], D.boundary_sample(h)])
    return float(np.max(np.abs(P(pts))))


def _cubic_weights(t):
    # Lagrange weights on the stencil -1, 0, 1, 2
    return np.stack([-t * (t - 1) * (t - 2) / 6, (t + 1) * (t - 1) * (t - 2) / 2,
                     -(t + 1) * t * (t - 2) / 2, (t + 1) * t * (t - 1) / 6], -1)


@dataclass
class GridFields:
    """``T_D((x - c)^k chi_D)`` for every |k| <= n on a grid of spacing h,
    with local tensor-cubic interpolation."""
    h: float
    origin: np.ndarray
    shape: tuple
    values: np.ndarray      # (nx, ny, nb), NaN where not computed
    center: np.ndarray
    n: int
    err: float

    def __call__(self, x):
        x = np.atleast_2d(x)
        q = (x - self.origin) / self.h
        i = np.floor(q).astype(np.int64)
        t = q - i
        wx = _cubic_weights(t[:, 0])
        wy = _cubic_weights(t[:, 1])
        out = np.zeros((x.shape[0], self.values.shape[2]))
        for a in range(4):
            for b in range(4):
                ii = np.clip(i[:, 0] + a - 1, 0, self.shape[0] - 1)
                jj = np.clip(i[:, 1] + b - 1, 0, self.shape[1] - 1)
                out += (wx[:, a] * wy[:, b])[:, None] * self.values[ii, jj]
        return out


def _stencil_nodes(lo, hi, origin, h):
    a = np.floor((lo - origin) / h).astype(np.int64) - 1
    b = np.floor((hi - origin) / h).astype(np.int64) + 2
    return a, b


def resolvable(family, D, h, margin=2.0):
    """Mask of family cubes whose interpolation stencils stay ``margin * h``
    away from the boundary (fields of T_D may blow up there)."""
    D = make_domain(D)
    box = D.bounding_box
    origin = box.lo - 2 * h
    keep = np.zeros(len(family), dtype=bool)
    for q, (c, s) in enumerate(zip(family.centers, family.sides)):
        a, b = _stencil_nodes(c - s / 2, c + s / 2, origin, h)
        pts = origin + h * np.array([[a[0], a[1]], [b[0], a[1]], [a[0], b[1]], [b[0], b[1]]])
        lo, hi = pts.min(0), pts.max(0)
        dist, crossed = D.box_dist(lo[None, :], hi[None, :])
        keep[q] = (not crossed[0]) and bool(D.contains(c[None, :])[0]) and dist[0] > margin * h
    return keep


def grid_fields(K, D, n, h, family, rsafe_frac=0.5, res=1):
    D = make_domain(D)
    box = D.bounding_box
    origin = box.lo - 2 * h
    size = int(math.ceil((box.side + 4 * h) / h)) + 1
    center = np.asarray(box.center, dtype=float)
    need = np.zeros((size, size), dtype=bool)
    for c, s in zip(family.centers, family.sides):
        a, b = _stencil_nodes(c - s / 2, c + s / 2, origin, h)
        need[max(a[0], 0):b[0] + 1, max(a[1], 0):b[1] + 1] = True
    ij = np.argwhere(need)
    pts = origin + h * ij
    idx = multi_indices(2, n)
    basis = [Polynomial.from_terms(2, n, {k: 1.0}, center=center) for k in idx]
    vals = np.full((size, size, len(idx)), np.nan)
    err = 0.0
    ok = D.contains(pts)
    for (i, j), y, inside in zip(ij, pts, ok):
        if not inside:
            continue
        v, e = czop.td_poly_field(K, D, basis, y[None, :], rsafe_frac=rsafe_frac, res=res)
        vals[i, j] = v[0]
        err = max(err, float(np.max(e)))
    return GridFields(h, origin, (size, size), vals, center, n, err)


def _osc_rows(F, B, w):
    # mean |F - P_Q F| per cube for values F (K, N) on a fixed rule
    C = (F * w[None, :]) @ B
    return np.abs(F - C @ B.T) @ w


def _shift_coeffs(k, x0, center):
    """Coefficients of (x - x0)^k in the basis (x - center)^j, |j| <= |k|."""
    dlt = np.asarray(center, dtype=float) - np.asarray(x0, dtype=float)
    out = {}
    for i in range(k[0] + 1):
        for j in range(k[1] + 1):
            out[(i, j)] = comb(k[0], i) * comb(k[1], j) * dlt[0] ** (k[0] - i) * dlt[1] ** (k[1] - j)
    return out


def _evaluate(fields_pair, family, n, m):
    proj = get_projector(2, n)
    nodes, w = cube_rule(2, m)
    B = proj.basis(nodes)
    pts = family.centers[:, None, :] + family.sides[:, None, None] * nodes[None, :, :]
    out = []
    for G in fields_pair:
        V = G(pts.reshape(-1, 2)).reshape(len(family), nodes.shape[0], -1)
        out.append(V)
    return out, B, w


def _condition_records(cond, V, B, w, family, omega, D, n, assoc=None):
    idx = multi_indices(2, n)
    center = np.asarray(make_domain(D).bounding_box.center, dtype=float)
    recs = []
    if cond == "i":
        norms = [domain_sup(Polynomial.from_terms(2, n, {k: 1.0}, center=center), D) for k in idx]
        for b, k in enumerate(idx):
            osc = _osc_rows(V[:, :, b], B, w)
            r = osc / (np.asarray(omega(family.sides), dtype=float) * norms[b])
            recs.append((k, r))
    else:
        top = [k for k in idx if sum(k) == n]
        pos = {k: i for i, k in enumerate(idx)}
        wt = np.asarray(assoc(family.sides), dtype=float)
        for k in top:
            F = np.zeros(V.shape[:2])
            norm = np.zeros(len(family))
            for q, x0 in enumerate(family.centers):
                for j, c in _shift_coeffs(k, x0, center).items():
                    F[q] += c * V[q, :, pos[j]]
                norm[q] = domain_sup(Polynomial.from_terms(2, n, {k: 1.0}, center=x0), D, h=0.02)
            recs.append((k, _osc_rows(F, B, w) / (norm * wt)))
    return recs


def _assoc(omega):
    def f(s):
        s = np.asarray(s, dtype=float)
        return np.array([float(omega(v)) / max(1.0, xi(omega, v)) for v in s.ravel()]).reshape(s.shape)
    return f


def check_conditions(K, D, omega, n=None, family=None, h=None, m=None, res=1, conditions=("i", "ii"),
                     levels=(2, 4), h_fine=None):
    """Both polynomial conditions at grid spacings h and h_fine (default h/2).

    Fields of the global monomials about the domain centre are computed
    once per spacing; the centred polynomials of the second condition are
    recombined from them.  The default h is half the smallest cube side;
    cubes whose interpolation stencils leave D are dropped.  Returns
    {condition: TPReport}.
    """
    D = make_domain(D)
    n = omega.order_n if n is None else n
    if family is None:
        family = dyadic_family(D, levels[0], levels[1], "interior", shifts=False)
    if h is None:
        h = 0.5 * float(np.min(family.sides)) if len(family) else D.bounding_box.side / 16
    family = family.subset(resolvable(family, D, h))
    if len(family) == 0:
        raise EmptyFamily("no cube of the family is resolved by the grid")
    m = m or n + 3
    G1 = grid_fields(K, D, n, h, family, res=res)
    h_fine = h / 2 if h_fine is None else h_fine
    G2 = grid_fields(K, D, n, h_fine, family, res=res)
    (V1, V2), B, w = _evaluate((G1, G2), family, n, m)
    assoc = _assoc(omega)
    out = {}
    for cond in conditions:
        sups = []
        per = []
        for V in (V1, V2):
            recs = _condition_records(cond, V, B, w, family, omega, D, n, assoc)
            per.append(recs)
            sups.append(max(float(np.max(r)) for _, r in recs))
        records = []
        for (k, r) in per[1]:
            for q in range(len(family)):
                records.append({"center": family.centers[q].tolist(), "side": float(family.sides[q]),
                                "basis": list(k), "residual": float(r[q])})
        rel = abs(sups[1] - sups[0]) / max(abs(sups[1]), 1e-300) if sups[1] > 1e-12 else 0.0
        out[cond] = TPReport(cond, records, sups[1],
                             {"h": h, "h_fine": h_fine, "sup_h": sups[0], "sup_h2": sups[1], "rel_change": rel,
                              "stable": bool(rel < 0.2)},
                             {"norm": "sup over D", "cubes": len(family),
                              "field_err": max(G1.err, G2.err), "kernel": K.name})
    return out


def superfluous_factor(D, omega, n, family):
    """Bound B with ``sup (ii) <= B * sup (i)``: the recentred monomials are
    combinations of the global ones, so B is the largest
    ``(omega / omega~)(l) * sum_j |c_j| ||(x-c)^j|| / ||(x-x0)^k||``.
    B stays bounded exactly when omega / omega~ does (Dini regularity)."""
    D = make_domain(D)
    center = np.asarray(D.bounding_box.center, dtype=float)
    idx = multi_indices(2, n)
    norms = {k: domain_sup(Polynomial.from_terms(2, n, {k: 1.0}, center=center), D) for k in idx}
    assoc = _assoc(omega)
    best = 0.0
    for x0, s in zip(family.centers, family.sides):
        ratio = float(omega(s)) / float(assoc(np.array([s]))[0])
        for k in (k for k in idx if sum(k) == n):
            num = sum(abs(c) * norms[j] for j, c in _shift_coeffs(k, x0, center).items())
            den = domain_sup(Polynomial.from_terms(2, n, {k: 1.0}, center=x0), D, h=0.02)
            best = max(best, ratio * num / den)
    return best


def check_condition_i(K, D, omega, n=None, family=None, **kw):
    return check_conditions(K, D, omega, n, family, conditions=("i",), **kw)["i"]


def check_condition_ii(K, D, omega, n=None, family=None, **kw):
    return check_conditions(K, D, omega, n, family, conditions=("ii",), **kw)["ii"]


def asymmetry_witness(omega, levels=range(2, 41, 2)):
    """``omega~(l) / omega(l)`` along l = 2^-k; decreasing to 0 when omega
    is not Dini-regular."""
    ls = np.array([2.0 ** -k for k in levels])
    r = np.array([1.0 / max(1.0, xi(omega, s)) for s in ls])
    return {"sides": ls, "ratio": r, "decreasing": bool(np.all(np.diff(r) <= 1e-15))}
