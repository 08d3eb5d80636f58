"""Homogeneous Calderon-Zygmund kernels on the plane and principal-value
quadrature of the restricted operator.

Built-in kernels are finite sums ``Re sum c z^a conj(z)^b`` with
``a + b = -2``, which makes derivatives of every order closed-form: the
directional derivative along ``h`` is ``eta d/dz + conj(eta) d/dzbar``
with ``eta = h1 + i h2``.

Principal values use polar coordinates about the evaluation point y.
Each ray is cut at the boundary crossings, at user-supplied break lines
(kinks or jumps of the integrand), at the regularisation radius and at
the epsilon-ladder radii; every piece gets a Gauss rule (in log(rho)
away from y).  Inside the ball ``B(y, r)`` the integrand is
``(f(x) - f(y)) K(y - x)``, which removes the singular part because the
kernel has zero mean on circles.
"""
import math
from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np
from scipy.stats import qmc

from . import kernels as _k
from .errors import PointTooCloseToBoundary, RatioViolated, UnknownKernel
from .geometry import make_domain
from .polyapprox import monomials
from .quadrature import leggauss

LADDER = 6
FD_STEP = 1e-4


def _falling(a, k):
    out = 1.0
    for i in range(k):
        out *= a - i
    return out


def _zmono(z, a, b):
    # z^a conj(z)^b = r^(a+b) e^{i(a-b) theta} (principal branch)
    r = np.abs(z)
    th = np.angle(z)
    return r ** (a + b) * np.exp(1j * (a - b) * th)


@dataclass
class CZKernel:
    name: str
    parity: str
    terms: list = None            # [(c, a, b), ...]; None for generic kernels
    omega: object = None          # unit-vector evaluator for generic kernels
    smoothness: int = 100
    d: int = 2
    fd_step: float = FD_STEP

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.terms is None:
            r = np.hypot(x[:, 0], x[:, 1])
            return self.omega(x / r[:, None]) / r ** self.d
        z = x[:, 0] + 1j * x[:, 1]
        acc = np.zeros(z.shape, dtype=complex)
        for c, a, b in self.terms:
            acc += c * _zmono(z, a, b)
        return acc.real

    def Omega(self, u):
        u = np.atleast_2d(np.asarray(u, dtype=float))
        u = u / np.hypot(u[:, 0], u[:, 1])[:, None]
        return self(u)

    def directional(self, y, h, j):
        """``(h . grad)^j K`` at y; rows of y and h are paired (broadcast)."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        h = np.atleast_2d(np.asarray(h, dtype=float))
        y, h = np.broadcast_arrays(y, h)
        if j == 0:
            return self(y)
        if self.terms is None:
            return self._fd_directional(y, h, j)
        z = y[:, 0] + 1j * y[:, 1]
        eta = h[:, 0] + 1j * h[:, 1]
        acc = np.zeros(z.shape, dtype=complex)
        for c, a, b in self.terms:
            for i in range(j + 1):
                coef = comb(j, i) * _falling(a, i) * _falling(b, j - i)
                if coef == 0.0:
                    continue
                acc += c * coef * eta ** i * np.conj(eta) ** (j - i) * _zmono(z, a - i, b - (j - i))
        return acc.real

    def derivative(self, y, k):
        """Mixed partial ``d^k K`` for a multi-index k = (k1, k2)."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        k1, k2 = k
        if self.terms is None:
            return self._fd_mixed(y, k1, k2)
        # (dz + dzb)^k1 (i dz - i dzb)^k2
        ops = {}
        for p in range(k1 + 1):
            for q in range(k2 + 1):
                c = comb(k1, p) * comb(k2, q) * (1j) ** k2 * (-1) ** (k2 - q)
                key = (p + q, k1 - p + k2 - q)
                ops[key] = ops.get(key, 0) + c
        z = y[:, 0] + 1j * y[:, 1]
        acc = np.zeros(z.shape, dtype=complex)
        for c, a, b in self.terms:
            for (i, jj), oc in ops.items():
                coef = _falling(a, i) * _falling(b, jj)
                if coef != 0.0 and oc != 0:
                    acc += c * oc * coef * _zmono(z, a - i, b - jj)
        return acc.real

    def _fd_directional(self, y, h, j):
        # central differences of t -> K(y + t h) with step |y| * fd_step / |h|
        hn = np.hypot(h[:, 0], h[:, 1])
        hn = np.where(hn > 0, hn, 1.0)
        dt = self.fd_step * np.hypot(y[:, 0], y[:, 1]) / hn
        acc = np.zeros(y.shape[0])
        for i in range(j + 1):
            off = (j / 2.0 - i) * dt
            acc += (-1) ** i * comb(j, i) * self(y + off[:, None] * h)
        return acc / dt ** j

    def _fd_mixed(self, y, k1, k2):
        dt = self.fd_step * np.hypot(y[:, 0], y[:, 1])
        acc = np.zeros(y.shape[0])
        for i in range(k1 + 1):
            for j in range(k2 + 1):
                off = np.stack([(k1 / 2.0 - i) * dt, (k2 / 2.0 - j) * dt], 1)
                acc += (-1) ** (i + j) * comb(k1, i) * comb(k2, j) * self(y + off)
        return acc / dt ** (k1 + k2)

    def taylor(self, y, h, n):
        """``sum_{j<=n} (h . grad)^j K(y) / j!``."""
        out = 0.0
        for j in range(n + 1):
            out = out + self.directional(y, h, j) / factorial(j)
        return out


_BUILTIN = {
    "beurling_re": ("even", [(0.5, -2.0, 0.0), (0.5, 0.0, -2.0)]),
    "beurling_im": ("even", [(0.5j, -2.0, 0.0), (-0.5j, 0.0, -2.0)]),
    "riesz1": ("odd", [(0.5, -0.5, -1.5), (0.5, -1.5, -0.5)]),
    "riesz2": ("odd", [(-0.5j, -0.5, -1.5), (0.5j, -1.5, -0.5)]),
}


def kernel_builtin(name):
    """Kernels ``Omega(x)/|x|^2`` with Omega = x1/|x|, x2/|x| (riesz1/2),
    (x1^2 - x2^2)/|x|^2 (beurling_re) and 2 x1 x2/|x|^2 (beurling_im)."""
    if name not in _BUILTIN:
        raise UnknownKernel(f"unknown kernel {name!r}; choose from {sorted(_BUILTIN)}")
    parity, terms = _BUILTIN[name]
    return CZKernel(name, parity, terms=list(terms))


def kernel_from_omega(omega, name="custom", parity="even", d=2):
    """Generic kernel from a degree-0 profile on unit vectors; derivatives
    by central finite differences."""
    return CZKernel(name, parity, terms=None, omega=omega, d=d)


def sphere_mean(K, m=256):
    th = 2 * np.pi * np.arange(m) / m
    return float(np.mean(K.Omega(np.stack([np.cos(th), np.sin(th)], 1))) * 2 * np.pi)


def homogeneity_defect(K, rng, samples=200):
    """Max relative defect of ``K(lam x) = lam^-d K(x)``."""
    x = rng.standard_normal((samples, 2))
    lam = np.exp(rng.uniform(-3, 3, samples))
    a = K(lam[:, None] * x)
    b = K(x) * lam ** -K.d
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))


def derivative_bound(K, j, rng, samples=2000):
    """Measured ``sup |grad^j K(y)| |y|^(d+j)`` (norm over unit directions)."""
    y = rng.standard_normal((samples, 2))
    ny = np.hypot(y[:, 0], y[:, 1])
    best = 0.0
    for th in np.linspace(0, np.pi, 24, endpoint=False):
        h = np.array([math.cos(th), math.sin(th)])
        v = np.abs(K.directional(y, h, j)) * ny ** (K.d + j)
        best = max(best, float(v.max()))
    return best


def kernel_taylor(K, y, h, n):
    y = np.atleast_2d(np.asarray(y, dtype=float))
    h = np.atleast_2d(np.asarray(h, dtype=float))
    if np.any(np.hypot(h[:, 0], h[:, 1]) >= 0.5 * np.hypot(y[:, 0], y[:, 1])):
        raise RatioViolated("kernel Taylor expansion needs |h| < |y|/2")
    v = K.taylor(y, h, n)
    return float(v[0]) if v.size == 1 else v


def taylor_remainder_constant(K, n, rng, samples=1000):
    """Max of ``|K(y+h) - TK(y,h)| |y|^(n+1+d) / |h|^(n+1)`` over pairs with
    |h| < |y|/2.

    The ratio is scale invariant, so it only depends on |h|/|y| and the two
    angles; those are drawn from a scrambled Sobol sequence (seeded from
    ``rng``), |y| at random.  The ratio is kept in [0.05, 0.5), denser near
    the edge where the sup sits; below that the remainder is round-off."""
    m = max(int(math.ceil(math.log2(samples))), 1)     # rounded up to a power of two
    u = qmc.Sobol(3, scramble=True, seed=rng).random_base2(m)
    samples = u.shape[0]
    ty, th = 2 * np.pi * u[:, 0], 2 * np.pi * u[:, 1]
    ny = np.exp(rng.uniform(-2, 2, samples))
    hr = ny * (0.5 - 0.45 * u[:, 2] ** 2)
    y = ny[:, None] * np.stack([np.cos(ty), np.sin(ty)], 1)
    h = hr[:, None] * np.stack([np.cos(th), np.sin(th)], 1)
    rem = np.abs(K(y + h) - K.taylor(y, h, n))
    return float(np.max(rem * ny ** (n + 1 + K.d) / hr ** (n + 1)))


# ---------------------------------------------------------------------------
# polar quadrature


@dataclass
class PolarRule:
    points: np.ndarray
    weights: np.ndarray
    piece: np.ndarray   # -1 outside B(y, r); j >= 1 annulus (r 2^-j, r 2^-(j-1)); ladder+1 core
    y: np.ndarray
    r: float
    ladder: int


def segments_of(polygon):
    v = np.asarray(polygon, dtype=float)
    return v, np.roll(v, -1, axis=0)


def line_cut(x0, e, c, box_lo, box_hi):
    """Segment of the line <x - x0, e> = c clipped to a (slightly enlarged) box."""
    e = np.asarray(e, dtype=float)
    t = np.array([-e[1], e[0]])
    p = np.asarray(x0, dtype=float) + c * e
    span = 2.0 * float(np.hypot(*(np.asarray(box_hi) - np.asarray(box_lo)))) + \
        float(np.hypot(*(p - 0.5 * (np.asarray(box_lo) + np.asarray(box_hi)))))
    return p - span * t, p + span * t


def _as_cuts(cuts):
    if not cuts:
        return np.empty((0, 2)), np.empty((0, 2))
    a = np.array([np.asarray(c[0], dtype=float) for c in cuts])
    b = np.array([np.asarray(c[1], dtype=float) for c in cuts])
    return np.ascontiguousarray(a), np.ascontiguousarray(b)


def _square_exit(y, dirs, lo, hi):
    # distance from y (inside the box) to the box boundary along each direction
    with np.errstate(divide="ignore"):
        tx = np.where(dirs[:, 0] > 0, (hi[0] - y[0]) / dirs[:, 0],
                      np.where(dirs[:, 0] < 0, (lo[0] - y[0]) / dirs[:, 0], np.inf))
        ty = np.where(dirs[:, 1] > 0, (hi[1] - y[1]) / dirs[:, 1],
                      np.where(dirs[:, 1] < 0, (lo[1] - y[1]) / dirs[:, 1], np.inf))
    return np.minimum(tx, ty)


def _cut_crossing_angles(D, y, ca, cb, exclude):
    # angles (seen from y) of the points where cuts meet the boundary of D,
    # the excluded box or each other: the ray pieces change there
    seg = cb - ca
    length = np.hypot(seg[:, 0], seg[:, 1])
    u = seg / length[:, None]
    pts = []
    for i in range(ca.shape[0]):
        t = D.ray_hits(ca[i], u[i:i + 1])[0]
        t = t[np.isfinite(t) & (t < length[i])]
        pts.append(ca[i] + t[:, None] * u[i])
    sa, sb = [ca], [cb]
    if exclude is not None:
        lo, hi = np.asarray(exclude[0], float), np.asarray(exclude[1], float)
        box = np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
        sa.append(box)
        sb.append(np.roll(box, -1, axis=0))
    sa = np.ascontiguousarray(np.concatenate(sa))
    sb = np.ascontiguousarray(np.concatenate(sb))
    for i in range(ca.shape[0]):
        t = _k.ray_hits(ca[i], np.ascontiguousarray(u[i:i + 1]), sa, sb)[0]
        t = t[np.isfinite(t) & (t < length[i])]
        pts.append(ca[i] + t[:, None] * u[i])
    pts = np.concatenate(pts) if pts else np.empty((0, 2))
    q = pts - y
    return np.arctan2(q[:, 1], q[:, 0]) % (2 * np.pi)


def polar_rule(D, y, r, ladder=LADDER, cuts=None, exclude=None, res=1, m_theta=12, m_rho=12,
               theta_panels=16, s_panel=1.0, outer=True, inner=True):
    """Nodes and weights for integrals over D in polar coordinates about y.

    ``exclude`` is an axis-parallel box ``(lo, hi)`` containing y whose
    interior is removed from the region; ``cuts`` is a list of segments
    along which the integrand may be non-smooth.
    """
    y = np.asarray(y, dtype=float)
    ca, cb = _as_cuts(cuts)
    brk = [D.angular_breaks(y)]
    if ca.size:
        for p in np.concatenate([ca, cb]):
            q = p - y
            brk.append(np.array([math.atan2(q[1], q[0]) % (2 * np.pi)]))
    if exclude is not None:
        elo, ehi = np.asarray(exclude[0], float), np.asarray(exclude[1], float)
        for cx in (elo[0], ehi[0]):
            for cy in (elo[1], ehi[1]):
                brk.append(np.array([math.atan2(cy - y[1], cx - y[0]) % (2 * np.pi)]))
    if ca.size:
        brk.append(_cut_crossing_angles(D, y, ca, cb, exclude))
    edges = np.unique(np.concatenate(brk + [np.array([0.0, 2 * np.pi])]))
    edges = edges[(edges >= 0) & (edges <= 2 * np.pi)]
    maxlen = 2 * np.pi / (theta_panels * res)
    pl, ph = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a <= 1e-15:
            continue
        k = max(1, int(math.ceil((b - a) / maxlen)))
        t = a + (b - a) * np.arange(k + 1) / k
        pl.append(t[:-1])
        ph.append(t[1:])
    pl = np.concatenate(pl)
    ph = np.concatenate(ph)
    xg, wg = leggauss(m_theta)
    th = (0.5 * (pl + ph)[:, None] + 0.5 * (ph - pl)[:, None] * xg[None, :]).ravel()
    wth = (0.5 * (ph - pl)[:, None] * wg[None, :]).ravel()
    dirs = np.stack([np.cos(th), np.sin(th)], 1)
    T = th.size

    dh = D.ray_hits(y, dirs)
    cols = [np.zeros((T, 1)), dh]
    radii = [r * 2.0 ** -j for j in range(0, ladder + 1)]
    cols.append(np.tile(np.array(radii)[None, :], (T, 1)))
    if ca.size:
        cols.append(_k.ray_hits(y, np.ascontiguousarray(dirs), ca, cb))
    if exclude is not None:
        tsq = _square_exit(y, dirs, elo, ehi)
        cols.append(tsq[:, None])
    else:
        tsq = np.zeros(T)
    B = np.sort(np.concatenate(cols, axis=1), axis=1)
    alpha = B[:, :-1]
    beta = B[:, 1:]
    valid = np.isfinite(beta) & (beta > alpha * (1 + 1e-14))
    mid = np.where(valid, 0.5 * (alpha + beta), 0.0)
    crossings = np.sum(dh[:, None, :] < mid[:, :, None], axis=2)
    keep = valid & (crossings % 2 == 0) & (mid > tsq[:, None])
    if not outer:
        keep &= mid < r
    if not inner:
        keep &= mid > r
    ti, pj = np.nonzero(keep)
    a = alpha[ti, pj]
    b = beta[ti, pj]
    mids = mid[ti, pj]
    with np.errstate(divide="ignore", invalid="ignore"):
        rung = np.floor(np.log2(r / np.maximum(mids, 1e-300)))
    rung = np.where(np.isfinite(rung), rung, 0).astype(int) + 1
    piece = np.where(mids > r, -1, np.minimum(rung, ladder + 1))
    xr, wr = leggauss(m_rho)
    lin = a <= 0.0
    # linear pieces (start at y)
    P, Wt, Lb = [], [], []
    if lin.any():
        al, bl, tl = a[lin], b[lin], ti[lin]
        rho = 0.5 * (al + bl)[:, None] + 0.5 * (bl - al)[:, None] * xr[None, :]
        w = 0.5 * (bl - al)[:, None] * wr[None, :] * rho * wth[tl][:, None]
        P.append((y[None, None, :] + rho[:, :, None] * dirs[tl][:, None, :]).reshape(-1, 2))
        Wt.append(w.ravel())
        Lb.append(np.repeat(piece[lin], m_rho))
    lg = ~lin
    if lg.any():
        sa = np.log(a[lg])
        sb = np.log(b[lg])
        npan = np.maximum(1, np.ceil((sb - sa) / (s_panel / res)).astype(int))
        rep = np.repeat(np.arange(sa.size), npan)
        k = np.arange(rep.size) - np.repeat(np.cumsum(npan) - npan, npan)
        h = (sb - sa)[rep] / npan[rep]
        s0 = sa[rep] + k * h
        s = s0[:, None] + 0.5 * h[:, None] * (xr[None, :] + 1.0)
        rho = np.exp(s)
        tl = ti[lg][rep]
        w = 0.5 * h[:, None] * wr[None, :] * rho * rho * wth[tl][:, None]
        P.append((y[None, None, :] + rho[:, :, None] * dirs[tl][:, None, :]).reshape(-1, 2))
        Wt.append(w.ravel())
        Lb.append(np.repeat(piece[lg][rep], m_rho))
    return PolarRule(np.concatenate(P), np.concatenate(Wt), np.concatenate(Lb), y, r, ladder)


# ---------------------------------------------------------------------------
# principal values


@dataclass
class PVResult:
    value: object
    ladder: list = field(default_factory=list)
    err: object = 0.0
    direct: object = None


def richardson(values, ratio=2.0, order=3):
    """Diagonal of the Richardson table for V(eps_j), eps_j = eps_0 ratio^-j,
    assuming an expansion in integer powers of eps.  Only the last
    ``order + 1`` rungs enter, so coarse rungs (where the integrand may
    still see kinks) do not pollute the limit."""
    T = [np.asarray(v, dtype=float) for v in values[-(order + 1):]]
    diag = [T[0]]
    rows = [T]
    for k in range(1, len(T)):
        prev = rows[-1]
        f = ratio ** k - 1.0
        cur = [prev[j] + (prev[j] - prev[j - 1]) / f for j in range(1, len(prev))]
        rows.append(cur)
        diag.append(cur[-1])
    return diag


def _safe_radius(D, y, r_safe, rsafe_frac):
    y = np.asarray(y, dtype=float)
    if not D.contains(y[None, :])[0]:
        raise PointTooCloseToBoundary(f"point {y} is not inside the domain")
    dist = float(D.boundary_dist(y[None, :])[0])
    r = rsafe_frac * dist if r_safe is None else float(r_safe)
    if not (r > 1e-12 * max(D.bounding_box.side, 1.0)) or r > dist * (1 + 1e-12):
        raise PointTooCloseToBoundary(f"r_safe={r:.3g} invalid at distance {dist:.3g} from the boundary")
    return r


def td_apply(K, D, f, y, r_safe=None, rsafe_frac=0.5, res=1, cuts=None, ladder=LADDER, **rule_kw):
    """Principal value ``PV int_D f(x) K(y - x) dx`` at an interior point y.

    ``f`` maps (N, 2) points to (N,) or (N, c) values.  The epsilon ladder
    holds the truncated integrals over ``|x - y| > r 2^-j``; the value is
    their Richardson limit, ``direct`` the regularised integral itself.
    """
    D = make_domain(D)
    y = np.asarray(y, dtype=float)
    r = _safe_radius(D, y, r_safe, rsafe_frac)
    rule = polar_rule(D, y, r, ladder=ladder, cuts=cuts, res=res, **rule_kw)
    fy = np.asarray(f(y[None, :]), dtype=float)[0]
    fx = np.asarray(f(rule.points), dtype=float)
    kx = K(y[None, :] - rule.points)
    wk = rule.weights * kx
    out = rule.piece < 0
    if fx.ndim == 1:
        contrib = np.where(out, fx, fx - fy) * wk
        outer = contrib[out].sum()
        parts = [contrib[rule.piece == j].sum() for j in range(1, ladder + 2)]
    else:
        contrib = np.where(out[:, None], fx, fx - fy[None, :]) * wk[:, None]
        outer = contrib[out].sum(axis=0)
        parts = [contrib[rule.piece == j].sum(axis=0) for j in range(1, ladder + 2)]
    vals = [outer]
    for p in parts[:-1]:
        vals.append(vals[-1] + p)
    direct = vals[-1] + parts[-1]
    if ladder == 0:
        return PVResult(direct, [(r, outer)], float("nan"), direct)
    diag = richardson(vals)
    err = np.abs(diag[-1] - diag[-2])
    eps = [r * 2.0 ** -j for j in range(ladder + 1)]
    return PVResult(diag[-1], list(zip(eps, vals)), err, direct)


def td_poly_field(K, D, P, points, rsafe_frac=0.5, res=1, ladder=2, **rule_kw):
    """``T_D(chi_D P)`` at each point; P may be one polynomial or a list
    (evaluated together).  Returns (values, err_estimates)."""
    D = make_domain(D)
    polys = P if isinstance(P, (list, tuple)) else [P]
    shared = all(q.n == polys[0].n and np.array_equal(q.center, polys[0].center) for q in polys)

    def f(x):
        if shared:
            # one monomial table for every polynomial
            q0 = polys[0]
            M = monomials(np.atleast_2d(x) - q0.center, q0.d, q0.n)
            return M @ np.stack([q.coeffs for q in polys], axis=1)
        return np.stack([q(x) for q in polys], axis=1)

    pts = np.atleast_2d(points)
    vals = np.zeros((pts.shape[0], len(polys)))
    errs = np.zeros((pts.shape[0], len(polys)))
    for i, y in enumerate(pts):
        rres = td_apply(K, D, f, y, rsafe_frac=rsafe_frac, res=res, ladder=ladder, **rule_kw)
        vals[i] = rres.value
        errs[i] = rres.err
    if not isinstance(P, (list, tuple)):
        return vals[:, 0], errs[:, 0]
    return vals, errs


def annulus_integral(K, y, eps, r, m_theta=64):
    """``int_{eps < |x - y| < r} K(y - x) dx`` by the polar rule of a disk."""
    from .geometry import DiskDomain
    disk = DiskDomain(center=y, radius=r)
    rule = polar_rule(disk, y, eps, ladder=0, inner=False, m_theta=m_theta)
    return float(np.sum(rule.weights * K(np.asarray(y)[None, :] - rule.points)))


def region_integral(D, y, g, cuts=None, exclude=None, res=1, **rule_kw):
    """``int g(x) dx`` over D minus the box ``exclude`` (which contains y);
    g may be vector valued."""
    D = make_domain(D)
    rule = polar_rule(D, y, 0.0, ladder=0, cuts=cuts, exclude=exclude, res=res, **rule_kw)
    v = np.asarray(g(rule.points), dtype=float)
    return np.tensordot(rule.weights, v, axes=(0, 0))
