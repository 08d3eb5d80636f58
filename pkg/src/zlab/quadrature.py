"""Quadrature rules: adaptive Gauss-Kronrod on intervals, tensor Gauss-Legendre
and adaptive dyadic refinement on boxes.

All integrands are vectorised callables.  Interval integrands take an
array of abscissae and return an array of the same shape; box integrands
take an ``(N, d)`` array of points and return ``(N,)`` or ``(N, c)``.
"""
from functools import lru_cache

import numpy as np

from .errors import QuadratureFailure

# 7-point Gauss / 15-point Kronrod pair on [-1, 1] (QUADPACK qk15 tables).
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

_NODES15 = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_WK15 = np.concatenate([_WGK[:-1], _WGK[::-1]])
_WG15 = np.zeros(15)
# Gauss nodes sit at the odd positions of the Kronrod grid.
_WG15[[1, 3, 5]] = _WG[:3]
_WG15[7] = _WG[3]
_WG15[[9, 11, 13]] = _WG[2::-1]


@lru_cache(maxsize=None)
def leggauss(m):
    """Gauss-Legendre nodes and weights on [-1, 1] (read-only arrays)."""
    x, w = np.polynomial.legendre.leggauss(int(m))
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_interval(f, a, b, m=20):
    x, w = leggauss(m)
    half = 0.5 * (b - a)
    return half * np.dot(w, f(0.5 * (a + b) + half * x))


def _gk15(f, lo, hi):
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    t = mid[:, None] + half[:, None] * _NODES15[None, :]
    y = np.asarray(f(t), dtype=float)
    k = half * (y @ _WK15)
    g = half * (y @ _WG15)
    return k, np.abs(k - g)


def geometric_points(a, b, ratio=2.0):
    """Breakpoints a, a*ratio, a*ratio**2, ... strictly inside (a, b).

    Used to resolve integrable singularities at the origin when ``a`` is
    small and positive.
    """
    if a <= 0 or b <= a:
        return []
    pts = []
    t = a * ratio
    while t < b:
        pts.append(t)
        t *= ratio
    return pts


def integrate(f, a, b, rtol=1e-9, atol=0.0, max_evals=1_000_000, points=None):
    """Global adaptive Gauss-Kronrod (G7/K15) quadrature of ``f`` over [a, b].

    The intervals carrying the largest share of the error estimate are
    bisected until ``err <= max(atol, rtol*|I|)``.  ``points`` are interior
    breakpoints (kinks, singular layers) used to seed the partition.

    Returns
    -------
    value, err : float
    """
    if b == a:
        return 0.0, 0.0
    if b < a:
        v, e = integrate(f, b, a, rtol, atol, max_evals, points)
        return -v, e
    edges = [a]
    if points is not None:
        edges += sorted(p for p in points if a < p < b)
    edges.append(b)
    lo = np.asarray(edges[:-1], dtype=float)
    hi = np.asarray(edges[1:], dtype=float)
    val, err = _gk15(f, lo, hi)
    evals = 15 * lo.size
    while True:
        total = val.sum()
        toterr = err.sum()
        tol = max(atol, rtol * abs(total))
        if toterr <= tol:
            return float(total), float(toterr)
        if evals >= max_evals:
            raise QuadratureFailure(
                f"tolerance {tol:.3g} not met after {evals} evaluations "
                f"(estimate {total:.16g}, error {toterr:.3g})"
            )
        order = np.argsort(err)[::-1]
        cum = np.cumsum(err[order])
        k = int(np.searchsorted(cum, toterr - 0.5 * tol)) + 1
        k = min(max(k, 1), order.size, max(1, (max_evals - evals) // 30))
        split = order[:k]
        keep = np.ones(lo.size, dtype=bool)
        keep[split] = False
        mid = 0.5 * (lo[split] + hi[split])
        new_lo = np.concatenate([lo[split], mid])
        new_hi = np.concatenate([mid, hi[split]])
        nv, ne = _gk15(f, new_lo, new_hi)
        evals += 15 * new_lo.size
        lo = np.concatenate([lo[keep], new_lo])
        hi = np.concatenate([hi[keep], new_hi])
        val = np.concatenate([val[keep], nv])
        err = np.concatenate([err[keep], ne])


@lru_cache(maxsize=None)
def cube_rule(d, m, panels=1):
    """Composite tensor Gauss-Legendre rule on the reference cube [-1/2, 1/2]^d.

    ``m`` nodes per axis and panel, ``panels`` equal panels per axis.
    Weights are normalised to sum to one, so ``w @ g(nodes)`` is the mean
    of ``g`` over the cube.
    """
    x, w = leggauss(m)
    h = 1.0 / panels
    starts = -0.5 + h * np.arange(panels)
    x1 = (starts[:, None] + h * 0.5 * (x[None, :] + 1.0)).ravel()
    w1 = np.tile(0.5 * h * w, panels)
    grids = np.meshgrid(*([x1] * d), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    wgrid = np.meshgrid(*([w1] * d), indexing="ij")
    weights = np.prod(np.stack([g.ravel() for g in wgrid], axis=1), axis=1)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


@lru_cache(maxsize=None)
def lattice(d, k):
    """Uniform lattice with ``k`` points per axis on the closed reference cube."""
    x1 = np.linspace(-0.5, 0.5, k)
    grids = np.meshgrid(*([x1] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    pts.setflags(write=False)
    return pts


def _cell_estimates(g, lo, side, nodes, weights):
    # lo: (K, d); side: (K,) -> integral estimates (K, c)
    K, d = lo.shape
    pts = lo[:, None, :] + side[:, None, None] * (nodes[None, :, :] + 0.5)
    vals = np.asarray(g(pts.reshape(-1, d)), dtype=float)
    vals = vals.reshape(K, nodes.shape[0], -1)
    return np.einsum("kmc,m->kc", vals, weights) * (side ** d)[:, None]


def _children(lo, side):
    K, d = lo.shape
    offs = np.array(np.meshgrid(*([[0.0, 0.5]] * d), indexing="ij")).reshape(d, -1).T
    clo = (lo[:, None, :] + side[:, None, None] * offs[None, :, :]).reshape(-1, d)
    cside = np.repeat(0.5 * side, offs.shape[0])
    return clo, cside, offs.shape[0]


def integrate_box(g, lo, side, m=6, rtol=1e-9, atol=1e-14, max_level=10,
                  max_evals=4_000_000, strict=False):
    """Adaptive dyadic quadrature of a (vector-valued) integrand over a box.

    Each leaf cell carries the estimate from its 2^d children and the
    error ``|children - parent|``; the worst leaves are split until the
    summed error meets ``max(atol, rtol*|I|)`` (max-norm over components).
    Leaves at ``max_level`` are frozen.  Discontinuous integrands (domain
    masks, kinks) are resolved by refinement along the singular set.

    Returns
    -------
    value : ndarray (c,)
    err : float
    """
    lo = np.atleast_2d(np.asarray(lo, dtype=float))
    d = lo.shape[1]
    side = np.atleast_1d(np.asarray(side, dtype=float))
    nodes, weights = cube_rule(d, m)
    parent = _cell_estimates(g, lo, side, nodes, weights)
    clo, cside, nc = _children(lo, side)
    child = _cell_estimates(g, clo, cside, nodes, weights)
    evals = (1 + nc) * nodes.shape[0]
    leaf_lo, leaf_side = lo, side
    leaf_val = child.reshape(-1, nc, child.shape[1]).sum(axis=1)
    leaf_err = np.max(np.abs(leaf_val - parent), axis=1)
    leaf_level = np.zeros(1, dtype=int)
    while True:
        total = leaf_val.sum(axis=0)
        toterr = leaf_err.sum()
        tol = max(atol, rtol * float(np.max(np.abs(total))))
        if toterr <= tol:
            return total, float(toterr)
        can = leaf_level < max_level
        if not can.any() or evals >= max_evals:
            if strict:
                raise QuadratureFailure(
                    f"box quadrature stalled: err {toterr:.3g} > tol {tol:.3g}"
                )
            return total, float(toterr)
        cand = np.flatnonzero(can)
        order = cand[np.argsort(leaf_err[cand])[::-1]]
        cum = np.cumsum(leaf_err[order])
        k = int(np.searchsorted(cum, toterr - 0.5 * tol)) + 1
        k = min(max(k, 1), order.size)
        split = order[:k]
        keep = np.ones(leaf_side.size, dtype=bool)
        keep[split] = False
        s_lo, s_side, _ = _children(leaf_lo[split], leaf_side[split])
        s_par = _cell_estimates(g, s_lo, s_side, nodes, weights)
        g_lo, g_side, _ = _children(s_lo, s_side)
        g_est = _cell_estimates(g, g_lo, g_side, nodes, weights)
        evals += (s_side.size + g_side.size) * nodes.shape[0]
        s_val = g_est.reshape(-1, nc, g_est.shape[1]).sum(axis=1)
        s_err = np.max(np.abs(s_val - s_par), axis=1)
        leaf_lo = np.concatenate([leaf_lo[keep], s_lo])
        leaf_side = np.concatenate([leaf_side[keep], s_side])
        leaf_val = np.concatenate([leaf_val[keep], s_val])
        leaf_err = np.concatenate([leaf_err[keep], s_err])
        leaf_level = np.concatenate([leaf_level[keep], np.repeat(leaf_level[split] + 1, nc)])
