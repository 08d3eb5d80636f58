"""Campanato-type seminorms: oscillation of f against the projector, swept
over dyadic cube families, plus the dyadic stopping-time decomposition.

The sup over all cubes of a domain is replaced by a sweep over dyadic
grids (and shifted copies), recorded in the family so that every report
can be reproduced.  Oscillations in a sweep are computed on one fixed
composite Gauss rule per cube; because the rule has positive weights the
p-means it produces are monotone in p cube by cube.
"""
import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import EmptyFamily, ThresholdTooSmall
from .geometry import Cube, make_domain
from .polyapprox import get_projector, lp_dist, project, project_batch
from .quadrature import cube_rule, lattice

SHIFTS = (0.25, 0.5, 0.75)
DEFAULT_MAX_PER_LEVEL = 4096


@dataclass
class CubeFamily:
    centers: np.ndarray
    sides: np.ndarray
    mode: str
    params: dict = field(default_factory=dict)

    def __len__(self):
        return int(self.sides.size)

    @property
    def cubes(self):
        return [Cube(tuple(c), float(s)) for c, s in zip(self.centers, self.sides)]

    def subset(self, mask):
        return CubeFamily(self.centers[mask], self.sides[mask], self.mode, dict(self.params))


def _inside(domain, centers, sides, mode):
    half = (1.0 if mode == "interior" else 0.5) * sides[:, None]
    lo, hi = centers - half, centers + half
    _, crossed = domain.box_dist(lo, hi)
    return domain.contains(centers) & ~crossed


def cube_family(domain, centers, sides, mode="all_inside"):
    """Family from explicit cubes; cubes failing the containment test are dropped."""
    domain = make_domain(domain)
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    sides = np.broadcast_to(np.asarray(sides, dtype=float), (centers.shape[0],)).copy()
    ok = _inside(domain, centers, sides, mode)
    return CubeFamily(centers[ok], sides[ok], mode, {"explicit": True})


def dyadic_family(domain, k_min, k_max, mode="all_inside", shifts=True,
                  max_per_level=DEFAULT_MAX_PER_LEVEL, focus=None, seed=0):
    """Dyadic cubes of levels k_min..k_max of the domain's bounding box
    that satisfy the containment test of ``mode``, plus the grids shifted
    diagonally by l/4, l/2 and 3l/4.

    Levels with more than ``max_per_level`` candidate cells keep the cells
    containing a ``focus`` point and a seeded random sample of the rest.
    """
    domain = make_domain(domain)
    box = domain.bounding_box
    L0 = box.side
    origin = box.lo
    rng = np.random.default_rng(seed)
    focus = None if focus is None else np.atleast_2d(np.asarray(focus, dtype=float))
    offs = (0.0,) + (SHIFTS if shifts else ())
    C, S = [], []
    for k in range(k_min, k_max + 1):
        n = 2 ** k
        s = L0 / n
        for off in offs:
            o = origin + off * s
            m = n if off == 0.0 else n - 1
            if m <= 0:
                continue
            if m * m <= 4 * max_per_level:
                ij = np.stack(np.meshgrid(np.arange(m), np.arange(m), indexing="ij"), -1).reshape(-1, 2)
            else:
                pts = o + (m * s) * rng.random((max_per_level, 2))
                if focus is not None:
                    pts = np.concatenate([focus, pts])
                ij = np.floor((pts - o) / s).astype(np.int64)
                ij = ij[np.all((ij >= 0) & (ij < m), axis=1)]
                ij = np.unique(ij, axis=0)
            cen = o + (ij + 0.5) * s
            sid = np.full(len(cen), s)
            ok = _inside(domain, cen, sid, mode)
            cen, sid, ij = cen[ok], sid[ok], ij[ok]
            if len(cen) > max_per_level:
                keep = np.zeros(len(cen), dtype=bool)
                if focus is not None:
                    fij = np.floor((focus - o) / s).astype(np.int64)
                    keep |= np.isin(ij[:, 0] * m + ij[:, 1], fij[:, 0] * m + fij[:, 1])
                rest = np.flatnonzero(~keep)
                want = max(max_per_level - int(keep.sum()), 0)
                if want < rest.size:
                    keep[np.sort(rng.choice(rest, want, replace=False))] = True
                else:
                    keep[rest] = True
                cen, sid = cen[keep], sid[keep]
            C.append(cen)
            S.append(sid)
    centers = np.concatenate(C) if C else np.empty((0, 2))
    sides = np.concatenate(S) if S else np.empty(0)
    # fraction of the domain covered by the unshifted finest-level cubes
    s = L0 / 2 ** k_max
    n = 2 ** k_max
    if n * n <= 4 * 1024 * 1024:
        ij = np.stack(np.meshgrid(np.arange(n), np.arange(n), indexing="ij"), -1).reshape(-1, 2)
        cen = origin + (ij + 0.5) * s
        cov = float(np.count_nonzero(_inside(domain, cen, np.full(len(cen), s), "all_inside"))) * s * s
        coverage = cov / domain.area
    else:
        coverage = float("nan")
    params = {"k_min": k_min, "k_max": k_max, "shifts": list(offs), "max_per_level": max_per_level,
              "seed": seed, "focus": 0 if focus is None else len(focus), "coverage": coverage,
              "domain": domain.name}
    return CubeFamily(centers, sides, mode, params)


class GridFunction:
    """Bilinear interpolant of samples on a uniform grid over a box."""

    def __init__(self, values, lo, hi):
        values = np.asarray(values, dtype=float)
        axes = [np.linspace(a, b, m) for a, b, m in zip(lo, hi, values.shape)]
        self._interp = RegularGridInterpolator(axes, values, method="linear",
                                               bounds_error=False, fill_value=None)

    def __call__(self, x):
        return self._interp(np.atleast_2d(x))

    @classmethod
    def sample(cls, f, lo, hi, res):
        axes = [np.linspace(a, b, res) for a, b in zip(lo, hi)]
        g = np.stack(np.meshgrid(*axes, indexing="ij"), -1)
        vals = np.asarray(f(g.reshape(-1, len(lo))), dtype=float).reshape(g.shape[:-1])
        return cls(vals, lo, hi)


# ---------------------------------------------------------------------------
# oscillation


def local_osc(f, Q, n, p, omega):
    """``lp_dist(f, project(f, Q, n), Q, p) / omega(l)`` with adaptive quadrature."""
    P = project(f, Q, n)
    return lp_dist(f, P, Q, p) / float(omega(Q.side))


def _pkey(p):
    return "inf" if p in (np.inf, "inf") else float(p)


def oscillations(f, family, n, ps=(1, 2, np.inf), m=None, panels=2, chunk=2048, lat=9):
    """Raw ``||f - P_Q f||_{L^p(Q, dx/|Q|)}`` on every cube of the family.

    The projection and the p-means share one composite Gauss rule
    (``m`` nodes per panel and axis); the sup also visits a closed
    ``lat``-point lattice.  Returns {p: array}.
    """
    if len(family) == 0:
        raise EmptyFamily("cube family is empty")
    d = family.centers.shape[1]
    proj = get_projector(d, n)
    m = m or n + 6
    L = lattice(d, lat)
    BL = proj.basis(L)
    out = {_pkey(p): np.empty(len(family)) for p in ps}
    for a in range(0, len(family), chunk):
        cen = family.centers[a:a + chunk]
        sid = family.sides[a:a + chunk]
        _, Cb, F, B, w = project_batch(f, cen, sid, n, m, panels)
        R = np.abs(F - Cb @ B.T)
        for p in ps:
            key = _pkey(p)
            if key == "inf":
                pts = cen[:, None, :] + sid[:, None, None] * L[None, :, :]
                FL = np.asarray(f(pts.reshape(-1, d)), dtype=float).reshape(len(cen), -1)
                RL = np.abs(FL - Cb @ BL.T)
                out[key][a:a + chunk] = np.maximum(R.max(axis=1), RL.max(axis=1))
            elif key == 1.0:
                out[key][a:a + chunk] = R @ w
            else:
                out[key][a:a + chunk] = (R ** key @ w) ** (1.0 / key)
    return out


@dataclass
class OscillationReport:
    centers: np.ndarray
    sides: np.ndarray
    osc: np.ndarray
    p: object
    label: str
    mode: str
    family_params: dict

    @property
    def argmax(self):
        return int(np.argmax(self.osc))

    @property
    def sup(self):
        return float(self.osc[self.argmax])

    @property
    def argmax_cube(self):
        i = self.argmax
        return Cube(tuple(self.centers[i]), float(self.sides[i]))

    def summary(self):
        c = self.argmax_cube
        return {"sup": self.sup, "argmax": {"center": list(c.center), "side": c.side},
                "p": str(self.p), "modulus": self.label, "mode": self.mode,
                "family": self.family_params}

    def to_csv(self, path, manifest_ref=None):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cx", "cy", "side", "osc"])
            for c, s, o in zip(self.centers, self.sides, self.osc):
                w.writerow([repr(float(c[0])), repr(float(c[1])), repr(float(s)), repr(float(o))])
            if manifest_ref:
                fh.write(f"# manifest: {manifest_ref}\n")

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


def seminorm(f, D, omega, n, p, family, raw=None):
    """Sup over the family of ``||f - P_Q f||_p / omega(l(Q))``."""
    if len(family) == 0:
        raise EmptyFamily("cube family is empty")
    key = _pkey(p)
    if raw is None:
        raw = oscillations(f, family, n, ps=(p,))
    osc = raw[key] / np.asarray(omega(family.sides), dtype=float)
    return OscillationReport(family.centers, family.sides, osc, key,
                             getattr(omega, "label", ""), family.mode, dict(family.params))


def p_equivalence_experiment(f, D, omega, n, family, ps=(1, 2, np.inf)):
    """Seminorms for each p and their ratios to the p = 1 value.

    Also returns whether the per-cube oscillations are nondecreasing in p.
    """
    raw = oscillations(f, family, n, ps=ps)
    keys = [_pkey(p) for p in ps]
    sn = {k: seminorm(f, D, omega, n, k, family, raw=raw).sup for k in keys}
    base = sn[keys[0]]
    ratios = {k: (1.0 if base == 0 else sn[k] / base) for k in keys}
    tol = 1e-12
    mono = all(np.all(raw[b] >= raw[a] * (1 - tol) - 1e-300) for a, b in zip(keys, keys[1:]))
    return {"seminorm": sn, "ratio": ratios, "monotone": bool(mono)}


def _pair_ratios(f, omega, n, c1, s1, c2, s2, seminorm_value, m=None, panels=2):
    # mean over Q2 of |P_Q1 - P_Q2| / (omega(l2) * seminorm)
    d = c1.shape[1]
    mono1, *_ = project_batch(f, c1, s1, n, m, panels)
    mono2, *_ = project_batch(f, c2, s2, n, m, panels)
    proj = get_projector(d, n)
    nodes, w = cube_rule(d, m or n + 6, panels)
    idx = np.array(proj.indices)
    pts = c2[:, None, :] + s2[:, None, None] * nodes[None, :, :]
    # both polynomials evaluated at the parent's nodes
    d1 = pts - c1[:, None, :]
    d2 = pts - c2[:, None, :]
    V1 = np.prod(d1[:, :, None, :] ** idx[None, None, :, :], axis=-1) @ mono1[:, :, None]
    V2 = np.prod(d2[:, :, None, :] ** idx[None, None, :, :], axis=-1) @ mono2[:, :, None]
    diff = np.abs(V1[..., 0] - V2[..., 0]) @ w
    return diff / (np.asarray(omega(s2), dtype=float) * seminorm_value)


def telescoping_experiment(f, D, omega, n, k_min, k_max, max_per_level=DEFAULT_MAX_PER_LEVEL,
                           focus=None, seed=0):
    """Sup over dyadic child/parent pairs (both inside D) of the normalised
    projector increment, against the p = 1 seminorm on the same sweep."""
    D = make_domain(D)
    fam = dyadic_family(D, k_min, k_max, "all_inside", shifts=False,
                        max_per_level=max_per_level, focus=focus, seed=seed)
    sn = seminorm(f, D, omega, n, 1, fam).sup
    box = D.bounding_box
    L0 = box.side
    kids = fam.sides < L0 / 2 ** k_min * (1 - 1e-12)
    c1, s1 = fam.centers[kids], fam.sides[kids]
    s2 = 2 * s1
    ij = np.floor((c1 - box.lo) / s2[:, None]).astype(np.int64)
    c2 = box.lo + (ij + 0.5) * s2[:, None]
    ok = _inside(D, c2, s2, "all_inside")
    c1, s1, c2, s2 = c1[ok], s1[ok], c2[ok], s2[ok]
    if sn == 0 or c1.size == 0:
        return {"constant": 0.0, "seminorm": sn, "pairs": int(c1.shape[0])}
    r = _pair_ratios(f, omega, n, c1, s1, c2, s2, sn)
    return {"constant": float(r.max()), "seminorm": sn, "pairs": int(r.size)}


# ---------------------------------------------------------------------------
# Calderon-Zygmund decomposition


@dataclass
class CZResult:
    cubes: list
    means: np.ndarray
    A: float
    total_mean: float


def _block_means(vals, k):
    # means of |f| over the 2^k x 2^k dyadic blocks of a 2^m x 2^m array
    m = vals.shape[0]
    b = m // 2 ** k
    return vals.reshape(2 ** k, b, 2 ** k, b).mean(axis=(1, 3))


def cz_decompose(f, Q, A, max_level=None, m=8):
    """Maximal dyadic subcubes of Q on which the mean of |f| exceeds A.

    ``f`` is either a square array of cell values on a uniform
    ``2^M x 2^M`` grid over Q (exact block means, descent to the grid) or
    a callable (means by a tensor Gauss rule, descent to ``max_level``,
    default 8).  Raises ThresholdTooSmall when A does not exceed the mean
    over Q.
    """
    lo = np.asarray(Q.lo, dtype=float)
    side = float(Q.side)
    if callable(f):
        d = len(lo)
        nodes, w = cube_rule(d, m)
        max_level = 8 if max_level is None else max_level

        def means(k, ij):
            s = side / 2 ** k
            pts = lo + s * (ij[:, None, :] + 0.5 + nodes[None, :, :])
            v = np.abs(np.asarray(f(pts.reshape(-1, d)), dtype=float)).reshape(len(ij), -1)
            return v @ w
    else:
        vals = np.abs(np.asarray(f, dtype=float))
        M = int(round(math.log2(vals.shape[0])))
        if vals.shape[0] != 2 ** M or vals.shape[0] != vals.shape[1]:
            raise ValueError("sample array must be 2^M x 2^M")
        d = 2
        max_level = M if max_level is None else min(max_level, M)
        cache = {}

        def means(k, ij):
            if k not in cache:
                cache[k] = _block_means(vals, k)
            return cache[k][ij[:, 0], ij[:, 1]]

    ij = np.zeros((1, d), dtype=np.int64)
    top = float(means(0, ij)[0])
    if A <= top:
        raise ThresholdTooSmall(f"A={A} must exceed the mean {top} over Q")
    kids = np.array(np.meshgrid(*[[0, 1]] * d, indexing="ij")).reshape(d, -1).T
    cubes, found = [], []
    for k in range(1, max_level + 1):
        ij = (2 * ij[:, None, :] + kids[None, :, :]).reshape(-1, d)
        mu = means(k, ij)
        sel = mu > A
        s = side / 2 ** k
        for idx, mm in zip(ij[sel], mu[sel]):
            cubes.append(Cube.from_lo(lo + s * idx, s, level=k, index=tuple(idx)))
            found.append(mm)
        ij = ij[~sel]
        if ij.size == 0:
            break
    return CZResult(cubes, np.array(found), float(A), top)
