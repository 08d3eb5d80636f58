"""Whitney extension: a smooth partition of unity on the complement
covering and the near-best polynomials of the reflective interior cubes.

Bumps are tensor products of a polynomial smoothstep: equal to 1 on Q,
vanishing outside ``(1 + 2*RIM) Q``.  Since neighbouring complement
cubes differ in side by at most 4, no foreign bump reaches ``(4/5) Q`` and
the normalised bump is exactly 1 there; its support stays inside
``(5/4) Q``.
"""
import math
from dataclasses import dataclass, field
from math import comb

import numpy as np

from .campanato import CubeFamily, dyadic_family, oscillations
from .errors import CoverageGap, NoReflectiveCube
from .geometry import WhitneyCovering, make_domain, reflective_indices, retained, whitney, whitney_complement
from .polyapprox import monomials, multi_indices, project_batch
from .quadrature import integrate_box

RIM = 0.025
DEFAULT_KMAX = 10


def smoothstep(z, order):
    """C^order step: 0 for z <= 0, 1 for z >= 1, polynomial in between."""
    z = np.clip(z, 0.0, 1.0)
    # the alternating sum cancels badly near 1; evaluate that half mirrored
    hi = z > 0.5
    w = np.where(hi, 1.0 - z, z)
    N = order
    acc = np.zeros_like(w)
    for k in range(N + 1):
        acc += comb(N + k, k) * comb(2 * N + 1, N - k) * (-w) ** k
    s = w ** (N + 1) * acc
    return np.where(hi, 1.0 - s, s)


def bump(x, centers, sides, order):
    """Unnormalised tensor bump of each (point, cube) pair."""
    t = np.abs(x - centers) / sides[:, None]
    z = (0.5 + RIM - t) / RIM
    return np.prod(smoothstep(z, order), axis=1)


def _augment(Wc):
    """Complement covering plus the level-k_max cells that lie outside the
    closed domain but were too close to be accepted."""
    fl = Wc.frontier_level
    fi = Wc.frontier_index
    if fl is None or fl.size == 0:
        return Wc, np.zeros(len(Wc), dtype=bool)
    s = Wc.L0 / 2.0 ** fl
    lo = Wc.origin + fi * s[:, None]
    dist, _ = Wc.domain.box_dist(lo, lo + s[:, None])
    outside = (dist > 0) & ~Wc.domain.contains(lo + 0.5 * s[:, None])
    level = np.concatenate([Wc.level, fl[outside]])
    index = np.concatenate([Wc.index, fi[outside]])
    dd = np.concatenate([Wc.dist, dist[outside]])
    term = np.concatenate([np.zeros(len(Wc), bool), np.ones(int(outside.sum()), bool)])
    order = np.lexsort((index[:, 1], index[:, 0], level))
    A = WhitneyCovering(Wc.domain, Wc.origin, Wc.L0, level[order], index[order], dd[order], True,
                        Wc.k_max, Wc.uncovered)
    return A, term[order]


def neighbours(W):
    """CSR adjacency (indptr, indices) of touching cubes, found by probing
    just outside the corners and at quarter points of every edge."""
    lo, hi, s = W.lo, W.hi, W.side
    eps = 1e-7 * s.min()
    probes, owner = [], []
    K = len(W)
    fr = np.array([0.125, 0.375, 0.625, 0.875])
    for cx, sx in ((0, -1), (1, 1)):
        for cy, sy in ((0, -1), (1, 1)):
            base = np.stack([np.where(cx, hi[:, 0], lo[:, 0]), np.where(cy, hi[:, 1], lo[:, 1])], 1)
            for ox, oy in ((sx, sy), (sx, -sy), (-sx, sy)):
                probes.append(base + eps * np.array([ox, oy]))
                owner.append(np.arange(K))
    for f in fr:
        along = lo + f * s[:, None] * np.array([1.0, 0.0])
        probes += [np.stack([along[:, 0], lo[:, 1] - eps], 1), np.stack([along[:, 0], hi[:, 1] + eps], 1)]
        along = lo + f * s[:, None] * np.array([0.0, 1.0])
        probes += [np.stack([lo[:, 0] - eps, along[:, 1]], 1), np.stack([hi[:, 0] + eps, along[:, 1]], 1)]
        owner += [np.arange(K)] * 4
    P = np.concatenate(probes)
    O = np.concatenate(owner)
    T = W.locate(P)
    ok = (T >= 0) & (T != O)
    pairs = np.unique(np.stack([O[ok], T[ok]], 1), axis=0)
    pairs = np.unique(np.concatenate([pairs, pairs[:, ::-1]]), axis=0)
    indptr = np.zeros(K + 1, dtype=np.int64)
    np.add.at(indptr, pairs[:, 0] + 1, 1)
    return np.cumsum(indptr), pairs[:, 1].copy()


@dataclass
class PartitionOfUnity:
    W: WhitneyCovering
    order: int
    terminal: np.ndarray
    indptr: np.ndarray
    nbrs: np.ndarray
    _c: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self._c = self.W.centers
        self._s = self.W.side

    def active(self, x):
        """(point, cube, raw bump) triples with nonzero bump."""
        x = np.atleast_2d(x)
        home = self.W.locate(x)
        pts = np.flatnonzero(home >= 0)
        h = home[pts]
        cnt = self.indptr[h + 1] - self.indptr[h]
        pi = np.concatenate([pts, np.repeat(pts, cnt)])
        starts = np.repeat(self.indptr[h], cnt)
        offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        qi = np.concatenate([h, self.nbrs[starts + offs]])
        b = bump(x[pi], self._c[qi], self._s[qi], self.order)
        nz = b > 0
        return pi[nz], qi[nz], b[nz]

    def total(self, x):
        x = np.atleast_2d(x)
        pi, _, b = self.active(x)
        out = np.zeros(x.shape[0])
        np.add.at(out, pi, b)
        return out

    def values(self, x):
        """Dense (N, K) matrix of normalised bumps; for small probes only."""
        x = np.atleast_2d(x)
        pi, qi, b = self.active(x)
        tot = np.zeros(x.shape[0])
        np.add.at(tot, pi, b)
        M = np.zeros((x.shape[0], len(self.W)))
        M[pi, qi] = b / tot[pi]
        return M


def partition_of_unity(Wc, order=4, include_terminal=True, check_points=None, layer=None):
    """Normalised bumps on a complement covering.

    ``check_points`` in the complement farther than ``layer`` from the
    boundary must be covered, otherwise CoverageGap is raised.
    """
    if include_terminal:
        W, term = _augment(Wc)
    else:
        W, term = Wc, np.zeros(len(Wc), dtype=bool)
    indptr, nbrs = neighbours(W)
    pu = PartitionOfUnity(W, order, term, indptr, nbrs)
    if check_points is not None:
        x = np.atleast_2d(check_points)
        layer = 2 * math.sqrt(2) * Wc.L0 / 2 ** Wc.k_max if layer is None else layer
        box = Wc.box
        want = (~Wc.domain.contains(x)) & (Wc.domain.boundary_dist(x) > layer) \
            & np.all((x > box.lo) & (x < box.hi), axis=1)
        gap = want & (pu.total(x) <= 0)
        if gap.any():
            raise CoverageGap(f"{int(gap.sum())} sampled points of the complement are uncovered, "
                              f"e.g. {x[np.argmax(gap)]}")
    return pu


@dataclass
class ExtendedFunction:
    f: object
    domain: object
    n: int
    pu: PartitionOfUnity
    keep: np.ndarray        # cube of the partition carries a polynomial
    refl: np.ndarray        # index into W of the reflective cube (or -1)
    poly_center: np.ndarray
    poly_coeffs: np.ndarray
    W: WhitneyCovering
    R: float
    gaps: int = 0

    def __call__(self, x, chunk=200_000):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty(x.shape[0])
        for a in range(0, x.shape[0], chunk):
            out[a:a + chunk] = self._eval(x[a:a + chunk])
        return out

    def _eval(self, x):
        inside = self.domain.contains(x)
        out = np.zeros(x.shape[0])
        if inside.any():
            out[inside] = np.asarray(self.f(x[inside]), dtype=float).reshape(-1)
        xo = x[~inside]
        if xo.shape[0] == 0:
            return out
        pi, qi, b = self.pu.active(xo)
        tot = np.zeros(xo.shape[0])
        np.add.at(tot, pi, b)
        self.gaps += int(np.count_nonzero(tot <= 0))
        sel = self.keep[qi]
        pi, qi, b = pi[sel], qi[sel], b[sel]
        V = monomials(xo[pi] - self.poly_center[qi], 2, self.n)
        val = np.einsum("ij,ij->i", V, self.poly_coeffs[qi])
        acc = np.zeros(xo.shape[0])
        np.add.at(acc, pi, b * val / tot[pi])
        out[~inside] = acc
        return out

    def support_radius(self):
        """Largest distance to the boundary reached by a retained bump."""
        W = self.pu.W
        k = np.flatnonzero(self.keep)
        return float(np.max(W.dist[k] + (1 + 2 * RIM) * math.sqrt(2) * W.side[k])) if k.size else 0.0


def extend(f, D, omega=None, n=1, k_max=DEFAULT_KMAX, W=None, Wc=None, order=None, R=None,
           m=None, panels=2):
    """Whitney extension of f from D to the plane.

    Polynomials of the reflective cubes come from the L2 projector, on the
    fixed composite rule of ``project_batch``.  Retained complement cubes
    (side <= R) with no reflective cube raise NoReflectiveCube; terminal
    cells of the truncation layer without one are dropped.
    """
    D = make_domain(D)
    W = whitney(D, k_max=k_max) if W is None else W
    Wc = whitney_complement(D, k_max=k_max) if Wc is None else Wc
    R = D.R if R is None else R
    pu = partition_of_unity(Wc, order=2 * n + 2 if order is None else order)
    A = pu.W
    ret = retained(A, R)
    refl = np.full(len(A), -1, dtype=np.int64)
    idx = np.flatnonzero(ret)
    refl[idx] = reflective_indices(A, W, idx)
    # truncation cells hug the boundary closer than the interior covering
    # reaches; widen their search to the interior layer plus their own size
    lost = np.flatnonzero(ret & (refl < 0) & pu.terminal)
    if lost.size:
        reach = 2.0 * (A.dist[lost] + W.diam.min() * 4.0 + A.diam[lost])
        refl[lost] = reflective_indices(A, W, lost, radius=reach)
    missing = ret & (refl < 0)
    if np.any(missing & ~pu.terminal):
        j = int(np.flatnonzero(missing & ~pu.terminal)[0])
        raise NoReflectiveCube(f"complement cube {A.cube(j)} has no reflective cube")
    keep = ret & (refl >= 0)
    nb = len(multi_indices(2, n))
    centers = np.zeros((len(A), 2))
    coeffs = np.zeros((len(A), nb))
    used = np.unique(refl[keep])
    if used.size:
        mono, *_ = project_batch(f, W.centers[used], W.side[used], n, m, panels)
        where = np.searchsorted(used, refl[keep])
        centers[keep] = W.centers[used][where]
        coeffs[keep] = mono[where]
    return ExtendedFunction(f, D, n, pu, keep, refl, centers, coeffs, W, R)


# ---------------------------------------------------------------------------
# extension bound measurements


def l1_norm(f, D, max_level=9):
    """``int_D |f|`` by adaptive dyadic quadrature on the bounding box."""
    D = make_domain(D)
    box = D.bounding_box

    def g(x):
        return np.where(D.contains(x), np.abs(np.asarray(f(x), dtype=float).reshape(-1)), 0.0)

    v, _ = integrate_box(g, box.lo, box.side, m=4, rtol=1e-6, max_level=max_level)
    return float(v[0])


def prop3_experiment(functions, D, omega, n, k_min=2, k_max=6, ext_kmax=DEFAULT_KMAX,
                     inflate=1.5, max_per_level=1024, seed=0):
    """Extension ratio per test function.

    Numerator: sup over cubes of the inflated bounding box of the
    oscillation of the extension divided by omega(l), split into cubes
    whose double meets the boundary and the rest, plus ``||f~||_L1``.
    Denominator: interior seminorm of f on D plus ``||f||_L1(D)``.
    """
    D = make_domain(D)
    W = whitney(D, k_max=ext_kmax)
    Wc = whitney_complement(D, k_max=ext_kmax)
    big = make_domain(_square(D.bounding_box.dilate(inflate)))
    fam_int = dyadic_family(D, k_min, k_max, "interior", max_per_level=max_per_level, seed=seed)
    fam_big = dyadic_family(big, k_min, k_max, "all_inside", max_per_level=max_per_level, seed=seed)
    _, crossed = D.box_dist(fam_big.centers - fam_big.sides[:, None], fam_big.centers + fam_big.sides[:, None])
    rows = []
    for name, f in functions.items():
        ext = extend(f, D, omega, n, W=W, Wc=Wc)
        sn_int = _sup(oscillations(f, fam_int, n, ps=(1,))[1.0], fam_int, omega)
        l1 = l1_norm(f, D)
        osc = oscillations(ext, fam_big, n, ps=(1,))[1.0] / np.asarray(omega(fam_big.sides))
        l1_ext = l1_norm(ext, big)
        den = sn_int + l1
        rows.append({
            "function": name,
            "interior_seminorm": sn_int,
            "l1": l1,
            "ext_seminorm": float(osc.max()),
            "ext_l1": l1_ext,
            "boundary_osc": float(osc[crossed].max()) if crossed.any() else 0.0,
            "interior_osc": float(osc[~crossed].max()) if (~crossed).any() else 0.0,
            "ratio": (float(osc.max()) + l1_ext) / den if den > 0 else 0.0,
            "gaps": ext.gaps,
        })
    return rows


def _sup(raw, fam, omega):
    return float(np.max(raw / np.asarray(omega(fam.sides), dtype=float)))


def _square(cube):
    lo, hi = cube.lo, cube.hi
    return [(lo[0], lo[1]), (hi[0], lo[1]), (hi[0], hi[1]), (lo[0], hi[1])]


def boundary_scaling(f, D, omega, n, levels, ext=None, k_max=DEFAULT_KMAX, per_level=256, seed=0):
    """Per level, the largest ``osc(f~, Q)/omega(l)`` over cubes of that
    level whose double meets the boundary."""
    D = make_domain(D)
    ext = extend(f, D, omega, n, k_max=k_max) if ext is None else ext
    rng = np.random.default_rng(seed)
    out = {}
    box = D.bounding_box.dilate(1.5)
    for k in levels:
        s = D.bounding_box.side / 2 ** k
        pts = D.boundary_sample(s / 2)
        if len(pts) > per_level:
            pts = pts[np.sort(rng.choice(len(pts), per_level, replace=False))]
        ij = np.floor((pts - box.lo) / s)
        cen = box.lo + (ij + 0.5) * s
        fam = CubeFamily(np.unique(cen, axis=0), np.full(len(np.unique(cen, axis=0)), s), "boundary")
        raw = oscillations(ext, fam, n, ps=(1,))[1.0]
        out[int(k)] = _sup(raw, fam, omega)
    return out
