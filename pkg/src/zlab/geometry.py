"""Cubes, planar Lipschitz domains and Whitney coverings.

Cubes are axis-parallel and dyadic cubes are semi-open, ``[a, a + side)``,
anchored at the lower corner of a bounding box.  A covering stores its
cubes as parallel arrays (level, integer index, distance to the boundary)
sorted by ``(level, ix, iy)``: largest cubes first, then lexicographic.
That order is also the tie-break order for reflective cubes.
"""
import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DepthExhausted, InvalidPolygon, NoReflectiveCube, NotLipschitz, ZlabError

DEFAULT_KMAX = 14
VOLUME_TOL = 1e-6


# ---------------------------------------------------------------------------
# cubes


@dataclass(frozen=True)
class Cube:
    center: tuple
    side: float
    level: int = None
    index: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.index is not None:
            object.__setattr__(self, "index", tuple(int(i) for i in self.index))

    @classmethod
    def from_lo(cls, lo, side, level=None, index=None):
        lo = np.asarray(lo, dtype=float)
        return cls(tuple(lo + 0.5 * side), float(side), level, index)

    @classmethod
    def dyadic(cls, origin, L0, level, index):
        s = L0 / 2.0 ** level
        return cls.from_lo(np.asarray(origin) + s * np.asarray(index), s, level, index)

    @property
    def d(self):
        return len(self.center)

    @property
    def lo(self):
        return np.asarray(self.center) - 0.5 * self.side

    @property
    def hi(self):
        return np.asarray(self.center) + 0.5 * self.side

    @property
    def diam(self):
        return math.sqrt(self.d) * self.side

    @property
    def volume(self):
        return self.side ** self.d

    def dilate(self, s):
        return Cube(self.center, s * self.side)

    def contains(self, points, closed=False):
        p = np.atleast_2d(points)
        if closed:
            return np.all((p >= self.lo) & (p <= self.hi), axis=1)
        return np.all((p >= self.lo) & (p < self.hi), axis=1)

    def corners(self):
        lo, hi = self.lo, self.hi
        grid = np.array(np.meshgrid(*[[0, 1]] * self.d, indexing="ij")).reshape(self.d, -1).T
        return np.where(grid == 0, lo, hi)

    def distance_to(self, other):
        g = np.maximum(np.maximum(other.lo - self.hi, 0.0), self.lo - other.hi)
        return float(np.sqrt(np.sum(g * g)))

    def is_inside(self, other):
        return bool(np.all(self.lo >= other.lo - 1e-15) and np.all(self.hi <= other.hi + 1e-15))


# ---------------------------------------------------------------------------
# domains


@dataclass
class Window:
    """Boundary window: a square of side R centred at ``center`` on the
    boundary, with axes ``e`` (horizontal) and ``u`` (inward vertical).
    Inside it the domain is ``{y > graph(x)}``."""

    center: np.ndarray
    e: np.ndarray
    u: np.ndarray
    R: float
    slope: float
    domain: "LipschitzDomain" = field(repr=False, default=None)

    @property
    def rotation(self):
        return np.stack([self.e, self.u], axis=1)

    def to_world(self, x, y):
        return self.center + np.multiply.outer(x, self.e) + np.multiply.outer(y, self.u)

    def to_local(self, p):
        q = np.atleast_2d(p) - self.center
        return q @ self.e, q @ self.u

    def graph(self, x):
        return self.domain._window_graph(self, np.atleast_1d(np.asarray(x, dtype=float)))


class LipschitzDomain:
    """Bounded planar Lipschitz domain.  Subclasses supply the geometry."""

    name = "domain"
    d = 2

    def contains(self, points):
        raise NotImplementedError

    def boundary_dist(self, points):
        raise NotImplementedError

    def box_dist(self, lo, hi):
        """Exact distance from closed boxes to the boundary, and whether the
        boundary passes through the open box."""
        raise NotImplementedError

    def ray_hits(self, y, dirs):
        """Sorted positive ray parameters where rays from y cross the
        boundary; array (T, m) padded with inf."""
        raise NotImplementedError

    def angular_breaks(self, y):
        return np.empty(0)

    def boundary_sample(self, h):
        raise NotImplementedError

    @property
    def delta(self):
        return max(w.slope for w in self.windows)

    @property
    def R(self):
        return self.windows[0].R

    def box_inside(self, lo, hi):
        lo = np.atleast_2d(lo)
        hi = np.atleast_2d(hi)
        dist, _ = self.box_dist(lo, hi)
        return (dist > 0) & self.contains(0.5 * (lo + hi))


def _seg_intersect(p1, p2, q1, q2, eps=1e-12):
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if abs(v) <= eps else (1 if v > 0 else -1)

    def on_seg(a, b, c):
        return (min(a[0], b[0]) - eps <= c[0] <= max(a[0], b[0]) + eps
                and min(a[1], b[1]) - eps <= c[1] <= max(a[1], b[1]) + eps)

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    return ((o1 == 0 and on_seg(p1, p2, q1)) or (o2 == 0 and on_seg(p1, p2, q2))
            or (o3 == 0 and on_seg(q1, q2, p1)) or (o4 == 0 and on_seg(q1, q2, p2)))


class PolygonDomain(LipschitzDomain):
    def __init__(self, vertices, name="polygon"):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or not np.all(np.isfinite(v)):
            raise InvalidPolygon("vertices must be a finite (m, 2) array")
        if len(v) > 3 and np.allclose(v[0], v[-1]):
            v = v[:-1]
        if len(v) < 3:
            raise InvalidPolygon("a polygon needs at least three vertices")
        nxt = np.roll(v, -1, axis=0)
        edges = nxt - v
        lengths = np.hypot(edges[:, 0], edges[:, 1])
        scale = float(np.max(np.ptp(v, axis=0)))
        if np.any(lengths <= 1e-12 * max(scale, 1.0)):
            raise InvalidPolygon("repeated vertex / zero-length edge")
        area = 0.5 * float(np.sum(v[:, 0] * nxt[:, 1] - nxt[:, 0] * v[:, 1]))
        if abs(area) <= 1e-12 * scale * scale:
            raise InvalidPolygon("polygon has zero area")
        m = len(v)
        d_in = v - np.roll(v, 1, axis=0)
        d_out = edges
        cr = d_in[:, 0] * d_out[:, 1] - d_in[:, 1] * d_out[:, 0]
        dt = np.sum(d_in * d_out, axis=1)
        cusp = (np.abs(cr) <= 1e-12 * lengths * np.roll(lengths, 1)) & (dt < 0)
        if cusp.any():
            raise NotLipschitz(f"cusp at vertex {int(np.flatnonzero(cusp)[0])}")
        for i in range(m):
            for j in range(i + 1, m):
                if j == i + 1 or (i == 0 and j == m - 1):
                    continue
                if _seg_intersect(v[i], nxt[i], v[j], nxt[j]):
                    raise InvalidPolygon(f"edges {i} and {j} intersect")
        if area < 0:
            v = v[::-1].copy()
            area = -area
        self.vertices = np.ascontiguousarray(v)
        self.a = self.vertices
        self.b = np.ascontiguousarray(np.roll(self.vertices, -1, axis=0))
        self.name = name
        self.area = area
        e = self.b - self.a
        self.lengths = np.hypot(e[:, 0], e[:, 1])
        self.perimeter = float(self.lengths.sum())
        lo = v.min(axis=0)
        self.bounding_box = Cube.from_lo(lo, float(np.max(v.max(axis=0) - lo)))
        self.windows = self._make_windows()

    def _make_windows(self):
        v, a, b = self.vertices, self.a, self.b
        m = len(v)
        t = (b - a) / self.lengths[:, None]
        nrm = np.stack([-t[:, 1], t[:, 0]], axis=1)  # inward for CCW
        mids = 0.5 * (a + b)
        dist = []
        for i in range(m):
            others = [j for j in range(m) if j != i and j != (i - 1) % m]
            dist.append(kernels.points_segments_dist_np(v[i:i + 1], a[others], b[others])[0])
            others = [j for j in range(m) if j != i]
            dist.append(kernels.points_segments_dist_np(mids[i:i + 1], a[others], b[others])[0])
        R = 0.9 * min(min(dist), 0.5 * float(self.lengths.min()))
        windows = []
        for i in range(m):
            j = (i - 1) % m
            bis = nrm[i] + nrm[j]
            bis /= np.hypot(*bis)
            e = np.array([bis[1], -bis[0]])
            slope = 0.0
            for tt in (t[i], t[j]):
                slope = max(slope, abs(tt @ bis) / abs(tt @ e))
            windows.append(Window(v[i].copy(), e, bis, R, slope, self))
        for i in range(m):
            windows.append(Window(mids[i].copy(), t[i].copy(), nrm[i].copy(), R, 0.0, self))
        return windows

    def _window_graph(self, w, x):
        # intersect the vertical lines a + x e + s u with the edges
        p = w.center[None, :] + x[:, None] * w.e[None, :]
        hits = np.stack([kernels.ray_hits_np(pi, np.stack([w.u, -w.u]), self.a, self.b).min(axis=1)
                         for pi in p])
        up, down = hits[:, 0], hits[:, 1]
        return np.where(up <= down, up, -down)

    def contains(self, points):
        p = np.ascontiguousarray(np.atleast_2d(points), dtype=float)
        return kernels.points_in_polygon(p, self.a, self.b)

    def boundary_dist(self, points):
        p = np.ascontiguousarray(np.atleast_2d(points), dtype=float)
        return kernels.points_segments_dist(p, self.a, self.b)

    def box_dist(self, lo, hi):
        return kernels.boxes_segments(np.ascontiguousarray(lo, dtype=float),
                                      np.ascontiguousarray(hi, dtype=float), self.a, self.b)

    def ray_hits(self, y, dirs):
        t = kernels.ray_hits(np.asarray(y, dtype=float), np.ascontiguousarray(dirs, dtype=float),
                             self.a, self.b)
        return np.sort(t, axis=1)

    def angular_breaks(self, y):
        q = self.vertices - np.asarray(y)[None, :]
        return np.sort(np.mod(np.arctan2(q[:, 1], q[:, 0]), 2 * np.pi))

    def boundary_sample(self, h):
        pts = []
        for a, b, L in zip(self.a, self.b, self.lengths):
            k = max(int(math.ceil(L / h)), 1)
            s = np.arange(k) / k
            pts.append(a[None, :] + s[:, None] * (b - a)[None, :])
        return np.concatenate(pts)

    def to_spec(self):
        return {"type": "polygon", "name": self.name, "vertices": self.vertices.tolist()}


class DiskDomain(LipschitzDomain):
    def __init__(self, center=(0.0, 0.0), radius=1.0, name="disk", n_windows=16):
        if radius <= 0:
            raise InvalidPolygon("disk radius must be positive")
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.name = name
        self.area = math.pi * radius ** 2
        self.perimeter = 2 * math.pi * radius
        self.bounding_box = Cube(tuple(self.center), 2 * self.radius)
        R = 0.5 * radius
        x = 0.5 * R
        slope = x / math.sqrt(radius ** 2 - x ** 2)
        self.windows = []
        for th in 2 * np.pi * np.arange(n_windows) / n_windows:
            n = np.array([math.cos(th), math.sin(th)])
            self.windows.append(Window(self.center + radius * n, np.array([-n[1], n[0]]), -n,
                                       R, slope, self))

    def _window_graph(self, w, x):
        rho = self.radius
        return rho - np.sqrt(rho * rho - x * x)

    def contains(self, points):
        q = np.atleast_2d(points) - self.center
        return np.sum(q * q, axis=1) < self.radius ** 2

    def boundary_dist(self, points):
        q = np.atleast_2d(points) - self.center
        return np.abs(self.radius - np.hypot(q[:, 0], q[:, 1]))

    def box_dist(self, lo, hi):
        lo = np.atleast_2d(lo) - self.center
        hi = np.atleast_2d(hi) - self.center
        near = np.maximum(np.maximum(lo, 0.0), -hi)
        dn = np.hypot(near[:, 0], near[:, 1])
        far = np.maximum(np.abs(lo), np.abs(hi))
        df = np.hypot(far[:, 0], far[:, 1])
        rho = self.radius
        dist = np.where(df < rho, rho - df, np.where(dn > rho, dn - rho, 0.0))
        return dist, (dn < rho) & (df > rho)

    def ray_hits(self, y, dirs):
        q = np.asarray(y, dtype=float) - self.center
        u = np.atleast_2d(dirs)
        b = u @ q
        c = q @ q - self.radius ** 2
        disc = np.sqrt(np.maximum(b * b - c, 0.0))
        t = -b + disc
        return np.where(t > 0, t, np.inf)[:, None]

    def boundary_sample(self, h):
        k = max(int(math.ceil(self.perimeter / h)), 8)
        th = 2 * np.pi * np.arange(k) / k
        return self.center + self.radius * np.stack([np.cos(th), np.sin(th)], axis=1)

    def to_spec(self):
        return {"type": "disk", "name": self.name, "center": self.center.tolist(),
                "radius": self.radius}


_BUILTIN_POLYGONS = {
    "unit_square": [(0, 0), (1, 0), (1, 1), (0, 1)],
    "lshape": [(0, 0), (1, 0), (1, 0.5), (0.5, 0.5), (0.5, 1), (0, 1)],
    # Lipschitz graph over [0, 1] with slope 0.8 on top of a flat base
    "sawtooth": [(0, 0), (1, 0), (1, 1), (0.75, 0.8), (0.5, 1), (0.25, 0.8), (0, 1)],
    "strip": [(-2, -0.5), (2, -0.5), (2, 0.5), (-2, 0.5)],
}
_ALIASES = {"square": "unit_square", "l-shape": "lshape", "l_shape": "lshape",
            "disk": "unit_disk", "polygon_graph": "sawtooth"}


def make_domain(spec):
    """Domain from a built-in name, a vertex list, a JSON-like dict or a
    path to a JSON file."""
    if isinstance(spec, LipschitzDomain):
        return spec
    if isinstance(spec, str):
        if spec.endswith(".json"):
            with open(spec) as fh:
                return make_domain(json.load(fh))
        name = _ALIASES.get(spec.lower(), spec.lower())
        if name == "unit_disk":
            return DiskDomain(name="unit_disk")
        if name in _BUILTIN_POLYGONS:
            return PolygonDomain(_BUILTIN_POLYGONS[name], name=name)
        raise ZlabError(f"unknown domain {spec!r}")
    if isinstance(spec, dict):
        kind = spec.get("type", "polygon")
        if kind == "disk":
            return DiskDomain(spec.get("center", (0.0, 0.0)), spec.get("radius", 1.0),
                              name=spec.get("name", "disk"))
        if kind in ("square", "lshape"):
            return make_domain(kind)
        if kind == "polygon":
            if "vertices" not in spec:
                raise InvalidPolygon("polygon spec without vertices")
            return PolygonDomain(spec["vertices"], name=spec.get("name", "polygon"))
        raise ZlabError(f"unknown domain type {kind!r}")
    return PolygonDomain(spec)


# ---------------------------------------------------------------------------
# Whitney coverings


@dataclass
class WhitneyCovering:
    domain: LipschitzDomain
    origin: np.ndarray
    L0: float
    level: np.ndarray
    index: np.ndarray
    dist: np.ndarray
    complement: bool
    k_max: int
    uncovered: float
    # cells still undecided at k_max (straddling, or too close to the boundary)
    frontier_level: np.ndarray = None
    frontier_index: np.ndarray = None
    _keys: dict = field(default=None, repr=False)

    def __len__(self):
        return int(self.level.size)

    @property
    def side(self):
        return self.L0 / 2.0 ** self.level

    @property
    def lo(self):
        return self.origin + self.index * self.side[:, None]

    @property
    def hi(self):
        return self.lo + self.side[:, None]

    @property
    def centers(self):
        return self.lo + 0.5 * self.side[:, None]

    @property
    def diam(self):
        return math.sqrt(2) * self.side

    @property
    def cubes(self):
        return [Cube.dyadic(self.origin, self.L0, int(k), tuple(ix))
                for k, ix in zip(self.level, self.index)]

    @property
    def side_index(self):
        return {int(k): np.flatnonzero(self.level == k) for k in np.unique(self.level)}

    @property
    def box(self):
        return Cube.from_lo(self.origin, self.L0)

    def cube(self, i):
        return Cube.dyadic(self.origin, self.L0, int(self.level[i]), tuple(self.index[i]))

    def _hash(self):
        if self._keys is None:
            levels = np.unique(self.level)
            offsets = np.zeros(levels.size + 1, dtype=np.int64)
            keys, pos = [], []
            for j, k in enumerate(levels):
                sel = np.flatnonzero(self.level == k)
                kk = self.index[sel, 0].astype(np.int64) * (2 ** int(k)) + self.index[sel, 1]
                order = np.argsort(kk, kind="stable")
                keys.append(kk[order])
                pos.append(sel[order])
                offsets[j + 1] = offsets[j] + sel.size
            self._keys = {
                "levels": levels.astype(np.int64),
                "offsets": offsets,
                "keys": np.concatenate(keys) if keys else np.empty(0, np.int64),
                "pos": np.concatenate(pos) if pos else np.empty(0, np.int64),
            }
        return self._keys

    def locate(self, points):
        """Position of the covering cube containing each point, -1 if none."""
        p = np.atleast_2d(points)
        out = np.full(p.shape[0], -1, dtype=np.int64)
        H = self._hash()
        for j, k in enumerate(H["levels"]):
            n = 2 ** int(k)
            s = self.L0 / n
            idx = np.floor((p - self.origin) / s).astype(np.int64)
            ok = np.all((idx >= 0) & (idx < n), axis=1)
            key = idx[:, 0] * n + idx[:, 1]
            ks = H["keys"][H["offsets"][j]:H["offsets"][j + 1]]
            at = np.clip(np.searchsorted(ks, key), 0, max(ks.size - 1, 0))
            hit = ok & (ks.size > 0) & (ks[at] == key) if ks.size else np.zeros_like(ok)
            out[hit] = H["pos"][H["offsets"][j] + at[hit]]
        return out

    def dilated_counts(self, points, factor=1.2):
        """Number of dilated cubes ``factor * Q`` (closed) containing each point."""
        p = np.atleast_2d(points)
        cnt = np.zeros(p.shape[0], dtype=np.int64)
        H = self._hash()
        pad = 0.5 * (factor - 1.0)
        for j, k in enumerate(H["levels"]):
            n = 2 ** int(k)
            s = self.L0 / n
            ks = H["keys"][H["offsets"][j]:H["offsets"][j + 1]]
            r = (p - self.origin) / s
            base = np.floor(r).astype(np.int64)
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    idx = base + np.array([dx, dy])
                    frac = r - idx
                    inside = np.all((frac >= -pad) & (frac <= 1 + pad), axis=1)
                    inside &= np.all((idx >= 0) & (idx < n), axis=1)
                    key = idx[:, 0] * n + idx[:, 1]
                    at = np.clip(np.searchsorted(ks, key), 0, ks.size - 1)
                    cnt += inside & (ks[at] == key)
        return cnt

    def to_csv(self, path, manifest_ref=None):
        c = self.centers
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["level", "ix", "iy", "side", "cx", "cy", "dist"])
            for k, ix, s, cc, dd in zip(self.level, self.index, self.side, c, self.dist):
                w.writerow([int(k), int(ix[0]), int(ix[1]), repr(float(s)), repr(float(cc[0])),
                            repr(float(cc[1])), repr(float(dd))])
            if manifest_ref:
                fh.write(f"# manifest: {manifest_ref}\n")


def _build(domain, origin, L0, k_max, complement):
    origin = np.asarray(origin, dtype=float)
    idx = np.zeros((1, 2), dtype=np.int64)
    acc_lvl, acc_idx, acc_dist = [], [], []
    children = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=np.int64)
    front_idx = np.empty((0, 2), dtype=np.int64)
    for k in range(k_max + 1):
        s = L0 / 2.0 ** k
        lo = origin + idx * s
        hi = lo + s
        dist, _ = domain.box_dist(lo, hi)
        inside = domain.contains(lo + 0.5 * s)
        clear = dist > 0
        wanted = clear & (~inside if complement else inside)
        accept = wanted & (dist >= math.sqrt(2) * s)
        discard = clear & ~wanted
        if accept.any():
            acc_lvl.append(np.full(int(accept.sum()), k, dtype=np.int64))
            acc_idx.append(idx[accept])
            acc_dist.append(dist[accept])
        rest = idx[~accept & ~discard]
        if k == k_max:
            front_idx = rest
            break
        idx = (2 * rest[:, None, :] + children[None, :, :]).reshape(-1, 2)
        if idx.size == 0:
            break
    if acc_lvl:
        level = np.concatenate(acc_lvl)
        index = np.concatenate(acc_idx)
        dist = np.concatenate(acc_dist)
    else:
        level = np.empty(0, np.int64)
        index = np.empty((0, 2), np.int64)
        dist = np.empty(0)
    order = np.lexsort((index[:, 1], index[:, 0], level))
    return level[order], index[order], dist[order], front_idx


def whitney(domain, k_max=DEFAULT_KMAX, strict=False, volume_tol=VOLUME_TOL):
    """Whitney covering of ``domain`` by maximal dyadic cubes Q with
    ``diam(Q) <= dist(Q, boundary)``.

    Cubes are grown top-down from the domain's bounding box; an accepted
    cube is never subdivided, so its parent failed the test and
    ``dist(Q) <= 4 diam(Q)`` follows.  ``uncovered`` is the measure of
    the domain not reached by cubes of level <= k_max.  With
    ``strict=True`` a deficit above ``volume_tol * |box|`` raises
    DepthExhausted.
    """
    domain = make_domain(domain)
    box = domain.bounding_box
    level, index, dist, front = _build(domain, box.lo, box.side, k_max, False)
    L0 = box.side
    covered = float(np.sum((L0 / 2.0 ** level) ** 2))
    W = WhitneyCovering(domain, box.lo, L0, level, index, dist, False, k_max,
                        max(domain.area - covered, 0.0),
                        np.full(front.shape[0], k_max, np.int64), front)
    _check_depth(W, strict, volume_tol)
    return W


def whitney_complement(domain, k_max=DEFAULT_KMAX, strict=False, volume_tol=VOLUME_TOL,
                       inflation=3.0):
    """Whitney covering of the complement of the closed domain, clipped to
    the bounding box inflated ``inflation`` times about its centre."""
    domain = make_domain(domain)
    box = domain.bounding_box.dilate(inflation)
    level, index, dist, front = _build(domain, box.lo, box.side, k_max, True)
    L0 = box.side
    covered = float(np.sum((L0 / 2.0 ** level) ** 2))
    W = WhitneyCovering(domain, box.lo, L0, level, index, dist, True, k_max,
                        max(box.volume - domain.area - covered, 0.0),
                        np.full(front.shape[0], k_max, np.int64), front)
    _check_depth(W, strict, volume_tol)
    return W


def _check_depth(W, strict, volume_tol):
    limit = volume_tol * W.L0 ** 2
    if strict and W.uncovered >= limit:
        raise DepthExhausted(
            f"uncovered measure {W.uncovered:.3e} >= {limit:.3e} at k_max={W.k_max}",
            uncovered=W.uncovered,
        )


def retained(Wc, R=None):
    """Mask of complement cubes with side <= R."""
    R = Wc.domain.R if R is None else R
    return Wc.side <= R * (1 + 1e-12)


def reflective_indices(Wc, W, which=None, max_cells=4096, radius=None):
    """For complement cubes ``Wc[which]``, the position in ``W`` of the
    reflective cube: a largest cube of W within ``2 dist(Q, boundary)``
    of Q (or within ``radius``), ties broken by the smallest dyadic index.
    -1 where none exists."""
    which = np.arange(len(Wc)) if which is None else np.asarray(which)
    H = W._hash()
    qlo = np.ascontiguousarray(Wc.lo[which])
    qhi = np.ascontiguousarray(Wc.hi[which])
    h = 2.0 * Wc.dist[which] if radius is None else np.broadcast_to(radius, which.shape).astype(float)
    return kernels.reflective_hash(qlo, qhi, h, np.asarray(W.origin, dtype=float), float(W.L0),
                                   H["levels"], H["offsets"], H["keys"], H["pos"], max_cells)


def reflective_cube(Q, W, Wc=None):
    """Reflective cube of a complement cube Q (a Cube or a position in Wc)."""
    if not isinstance(Q, Cube):
        Q = Wc.cube(int(Q))
    dq, _ = W.domain.box_dist(Q.lo[None, :], Q.hi[None, :])
    H = W._hash()
    j = kernels.reflective_hash(Q.lo[None, :].copy(), Q.hi[None, :].copy(), 2.0 * dq,
                                np.asarray(W.origin, dtype=float), float(W.L0),
                                H["levels"], H["offsets"], H["keys"], H["pos"], 4096)[0]
    if j < 0:
        raise NoReflectiveCube(f"no cube of W within {2 * dq[0]:.3g} of {Q}")
    return W.cube(int(j))


# ---------------------------------------------------------------------------
# covering diagnostics


def vertical_intervals(W, window, sel):
    """Abscissa interval, in window coordinates, of the vertical lines whose
    in-window part meets each selected cube (NaN rows when none)."""
    half = 0.5 * window.R
    lo, hi = W.lo[sel], W.hi[sel]
    corners = np.stack([lo, np.stack([hi[:, 0], lo[:, 1]], 1), hi,
                        np.stack([lo[:, 0], hi[:, 1]], 1)], axis=1)
    q = corners - window.center
    x = q @ window.e
    y = q @ window.u
    cand_x = [np.where(np.abs(y) <= half, x, np.nan)]
    for i in range(4):
        j = (i + 1) % 4
        for c in (-half, half):
            dy = y[:, j] - y[:, i]
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (c - y[:, i]) / dy
            ok = (dy != 0) & (t >= 0) & (t <= 1)
            cand_x.append(np.where(ok, x[:, i] + t * (x[:, j] - x[:, i]), np.nan)[:, None])
    X = np.concatenate(cand_x, axis=1)
    valid = ~np.isnan(X)
    a = np.where(valid, X, np.inf).min(axis=1)
    b = np.where(valid, X, -np.inf).max(axis=1)
    a = np.maximum(a, -half)
    b = np.minimum(b, half)
    bad = ~(a <= b)
    a[bad] = np.nan
    b[bad] = np.nan
    return a, b


def vertical_count(W, window, side):
    """Largest number of covering cubes of the given side met by one
    vertical line of the window (inside the window)."""
    cls = np.flatnonzero(np.isclose(W.side, side, rtol=1e-9, atol=0.0))
    if cls.size == 0:
        return 0
    reach = window.R / math.sqrt(2) + math.sqrt(2) * side
    near = cls[np.hypot(*(W.centers[cls] - window.center).T) <= reach]
    if near.size == 0:
        return 0
    a, b = vertical_intervals(W, window, near)
    ok = ~np.isnan(a)
    a, b = a[ok], b[ok]
    if a.size == 0:
        return 0
    tol = 1e-12 * max(window.R, 1.0)
    ev = np.concatenate([a - tol, b + tol])
    kind = np.concatenate([np.zeros(a.size), np.ones(b.size)])  # opens before closes
    order = np.lexsort((kind, ev))
    step = np.where(kind[order] == 0, 1, -1)
    return int(np.max(np.cumsum(step)))


def vertical_profile(W):
    """Max vertical count over all windows, per level present in W."""
    out = {}
    for k in np.unique(W.level):
        s = W.L0 / 2.0 ** int(k)
        out[int(k)] = max(vertical_count(W, w, s) for w in W.domain.windows)
    return out


def _encode(level, index):
    return (np.asarray(level, np.int64) << 58) | (index[:, 0].astype(np.int64) << 29) | index[:, 1]


def check_axioms(W, n_lattice=256, seed=0):
    """Count violations of the covering axioms on W.

    Returns a dict with one integer violation count per property and the
    measured constants (overlap of the 6/5 dilates, neighbour ratio,
    uncovered measure).
    """
    dom = W.domain
    res = {}
    side = W.side
    k = W.level
    n = 2 ** k
    res["dyadic"] = int(np.sum((W.index < 0).any(axis=1) | (W.index >= n[:, None]).any(axis=1)))
    # (ii) disjoint: no duplicates, no cube strictly contains another
    code = _encode(k, W.index)
    dup = code.size - np.unique(code).size
    nest = np.zeros(code.size, dtype=bool)
    for m in range(int(k.max()) if k.size else 0):
        deeper = k > m
        sh = (k - m)[deeper]
        anc = _encode(np.full(sh.size, m), W.index[deeper] >> sh[:, None])
        nest[np.flatnonzero(deeper)] |= np.isin(anc, code)
    nest = int(nest.sum())
    res["disjoint"] = dup + nest
    # (iii) every cube inside (complement: outside) the closed domain, and
    # every lattice point farther than the truncation layer is covered
    dist, _ = dom.box_dist(W.lo, W.hi)
    inside = dom.contains(W.centers)
    wrong_side = (dist <= 0) | (inside if W.complement else ~inside)
    box = W.box
    rng = np.random.default_rng(seed)
    pts = box.lo + box.side * (np.stack(np.meshgrid(*[(np.arange(n_lattice) + 0.5) / n_lattice] * 2,
                                                     indexing="ij"), -1).reshape(-1, 2))
    pts = np.concatenate([pts, box.lo + box.side * rng.random((4096, 2))])
    pin = dom.contains(pts)
    target = ~pin if W.complement else pin
    layer = 2.0 * math.sqrt(2) * W.L0 / 2.0 ** W.k_max
    far = target & (dom.boundary_dist(pts) > layer * (1 + 1e-9))
    where = W.locate(pts)
    res["union"] = int(np.sum(wrong_side)) + int(np.sum(far & (where < 0)))
    res["uncovered"] = W.uncovered
    # (iv)
    ratio = dist / W.diam
    res["dist_ratio"] = int(np.sum((ratio < 1.0) | (ratio > 4.0)))
    res["dist_ratio_range"] = (float(ratio.min()), float(ratio.max())) if ratio.size else (1.0, 1.0)
    # (v) neighbours found through points just outside each corner
    eps = 1e-6 * side.min() if side.size else 0.0
    worst = 1.0
    bad = 0
    lo, hi = W.lo, W.hi
    for cx, sx in ((lo[:, 0], -1), (hi[:, 0], 1)):
        for cy, sy in ((lo[:, 1], -1), (hi[:, 1], 1)):
            for ox, oy in ((sx, sy), (sx, -sy), (-sx, sy)):
                q = np.stack([cx + ox * eps, cy + oy * eps], axis=1)
                j = W.locate(q)
                ok = j >= 0
                r = np.maximum(side[ok], side[j[ok]]) / np.minimum(side[ok], side[j[ok]])
                if r.size:
                    worst = max(worst, float(r.max()))
                    bad += int(np.sum(r > 4.0))
    res["neighbour"] = bad
    res["neighbour_ratio"] = worst
    # (vi) overlap of the 6/5 dilates, probed at centres, corners and the lattice
    probes = np.concatenate([W.centers, lo, hi, np.stack([lo[:, 0], hi[:, 1]], 1),
                             np.stack([hi[:, 0], lo[:, 1]], 1), pts])
    probes = np.unique(probes, axis=0)
    res["overlap"] = int(W.dilated_counts(probes).max()) if len(W) else 0
    return res
