"""Hot loops, each in a numba flavour (``*_nb``) and a numpy flavour (``*_np``).

The public names at the bottom pick one flavour according to
``zlab._accel.USE_NUMBA``.  Both flavours must agree to rounding; the
test-suite and ``benchmarks/bench_kernels.py`` exercise them side by side.

Segments are given as two ``(E, 2)`` endpoint arrays ``a`` and ``b``.
Boxes are axis-aligned, given by ``(N, 2)`` corner arrays ``lo``, ``hi``.
"""
import math

import numpy as np

from ._accel import USE_NUMBA, njit

_EPS = 1e-14


# ---------------------------------------------------------------------------
# point / segment distance


@njit
def _point_seg_dist_nb(px, py, ax, ay, bx, by):
    dx = bx - ax
    dy = by - ay
    L2 = dx * dx + dy * dy
    t = 0.0
    if L2 > 0.0:
        t = ((px - ax) * dx + (py - ay) * dy) / L2
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
    qx = ax + t * dx - px
    qy = ay + t * dy - py
    return math.sqrt(qx * qx + qy * qy)


@njit
def points_segments_dist_nb(p, a, b):
    n = p.shape[0]
    out = np.empty(n)
    for i in range(n):
        best = np.inf
        for e in range(a.shape[0]):
            d = _point_seg_dist_nb(p[i, 0], p[i, 1], a[e, 0], a[e, 1], b[e, 0], b[e, 1])
            if d < best:
                best = d
        out[i] = best
    return out


def _point_seg_dist_np(p, a, b):
    # p: (N, 1, 2); a, b: (1, E, 2) -> (N, E)
    d = b - a
    L2 = np.sum(d * d, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(L2 > 0, np.sum((p - a) * d, axis=-1) / np.where(L2 > 0, L2, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    q = a + t[..., None] * d - p
    return np.sqrt(np.sum(q * q, axis=-1))


def points_segments_dist_np(p, a, b):
    return _point_seg_dist_np(p[:, None, :], a[None, :, :], b[None, :, :]).min(axis=1)


# ---------------------------------------------------------------------------
# box / segment distance and crossing


@njit
def _clip_nb(ax, ay, bx, by, lox, loy, hix, hiy):
    # Liang-Barsky clip of segment a->b against the closed box; returns t0, t1
    # with t0 > t1 meaning no intersection.
    t0 = 0.0
    t1 = 1.0
    dx = bx - ax
    dy = by - ay
    for k in range(4):
        if k == 0:
            p = -dx
            q = ax - lox
        elif k == 1:
            p = dx
            q = hix - ax
        elif k == 2:
            p = -dy
            q = ay - loy
        else:
            p = dy
            q = hiy - ay
        if p == 0.0:
            if q < 0.0:
                return 1.0, 0.0
        else:
            r = q / p
            if p < 0.0:
                if r > t0:
                    t0 = r
            else:
                if r < t1:
                    t1 = r
    return t0, t1


@njit
def boxes_segments_nb(lo, hi, a, b):
    """Exact distance from each closed box to the union of segments, and
    whether any segment passes through the open box."""
    n = lo.shape[0]
    dist = np.empty(n)
    crossed = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        lox = lo[i, 0]
        loy = lo[i, 1]
        hix = hi[i, 0]
        hiy = hi[i, 1]
        tol = _EPS * max(1.0, abs(hix - lox))
        best = np.inf
        for e in range(a.shape[0]):
            ax = a[e, 0]
            ay = a[e, 1]
            bx = b[e, 0]
            by = b[e, 1]
            t0, t1 = _clip_nb(ax, ay, bx, by, lox, loy, hix, hiy)
            if t0 <= t1:
                best = 0.0
                if t1 - t0 > 0.0:
                    tm = 0.5 * (t0 + t1)
                    mx = ax + tm * (bx - ax)
                    my = ay + tm * (by - ay)
                    if lox + tol < mx < hix - tol and loy + tol < my < hiy - tol:
                        crossed[i] = True
                else:
                    mx = ax + t0 * (bx - ax)
                    my = ay + t0 * (by - ay)
                    if lox + tol < mx < hix - tol and loy + tol < my < hiy - tol:
                        crossed[i] = True
                continue
            if best == 0.0:
                continue
            # disjoint convex sets: the minimum is attained at a vertex
            for c in range(4):
                cx = lox if (c & 1) == 0 else hix
                cy = loy if (c & 2) == 0 else hiy
                d = _point_seg_dist_nb(cx, cy, ax, ay, bx, by)
                if d < best:
                    best = d
            for k in range(2):
                px = ax if k == 0 else bx
                py = ay if k == 0 else by
                gx = max(lox - px, 0.0, px - hix)
                gy = max(loy - py, 0.0, py - hiy)
                d = math.sqrt(gx * gx + gy * gy)
                if d < best:
                    best = d
        dist[i] = best
    return dist, crossed


def boxes_segments_np(lo, hi, a, b):
    N = lo.shape[0]
    E = a.shape[0]
    L = lo[:, None, :]
    H = hi[:, None, :]
    A = a[None, :, :]
    B = b[None, :, :]
    D = B - A
    t0 = np.zeros((N, E))
    t1 = np.ones((N, E))
    empty = np.zeros((N, E), dtype=bool)
    for axis in range(2):
        d = np.broadcast_to(D[..., axis], (N, E))
        qlo = A[..., axis] - L[..., axis]
        qhi = H[..., axis] - A[..., axis]
        par = d == 0.0
        empty |= par & ((qlo < 0) | (qhi < 0))
        with np.errstate(divide="ignore", invalid="ignore"):
            r_lo = np.where(par, -np.inf, qlo / np.where(par, 1.0, -d))
            r_hi = np.where(par, np.inf, qhi / np.where(par, 1.0, d))
        # p = -d for the lower face, p = d for the upper face
        enter = np.where(d > 0, r_lo, r_hi)
        leave = np.where(d > 0, r_hi, r_lo)
        enter = np.where(par, -np.inf, enter)
        leave = np.where(par, np.inf, leave)
        t0 = np.maximum(t0, enter)
        t1 = np.minimum(t1, leave)
    hit = (~empty) & (t0 <= t1)
    tol = _EPS * np.maximum(1.0, np.abs(hi[:, 0] - lo[:, 0]))[:, None]
    tm = np.where(t1 > t0, 0.5 * (t0 + t1), t0)
    M = A + tm[..., None] * D
    inner = np.all((M > L + tol[..., None]) & (M < H - tol[..., None]), axis=-1)
    crossed = np.any(hit & inner, axis=1)
    corners = np.stack([
        lo,
        np.stack([hi[:, 0], lo[:, 1]], axis=1),
        np.stack([lo[:, 0], hi[:, 1]], axis=1),
        hi,
    ], axis=1)  # (N, 4, 2)
    dc = _point_seg_dist_np(corners[:, :, None, :], A[:, None, :, :], B[:, None, :, :]).min(axis=1)
    ga = np.maximum(np.maximum(L - A, 0.0), A - H)
    gb = np.maximum(np.maximum(L - B, 0.0), B - H)
    da = np.sqrt(np.sum(ga * ga, axis=-1))
    db = np.sqrt(np.sum(gb * gb, axis=-1))
    dist = np.minimum(np.minimum(dc, da), db)
    dist = np.where(hit, 0.0, dist).min(axis=1)
    return dist, crossed


# ---------------------------------------------------------------------------
# point in polygon (even-odd rule)


@njit
def points_in_polygon_nb(p, a, b):
    n = p.shape[0]
    out = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        x = p[i, 0]
        y = p[i, 1]
        inside = False
        for e in range(a.shape[0]):
            ay = a[e, 1]
            by = b[e, 1]
            if (ay > y) != (by > y):
                xc = a[e, 0] + (y - ay) * (b[e, 0] - a[e, 0]) / (by - ay)
                if x < xc:
                    inside = not inside
        out[i] = inside
    return out


def points_in_polygon_np(p, a, b):
    x = p[:, 0:1]
    y = p[:, 1:2]
    ay = a[None, :, 1]
    by = b[None, :, 1]
    straddle = (ay > y) != (by > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xc = a[None, :, 0] + (y - ay) * (b[None, :, 0] - a[None, :, 0]) / np.where(straddle, by - ay, 1.0)
    cross = straddle & (x < xc)
    return (np.count_nonzero(cross, axis=1) % 2) == 1


# ---------------------------------------------------------------------------
# ray / segment hits


@njit
def ray_hits_nb(origin, dirs, a, b):
    """Parameters t > 0 where rays origin + t*dir cross each segment (inf if not).

    Segments are half-open [a, b) so a ray through a shared vertex is
    counted once.
    """
    T = dirs.shape[0]
    E = a.shape[0]
    out = np.full((T, E), np.inf)
    ox = origin[0]
    oy = origin[1]
    for i in range(T):
        ux = dirs[i, 0]
        uy = dirs[i, 1]
        for e in range(E):
            ex = b[e, 0] - a[e, 0]
            ey = b[e, 1] - a[e, 1]
            den = ux * ey - uy * ex
            if den == 0.0:
                continue
            wx = a[e, 0] - ox
            wy = a[e, 1] - oy
            t = (wx * ey - wy * ex) / den
            s = (wx * uy - wy * ux) / den
            if t > 0.0 and 0.0 <= s < 1.0:
                out[i, e] = t
    return out


def ray_hits_np(origin, dirs, a, b):
    e = (b - a)[None, :, :]
    u = dirs[:, None, :]
    w = (a - origin[None, :])[None, :, :]
    den = u[..., 0] * e[..., 1] - u[..., 1] * e[..., 0]
    ok = den != 0.0
    safe = np.where(ok, den, 1.0)
    t = (w[..., 0] * e[..., 1] - w[..., 1] * e[..., 0]) / safe
    s = (w[..., 0] * u[..., 1] - w[..., 1] * u[..., 0]) / safe
    valid = ok & (t > 0.0) & (s >= 0.0) & (s < 1.0)
    return np.where(valid, t, np.inf)


# ---------------------------------------------------------------------------
# reflective cube search


@njit
def reflective_search_nb(qlo, qhi, h, wlo, whi):
    """For each query box, the first W box (in the given priority order)
    within distance h[i].  -1 when none qualifies."""
    nq = qlo.shape[0]
    nw = wlo.shape[0]
    out = np.full(nq, -1, dtype=np.int64)
    for i in range(nq):
        lim = h[i] * (1.0 + 1e-12)
        lim2 = lim * lim
        for j in range(nw):
            gx = max(wlo[j, 0] - qhi[i, 0], 0.0, qlo[i, 0] - whi[j, 0])
            gy = max(wlo[j, 1] - qhi[i, 1], 0.0, qlo[i, 1] - whi[j, 1])
            if gx * gx + gy * gy <= lim2:
                out[i] = j
                break
    return out


def reflective_search_np(qlo, qhi, h, wlo, whi):
    out = np.full(qlo.shape[0], -1, dtype=np.int64)
    for i in range(qlo.shape[0]):
        g = np.maximum(np.maximum(wlo - qhi[i], 0.0), qlo[i] - whi)
        lim = h[i] * (1.0 + 1e-12)
        ok = np.sum(g * g, axis=1) <= lim * lim
        if ok.any():
            out[i] = int(np.argmax(ok))
    return out


if USE_NUMBA:
    points_segments_dist = points_segments_dist_nb
    boxes_segments = boxes_segments_nb
    points_in_polygon = points_in_polygon_nb
    ray_hits = ray_hits_nb
    reflective_search = reflective_search_nb
else:
    points_segments_dist = points_segments_dist_np
    boxes_segments = boxes_segments_np
    points_in_polygon = points_in_polygon_np
    ray_hits = ray_hits_np
    reflective_search = reflective_search_np

FLAVOURS = {
    "points_segments_dist": (points_segments_dist_nb, points_segments_dist_np),
    "boxes_segments": (boxes_segments_nb, boxes_segments_np),
    "points_in_polygon": (points_in_polygon_nb, points_in_polygon_np),
    "ray_hits": (ray_hits_nb, ray_hits_np),
    "reflective_search": (reflective_search_nb, reflective_search_np),
}


# ---------------------------------------------------------------------------
# reflective cube search via per-level hashing
#
# W is described by its distinct levels ``levels`` (ascending) and, per
# level, the sorted dyadic keys ``ix * 2**k + iy`` stored contiguously in
# ``keys[offsets[j]:offsets[j+1]]`` together with the position of each
# cube in the covering (``pos``).


@njit
def _find_sorted(keys, lo, hi, key):
    # index of key in keys[lo:hi] or -1
    a = lo
    b = hi
    while a < b:
        m = (a + b) // 2
        if keys[m] < key:
            a = m + 1
        else:
            b = m
    if a < hi and keys[a] == key:
        return a
    return -1


@njit
def reflective_hash_nb(qlo, qhi, h, origin, L0, levels, offsets, keys, pos, max_cells):
    nq = qlo.shape[0]
    out = np.full(nq, -1, dtype=np.int64)
    for i in range(nq):
        lim = h[i] * (1.0 + 1e-12)
        lim2 = lim * lim
        for j in range(levels.shape[0]):
            k = levels[j]
            s = L0 / (2.0 ** k)
            n = np.int64(2) ** k
            i0 = max(np.int64(math.floor((qlo[i, 0] - lim - origin[0]) / s)), 0)
            i1 = min(np.int64(math.floor((qhi[i, 0] + lim - origin[0]) / s)), n - 1)
            j0 = max(np.int64(math.floor((qlo[i, 1] - lim - origin[1]) / s)), 0)
            j1 = min(np.int64(math.floor((qhi[i, 1] + lim - origin[1]) / s)), n - 1)
            if i1 < i0 or j1 < j0:
                continue
            if (i1 - i0 + 1) * (j1 - j0 + 1) > max_cells:
                # too many cells to enumerate: scan the stored cubes instead
                best = -1
                for m in range(offsets[j], offsets[j + 1]):
                    kk = keys[m]
                    ix = kk // n
                    iy = kk - ix * n
                    lx = origin[0] + ix * s
                    ly = origin[1] + iy * s
                    gx = max(lx - qhi[i, 0], 0.0, qlo[i, 0] - (lx + s))
                    gy = max(ly - qhi[i, 1], 0.0, qlo[i, 1] - (ly + s))
                    if gx * gx + gy * gy <= lim2:
                        best = m
                        break
                if best >= 0:
                    out[i] = pos[best]
                    break
                continue
            found = -1
            for ix in range(i0, i1 + 1):
                lx = origin[0] + ix * s
                gx = max(lx - qhi[i, 0], 0.0, qlo[i, 0] - (lx + s))
                if gx * gx > lim2:
                    continue
                for iy in range(j0, j1 + 1):
                    ly = origin[1] + iy * s
                    gy = max(ly - qhi[i, 1], 0.0, qlo[i, 1] - (ly + s))
                    if gx * gx + gy * gy > lim2:
                        continue
                    m = _find_sorted(keys, offsets[j], offsets[j + 1], ix * n + iy)
                    if m >= 0:
                        found = m
                        break
                if found >= 0:
                    break
            if found >= 0:
                out[i] = pos[found]
                break
    return out


def reflective_hash_np(qlo, qhi, h, origin, L0, levels, offsets, keys, pos, max_cells):
    out = np.full(qlo.shape[0], -1, dtype=np.int64)
    for i in range(qlo.shape[0]):
        lim = h[i] * (1.0 + 1e-12)
        for j, k in enumerate(levels):
            s = L0 / 2.0 ** k
            n = 2 ** int(k)
            kk = keys[offsets[j]:offsets[j + 1]]
            ix = kk // n
            iy = kk - ix * n
            lx = origin[0] + ix * s
            ly = origin[1] + iy * s
            gx = np.maximum(np.maximum(lx - qhi[i, 0], 0.0), qlo[i, 0] - (lx + s))
            gy = np.maximum(np.maximum(ly - qhi[i, 1], 0.0), qlo[i, 1] - (ly + s))
            ok = gx * gx + gy * gy <= lim * lim
            if ok.any():
                # keys are sorted, so the first hit is the lexicographic minimum
                out[i] = pos[offsets[j] + int(np.argmax(ok))]
                break
    return out


reflective_hash = reflective_hash_nb if USE_NUMBA else reflective_hash_np
FLAVOURS["reflective_hash"] = (reflective_hash_nb, reflective_hash_np)
