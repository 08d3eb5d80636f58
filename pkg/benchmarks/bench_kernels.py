"""Numba vs numpy timings for the geometric hot loops.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--size 20000]

Both flavours are called directly (the ``ZLAB_NUMBA`` switch only picks
the default binding), so one run compares them side by side.  The first
numba call is excluded from the timing to keep JIT compilation out.
"""
import argparse
import timeit

import numpy as np

from zlab.geometry import whitney, whitney_complement

from zlab.kernels import FLAVOURS


def _inputs(size, rng):
    # a 256-gon: enough edges for the loops to matter
    th = 2 * np.pi * np.arange(256) / 256
    a = np.stack([np.cos(th), np.sin(th)], 1)
    b = np.roll(a, -1, axis=0)
    p = rng.uniform(-1.2, 1.2, (size, 2))
    lo = rng.uniform(-1.2, 1.1, (size, 2))
    hi = lo + rng.uniform(0.001, 0.1, (size, 1))
    th = rng.uniform(0, 2 * np.pi, size // 10)
    dirs = np.stack([np.cos(th), np.sin(th)], 1)
    nq = max(size // 50, 1)
    qlo = rng.uniform(-1, 1, (nq, 2))
    h = rng.uniform(0.01, 0.2, nq)
    wlo = rng.uniform(-1, 1, (size // 4, 2))
    W = whitney("unit_square", 9)
    Wc = whitney_complement("unit_square", 9)
    H = W._hash()
    sel = rng.choice(len(Wc), min(size // 10, len(Wc)), replace=False)
    refl = (np.ascontiguousarray(Wc.lo[sel]), np.ascontiguousarray(Wc.hi[sel]), 2.0 * Wc.dist[sel],
            np.asarray(W.origin, dtype=float), float(W.L0), H["levels"], H["offsets"], H["keys"],
            H["pos"], 4096)
    return {
        "reflective_hash": refl,
        "points_segments_dist": (p, a, b),
        "boxes_segments": (lo, hi, a, b),
        "points_in_polygon": (p, a, b),
        "ray_hits": (np.array([0.1, 0.2]), dirs, a, b),
        "reflective_search": (qlo, qlo + 0.01, h, wlo, wlo + 0.02),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", type=int, default=20000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    args_by_name = _inputs(args.size, np.random.default_rng(args.seed))
    print(f"{'kernel':24s} {'numba [ms]':>12s} {'numpy [ms]':>12s} {'speedup':>9s}")
    for name, (nb, npf) in FLAVOURS.items():
        a = args_by_name[name]
        nb(*a)  # compile
        t_nb = min(timeit.repeat(lambda: nb(*a), number=1, repeat=args.repeat))
        t_np = min(timeit.repeat(lambda: npf(*a), number=1, repeat=args.repeat))
        print(f"{name:24s} {1e3 * t_nb:12.3f} {1e3 * t_np:12.3f} {t_np / t_nb:9.1f}")


if __name__ == "__main__":
    main()
