"""Numba vs pure-numpy timings for every hot kernel at the default operating point.

    python3 benchmarks/bench_kernels.py [--L 10000] [--repeat 20] [--csv out.csv]

Both backends are imported side by side from ``mmseeker.kernels``; the
numba column includes nothing from compilation (one warm-up call first).
"""
from __future__ import annotations

import argparse
import csv
import sys
import time

import numpy as np

from mmseeker import kernels
from mmseeker._accel import set_threads


def cases(L: int, rng: np.random.Generator):
    M, d, nb, C = 4, 64, 8, 512
    vectors = rng.normal(size=(L, M, d)).astype(np.float32)
    gamma = np.full(M, 0.25)
    codes = rng.integers(C, size=(L, M, nb)).astype(np.uint16)
    rows = rng.normal(size=(M, M, nb, C)).astype(np.float32)
    lut = rng.normal(size=(M, 4, 256))
    rq_codes = rng.integers(256, size=(L, M, 4)).astype(np.uint16)
    keys = rng.integers(0, 2**63, size=(L, 2), dtype=np.uint64)
    sub = rng.normal(size=(L, d // nb))
    cents = rng.normal(size=(C, d // nb))
    labels = rng.integers(C, size=L)
    return {
        "fused_scores": (vectors, gamma, rng.normal(size=d)),
        "dot_rows": (vectors[:, 0].astype(np.float64), rng.normal(size=d)),
        "pq_scan": (rows, codes, gamma, gamma),
        "pq_assign": (vectors[:, 0], rng.normal(size=(nb, C, d // nb)).astype(np.float32)),
        "lut_scan": (lut, rq_codes, gamma),
        "hamming_scan": (keys, keys[0]),
        "nearest_centroid": (sub, cents),
        "assign_expanded": (sub, (sub ** 2).sum(axis=1), cents),
        "cluster_sums": (sub, labels, C),
    }


def timeit(fn, args, repeat: int) -> float:
    fn(*args)
    ts = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        ts.append(time.perf_counter() - t0)
    return float(np.median(ts))


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0],
                                formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--L", type=int, default=10000, help="sequence length")
    p.add_argument("--repeat", type=int, default=20, help="timed calls per kernel")
    p.add_argument("--threads", type=int, default=None, help="numba worker threads")
    p.add_argument("--csv", default=None, help="also write results to this CSV file")
    args = p.parse_args(argv)
    if "numba" not in kernels.IMPLEMENTATIONS:
        print("numba is not installed; nothing to compare", file=sys.stderr)
        return 1
    set_threads(args.threads)
    rows = []
    print(f"{'kernel':<18}{'numba_us':>12}{'numpy_us':>12}{'speedup':>10}")
    for name, a in cases(args.L, np.random.default_rng(0)).items():
        nb_t = timeit(kernels.IMPLEMENTATIONS["numba"][name], a, args.repeat)
        np_t = timeit(kernels.IMPLEMENTATIONS["numpy"][name], a, args.repeat)
        rows.append((name, nb_t * 1e6, np_t * 1e6, np_t / nb_t))
        print(f"{name:<18}{nb_t * 1e6:>12.1f}{np_t * 1e6:>12.1f}{np_t / nb_t:>9.1f}x")
    if args.csv:
        with open(args.csv, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(("kernel", "numba_us", "numpy_us", "speedup"))
            w.writerows((r[0], f"{r[1]:.1f}", f"{r[2]:.1f}", f"{r[3]:.2f}") for r in rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
