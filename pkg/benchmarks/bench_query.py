"""End-to-end per-target query time for each method under the active backend.

Run once per backend and compare:

    MMSEEKER_NUMBA=1 python3 benchmarks/bench_query.py
    MMSEEKER_NUMBA=0 python3 benchmarks/bench_query.py
"""
from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from mmseeker import backend_name
from mmseeker.cascade import LSHIndex, build_indexes, cascade_topk, lsh_topk
from mmseeker.exact import exact_topk
from mmseeker.pq_retrieval import MultiModalPQ
from mmseeker.rq_retrieval import ResidualIndex, rq_topk
from mmseeker.synth import SynthConfig, generate, generate_targets


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0],
                                formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--L", type=int, default=10000, help="sequence length")
    p.add_argument("--K", type=int, default=256, help="results per query")
    p.add_argument("--targets", type=int, default=20, help="timed targets")
    p.add_argument("--kmeans-iters", type=int, default=5, help="Lloyd iterations for PQ and RQ")
    args = p.parse_args(argv)
    cfg = SynthConfig(L=args.L, seed=0)
    store, fw = generate(cfg), cfg.fusion
    targets = generate_targets(cfg, args.targets)
    pq = MultiModalPQ.fit(store, 8, 512, seed=0, max_iters=args.kmeans_iters)
    flat = build_indexes(store, "flat")
    lsh = LSHIndex.build(store, fw, 128, seed=0)
    rq = ResidualIndex.fit(store, 4, 256, seed=0, max_iters=args.kmeans_iters)
    methods = {
        "exact": lambda t: exact_topk(store, t, fw, args.K),
        "pq": lambda t: pq.search(t, fw, args.K),
        "cascade_flat": lambda t: cascade_topk(flat, store, t, fw, args.K),
        "lsh": lambda t: lsh_topk(lsh, store, t, fw, args.K),
        "rq": lambda t: rq_topk(rq, store, t, fw, args.K),
    }
    print(f"backend={backend_name()} L={args.L} K={args.K}")
    for name, q in methods.items():
        q(targets[0])
        ts = []
        for t in targets:
            t0 = time.perf_counter()
            q(t)
            ts.append(time.perf_counter() - t0)
        print(f"{name:<14}{np.median(ts) * 1e6:>10.0f} us")
    return 0


if __name__ == "__main__":
    sys.exit(main())
