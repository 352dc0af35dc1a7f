"""Time the numba and numpy variants of every kernel on realistic inputs.

    python benchmarks/bench_kernels.py [--repeat N]

The first numba call (compilation) is timed separately and excluded from the
per-call figures. Each kernel's outputs are compared before timing.
"""

import argparse
import time

import numpy as np

from fairrl import _accel, kernels
from fairrl.envs.graph import small_world


def cases(rng):
    n = 1024
    seg_end = np.zeros(n, dtype=np.bool_)
    seg_end[rng.choice(n, 8, replace=False)] = True
    seg_end[-1] = True
    yield "gae (1024 steps)", "_gae", (
        rng.normal(size=n), rng.normal(size=n), seg_end, rng.normal(size=n), 0.99, 0.95)

    p, q = rng.dirichlet(np.ones(7)), rng.dirichlet(np.ones(7))
    yield "w1 (7 buckets)", "_w1", (p, q, np.arange(1.0, 8.0))

    yield "allocation (5 locations, 6 units)", "_build_allocation", (rng.dirichlet(np.ones(5)), 6)

    g = small_world(50, 4, 0.1, 0)
    infected = rng.random(g.n) < 0.2
    yield "infected neighbours (50 vertices)", "_infected_neighbor_counts", (g.indptr, g.indices, infected)

    active = np.ones(g.n_edges, dtype=np.bool_)
    yield "edge betweenness (50 vertices)", "_edge_betweenness", (
        g.indptr, g.indices, g.edge_of, active, g.n_edges)


def per_call(fn, args, repeat):
    start = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - start) / repeat


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=2000)
    args = parser.parse_args()
    if not _accel.HAVE_NUMBA:
        print("numba is not importable; only the numpy kernels exist")
        return
    rng = np.random.default_rng(0)
    print(f"{'kernel':<36} {'compile':>9} {'numba':>10} {'numpy':>10} {'speedup':>8}")
    for label, prefix, kargs in cases(rng):
        nb, np_ = getattr(kernels, prefix + "_nb"), getattr(kernels, prefix + "_np")
        start = time.perf_counter()
        out_nb = nb(*kargs)
        compile_s = time.perf_counter() - start
        if not np.allclose(out_nb, np_(*kargs), atol=1e-12):
            raise SystemExit(f"{label}: numba and numpy outputs differ")
        repeat = max(1, args.repeat // 20) if "betweenness" in label else args.repeat
        t_nb, t_np = per_call(nb, kargs, repeat), per_call(np_, kargs, repeat)
        print(f"{label:<36} {compile_s:>8.2f}s {t_nb * 1e6:>8.1f}us {t_np * 1e6:>8.1f}us {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
