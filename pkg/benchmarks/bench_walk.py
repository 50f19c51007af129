"""Benchmark the compiled walk kernel against the numpy fallback.

Both backends implement the same SplitMix64 scheme and must return
bit-identical hit flags and final positions; this script checks that on
every run and reports wall-clock times side by side.

Usage: python3 benchmarks/bench_walk.py [--trajectories N] [--horizon H]
"""

import argparse
import time

import numpy as np

from thermoops._kernels import walk_py
from thermoops.randomwalk import WalkSpec

try:
    from thermoops._kernels import walk_cy
except ImportError:
    walk_cy = None


def run(backend, spec, n_traj, horizon, seed):
    jumps, p = spec.ordered()
    cum = np.cumsum(p)
    hit = np.zeros(n_traj, dtype=np.uint8)
    pos = np.zeros(n_traj, dtype=np.int64)
    t0 = time.perf_counter()
    hits = backend.simulate(cum, jumps, n_traj, horizon, spec.xi,
                            np.uint64(seed), hit, pos)
    return time.perf_counter() - t0, hits, hit, pos


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trajectories", type=int, default=200_000)
    ap.add_argument("--horizon", type=int, default=1024)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    specs = [
        ("nearest up 3/4", WalkSpec({1: 0.75, -1: 0.25}, xi=1)),
        ("lazy drift", WalkSpec({1: 0.5, 0: 0.3, -1: 0.2}, xi=4)),
        ("long jumps", WalkSpec({3: 0.3, 1: 0.3, -2: 0.4}, xi=2)),
    ]

    if walk_cy is None:
        print("compiled kernel not built; timing the numpy fallback only")
    header = f"{'walk':<16}{'trajectories':>13}{'numpy [s]':>11}{'cython [s]':>12}{'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, spec in specs:
        t_py, hits_py, hit_py, pos_py = run(walk_py, spec, args.trajectories,
                                            args.horizon, args.seed)
        if walk_cy is None:
            print(f"{name:<16}{args.trajectories:>13}{t_py:>11.3f}{'-':>12}{'-':>9}")
            continue
        t_cy, hits_cy, hit_cy, pos_cy = run(walk_cy, spec, args.trajectories,
                                            args.horizon, args.seed)
        if hits_py != hits_cy or not np.array_equal(hit_py, hit_cy) \
                or not np.array_equal(pos_py, pos_cy):
            raise SystemExit(f"backend mismatch on {name!r}: kernels diverged")
        print(f"{name:<16}{args.trajectories:>13}{t_py:>11.3f}{t_cy:>12.3f}"
              f"{t_py / t_cy:>8.1f}x")
    if walk_cy is not None:
        print("all outputs bit-identical across backends")


if __name__ == "__main__":
    main()
