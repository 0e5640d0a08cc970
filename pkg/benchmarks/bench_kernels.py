"""Time the JIT kernels against their pure-numpy fallbacks.

Run:  python benchmarks/bench_kernels.py [--repeats 5]

The package picks its path at import via CPMIDEC_NO_NUMBA; this script
imports both implementations directly so one process measures both.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from cpmidec import _kernels as K


def timeit(fn, *args, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if not K.USING_NUMBA:
        print("numba unavailable or disabled; nothing to compare against")
        return 1
    K.warmup()
    rng = np.random.default_rng(0)

    rows = []

    a = rng.integers(0, 50, size=2000).astype(np.int64)
    b = rng.integers(0, 50, size=2000).astype(np.int64)
    rows.append(
        (
            "lcs_length 2000x2000",
            timeit(K.lcs_length_np, a, b, repeats=args.repeats),
            timeit(K.lcs_length_jit, a, b, repeats=args.repeats),
        )
    )

    lp = np.log(rng.random(4096) + 1e-9)
    lp -= np.log(np.sum(np.exp(lp)))

    def entropy_np_many():
        for _ in range(2000):
            K.entropy_np(lp)

    def entropy_jit_many():
        for _ in range(2000):
            K.entropy_jit(lp)

    rows.append(
        (
            "entropy 4096-dim x2000",
            timeit(entropy_np_many, repeats=args.repeats),
            timeit(entropy_jit_many, repeats=args.repeats),
        )
    )

    scores = rng.random(4096)

    def rank_np_many():
        for i in range(0, 4096, 8):
            K.rank_np(scores, i)

    def rank_jit_many():
        for i in range(0, 4096, 8):
            K.rank_jit(scores, i)

    rows.append(
        (
            "rank 4096-dim x512",
            timeit(rank_np_many, repeats=args.repeats),
            timeit(rank_jit_many, repeats=args.repeats),
        )
    )

    print(f"{'kernel':<24} {'numpy':>10} {'numba':>10} {'speedup':>9}")
    for name, t_np, t_jit in rows:
        print(f"{name:<24} {t_np * 1e3:>8.2f}ms {t_jit * 1e3:>8.2f}ms {t_np / t_jit:>8.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
