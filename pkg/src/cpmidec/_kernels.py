"""Numeric inner loops: LCS length, Shannon entropy, rank counting.

Each kernel has a pure-numpy implementation and, when numba is importable,
a JIT-compiled twin. Set ``CPMIDEC_NO_NUMBA=1`` to force the numpy path
(useful for debugging and for the benchmark in benchmarks/bench_kernels.py,
which times both). Within one configuration results are deterministic;
across the two paths LCS and rank agree exactly, entropy to float rounding.
"""

from __future__ import annotations

import math
import os

import numpy as np

_DISABLED = os.environ.get("CPMIDEC_NO_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAVE_NUMBA = False

USING_NUMBA = HAVE_NUMBA and not _DISABLED


def lcs_length_np(a: np.ndarray, b: np.ndarray) -> int:
    """Length of the longest common subsequence of two int arrays.

    Row DP; the in-row dependency resolves as a prefix maximum because
    adjacent LCS cells never differ by more than one.
    """
    if a.size == 0 or b.size == 0:
        return 0
    prev = np.zeros(b.size + 1, dtype=np.int64)
    curr = np.zeros(b.size + 1, dtype=np.int64)
    for i in range(a.size):
        cand = np.where(b == a[i], prev[:-1] + 1, 0)
        np.maximum.accumulate(np.maximum(prev[1:], cand), out=curr[1:])
        prev, curr = curr, prev
    return int(prev[-1])


def entropy_np(log_probs: np.ndarray) -> float:
    """Shannon entropy in nats; -inf entries carry zero mass and contribute 0."""
    finite = log_probs > -math.inf
    lp = log_probs[finite]
    h = -float(np.exp(lp) @ lp)
    return h if h > 0.0 else 0.0


def rank_np(scores: np.ndarray, idx: int) -> int:
    """1-based rank of entry idx under descending score, ties broken by lower index."""
    v = scores[idx]
    greater = int(np.count_nonzero(scores > v))
    tied_before = int(np.count_nonzero(scores[:idx] == v))
    return 1 + greater + tied_before


if USING_NUMBA:

    @njit(cache=True)
    def lcs_length_jit(a, b):  # pragma: no cover - exercised via dispatch
        n, m = a.size, b.size
        if n == 0 or m == 0:
            return 0
        prev = np.zeros(m + 1, dtype=np.int64)
        curr = np.zeros(m + 1, dtype=np.int64)
        for i in range(n):
            for j in range(1, m + 1):
                if a[i] == b[j - 1]:
                    curr[j] = prev[j - 1] + 1
                else:
                    c = prev[j]
                    if curr[j - 1] > c:
                        c = curr[j - 1]
                    curr[j] = c
            prev, curr = curr, prev
        return prev[m]

    @njit(cache=True)
    def entropy_jit(log_probs):  # pragma: no cover - exercised via dispatch
        h = 0.0
        for i in range(log_probs.size):
            lp = log_probs[i]
            if lp > -np.inf:
                h -= math.exp(lp) * lp
        return h if h > 0.0 else 0.0

    @njit(cache=True)
    def rank_jit(scores, idx):  # pragma: no cover - exercised via dispatch
        v = scores[idx]
        r = 1
        for i in range(scores.size):
            s = scores[i]
            if s > v or (s == v and i < idx):
                r += 1
        return r

    def lcs_length(a: np.ndarray, b: np.ndarray) -> int:
        return int(lcs_length_jit(a, b))

    def entropy(log_probs: np.ndarray) -> float:
        return float(entropy_jit(log_probs))

    def rank(scores: np.ndarray, idx: int) -> int:
        return int(rank_jit(scores, idx))

else:
    lcs_length = lcs_length_np
    entropy = entropy_np
    rank = rank_np


def warmup() -> None:
    """Trigger JIT compilation so timed sections do not pay for it."""
    a = np.array([1, 2, 3], dtype=np.int64)
    lcs_length(a, a)
    entropy(np.log(np.array([0.5, 0.5])))
    rank(np.array([0.1, 0.9]), 0)
