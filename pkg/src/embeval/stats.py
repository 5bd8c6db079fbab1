"""Correlation and significance machinery.

Kendall and ROC AUC are computed from exact integer pair counts so they
agree bit-for-bit with their brute-force pair-enumeration definitions; the
Williams test follows the closed form for comparing two correlations that
share a variable, with the one-sided p-value from the t distribution
(regularized incomplete beta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import stdtr

from .errors import (
    AllTiedError,
    DegenerateInputError,
    OneClassOnlyError,
    ZeroVarianceError,
)
from .rng import DOMAIN_BOOTSTRAP, substream


def _as_floats(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-d")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def pearson(x, y) -> float:
    """Sample Pearson correlation."""
    xa, ya = _as_floats(x, "x"), _as_floats(y, "y")
    if xa.shape != ya.shape or xa.size < 2:
        raise ValueError("pearson needs two equal-length vectors of size >= 2")
    xc = xa - xa.mean()
    yc = ya - ya.mean()
    ssx = float(xc @ xc)
    ssy = float(yc @ yc)
    if ssx == 0.0 or ssy == 0.0:
        raise ZeroVarianceError("pearson is undefined for a constant vector")
    r = float(xc @ yc) / math.sqrt(ssx * ssy)
    return max(-1.0, min(1.0, r))


def _tie_pairs(values: Sequence) -> int:
    """Sum of C(t, 2) over runs of equal values in a sorted sequence."""
    total = 0
    run = 1
    for prev, cur in zip(values, values[1:]):
        if cur == prev:
            run += 1
        else:
            total += run * (run - 1) // 2
            run = 1
    total += run * (run - 1) // 2
    return total


def _inversions(a: list) -> int:
    """Strict inversions (left > right) counted during an iterative mergesort."""
    a = list(a)
    n = len(a)
    buf = [None] * n
    count = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            if mid >= hi:
                continue
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if a[j] < a[i]:
                    count += mid - i
                    buf[k] = a[j]
                    j += 1
                else:
                    buf[k] = a[i]
                    i += 1
                k += 1
            while i < mid:
                buf[k] = a[i]
                i += 1
                k += 1
            while j < hi:
                buf[k] = a[j]
                j += 1
                k += 1
            a[lo:hi] = buf[lo:hi]
        width *= 2
    return count


def kendall(x, y) -> float:
    """Tie-corrected Kendall tau-b: (C-D)/sqrt((C+D+Tx)(C+D+Ty)).

    C, D, and the single-sided tie counts are exact integers derived by a
    mergesort inversion count, so the result is bit-identical to the O(n^2)
    pair-enumeration definition.
    """
    xa, ya = _as_floats(x, "x"), _as_floats(y, "y")
    if xa.shape != ya.shape or xa.size < 2:
        raise ValueError("kendall needs two equal-length vectors of size >= 2")
    n = xa.size
    order = sorted(range(n), key=lambda i: (xa[i], ya[i]))
    xs = [float(xa[i]) for i in order]
    ys = [float(ya[i]) for i in order]
    n0 = n * (n - 1) // 2
    ties_x = _tie_pairs(xs)
    ties_xy = _tie_pairs(list(zip(xs, ys)))
    ties_y = _tie_pairs(sorted(ys))
    discordant = _inversions(ys)
    concordant = n0 - ties_x - ties_y + ties_xy - discordant
    tx_only = ties_x - ties_xy
    ty_only = ties_y - ties_xy
    denom = (concordant + discordant + tx_only) * (concordant + discordant + ty_only)
    if denom == 0:
        raise AllTiedError("kendall denominator is zero")
    return (concordant - discordant) / math.sqrt(denom)


@dataclass(frozen=True)
class WilliamsResult:
    t: float
    p: float
    df: int


def williams_test(r12: float, r13: float, r23: float, n: int) -> WilliamsResult:
    """One-sided test that correlation r12 exceeds r13, sharing variable 1.

    t = (r12 - r13) sqrt((n-1)(1+r23)) /
        sqrt(2K(n-1)/(n-3) + rbar^2 (1-r23)^3)
    with K = 1 - r12^2 - r13^2 - r23^2 + 2 r12 r13 r23 and
    rbar = (r12+r13)/2; p = P(T > t) at n-3 degrees of freedom.
    """
    for name, r in (("r12", r12), ("r13", r13), ("r23", r23)):
        if not math.isfinite(r) or abs(r) > 1:
            raise ValueError(f"{name}={r} is not a correlation")
    if n < 4:
        raise DegenerateInputError(f"n={n} leaves no degrees of freedom")
    k = 1.0 - r12 ** 2 - r13 ** 2 - r23 ** 2 + 2.0 * r12 * r13 * r23
    if k <= 1e-12:
        raise DegenerateInputError(f"correlation matrix is singular (K={k:.3e})")
    rbar = (r12 + r13) / 2.0
    df = n - 3
    t = (r12 - r13) * math.sqrt((n - 1) * (1.0 + r23)) / math.sqrt(
        2.0 * k * (n - 1) / df + rbar ** 2 * (1.0 - r23) ** 3
    )
    p = float(stdtr(df, -t))
    return WilliamsResult(t=t, p=p, df=df)


def bootstrap_compare(metric_a, metric_b, human, iterations: int, seed: int) -> float:
    """Bootstrap p-value that metric B's Kendall tau beats metric A's.

    Each iteration resamples segment indices with replacement from its own
    (seed, iteration) substream and compares kendall(A*, h*) against
    kendall(B*, h*); exact ties and degenerate resamples earn 0.5 credit.
    Small p means A is reliably better.
    """
    a = _as_floats(metric_a, "metric_a")
    b = _as_floats(metric_b, "metric_b")
    h = _as_floats(human, "human")
    if not (a.shape == b.shape == h.shape):
        raise ValueError("score vectors must share one length")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    n = a.size
    credit = 0.0
    for it in range(iterations):
        idx = substream(seed, DOMAIN_BOOTSTRAP, it).integers(0, n, size=n)
        try:
            tau_a = kendall(a[idx], h[idx])
            tau_b = kendall(b[idx], h[idx])
        except AllTiedError:
            credit += 0.5
            continue
        if tau_a < tau_b:
            credit += 1.0
        elif tau_a == tau_b:
            credit += 0.5
    return credit / iterations


def roc_auc(labels, scores) -> float:
    """Probability a random positive outscores a random negative (ties 0.5).

    Midranks are accumulated as doubled integers, so the result is
    bit-identical to the O(P*N) pairwise enumeration.
    """
    scores = _as_floats(scores, "scores")
    labels = [bool(b) for b in labels]
    if len(labels) != scores.size:
        raise ValueError("labels and scores must have equal length")
    n_pos = sum(labels)
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise OneClassOnlyError("need at least one positive and one negative label")
    order = sorted(range(len(labels)), key=lambda i: scores[i])
    doubled_rank_sum = 0  # sum over positives of (2 * midrank), an exact integer
    start = 0
    while start < len(order):
        end = start
        while end < len(order) and scores[order[end]] == scores[order[start]]:
            end += 1
        group_size = end - start
        positives = sum(1 for i in order[start:end] if labels[i])
        doubled_rank_sum += positives * (2 * (start + 1) + group_size - 1)
        start = end
    return (doubled_rank_sum - n_pos * (n_pos + 1)) / (2 * n_pos * n_neg)
