"""Rank correlations: Kendall tau-b (two implementations) and Spearman rho.

Both return ``NaN`` when either input is constant, since the coefficient is
undefined there; callers must never read that as a zero correlation.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ValidationError

NOT_A_VALUE = float("nan")


def _pair(x, y) -> tuple:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ValidationError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValidationError(f"need at least 2 observations, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("correlation inputs must be finite")
    return x, y


def _tie_pairs(v: np.ndarray) -> int:
    _, counts = np.unique(v, return_counts=True)
    return int((counts * (counts - 1) // 2).sum())


def _tau_b(n: int, s: int, tx: int, ty: int) -> float:
    n0 = n * (n - 1) // 2
    denom = (n0 - tx) * (n0 - ty)
    if denom == 0:
        return NOT_A_VALUE
    return s / math.sqrt(denom)


def kendall_tau_naive(x, y) -> float:
    """Tau-b by direct comparison of all pairs, O(n^2)."""
    x, y = _pair(x, y)
    n = x.size
    s = 0
    for i in range(n - 1):
        s += int((np.sign(x[i + 1:] - x[i]) * np.sign(y[i + 1:] - y[i])).sum())
    return _tau_b(n, s, _tie_pairs(x), _tie_pairs(y))


def _count_inversions(a: np.ndarray) -> int:
    """Strict inversions (i < j, a[i] > a[j]) by bottom-up merge sort."""
    a = list(a)
    n = len(a)
    inv = 0
    width = 1
    buf = a[:]
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if a[j] < a[i]:
                    buf[k] = a[j]
                    inv += mid - i
                    j += 1
                else:
                    buf[k] = a[i]
                    i += 1
                k += 1
            buf[k:hi] = a[i:mid] + a[j:hi]
        a, buf = buf, a
        width *= 2
    return inv


def kendall_tau(x, y) -> float:
    """Tau-b in O(n log n): sort by (x, y), then count y-inversions."""
    x, y = _pair(x, y)
    n = x.size
    order = np.lexsort((y, x))
    xs, ys = x[order], y[order]
    tx = _tie_pairs(xs)
    ty = _tie_pairs(ys)
    # pairs tied in both x and y
    _, joint = np.unique(np.stack([xs, ys]), axis=1, return_counts=True)
    txy = int((joint * (joint - 1) // 2).sum())
    n0 = n * (n - 1) // 2
    discordant = _count_inversions(ys)
    concordant = n0 - tx - ty + txy - discordant
    return _tau_b(n, concordant - discordant, tx, ty)


def midranks(v) -> np.ndarray:
    """Ranks 1..n with tied values sharing the average of their positions."""
    v = np.asarray(v, dtype=np.float64).ravel()
    order = np.argsort(v, kind="mergesort")
    sv = v[order]
    ranks = np.empty(v.size)
    start = 0
    while start < v.size:
        stop = start + 1
        while stop < v.size and sv[stop] == sv[start]:
            stop += 1
        ranks[order[start:stop]] = 0.5 * (start + stop - 1) + 1.0
        start = stop
    return ranks


def pearson(x, y) -> float:
    x, y = _pair(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if denom == 0:
        return NOT_A_VALUE
    return float(np.clip((dx @ dy) / denom, -1.0, 1.0))


def spearman_rho(x, y) -> float:
    x, y = _pair(x, y)
    return pearson(midranks(x), midranks(y))
