"""Independent reference implementations used only by the tests.

Each oracle recomputes a production value through a structurally different
algorithm (exhaustive enumeration, plain recursion, scalar loops) so that
agreement is meaningful evidence rather than a restatement.
"""

import math
from functools import lru_cache

import numpy as np


def brute_force_min_mean_path(cost: np.ndarray) -> float:
    """Enumerate every monotone path through the cost matrix.

    Sums accumulate left to right along the path and each sum divides by
    its own path length, mirroring the production DP's float operations so
    equality can be exact.
    """
    n, m = cost.shape
    best = math.inf

    def walk(i: int, j: int, total: float, length: int) -> None:
        nonlocal best
        total = total + float(cost[i, j])
        length += 1
        if i == n - 1 and j == m - 1:
            cand = total / length
            if cand < best:
                best = cand
            return
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, total, length)
        if j + 1 < m:
            walk(i, j + 1, total, length)
        if i + 1 < n:
            walk(i + 1, j, total, length)

    walk(0, 0, 0.0, 0)
    return best


def angular_distance_scalar(u, v) -> float:
    """Angular frame distance via plain Python scalar math."""
    nu = math.sqrt(sum(float(x) * float(x) for x in u))
    nv = math.sqrt(sum(float(x) * float(x) for x in v))
    if nu == 0.0 or nv == 0.0:
        return 0.5
    dot = sum(float(a) * float(b) for a, b in zip(u, v))
    cos = max(-1.0, min(1.0, dot / (nu * nv)))
    return math.acos(cos) / math.pi


def nearest_code_scan(frames: np.ndarray, centroids: np.ndarray):
    """Per-frame nearest centroid by an explicit scan in float64.

    Ties resolve to the lowest index because strict less-than is required
    to displace the incumbent.
    """
    cents = centroids.astype(np.float64)
    out = []
    total = 0.0
    for frame in frames.astype(np.float64):
        best_code = 0
        diff = frame - cents[0]
        best_dist = float((diff * diff).sum())
        for code in range(1, cents.shape[0]):
            diff = frame - cents[code]
            dist = float((diff * diff).sum())
            if dist < best_dist:
                best_dist = dist
                best_code = code
        out.append(best_code)
        total += best_dist
    return np.asarray(out, dtype=np.int64), total


def recursive_edit_distance(ref: tuple, hyp: tuple) -> int:
    """Levenshtein distance by memoized recursion over suffixes."""

    @lru_cache(maxsize=None)
    def go(i: int, j: int) -> int:
        if i == len(ref):
            return len(hyp) - j
        if j == len(hyp):
            return len(ref) - i
        if ref[i] == hyp[j]:
            return go(i + 1, j + 1)
        return 1 + min(go(i + 1, j), go(i, j + 1), go(i + 1, j + 1))

    return go(0, 0)


def js_divergence_scalar(p, q, base: float = 2.0) -> float:
    """Jensen-Shannon divergence by direct summation with scalar logs."""
    total = 0.0
    for pi, qi in zip(p, q):
        pi = float(pi)
        qi = float(qi)
        mi = 0.5 * (pi + qi)
        if pi > 0.0:
            total += 0.5 * pi * math.log(pi / mi, base)
        if qi > 0.0:
            total += 0.5 * qi * math.log(qi / mi, base)
    return total


def js_distance_scalar(p, q, base: float = 2.0) -> float:
    return math.sqrt(max(0.0, js_divergence_scalar(p, q, base)))
