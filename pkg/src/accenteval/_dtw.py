"""Shared alignment core: local cost matrices and mean-cost DTW.

The DP normalizes by alignment path length, which makes the value a mean
local cost rather than a sum; that in turn forces a length-stratified
recursion (the cheapest sum for each path length separately, then a min of
means over lengths). Costs are computed with broadcast products instead of
matmuls so values do not depend on the argument order or a BLAS kernel.
"""

import math

import numpy as np


def unit_rows(mat: np.ndarray):
    """Rows scaled to unit norm in float64, plus a mask of all-zero rows."""
    m = np.asarray(mat, dtype=np.float64)
    norms = np.sqrt((m * m).sum(axis=1))
    zero = norms == 0.0
    safe = np.where(zero, 1.0, norms)
    return m / safe[:, None], zero


def angular_cost_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise angular distances between the rows of a and b, in [0, 1].

    Entry (i, j) is arccos of the cosine similarity over pi. Rows with zero
    norm carry no direction and get a flat 0.5 against everything.
    """
    ua, za = unit_rows(a)
    ub, zb = unit_rows(b)
    n, m = ua.shape[0], ub.shape[0]
    cost = np.empty((n, m), dtype=np.float64)
    chunk = max(1, 2_000_000 // max(1, m * ua.shape[1]))
    for lo in range(0, n, chunk):
        block = ua[lo : lo + chunk]
        cos = (block[:, None, :] * ub[None, :, :]).sum(axis=-1)
        cost[lo : lo + block.shape[0]] = np.arccos(np.clip(cos, -1.0, 1.0)) / math.pi
    if za.any():
        cost[za, :] = 0.5
    if zb.any():
        cost[:, zb] = 0.5
    return cost


def min_mean_path(cost: np.ndarray) -> float:
    """Minimum over monotone alignment paths of the mean local cost.

    Paths start at (0, 0), end at (n-1, m-1), and step diagonal, right, or
    down. Layer L of the DP holds the cheapest total cost of any L-cell
    path into each position; the result is the min over L of tail / L.
    """
    n, m = cost.shape
    d = np.full((n, m), np.inf)
    d[0, 0] = cost[0, 0]
    best = float(d[n - 1, m - 1])  # finite only when n == m == 1
    for length in range(2, n + m):
        step = np.full((n, m), np.inf)
        step[1:, 1:] = d[:-1, :-1]
        np.minimum(step[1:, :], d[:-1, :], out=step[1:, :])
        np.minimum(step[:, 1:], d[:, :-1], out=step[:, 1:])
        d = step + cost
        tail = float(d[n - 1, m - 1])
        if math.isfinite(tail):
            best = min(best, tail / length)
    return best
