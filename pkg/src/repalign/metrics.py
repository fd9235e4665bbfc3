"""Prediction quality metrics: Pearson r, Spearman rho, RMSE.

Definitions pinned here: Pearson is the centered product-moment
correlation; Spearman is Pearson applied to average ranks (ties share the
mean of the rank positions they cover); RMSE is the root of the mean
squared difference. A correlation involving a constant sequence is
reported as 0.0 rather than NaN so comparisons stay total.
"""

from __future__ import annotations

import numpy as np


def _as_vec(x, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64).ravel()
    if not np.isfinite(v).all():
        raise ValueError(f"{name} contains non-finite values")
    return v


def pearson(a, b) -> float:
    x = _as_vec(a, "a")
    y = _as_vec(b, "b")
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    if x.size < 2:
        raise ValueError("need at least 2 points")
    xc = x - x.mean()
    yc = y - y.mean()
    den = np.sqrt((xc @ xc) * (yc @ yc))
    if den == 0.0:
        return 0.0
    return float((xc @ yc) / den)


def average_ranks(x) -> np.ndarray:
    """1-based ranks with ties assigned the mean of their positions."""
    v = _as_vec(x, "x")
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size)
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(a, b) -> float:
    return pearson(average_ranks(a), average_ranks(b))


def rmse(a, b) -> float:
    x = _as_vec(a, "a")
    y = _as_vec(b, "b")
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    if x.size == 0:
        raise ValueError("need at least 1 point")
    diff = x - y
    return float(np.sqrt((diff @ diff) / x.size))
