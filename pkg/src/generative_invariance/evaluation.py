"""Energy-distance statistics and prediction scoring.

The two-sample energy statistic is the V-statistic

    2/(n1 n2) sum |a_i - b_j| - 1/n1^2 sum |a_i - a_j| - 1/n2^2 sum |b_i - b_j|

with Euclidean distances; it is zero iff the samples' distributions
coincide (in the population limit) and symmetric in the sample order.
Computation is direct, O(n1 n2 + n1^2 + n2^2); a pair-count guard errors
on inputs that would exceed it rather than silently subsampling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .data import Dataset

MAX_PAIRS = 100_000_000


@dataclass(frozen=True)
class EnergyResult:
    """Two-sample energy V-statistic value with the sample sizes."""

    value: float
    n1: int
    n2: int


def _as_sample(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[0] < 1:
        raise ValueError("samples must be nonempty 1-d or 2-d arrays")
    if not np.all(np.isfinite(a)):
        raise ValueError("samples must be finite")
    return a


def energy_distance(a, b, max_pairs: int = MAX_PAIRS) -> EnergyResult:
    """Two-sample energy V-statistic between samples ``a`` and ``b``."""
    a = _as_sample(a)
    b = _as_sample(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    n1, n2 = a.shape[0], b.shape[0]
    if n1 * n2 + n1 * n1 + n2 * n2 > max_pairs:
        raise ValueError(f"pair count exceeds the guard ({max_pairs}); "
                         "inputs are too large for direct computation")
    between = float(cdist(a, b).mean())
    within_a = 2.0 * float(pdist(a).sum()) / (n1 * n1) if n1 > 1 else 0.0
    within_b = 2.0 * float(pdist(b).sum()) / (n2 * n2) if n2 > 1 else 0.0
    return EnergyResult(value=2.0 * between - within_a - within_b, n1=n1, n2=n2)


def energy_matrix(d: Dataset, covariates_only: bool = True) -> np.ndarray:
    """Pairwise energy distances between environment samples, Z x Z.

    With ``covariates_only`` unset, each sample includes the response as an
    extra coordinate.
    """
    samples = []
    for z in range(1, d.n_envs + 1):
        rows = d.x[d.rows_of(z)]
        if not covariates_only:
            rows = np.hstack([rows, d.y[d.rows_of(z)][:, None]])
        samples.append(rows)
    out = np.zeros((d.n_envs, d.n_envs))
    for i in range(d.n_envs):
        for j in range(i + 1, d.n_envs):
            value = energy_distance(samples[i], samples[j]).value
            out[i, j] = out[j, i] = value
    return out


def peculiarity_ranking(m: np.ndarray) -> list[int]:
    """Environment ids (1-based) sorted by descending row mean of a
    symmetric distance matrix; ties break by ascending id."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected a square matrix")
    row_means = m.mean(axis=1)
    order = sorted(range(m.shape[0]), key=lambda i: (-row_means[i], i))
    return [i + 1 for i in order]


def mse(pred, truth) -> float:
    """Mean squared difference between predictions and ground truth."""
    pred = np.asarray(pred, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape[0]} vs {truth.shape[0]}")
    diff = pred - truth
    return float(diff @ diff / pred.shape[0])
