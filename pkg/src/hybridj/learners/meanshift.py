"""Flat-kernel mean-shift clustering."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from ..errors import EmptyInput, NonNumeric

AUTO = "auto"


@dataclass(frozen=True)
class ClusterResult:
    modes: np.ndarray  # (k, d), lexicographically sorted
    assignment: np.ndarray  # (n,) index into modes
    bandwidth: float
    endpoints: np.ndarray  # converged position of every row

    @property
    def n_modes(self) -> int:
        return len(self.modes)


def estimate_bandwidth(X, quantile_scale: float = 0.3, max_rows: int = 500, seed: int = 0) -> float:
    """Median pairwise distance times ``quantile_scale`` on a seeded subsample."""
    X = np.asarray(X, dtype=np.float64)
    if len(X) > max_rows:
        X = X[np.sort(np.random.default_rng(seed).choice(len(X), max_rows, replace=False))]
    if len(X) < 2:
        return 0.0
    iu = np.triu_indices(len(X), k=1)
    d = np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(-1))[iu]
    return float(np.median(d) * quantile_scale)


def _sq_dists(A, B):
    return np.maximum((A**2).sum(1)[:, None] - 2 * A @ B.T + (B**2).sum(1)[None, :], 0.0)


def _merge(points: np.ndarray, weights: np.ndarray, radius: float):
    """Single-linkage groups of points within ``radius``; returns weighted means and labels."""
    n = len(points)
    within = _sq_dists(points, points) <= radius * radius + 1e-12
    labels = -np.ones(n, dtype=np.int64)
    k = 0
    for i in range(n):
        if labels[i] >= 0:
            continue
        stack = [i]
        labels[i] = k
        while stack:
            j = stack.pop()
            for nb in np.flatnonzero(within[j] & (labels < 0)):
                labels[nb] = k
                stack.append(nb)
        k += 1
    means = np.array([
        np.average(points[labels == g], axis=0, weights=weights[labels == g]) for g in range(k)
    ])
    counts = np.array([weights[labels == g].sum() for g in range(k)])
    return means, counts, labels


def mean_shift(X, bandwidth: Union[float, str] = AUTO, max_iter: int = 300, tol: float = 1e-4,
               seed: int = 0, min_mode_size: int = 2) -> ClusterResult:
    """Cluster rows of a numeric (standardized) matrix by flat-kernel mean shift.

    Every row starts a trajectory that repeatedly moves to the mean of the data
    rows within ``bandwidth`` until it moves less than ``tol`` (or ``max_iter``
    steps). Endpoints within ``bandwidth / 2`` of each other are merged into one
    mode (repeated until all modes are further apart); rows are assigned to the
    mode nearest their endpoint.

    Modes reached by fewer than ``min_mode_size`` trajectories (isolated points
    with no neighbour within ``bandwidth``) are dropped when better-supported
    modes exist; their rows join the nearest remaining mode.
    """
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[:, None]
    if X.size == 0 or len(X) == 0:
        raise EmptyInput("mean_shift needs at least one row")
    if X.dtype == object or not (np.issubdtype(X.dtype, np.number) or X.dtype == bool):
        raise NonNumeric("mean_shift needs a numeric matrix")
    X = X.astype(np.float64)
    if isinstance(bandwidth, str):
        if bandwidth.lower() != AUTO:
            raise ValueError(f"bandwidth must be a number or 'auto', got {bandwidth!r}")
        bw = estimate_bandwidth(X, seed=seed)
    else:
        bw = float(bandwidth)
    if bw < 0:
        raise ValueError("bandwidth must be nonnegative")

    # tiny slack so identical points are neighbours even at zero bandwidth
    r2 = bw * bw + 1e-12
    pos = X.copy()
    active = np.ones(len(X), dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        near = _sq_dists(pos[idx], X) <= r2
        new = (near @ X) / near.sum(1, keepdims=True)
        moved = np.sqrt(((new - pos[idx]) ** 2).sum(1))
        pos[idx] = new
        active[idx[moved < tol]] = False

    modes, weights, _ = _merge(pos, np.ones(len(pos)), bw / 2)
    while len(modes) > 1:
        merged, weights, _ = _merge(modes, weights, bw / 2)
        if len(merged) == len(modes):
            break
        modes = merged
    keep = weights >= min_mode_size
    if keep.any():
        modes = modes[keep]
    order = np.lexsort(modes.T[::-1])
    modes = modes[order]
    assignment = np.argmin(_sq_dists(pos, modes), axis=1)
    return ClusterResult(modes=modes, assignment=assignment, bandwidth=bw, endpoints=pos)
