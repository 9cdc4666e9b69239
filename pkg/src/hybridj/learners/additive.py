"""Additive model built from cyclically boosted one-feature stumps.

Each round visits every feature in column order, fits a depth-1 regression
stump on that feature alone to the current residuals and adds
``learning_rate`` times the stump to the feature's piecewise-constant shape.
Numeric features are pre-binned (at most ``n_bins`` bins, quantile cuts);
categorical features get one bin per category. After fitting, every shape is
centred to zero mean over the training rows and the offset moves into the
intercept, so predictions are unchanged.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidParams, LengthMismatch
from .features import FeatureMatrix, as_array


@dataclass(frozen=True)
class Shape:
    feature: str
    kind: str
    cuts: tuple  # numeric: x <= cuts[b] falls in bin b; categorical: the categories
    bin_low: tuple
    bin_high: tuple
    values: np.ndarray

    def bin_index(self, column) -> np.ndarray:
        if self.kind == "numeric":
            x = np.asarray(column, dtype=np.float64)
            return np.searchsorted(np.asarray(self.cuts, dtype=np.float64), x, side="left")
        index = {c: b for b, c in enumerate(self.cuts)}
        # unseen categories contribute nothing (bin -1)
        return np.array([index.get(str(v), -1) for v in column], dtype=np.int64)

    def __call__(self, column) -> np.ndarray:
        b = self.bin_index(column)
        vals = np.append(self.values, 0.0)  # slot -1 -> 0
        return vals[b]

    @property
    def importance(self) -> float:
        return float(self.values.max() - self.values.min())


@dataclass(frozen=True)
class AdditiveModel:
    intercept: float
    shapes: tuple[Shape, ...]

    @property
    def feature_importance(self) -> dict[str, float]:
        return {s.feature: s.importance for s in self.shapes}

    def ranked_features(self) -> list[str]:
        imp = self.feature_importance
        return sorted(imp, key=lambda f: (-imp[f], list(imp).index(f)))

    def contributions(self, X) -> np.ndarray:
        cols = _columns(X)
        return np.column_stack([s(cols[s.feature]) for s in self.shapes])

    def predict(self, X) -> np.ndarray:
        return self.intercept + self.contributions(X).sum(axis=1)

    def write_shapes_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "bin_low", "bin_high", "value"])
            for s in self.shapes:
                for lo, hi, v in zip(s.bin_low, s.bin_high, s.values):
                    w.writerow([s.feature, lo, hi, f"{v:.6f}"])


def _columns(X) -> dict:
    if isinstance(X, FeatureMatrix):
        out = {}
        for spec in X.specs:
            col = X.columns[spec.name]
            if spec.kind == "numeric":
                arr = np.array([spec.fill if v is None else float(v) for v in col], dtype=np.float64)
                arr[np.isnan(arr)] = spec.fill
                out[spec.name] = arr
            else:
                out[spec.name] = [str(v) for v in col]
        return out
    arr, names = as_array(X)
    return {n: arr[:, j] for j, n in enumerate(names)}


def _make_shape(name, kind, column, n_bins) -> tuple[Shape, np.ndarray]:
    if kind == "categorical":
        cats = []
        seen = set()
        for v in column:
            if v not in seen:
                seen.add(v)
                cats.append(v)
        shape = Shape(name, kind, tuple(cats), tuple(cats), tuple(cats), np.zeros(len(cats)))
        return shape, shape.bin_index(column)
    x = np.asarray(column, dtype=np.float64)
    uniq = np.unique(x)
    if len(uniq) <= n_bins:
        cuts = uniq[:-1]
    else:
        qs = np.quantile(x, np.arange(1, n_bins) / n_bins, method="lower")
        cuts = np.unique(qs)
        cuts = cuts[cuts < uniq[-1]]
    b = np.searchsorted(cuts, x, side="left")
    nb = len(cuts) + 1
    lows = tuple(float(x[b == k].min()) for k in range(nb))
    highs = tuple(float(x[b == k].max()) for k in range(nb))
    return Shape(name, kind, tuple(float(c) for c in cuts), lows, highs, np.zeros(nb)), b


def _stump(bins: np.ndarray, resid: np.ndarray, n_bins: int, ordered: bool) -> np.ndarray:
    """Per-bin stump output (left/right mean residual) minimizing squared error."""
    sums = np.bincount(bins, weights=resid, minlength=n_bins)
    cnts = np.bincount(bins, minlength=n_bins).astype(np.float64)
    present = cnts > 0
    order = np.flatnonzero(present)
    if not ordered:
        means = sums[order] / cnts[order]
        order = order[np.argsort(means, kind="mergesort")]
    if len(order) < 2:
        return np.zeros(n_bins)
    cs = np.cumsum(sums[order])[:-1]
    cn = np.cumsum(cnts[order])[:-1]
    tot_s, tot_n = sums.sum(), cnts.sum()
    gain = cs**2 / cn + (tot_s - cs) ** 2 / (tot_n - cn)
    k = int(np.argmax(gain))
    out = np.zeros(n_bins)
    out[order[: k + 1]] = cs[k] / cn[k]
    out[order[k + 1:]] = (tot_s - cs[k]) / (tot_n - cn[k])
    return out


def fit_additive(X, y, n_rounds: int = 100, learning_rate: float = 0.1, n_bins: int = 32) -> AdditiveModel:
    if n_rounds < 0 or not 0 < learning_rate <= 1 or n_bins < 2:
        raise InvalidParams("need n_rounds >= 0, 0 < learning_rate <= 1, n_bins >= 2")
    cols = _columns(X)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    for name, c in cols.items():
        if len(c) != n:
            raise LengthMismatch(len(c), n)
    if n == 0:
        raise InvalidParams("cannot fit on zero rows")
    kinds = (
        {s.name: s.kind for s in X.specs} if isinstance(X, FeatureMatrix) else dict.fromkeys(cols, "numeric")
    )
    shapes, bins = [], []
    for name, col in cols.items():
        s, b = _make_shape(name, kinds[name], col, n_bins)
        shapes.append(s)
        bins.append(b)
    intercept = float(y.mean())
    resid = y - intercept
    values = [np.zeros(len(s.values)) for s in shapes]
    for _ in range(n_rounds):
        for j, s in enumerate(shapes):
            step = learning_rate * _stump(bins[j], resid, len(values[j]), s.kind == "numeric")
            values[j] += step
            resid -= step[bins[j]]
    final = []
    for j, s in enumerate(shapes):
        offset = float(values[j][bins[j]].mean())
        intercept += offset
        final.append(Shape(s.feature, s.kind, s.cuts, s.bin_low, s.bin_high, values[j] - offset))
    return AdditiveModel(intercept, tuple(final))
