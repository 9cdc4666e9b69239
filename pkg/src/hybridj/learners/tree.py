"""CART decision trees (Gini classification, variance regression).

Trees are grown by a compiled kernel into flat node arrays; :attr:`Tree.root`
exposes the usual linked ``Split`` / ``Leaf`` view for inspection and export.

Determinism rules: numeric thresholds are midpoints between consecutive
distinct values, ``x <= threshold`` goes left, and among splits whose weighted
impurity is within ``IMPURITY_TOL`` of the best the one with the lowest feature
index, then the lowest threshold, wins. Leaves predict the majority class with
ties going to the smaller class index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from numba import njit

from ..errors import InvalidParams, LengthMismatch, SchemaMismatch
from .features import FeatureMatrix, as_array

IMPURITY_TOL = 1e-12
CLASSIFICATION, REGRESSION = "classification", "regression"


@njit(cache=True)
def _split_impurities_clf(xs, ys, n_classes, min_leaf):
    """Weighted Gini for every boundary of sorted values ``xs`` (NaN where invalid)."""
    m = xs.shape[0]
    total = np.zeros(n_classes)
    for i in range(m):
        total[ys[i]] += 1.0
    left = np.zeros(n_classes)
    out = np.full(m - 1, np.nan)
    for i in range(m - 1):
        left[ys[i]] += 1.0
        if xs[i] == xs[i + 1]:
            continue
        nl = i + 1.0
        nr = m - nl
        if nl < min_leaf or nr < min_leaf:
            continue
        sl = 0.0
        sr = 0.0
        for k in range(n_classes):
            sl += left[k] * left[k]
            r = total[k] - left[k]
            sr += r * r
        out[i] = (nl - sl / nl + nr - sr / nr) / m
    return out


@njit(cache=True)
def _split_impurities_reg(xs, ys, min_leaf):
    """Weighted within-child variance for every boundary (NaN where invalid)."""
    m = xs.shape[0]
    mean = 0.0
    for i in range(m):
        mean += ys[i]
    mean /= m
    tot_s = 0.0
    tot_q = 0.0
    for i in range(m):
        d = ys[i] - mean
        tot_s += d
        tot_q += d * d
    s = 0.0
    q = 0.0
    out = np.full(m - 1, np.nan)
    for i in range(m - 1):
        d = ys[i] - mean
        s += d
        q += d * d
        if xs[i] == xs[i + 1]:
            continue
        nl = i + 1.0
        nr = m - nl
        if nl < min_leaf or nr < min_leaf:
            continue
        sse_l = q - s * s / nl
        rs = tot_s - s
        sse_r = (tot_q - q) - rs * rs / nr
        out[i] = (max(sse_l, 0.0) + max(sse_r, 0.0)) / m
    return out


@njit(cache=True)
def _build(X, y_cls, y_reg, idx, is_clf, n_classes, max_depth, min_leaf, max_features, keys, tol):
    n_total = idx.shape[0]
    d = X.shape[1]
    cap = 2 * n_total + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    n_node = np.zeros(cap, dtype=np.int64)
    counts = np.zeros((cap, max(n_classes, 1)))
    value = np.zeros(cap)
    use_keys = keys.shape[0] > 0

    work = idx.copy()
    buf = np.empty_like(work)
    st_node = np.empty(cap, dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    sp = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n_total
    st_depth[0] = 0
    sp = 1
    n_nodes = 1
    cand = np.empty(d, dtype=np.int64)

    while sp > 0:
        sp -= 1
        node = st_node[sp]
        start = st_start[sp]
        end = st_end[sp]
        depth = st_depth[sp]
        m = end - start
        n_node[node] = m

        if is_clf:
            for i in range(start, end):
                counts[node, y_cls[work[i]]] += 1.0
            nz = 0
            for k in range(n_classes):
                if counts[node, k] > 0:
                    nz += 1
            pure = nz <= 1
        else:
            s = 0.0
            lo = y_reg[work[start]]
            hi = lo
            for i in range(start, end):
                v = y_reg[work[i]]
                s += v
                if v < lo:
                    lo = v
                if v > hi:
                    hi = v
            value[node] = s / m
            pure = lo == hi

        if pure or (max_depth >= 0 and depth >= max_depth) or m < 2 * min_leaf:
            continue

        # candidate features: all in index order, or a random subset via per-node keys
        if use_keys:
            perm = np.argsort(keys[node])
        else:
            perm = np.arange(d)
        n_first = d if not use_keys else min(max_features, d)
        first = np.sort(perm[:n_first])
        for j in range(n_first):
            cand[j] = first[j]
        for j in range(n_first, d):
            cand[j] = perm[j]

        best_f = -1
        best_t = 0.0
        best_imp = np.inf
        xs = np.empty(m)
        for j in range(d):
            if j >= n_first and best_f >= 0:
                break
            f = cand[j]
            for i in range(m):
                xs[i] = X[work[start + i], f]
            order = np.argsort(xs, kind="mergesort")
            sx = xs[order]
            if sx[0] == sx[m - 1]:
                continue
            if is_clf:
                sy = np.empty(m, dtype=np.int64)
                for i in range(m):
                    sy[i] = y_cls[work[start + order[i]]]
                imp = _split_impurities_clf(sx, sy, n_classes, min_leaf)
            else:
                syr = np.empty(m)
                for i in range(m):
                    syr[i] = y_reg[work[start + order[i]]]
                imp = _split_impurities_reg(sx, syr, min_leaf)
            for i in range(m - 1):
                v = imp[i]
                if not np.isnan(v) and v < best_imp - tol:
                    best_imp = v
                    best_f = f
                    best_t = (sx[i] + sx[i + 1]) / 2.0
                    if best_t >= sx[i + 1]:  # midpoint rounded up onto the right value
                        best_t = sx[i]

        if best_f < 0:
            continue

        # stable in-place partition
        nl = 0
        nr = 0
        for i in range(start, end):
            r = work[i]
            if X[r, best_f] <= best_t:
                work[start + nl] = r
                nl += 1
            else:
                buf[nr] = r
                nr += 1
        for i in range(nr):
            work[start + nl + i] = buf[i]

        feature[node] = best_f
        threshold[node] = best_t
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        # push right first so the left subtree is numbered/processed first
        st_node[sp] = rc
        st_start[sp] = start + nl
        st_end[sp] = end
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = lc
        st_start[sp] = start
        st_end[sp] = start + nl
        st_depth[sp] = depth + 1
        sp += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        n_node[:n_nodes].copy(),
        counts[:n_nodes].copy(),
        value[:n_nodes].copy(),
    )


@njit(cache=True)
def _apply(X, feature, threshold, left, right):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for r in range(n):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = node
    return out


@dataclass(frozen=True)
class Leaf:
    prediction: Union[int, float]
    n_samples: int
    class_counts: Optional[tuple[int, ...]] = None
    mean: Optional[float] = None


@dataclass(frozen=True)
class Split:
    feature: int
    feature_name: str
    threshold: float
    left: Union["Split", Leaf]
    right: Union["Split", Leaf]
    n_samples: int
    class_counts: Optional[tuple[int, ...]] = None
    mean: Optional[float] = None
    prediction: Union[int, float, None] = None


TreeNode = Union[Split, Leaf]


class Tree:
    """A fitted CART tree over flat node arrays."""

    def __init__(self, arrays, task, feature_names, classes=None, params=None):
        (self.feature, self.threshold, self.left, self.right,
         self.n_node, self.counts, self.value) = arrays
        self.task = task
        self.feature_names = list(feature_names)
        self.classes = None if classes is None else np.asarray(classes)
        self.params = dict(params or {})

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def _matrix(self, X) -> np.ndarray:
        arr, names = as_array(X)
        if isinstance(X, FeatureMatrix) and names != self.feature_names:
            raise SchemaMismatch(f"features {names} differ from training features {self.feature_names}")
        if arr.shape[1] != self.n_features:
            raise SchemaMismatch(f"expected {self.n_features} columns, got {arr.shape[1]}")
        return np.ascontiguousarray(arr)

    def apply(self, X) -> np.ndarray:
        """Leaf node index for each row."""
        return _apply(self._matrix(X), self.feature, self.threshold, self.left, self.right)

    def leaf_proba(self) -> np.ndarray:
        return self.counts / self.n_node[:, None]

    def predict_proba(self, X) -> np.ndarray:
        """Class frequencies of each row's leaf, shape (n, n_classes)."""
        if self.task != CLASSIFICATION:
            raise InvalidParams("predict_proba needs a classification tree")
        return self.leaf_proba()[self.apply(X)]

    def node_prediction(self, node: int):
        if self.task == CLASSIFICATION:
            return self.classes[int(np.argmax(self.counts[node]))].item()
        return float(self.value[node])

    def predict(self, X) -> np.ndarray:
        leaves = self.apply(X)
        if self.task == CLASSIFICATION:
            return self.classes[np.argmax(self.counts[leaves], axis=1)]
        return self.value[leaves]

    def depth(self) -> int:
        def rec(i):
            return 0 if self.feature[i] < 0 else 1 + max(rec(self.left[i]), rec(self.right[i]))
        return rec(0)

    @property
    def root(self) -> TreeNode:
        return self._node(0)

    def _node(self, i: int) -> TreeNode:
        cc = None
        mean = None
        if self.task == CLASSIFICATION:
            cc = tuple(int(c) for c in self.counts[i])
        else:
            mean = float(self.value[i])
        pred = self.node_prediction(i)
        n = int(self.n_node[i])
        if self.feature[i] < 0:
            return Leaf(pred, n, cc, mean)
        f = int(self.feature[i])
        return Split(
            f, self.feature_names[f], float(self.threshold[i]),
            self._node(int(self.left[i])), self._node(int(self.right[i])), n, cc, mean, pred,
        )

    def export_text(self, decimals: int = 2) -> str:
        """Indented text: ``feature <= threshold | samples=n | counts=[...] | pred=c`` per node."""
        lines = []

        def stats(i):
            n = int(self.n_node[i])
            if self.task == CLASSIFICATION:
                cc = ", ".join(str(int(c)) for c in self.counts[i])
                return f"samples={n} | counts=[{cc}] | pred={self.node_prediction(i)}"
            return f"samples={n} | pred={self.value[i]:.{decimals}f}"

        def rec(i, depth):
            pad = "    " * depth
            if self.feature[i] < 0:
                lines.append(f"{pad}leaf | {stats(i)}")
                return
            name = self.feature_names[self.feature[i]]
            lines.append(f"{pad}{name} <= {self.threshold[i]:.{decimals}f} | {stats(i)}")
            rec(int(self.left[i]), depth + 1)
            rec(int(self.right[i]), depth + 1)

        rec(0, 0)
        return "\n".join(lines) + "\n"


def _encode_labels(y, task, classes=None):
    if task == CLASSIFICATION:
        y = np.asarray(y)
        if classes is None:
            classes = np.unique(y)
        else:
            classes = np.asarray(classes)
            missing = np.setdiff1d(np.unique(y), classes)
            if missing.size:
                raise InvalidParams(f"labels {missing.tolist()} not in classes {classes.tolist()}")
        y_cls = np.searchsorted(classes, y).astype(np.int64)
        return y_cls, np.zeros(len(y)), classes
    y_reg = np.asarray(y, dtype=np.float64)
    if not np.all(np.isfinite(y_reg)):
        raise InvalidParams("regression targets must be finite")
    return np.zeros(len(y), dtype=np.int64), y_reg, None


def _validate_params(task, max_depth, min_samples_leaf):
    if task not in (CLASSIFICATION, REGRESSION):
        raise InvalidParams(f"unknown task {task!r}")
    if max_depth is not None and max_depth < 0:
        raise InvalidParams("max_depth must be >= 0 or None")
    if min_samples_leaf < 1:
        raise InvalidParams("min_samples_leaf must be >= 1")


def grow(X, y, *, task=CLASSIFICATION, max_depth=None, min_samples_leaf=1,
         sample_idx=None, max_features=None, keys=None, classes=None) -> Tree:
    """Shared entry point for single trees and forest members."""
    _validate_params(task, max_depth, min_samples_leaf)
    arr, names = as_array(X)
    if len(arr) != len(y):
        raise LengthMismatch(len(arr), len(y))
    if len(arr) == 0:
        raise InvalidParams("cannot fit a tree on zero rows")
    y_cls, y_reg, classes = _encode_labels(y, task, classes)
    idx = np.arange(len(arr), dtype=np.int64) if sample_idx is None else np.asarray(sample_idx, dtype=np.int64)
    d = arr.shape[1]
    if keys is None:
        keys = np.zeros((0, max(d, 1)))
    arrays = _build(
        np.ascontiguousarray(arr), y_cls, y_reg, idx, task == CLASSIFICATION,
        0 if classes is None else len(classes),
        -1 if max_depth is None else int(max_depth), int(min_samples_leaf),
        d if max_features is None else int(max_features), keys, IMPURITY_TOL,
    )
    params = {"task": task, "max_depth": max_depth, "min_samples_leaf": min_samples_leaf}
    return Tree(arrays, task, names, classes, params)


def fit_tree(X, y, max_depth: Optional[int] = None, min_samples_leaf: int = 1,
             task: str = CLASSIFICATION, classes=None) -> Tree:
    """Fit a greedy CART tree.

    Parameters
    ----------
    X : FeatureMatrix or array of shape (n, d)
    y : class labels (classification) or reals (regression)
    max_depth : int or None
        None grows until leaves are pure or cannot be split.
    min_samples_leaf : int
        Minimum number of rows in each child of a split.
    task : {"classification", "regression"}
    classes : optional explicit class order (defaults to the sorted labels)
    """
    return grow(X, y, task=task, max_depth=max_depth, min_samples_leaf=min_samples_leaf, classes=classes)
