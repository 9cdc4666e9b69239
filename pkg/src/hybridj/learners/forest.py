"""Bagged random forests of CART trees."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import InvalidParams
from .tree import CLASSIFICATION, REGRESSION, Tree, _encode_labels, _validate_params, as_array, grow


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[Tree, ...]
    task: str
    n_trees: int
    features_per_split: int
    seed: int
    bootstrap: bool
    tree_seeds: tuple[int, ...]
    classes: Optional[tuple] = None
    params: dict = field(default_factory=dict)

    def predict_proba(self, X) -> np.ndarray:
        return predict_proba(self, X)

    def predict(self, X) -> np.ndarray:
        p = predict_proba(self, X)
        if self.task == REGRESSION:
            return p
        # an even vote goes to the smaller class, as in a single tree's leaf
        return np.where(p > 0.5, self.classes[-1], self.classes[0])

    def summary(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "features_per_split": self.features_per_split,
            "seed": self.seed,
            "bootstrap": self.bootstrap,
            **self.params,
        }


def fit_forest(X, y, n_trees: int = 100, max_depth: Optional[int] = None, min_samples_leaf: int = 1,
               features_per_split: Optional[int] = None, seed: int = 0,
               task: str = CLASSIFICATION, bootstrap: bool = True, classes=None) -> ForestModel:
    """Random forest: ``n_trees`` CART trees on bootstrap resamples.

    Each split looks at a random subset of ``features_per_split`` columns
    (default ``ceil(sqrt(d))``), falling back to further random columns only if
    none of the subset admits a split. Every tree gets its own child seed of
    ``seed`` so results are reproducible.
    """
    _validate_params(task, max_depth, min_samples_leaf)
    if n_trees < 1:
        raise InvalidParams("n_trees must be >= 1")
    arr, _ = as_array(X)
    n, d = arr.shape
    mtry = max(1, math.ceil(math.sqrt(d))) if features_per_split is None else int(features_per_split)
    if mtry < 1:
        raise InvalidParams("features_per_split must be >= 1")
    mtry = min(mtry, max(d, 1))
    if task == CLASSIFICATION:
        _, _, cls = _encode_labels(y, task, classes)
        classes = tuple(cls.tolist())
    children = np.random.SeedSequence(seed).spawn(n_trees)
    tree_seeds = tuple(int(c.generate_state(1, dtype=np.uint64)[0]) for c in children)
    trees = []
    for ts in tree_seeds:
        rng = np.random.default_rng(ts)
        idx = rng.integers(0, n, size=n) if bootstrap else None
        keys = rng.random((2 * n + 1, d)) if mtry < d else None
        trees.append(grow(
            X, y, task=task, max_depth=max_depth, min_samples_leaf=min_samples_leaf,
            sample_idx=idx, max_features=mtry, keys=keys, classes=classes,
        ))
    return ForestModel(
        trees=tuple(trees), task=task, n_trees=n_trees, features_per_split=mtry, seed=seed,
        bootstrap=bootstrap, tree_seeds=tree_seeds, classes=classes,
        params={"max_depth": max_depth, "min_samples_leaf": min_samples_leaf, "task": task},
    )


def predict_proba(model: ForestModel, X) -> np.ndarray:
    """Per-row score in [0, 1] (classification) or mean prediction (regression).

    Classification averages each tree's leaf frequency of the last class (the
    positive class for 0/1 labels). With pure leaves this is the fraction of
    trees voting positive.
    """
    if model.task == REGRESSION:
        return np.mean([t.predict(X) for t in model.trees], axis=0)
    total = None
    for t in model.trees:
        p = t.predict_proba(X)[:, -1]
        total = p if total is None else total + p
    return total / len(model.trees)
