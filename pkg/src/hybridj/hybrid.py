"""Hybrid human + machine models and their baselines.

Every model consumes a :class:`HybridData` bundle (defendant features, worker
aggregates and 0-10 score values for a set of defendants) and produces, per
row, a binary prediction and (when meaningful) a continuous score for AUC.

Only the oracles read ground truth at prediction time; that is what makes them
oracles.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .dataset import feature_columns, worker_aggregates
from .errors import InvalidConfig, LengthMismatch, MissingScore, NoDisagreementRows
from .learners import FeatureMatrix, ForestModel, fit_forest
from .metrics import auc
from .scoring import COMPAS, CONDITION_OF, DEFAULT_CUTOFF, SHORT_NAME, all_scores, canonical_scorer, score_array

KINDS = (
    "weighted_average", "direct", "indirect", "composed_indirect",
    "single", "random_pick", "oracle_benevolent", "oracle_adversarial",
)
FOREST_DEFAULTS = {"n_trees": 100, "max_depth": None, "min_samples_leaf": 1, "features_per_split": None}


@dataclass(frozen=True)
class HybridSpec:
    kind: str
    scorers: tuple[str, ...] = ()
    use_features: bool = True
    seed: int = 0
    binarized: bool = False  # single baseline only: report the >= cutoff prediction, no AUC

    def __post_init__(self):
        object.__setattr__(self, "scorers", tuple(canonical_scorer(s) for s in self.scorers))
        k, n = self.kind, len(self.scorers)
        if k not in KINDS:
            raise InvalidConfig(f"unknown hybrid kind {k!r}")
        if k in ("weighted_average", "random_pick") and n < 2:
            raise InvalidConfig(f"{k} needs at least 2 scorers")
        if k == "single" and n != 1:
            raise InvalidConfig("single needs exactly 1 scorer")
        if k in ("indirect", "composed_indirect", "oracle_benevolent", "oracle_adversarial") and n != 2:
            raise InvalidConfig(f"{k} needs exactly 2 scorers")
        if k == "direct" and n == 0 and not self.use_features:
            raise InvalidConfig("direct model with neither scores nor features")
        if len(set(self.scorers)) != n:
            raise InvalidConfig(f"repeated scorer in {self.scorers}")

    @property
    def short_scorers(self) -> str:
        return " ".join(SHORT_NAME[s] for s in self.scorers)

    @property
    def uses_forest(self) -> bool:
        return self.kind in ("direct", "indirect", "composed_indirect") or (
            self.kind == "single" and self.use_features
        )

    @property
    def model_type(self) -> str:
        if self.kind.startswith("oracle"):
            return "Oracle"
        if self.kind == "random_pick":
            return "Random"
        if self.kind == "direct" and not self.scorers:
            return "None"
        if self.kind == "single" or (self.kind == "direct" and len(self.scorers) == 1):
            return "Single"
        return "Hybrid"

    @property
    def name(self) -> str:
        s = self.short_scorers
        k = self.kind
        if k == "direct":
            if not self.scorers:
                return "Predict GT from features"
            if len(self.scorers) == 1:
                return f"Predict GT from features and {s}"
            return f"Direct {s}" if self.use_features else f"Direct {s} (scores only)"
        if k == "single":
            if self.use_features:
                return f"Predict GT from features and {s}"
            return f"{s} (binarized >=5)" if self.binarized else f"{s} (1-10 scale)"
        if k == "indirect":
            return f"Indirect {s}"
        if k == "composed_indirect":
            return f"Composed indirect {s}"
        if k == "weighted_average":
            return f"Weighted average of {s}"
        if k == "random_pick":
            return f"Randomly pick between {s}"
        return "Benevolent oracle" if k == "oracle_benevolent" else "Adversarial oracle"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "scorers": [SHORT_NAME[s] for s in self.scorers],
            "use_features": self.use_features,
            "seed": self.seed,
            "binarized": self.binarized,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HybridSpec":
        known = {"kind", "scorers", "use_features", "seed", "binarized"}
        unknown = set(d) - known
        if unknown:
            raise InvalidConfig(f"unknown HybridSpec fields: {sorted(unknown)}")
        return cls(
            kind=d["kind"], scorers=tuple(d.get("scorers", ())),
            use_features=bool(d.get("use_features", True)), seed=int(d.get("seed", 0)),
            binarized=bool(d.get("binarized", False)),
        )


def default_grid(pair: Sequence[str] = ("C", "HNR")) -> list[HybridSpec]:
    """The model grid of the published result tables; oracles use ``pair``."""
    C = COMPAS
    grid = [
        HybridSpec("direct", (C, "HNR")),
        HybridSpec("direct", (C, "HWR")),
        HybridSpec("direct", (C, "HWR", "HNR")),
        HybridSpec("indirect", (C, "HNR")),
        HybridSpec("indirect", (C, "HWR")),
        HybridSpec("composed_indirect", (C, "HNR")),
        HybridSpec("composed_indirect", (C, "HWR")),
        HybridSpec("weighted_average", (C, "HNR"), use_features=False),
        HybridSpec("weighted_average", (C, "HWR"), use_features=False),
        HybridSpec("weighted_average", (C, "HWR", "HNR"), use_features=False),
    ]
    for s in ("HNR", "HWR", C):
        grid.append(HybridSpec("single", (s,), use_features=True))
    for s in ("HNR", "HWR", C):
        grid.append(HybridSpec("single", (s,), use_features=False))
    for s in (C, "HNR", "HWR"):
        grid.append(HybridSpec("single", (s,), use_features=False, binarized=True))
    grid.append(HybridSpec("direct", ()))
    for scorers in ((C, "HNR"), (C, "HWR"), (C, "HWR", "HNR")):
        grid.append(HybridSpec("random_pick", scorers, use_features=False))
    grid.append(HybridSpec("oracle_benevolent", tuple(pair), use_features=False))
    grid.append(HybridSpec("oracle_adversarial", tuple(pair), use_features=False))
    return grid


@dataclass
class HybridData:
    """Model inputs for a fixed list of defendants.

    ``features``: defendant feature columns; ``worker_features``: per condition,
    aggregated worker demographic columns; ``scores``: scorer -> 0-10 values.
    """

    ids: list[int]
    features: dict[str, list]
    worker_features: dict[str, dict[str, list]]
    scores: dict[str, np.ndarray]
    labels: Optional[np.ndarray] = None
    cutoff: float = DEFAULT_CUTOFF

    def __post_init__(self):
        n = len(self.ids)
        for name, col in self.features.items():
            if len(col) != n:
                raise LengthMismatch(n, len(col))
        for s, v in self.scores.items():
            if len(v) != n:
                raise LengthMismatch(n, len(v))
        if self.labels is not None and len(self.labels) != n:
            raise LengthMismatch(n, len(self.labels))

    def __len__(self):
        return len(self.ids)

    @classmethod
    def from_dataset(cls, dataset, ids=None, scores=None, top_k_charges=20, cutoff=DEFAULT_CUTOFF):
        ids = dataset.ids if ids is None else list(ids)
        scores = all_scores(dataset, cutoff) if scores is None else scores
        arrays = {}
        for name, by_id in scores.items():
            if all(i in by_id for i in ids):
                arrays[name] = score_array(by_id, ids, name)
        return cls(
            ids=ids,
            features=feature_columns(dataset, ids, top_k_charges),
            worker_features={c: worker_aggregates(dataset, c, ids) for c in ("no_race", "with_race")},
            scores=arrays,
            labels=dataset.labels(ids),
            cutoff=cutoff,
        )

    def take(self, rows) -> "HybridData":
        rows = np.asarray(rows, dtype=np.int64)
        return HybridData(
            ids=[self.ids[r] for r in rows],
            features={k: [v[r] for r in rows] for k, v in self.features.items()},
            worker_features={
                c: {k: [v[r] for r in rows] for k, v in cols.items()}
                for c, cols in self.worker_features.items()
            },
            scores={k: v[rows] for k, v in self.scores.items()},
            labels=None if self.labels is None else self.labels[rows],
            cutoff=self.cutoff,
        )

    def without_labels(self) -> "HybridData":
        return replace(self, labels=None)

    def score(self, scorer: str) -> np.ndarray:
        if scorer not in self.scores:
            raise MissingScore(None, scorer)
        return self.scores[scorer]

    def binary(self, scorer: str) -> np.ndarray:
        return (self.score(scorer) >= self.cutoff).astype(np.int64)

    def require_labels(self) -> np.ndarray:
        if self.labels is None:
            raise ValueError("labels required")
        return np.asarray(self.labels).astype(np.int64)

    def model_columns(self, scorers: Sequence[str], use_features: bool) -> dict[str, list]:
        """Input columns: defendant features, worker aggregates of the human scorers, raw scores."""
        cols: dict[str, list] = {}
        if use_features:
            cols.update(self.features)
            for s in scorers:
                if s in CONDITION_OF:
                    cols.update(self.worker_features[CONDITION_OF[s]])
        for s in scorers:
            cols[f"score_{SHORT_NAME[s]}"] = self.score(s).tolist()
        return cols


@dataclass(frozen=True)
class Prediction:
    binary: np.ndarray
    score: Optional[np.ndarray]


@dataclass(frozen=True)
class FittedHybrid:
    spec: HybridSpec
    weights: Optional[tuple[float, ...]] = None
    weight_units: Optional[tuple[int, ...]] = None  # integer grid weights; weights = units / sum(units)
    threshold: Optional[float] = None
    forest: Optional[ForestModel] = None
    matrix: Optional[FeatureMatrix] = None  # carries the training encoding
    forest_params: dict = field(default_factory=dict)
    train_auc: Optional[float] = None

    def predict(self, data: HybridData) -> Prediction:
        k = self.spec.kind
        if k == "weighted_average":
            return predict_weighted_average(self, data)
        if k == "direct" or (k == "single" and self.spec.use_features):
            p = self._forest_proba(data)
            return Prediction((p >= self.threshold).astype(np.int64), p)
        if k in ("indirect", "composed_indirect"):
            return predict_indirect(self, data)
        if k == "single":
            s = data.score(self.spec.scorers[0])
            b = (s >= data.cutoff).astype(np.int64)
            return Prediction(b, None if self.spec.binarized else s.astype(np.float64))
        if k == "random_pick":
            return random_pick([data.score(s) for s in self.spec.scorers], self.spec.seed, data.cutoff)
        mode = "benevolent" if k == "oracle_benevolent" else "adversarial"
        return oracle([data.score(s) for s in self.spec.scorers], data.require_labels(), mode, data.cutoff)

    def _forest_proba(self, data: HybridData) -> np.ndarray:
        scorers = self.spec.scorers
        cols = data.model_columns(scorers, self.spec.use_features)
        return self.forest.predict_proba(self.matrix.transform(cols))

    def summary(self) -> dict:
        out = {
            "kind": self.spec.kind,
            "name": self.spec.name,
            "scorers": [SHORT_NAME[s] for s in self.spec.scorers],
            "use_features": self.spec.use_features,
            "seed": self.spec.seed,
        }
        if self.weights is not None:
            out["weights"] = list(self.weights)
        if self.threshold is not None:
            out["threshold"] = self.threshold
        if self.forest is not None:
            out["forest"] = self.forest.summary()
        return out

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)


# -- weighted average ---------------------------------------------------------------


def weight_grid(k: int) -> tuple[int, list[tuple[int, ...]]]:
    """Integer weight vectors in lexicographic order and their common denominator.

    Two scorers: step 1/100. Three or more: step 1/20 on the simplex.
    """
    denom = 100 if k == 2 else 20
    points = [
        w for w in itertools.product(range(denom + 1), repeat=k - 1) if sum(w) <= denom
    ]
    return denom, [tuple(w) + (denom - sum(w),) for w in points]


def _combine(values: Sequence[np.ndarray], units: Sequence[int], denom: int) -> np.ndarray:
    total = np.zeros(len(values[0]), dtype=np.float64)
    for u, v in zip(units, values):
        total += u * np.asarray(v, dtype=np.float64)
    return total / denom


def best_accuracy_threshold(combined: np.ndarray, labels: np.ndarray) -> float:
    """Lowest threshold t (among observed values) maximizing accuracy of ``combined >= t``."""
    y = np.asarray(labels).astype(np.int64)
    uniq = np.unique(combined)
    # rows with value >= uniq[j] predicted positive
    order = np.argsort(combined, kind="mergesort")
    cs, ys = combined[order], y[order]
    start = np.searchsorted(cs, uniq, side="left")
    pos_suffix = np.r_[np.cumsum(ys[::-1])[::-1], 0]
    neg_prefix = np.r_[0, np.cumsum(1 - ys)]
    correct = pos_suffix[start] + neg_prefix[start]
    j = int(np.argmax(correct))
    return float(uniq[j])


def fit_weighted_average(scores: Sequence[np.ndarray], labels, spec: Optional[HybridSpec] = None,
                         tol: float = 1e-12) -> FittedHybrid:
    """Convex weights maximizing training AUC of the weighted score (grid search).

    Ties (within ``tol``) keep the lexicographically first grid point.
    """
    k = len(scores)
    if k < 2:
        raise InvalidConfig("weighted average needs at least 2 scorers")
    n = len(labels)
    for s in scores:
        if len(s) != n:
            raise LengthMismatch(n, len(s))
    denom, grid = weight_grid(k)
    best_units, best_auc = None, -np.inf
    for units in grid:
        a = auc(_combine(scores, units, denom), labels)
        a = 0.5 if a is None else a
        if a > best_auc + tol:
            best_units, best_auc = units, a
    combined = _combine(scores, best_units, denom)
    tau = best_accuracy_threshold(combined, labels)
    if spec is None:
        spec = HybridSpec("weighted_average", tuple(["C", "HNR", "HWR"][:k]), use_features=False)
    return FittedHybrid(
        spec=spec,
        weights=tuple(u / denom for u in best_units),
        weight_units=tuple(best_units),
        threshold=tau,
        train_auc=float(best_auc),
    )


def predict_weighted_average(model: FittedHybrid, data: HybridData) -> Prediction:
    values = [data.score(s) for s in model.spec.scorers]
    combined = _combine(values, model.weight_units, sum(model.weight_units))
    return Prediction((combined >= model.threshold).astype(np.int64), combined)


# -- forests: direct and indirect ---------------------------------------------------


def _forest(X, y, params: dict, seed: int) -> ForestModel:
    p = {**FOREST_DEFAULTS, **(params or {})}
    return fit_forest(
        X, y, n_trees=p["n_trees"], max_depth=p["max_depth"], min_samples_leaf=p["min_samples_leaf"],
        features_per_split=p["features_per_split"], seed=seed, classes=(0, 1),
        bootstrap=p.get("bootstrap", True),
    )


def fit_direct(train: HybridData, spec: HybridSpec, forest_params: Optional[dict] = None) -> FittedHybrid:
    """Random forest from [features | worker aggregates | raw scores] to ground truth."""
    y = train.require_labels()
    X = FeatureMatrix(train.model_columns(spec.scorers, spec.use_features))
    forest = _forest(X, y, forest_params, spec.seed)
    return FittedHybrid(spec=spec, threshold=0.5, forest=forest, matrix=X,
                        forest_params={**FOREST_DEFAULTS, **(forest_params or {})})


def fit_indirect(train: HybridData, spec: HybridSpec, forest_params: Optional[dict] = None) -> FittedHybrid:
    """Picker forest trained on disagreement rows: target 1 iff the second scorer is right."""
    y = train.require_labels()
    a, b = spec.scorers
    ba, bb = train.binary(a), train.binary(b)
    rows = np.flatnonzero(ba != bb)
    if len(rows) == 0:
        raise NoDisagreementRows(f"{a} and {b} agree on every training row")
    sub = train.take(rows)
    target = (bb[rows] == y[rows]).astype(np.int64)
    X = FeatureMatrix(sub.model_columns(spec.scorers, spec.use_features))
    forest = _forest(X, target, forest_params, spec.seed)
    return FittedHybrid(spec=spec, threshold=0.5, forest=forest, matrix=X,
                        forest_params={**FOREST_DEFAULTS, **(forest_params or {})})


def fit_composed_indirect(train: HybridData, spec: HybridSpec, forest_params: Optional[dict] = None) -> FittedHybrid:
    if spec.kind != "composed_indirect":
        spec = replace(spec, kind="composed_indirect")
    return fit_indirect(train, spec, forest_params)


def apply_picks(data: HybridData, scorers: Sequence[str], pick_second: np.ndarray) -> Prediction:
    """Binary prediction and value/10 of the chosen scorer per row."""
    a, b = scorers
    pick = np.asarray(pick_second).astype(bool)
    binary = np.where(pick, data.binary(b), data.binary(a))
    score = np.where(pick, data.score(b), data.score(a)) / 10.0
    return Prediction(binary.astype(np.int64), score)


def predict_indirect(model: FittedHybrid, data: HybridData) -> Prediction:
    a, b = model.spec.scorers
    pick = model._forest_proba(data) >= model.threshold
    out = apply_picks(data, (a, b), pick)
    if model.spec.kind == "composed_indirect":
        agree = data.binary(a) == data.binary(b)
        score = np.where(agree, (data.score(a) + data.score(b)) / 20.0, out.score)
        binary = np.where(agree, data.binary(a), out.binary)
        out = Prediction(binary.astype(np.int64), score)
    return out


# -- label-free baselines and oracles -----------------------------------------------


def random_pick(scores: Sequence[np.ndarray], seed: int, cutoff: float = DEFAULT_CUTOFF) -> Prediction:
    """Per row, pick one scorer uniformly at random (seeded)."""
    values = np.vstack([np.asarray(s, dtype=np.float64) for s in scores])
    n = values.shape[1]
    picks = np.random.default_rng(seed).integers(0, len(scores), size=n)
    chosen = values[picks, np.arange(n)]
    return Prediction((chosen >= cutoff).astype(np.int64), chosen)


def oracle(scores: Sequence[np.ndarray], labels, mode: str = "benevolent",
           cutoff: float = DEFAULT_CUTOFF) -> Prediction:
    """Per-row best (benevolent) or worst (adversarial) of two scorers against the truth.

    On disagreement rows the correct (resp. incorrect) scorer is used. On
    agreement rows the prediction is the agreed one and the score is the value
    further in the right (resp. wrong) direction.
    """
    if mode not in ("benevolent", "adversarial"):
        raise ValueError(f"mode must be 'benevolent' or 'adversarial', got {mode!r}")
    if len(scores) != 2:
        raise InvalidConfig("oracle needs exactly 2 scorers")
    s1, s2 = (np.asarray(s, dtype=np.float64) for s in scores)
    y = np.asarray(labels).astype(np.int64)
    if not len(s1) == len(s2) == len(y):
        raise LengthMismatch(len(s1), len(s2), len(y))
    b1, b2 = (s1 >= cutoff).astype(np.int64), (s2 >= cutoff).astype(np.int64)
    hi, lo = np.maximum(s1, s2), np.minimum(s1, s2)
    good = np.where(y == 1, hi, lo)
    bad = np.where(y == 1, lo, hi)
    agree = b1 == b2
    if mode == "benevolent":
        binary = np.where(agree, b1, y)
        score = np.where(agree, good, np.where(b1 == y, s1, s2))
    else:
        binary = np.where(agree, b1, 1 - y)
        score = np.where(agree, bad, np.where(b1 != y, s1, s2))
    return Prediction(binary.astype(np.int64), score)


def fit_hybrid(spec: HybridSpec, train: HybridData, forest_params: Optional[dict] = None) -> FittedHybrid:
    """Fit any grid model; label-free baselines and oracles need no training."""
    k = spec.kind
    if k == "weighted_average":
        return fit_weighted_average([train.score(s) for s in spec.scorers], train.require_labels(), spec)
    if k == "direct" or (k == "single" and spec.use_features):
        return fit_direct(train, spec, forest_params)
    if k in ("indirect", "composed_indirect"):
        return fit_indirect(train, spec, forest_params)
    for s in spec.scorers:
        train.score(s)
    return FittedHybrid(spec=spec)
