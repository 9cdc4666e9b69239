"""Risk scores: human aggregation, binarization and the cutoff sweep."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import EmptyGroup, InvalidConfig, LengthMismatch, MissingScore, MixedConditions
from .metrics import confusion, metric_set

COMPAS, HNR, HWR = "COMPAS", "HNR", "HWR"
HUMAN_SCORERS = {"no_race": HNR, "with_race": HWR}
CONDITION_OF = {v: k for k, v in HUMAN_SCORERS.items()}
SCORER_ALIASES = {"C": COMPAS, "COMPAS": COMPAS, "HNR": HNR, "HWR": HWR}
SHORT_NAME = {COMPAS: "C", HNR: "HNR", HWR: "HWR"}

DEFAULT_CUTOFF = 5.0
CUTOFFS = tuple(range(1, 11))


def canonical_scorer(name: str) -> str:
    try:
        return SCORER_ALIASES[name.strip().upper()]
    except KeyError:
        raise InvalidConfig(f"unknown scorer {name!r}; expected C/COMPAS, HNR or HWR") from None


@dataclass(frozen=True)
class RiskScore:
    defendant_id: int
    scorer: str
    value: float
    cutoff: float = DEFAULT_CUTOFF

    @property
    def binarized(self) -> bool:
        return self.value >= self.cutoff


def aggregate_human_score(predictions: Sequence) -> RiskScore:
    """Human risk score of one (defendant, condition) group on a 0-10 scale.

    With the usual 20 workers this is the number of positive votes halved; other
    panel sizes are rescaled by ``10 / n`` so the range stays 0-10.
    """
    if not predictions:
        raise EmptyGroup("no worker predictions in group")
    first = predictions[0]
    for p in predictions:
        if p.condition != first.condition:
            raise MixedConditions(f"group mixes {first.condition!r} and {p.condition!r}")
        if p.defendant_id != first.defendant_id:
            raise MixedConditions(
                f"group mixes defendants {first.defendant_id} and {p.defendant_id}"
            )
    k = sum(int(p.prediction) for p in predictions)
    n = len(predictions)
    value = k / 2 if n == 20 else k * 10 / n
    return RiskScore(first.defendant_id, HUMAN_SCORERS[first.condition], float(value))


def worker_agreement_rate(dataset_or_groups) -> float:
    """Mean over defendant groups of the majority-vote share ``max(k, n-k)/n``."""
    groups = getattr(dataset_or_groups, "prediction_groups", dataset_or_groups)
    if isinstance(groups, dict):
        groups = list(groups.values())
    if not groups:
        raise EmptyGroup("no prediction groups")
    shares = []
    for g in groups:
        votes = [int(getattr(p, "prediction", p)) for p in g]
        if not votes:
            raise EmptyGroup("empty prediction group")
        k = sum(votes)
        shares.append(max(k, len(votes) - k) / len(votes))
    return float(np.mean(shares))


def binarize(score: RiskScore, cutoff: float) -> RiskScore:
    return replace(score, cutoff=float(cutoff))


def compas_scores(dataset, cutoff: float = DEFAULT_CUTOFF) -> dict[int, RiskScore]:
    return {
        i: RiskScore(i, COMPAS, float(dataset.compas_scores[i]), cutoff)
        for i in dataset.ids
        if i in dataset.compas_scores
    }


def human_scores(dataset, condition: str, cutoff: float = DEFAULT_CUTOFF) -> dict[int, RiskScore]:
    groups = dataset.prediction_groups
    out = {}
    for i in dataset.ids:
        g = groups.get((i, condition))
        if g:
            out[i] = binarize(aggregate_human_score(g), cutoff)
    return out


def all_scores(dataset, cutoff: float = DEFAULT_CUTOFF) -> dict[str, dict[int, RiskScore]]:
    """COMPAS, HNR and HWR scores keyed by scorer then defendant id."""
    return {
        COMPAS: compas_scores(dataset, cutoff),
        HNR: human_scores(dataset, "no_race", cutoff),
        HWR: human_scores(dataset, "with_race", cutoff),
    }


def score_array(scores: dict[int, RiskScore], ids: Iterable[int], scorer: str = "") -> np.ndarray:
    out = []
    for i in ids:
        if i not in scores:
            raise MissingScore(i, scorer or None)
        out.append(scores[i].value)
    return np.asarray(out, dtype=np.float64)


@dataclass(frozen=True)
class CalibrationPoint:
    cutoff: int
    accuracy: Optional[float]
    fpr: Optional[float]
    fnr: Optional[float]


@dataclass(frozen=True)
class CalibrationCurve:
    scorer: str
    points: tuple[CalibrationPoint, ...]


def calibration_sweep(scores: Sequence[RiskScore], labels, scorer: Optional[str] = None) -> CalibrationCurve:
    """Accuracy, FPR and FNR of the binarization at each integer cutoff 1-10."""
    if len(scores) != len(labels):
        raise LengthMismatch(len(scores), len(labels))
    values = np.array([s.value for s in scores], dtype=np.float64)
    y = np.asarray(labels).astype(np.int64)
    name = scorer or (scores[0].scorer if scores else "")
    points = []
    for c in CUTOFFS:
        m = metric_set(confusion(values >= c, y))
        points.append(CalibrationPoint(c, m.accuracy, m.fpr, m.fnr))
    return CalibrationCurve(name, tuple(points))


def write_calibration_csv(path, curves: Iterable[CalibrationCurve]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scorer", "cutoff", "accuracy", "fpr", "fnr"])
        for curve in curves:
            for p in curve.points:
                w.writerow([curve.scorer, p.cutoff] + [
                    "" if v is None else f"{v:.4f}" for v in (p.accuracy, p.fpr, p.fnr)
                ])
