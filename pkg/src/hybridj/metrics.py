"""Evaluation metrics: confusion counts, error rates, AUC and subgroup slicing.

Rates with a zero denominator are ``None`` (rendered as an empty cell), never NaN.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import EmptyInput, LengthMismatch

METRIC_NAMES = ("auc", "bal_acc", "accuracy", "fpr", "fnr", "fdr", "for_")
CSV_HEADER = ["model", "group", "slice", "n", "auc", "bal_acc", "accuracy", "fpr", "fnr", "fdr", "for"]

ALL = "All"
SLICES = {"all": None, "recidivate": 1, "not_recidivate": 0}


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn
        )


@dataclass(frozen=True)
class MetricSet:
    counts: ConfusionCounts
    auc: Optional[float] = None
    bal_acc: Optional[float] = None
    accuracy: Optional[float] = None
    fpr: Optional[float] = None
    fnr: Optional[float] = None
    fdr: Optional[float] = None
    for_: Optional[float] = None

    @property
    def n(self) -> int:
        return self.counts.n

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in METRIC_NAMES}


def _check_lengths(*arrays):
    lens = [len(a) for a in arrays]
    if len(set(lens)) != 1:
        raise LengthMismatch(*lens)
    return lens[0]


def _binary(a) -> np.ndarray:
    arr = np.asarray(a)
    if arr.dtype == bool:
        return arr.astype(np.int64)
    out = arr.astype(np.int64)
    if np.any((out != 0) & (out != 1)) or np.any(out != arr):
        raise ValueError("expected binary values in {0, 1}")
    return out


def confusion(predictions, labels) -> ConfusionCounts:
    n = _check_lengths(predictions, labels)
    if n == 0:
        raise EmptyInput("confusion of empty arrays")
    p, y = _binary(predictions), _binary(labels)
    tp = int(np.sum((p == 1) & (y == 1)))
    fp = int(np.sum((p == 1) & (y == 0)))
    tn = int(np.sum((p == 0) & (y == 0)))
    fn = int(np.sum((p == 0) & (y == 1)))
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den > 0 else None


def metric_set(counts: ConfusionCounts, auc: Optional[float] = None) -> MetricSet:
    """Rates from confusion counts; ``auc`` is passed through when already known."""
    tp, fp, tn, fn = counts.tp, counts.fp, counts.tn, counts.fn
    tpr = _ratio(tp, tp + fn)
    tnr = _ratio(tn, tn + fp)
    bal = 0.5 * (tpr + tnr) if tpr is not None and tnr is not None else None
    return MetricSet(
        counts=counts,
        auc=auc,
        bal_acc=bal,
        accuracy=_ratio(tp + tn, counts.n),
        fpr=_ratio(fp, fp + tn),
        fnr=_ratio(fn, fn + tp),
        fdr=_ratio(fp, fp + tp),
        for_=_ratio(fn, fn + tn),
    )


def auc(scores, labels) -> Optional[float]:
    """Area under the ROC curve as the Mann-Whitney U statistic.

    Ties between a positive and a negative count one half. Uses average ranks,
    so it runs in O(n log n). Returns ``None`` if only one class is present.
    """
    n = _check_lengths(scores, labels)
    if n == 0:
        raise EmptyInput("auc of empty arrays")
    s = np.asarray(scores, dtype=np.float64)
    y = _binary(labels)
    n1 = int(y.sum())
    n0 = n - n1
    if n1 == 0 or n0 == 0:
        return None
    ranks = _average_ranks(s)
    # U = R1 - n1(n1+1)/2; the doubled form keeps everything integral
    u2 = 2.0 * ranks[y == 1].sum() - n1 * (n1 + 1)
    return float(u2 / (2.0 * n1 * n0))


def _average_ranks(s: np.ndarray) -> np.ndarray:
    """1-based ranks with ties replaced by their mean rank."""
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    # start index of each run of equal values
    starts = np.flatnonzero(np.r_[True, sorted_s[1:] != sorted_s[:-1]])
    ends = np.r_[starts[1:], len(s)]
    avg = (starts + ends + 1) / 2.0  # mean of ranks starts+1 .. ends
    run_id = np.repeat(np.arange(len(starts)), ends - starts)
    ranks = np.empty(len(s), dtype=np.float64)
    ranks[order] = avg[run_id]
    return ranks


def evaluate(predictions, labels, scores=None) -> MetricSet:
    counts = confusion(predictions, labels)
    a = auc(scores, labels) if scores is not None else None
    return metric_set(counts, auc=a)


def evaluate_by_group(
    predictions,
    labels,
    group: Sequence,
    scores=None,
    slices: Sequence[str] = ("all",),
) -> dict[tuple[str, str], MetricSet]:
    """MetricSets keyed by ``(group value, slice name)``.

    ``"All"`` is always included. Slices are ``"all"``, ``"recidivate"`` (label 1
    only) and ``"not_recidivate"``; single-label slices have ``auc`` None.
    Empty (group, slice) cells are omitted.
    """
    if scores is not None:
        _check_lengths(predictions, labels, group, scores)
    else:
        _check_lengths(predictions, labels, group)
    p = _binary(predictions)
    y = _binary(labels)
    s = None if scores is None else np.asarray(scores, dtype=np.float64)
    g = np.asarray([str(v) for v in group], dtype=object)
    group_values = [ALL] + sorted(set(g.tolist()) - {ALL})
    out = {}
    for gv in group_values:
        gmask = np.ones(len(y), dtype=bool) if gv == ALL else (g == gv)
        for sl in slices:
            target = SLICES[sl]
            mask = gmask if target is None else gmask & (y == target)
            if not mask.any():
                continue
            out[(gv, sl)] = evaluate(p[mask], y[mask], None if s is None else s[mask])
    return out


def format_value(v: Optional[float]) -> str:
    return "" if v is None else f"{v:.2f}"


def write_metrics_csv(path, rows) -> None:
    """``rows``: iterable of (model, group, slice, MetricSet)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for model, group, sl, m in rows:
            w.writerow([model, group, sl, m.n] + [format_value(getattr(m, k)) for k in METRIC_NAMES])
