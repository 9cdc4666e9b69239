"""Experiment orchestration: repeated train/test splits over a model grid,
score and partition analyses, and report files.

Typical use::

    ds = load_dataset_dir("data/")
    cfg = ExperimentConfig.from_json("experiment.json")
    table = run_experiment(ds, cfg)
    analysis = analyze_dataset(ds, cfg.scorer_pair, seed=cfg.base_seed)
    emit_report("results/", table=table, analysis=analysis)
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import zlib
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .dataset import feature_columns
from .errors import EmptyCase, HybridjError, InvalidConfig, TooFewRows
from .hybrid import HybridData, HybridSpec, default_grid, fit_hybrid
from .learners import AUTO, FeatureMatrix, fit_additive, fit_tree, mean_shift, standardize
from .learners.tree import REGRESSION
from .metrics import ALL, CSV_HEADER, METRIC_NAMES, SLICES, evaluate_by_group, format_value, write_metrics_csv
from .partition import (
    CASE_BITS, GROUPS, disagreement_subset, partition_cases, summarize_partition,
    write_partition_csv,
)
from .scoring import COMPAS, HNR, HWR, SHORT_NAME, all_scores, calibration_sweep, canonical_scorer, write_calibration_csv

log = logging.getLogger(__name__)

POPULATIONS = ("all", "disagreement_only")
DIFF_TARGETS = {"hwr-hnr": (HWR, HNR), "c-hnr": (COMPAS, HNR), "c-hwr": (COMPAS, HWR)}
CASE_FEATURES = ("priors_count", "age")
RESULTS_JSON = "results.json"


@dataclass(frozen=True)
class ExperimentConfig:
    population: str = "all"
    scorer_pair: tuple[str, str] = (COMPAS, HNR)
    models: Optional[tuple[HybridSpec, ...]] = None  # None -> default grid for the pair
    n_splits: int = 10
    train_fraction: float = 0.8
    base_seed: int = 0
    subgroups: tuple[str, ...] = ("race",)
    slices: tuple[str, ...] = ("all",)
    forest: dict = field(default_factory=dict)
    top_k_charges: int = 20
    output_dir: Optional[str] = None

    def __post_init__(self):
        if self.population not in POPULATIONS:
            raise InvalidConfig(f"population must be one of {POPULATIONS}, got {self.population!r}")
        pair = tuple(canonical_scorer(s) for s in self.scorer_pair)
        if len(pair) != 2 or pair[0] == pair[1]:
            raise InvalidConfig(f"scorer_pair needs two distinct scorers, got {self.scorer_pair!r}")
        object.__setattr__(self, "scorer_pair", pair)
        if self.n_splits < 1:
            raise InvalidConfig("n_splits must be >= 1")
        if self.base_seed < 0:
            raise InvalidConfig("base_seed must be >= 0")
        if not 0 < self.train_fraction < 1:
            raise InvalidConfig("train_fraction must be in (0, 1)")
        bad = [s for s in self.slices if s not in SLICES]
        if bad:
            raise InvalidConfig(f"unknown slices {bad}; choose from {sorted(SLICES)}")
        unknown = set(self.forest) - {"n_trees", "max_depth", "min_samples_leaf", "features_per_split", "bootstrap"}
        if unknown:
            raise InvalidConfig(f"unknown forest parameters {sorted(unknown)}")
        names = [m.name for m in self.grid]
        dup = sorted({n for n in names if names.count(n) > 1})
        if dup:
            raise InvalidConfig(f"duplicate model names in grid: {dup}")

    @property
    def grid(self) -> tuple[HybridSpec, ...]:
        return tuple(default_grid(self.scorer_pair)) if self.models is None else tuple(self.models)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {
            "population", "scorer_pair", "models", "n_splits", "train_fraction", "base_seed",
            "subgroups", "slices", "forest", "top_k_charges", "output_dir",
        }
        unknown = set(d) - known
        if unknown:
            raise InvalidConfig(f"unknown ExperimentConfig fields: {sorted(unknown)}")
        if "scorer_pair" in d:
            pair = d["scorer_pair"]
            d["scorer_pair"] = tuple(pair.split(",") if isinstance(pair, str) else pair)
        models = d.get("models")
        if models is None or models == "default":
            d["models"] = None
        else:
            if not isinstance(models, list):
                raise InvalidConfig("models must be a list of model specs or 'default'")
            d["models"] = tuple(HybridSpec.from_dict(m) for m in models)
        for key in ("subgroups", "slices"):
            if key in d:
                d[key] = tuple(d[key])
        try:
            return cls(**d)
        except TypeError as e:
            raise InvalidConfig(str(e)) from None

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as e:
                raise InvalidConfig(f"{path}: {e}") from None
        if not isinstance(d, dict):
            raise InvalidConfig(f"{path}: expected a JSON object")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return {
            "population": self.population,
            "scorer_pair": [SHORT_NAME[s] for s in self.scorer_pair],
            "models": None if self.models is None else [m.to_dict() for m in self.models],
            "n_splits": self.n_splits,
            "train_fraction": self.train_fraction,
            "base_seed": self.base_seed,
            "subgroups": list(self.subgroups),
            "slices": list(self.slices),
            "forest": dict(self.forest),
            "top_k_charges": self.top_k_charges,
        }


def make_splits(labels, config: ExperimentConfig) -> list[tuple[np.ndarray, np.ndarray]]:
    """Stratified train/test row indices for each split.

    ``labels`` may be the label array (stratified) or just the row count.
    Split ``k`` shuffles with seed ``base_seed + k``; the per-class train counts
    follow largest-remainder allocation, so class proportions hold to within
    one row.
    """
    y = np.zeros(int(labels), dtype=np.int64) if np.isscalar(labels) else np.asarray(labels).astype(np.int64)
    n = len(y)
    if n < 5:
        raise TooFewRows(f"need at least 5 rows to split, got {n}")
    n_train = min(max(int(round(config.train_fraction * n)), 1), n - 1)
    classes = np.unique(y)
    members = [np.flatnonzero(y == c) for c in classes]
    quota = [n_train * len(m) / n for m in members]
    take = [int(math.floor(q)) for q in quota]
    rest = n_train - sum(take)
    by_remainder = sorted(range(len(classes)), key=lambda i: (-(quota[i] - take[i]), i))
    for i in by_remainder[:rest]:
        take[i] += 1
    out = []
    for k in range(config.n_splits):
        rng = np.random.default_rng(config.base_seed + k)
        train = np.concatenate([rng.permutation(m)[:t] for m, t in zip(members, take)])
        train = np.sort(train)
        test = np.setdiff1d(np.arange(n), train)
        out.append((train, test))
    return out


def cell_seed(base_seed: int, split: int, model_name: str) -> int:
    """Seed of one (split, model) cell, independent of execution order."""
    ss = np.random.SeedSequence([int(base_seed), int(split), zlib.crc32(model_name.encode("utf-8"))])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _mean_std(values: list[float]) -> tuple[Optional[float], Optional[float]]:
    if not values:
        return None, None
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if len(arr) > 1 else None
    return mean, std


@dataclass
class ResultTable:
    """Per-split metrics for every (model, group, slice) cell of an experiment.

    ``cells[(model, group, slice)]`` holds one entry per split: a dict with
    ``n`` and every metric (None when undefined), or None when the model
    failed or the cell was empty in that split.
    """

    population: str
    scorer_pair: tuple[str, str]
    n_rows: int
    n_splits: int
    models: list[dict]  # {"name", "type", "spec"}
    groups: list[str]
    slices: list[str]
    cells: dict[tuple[str, str, str], list[Optional[dict]]]
    errors: dict[str, list[str]] = field(default_factory=dict)

    @property
    def model_names(self) -> list[str]:
        return [m["name"] for m in self.models]

    def keys(self):
        for m in self.model_names:
            for g in self.groups:
                for s in self.slices:
                    if (m, g, s) in self.cells:
                        yield (m, g, s)

    def values(self, model: str, group: str, sl: str, metric: str) -> list[float]:
        """Defined per-split values of one metric."""
        return [c[metric] for c in self.cells.get((model, group, sl), []) if c is not None and c[metric] is not None]

    def mean(self, model, group, sl, metric) -> Optional[float]:
        return _mean_std(self.values(model, group, sl, metric))[0]

    def std(self, model, group, sl, metric) -> Optional[float]:
        return _mean_std(self.values(model, group, sl, metric))[1]

    def mean_n(self, model, group, sl) -> int:
        ns = [c["n"] for c in self.cells.get((model, group, sl), []) if c is not None]
        return int(round(sum(ns) / len(ns))) if ns else 0

    def to_dict(self) -> dict:
        return {
            "population": self.population,
            "scorer_pair": [SHORT_NAME[s] for s in self.scorer_pair],
            "n_rows": self.n_rows,
            "n_splits": self.n_splits,
            "models": self.models,
            "groups": self.groups,
            "slices": self.slices,
            "cells": [
                {"model": m, "group": g, "slice": s, "splits": self.cells[(m, g, s)]}
                for (m, g, s) in self.keys()
            ],
            "errors": self.errors,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResultTable":
        return cls(
            population=d["population"],
            scorer_pair=tuple(canonical_scorer(s) for s in d["scorer_pair"]),
            n_rows=d["n_rows"],
            n_splits=d["n_splits"],
            models=d["models"],
            groups=d["groups"],
            slices=d["slices"],
            cells={(c["model"], c["group"], c["slice"]): c["splits"] for c in d["cells"]},
            errors=d.get("errors", {}),
        )


def experiment_data(dataset, config: ExperimentConfig) -> HybridData:
    """Model inputs for the configured population (restricted before any split)."""
    data = HybridData.from_dataset(dataset, top_k_charges=config.top_k_charges)
    if config.population == "disagreement_only":
        a, b = config.scorer_pair
        rows = np.flatnonzero(data.binary(a) != data.binary(b))
        data = data.take(rows)
    return data


def _group_order(values) -> list[str]:
    return [ALL] + sorted(set(values) - {ALL})


def run_experiment(dataset, config: ExperimentConfig) -> ResultTable:
    """Fit and evaluate every grid model on every split."""
    data = experiment_data(dataset, config)
    splits = make_splits(data.labels, config)
    grid = config.grid
    cells: dict[tuple[str, str, str], list[Optional[dict]]] = {}
    errors: dict[str, list[str]] = {}
    seen_groups: set[str] = set()
    for k, (tr, te) in enumerate(splits):
        train, test = data.take(tr), data.take(te)
        y_test = test.require_labels()
        test_inputs = test.without_labels()
        for spec in grid:
            spec_k = replace(spec, seed=cell_seed(config.base_seed, k, spec.name))
            log.info("split %d: %s", k, spec.name)
            try:
                model = fit_hybrid(spec_k, train, config.forest)
                # only the oracles may look at test labels
                pred = model.predict(test if spec.kind.startswith("oracle") else test_inputs)
                results = {}
                for col in config.subgroups:
                    if col not in test.features:
                        raise InvalidConfig(f"unknown subgroup column {col!r}")
                    results.update(evaluate_by_group(pred.binary, y_test, test.features[col], pred.score,
                                                     config.slices))
            except HybridjError as e:
                errors.setdefault(spec.name, []).append(f"split {k}: {type(e).__name__}: {e}")
                continue
            for (g, s), m in results.items():
                seen_groups.add(g)
                row = {"n": m.n, **m.as_dict()}
                cells.setdefault((spec.name, g, s), [None] * len(splits))[k] = row
    return ResultTable(
        population=config.population,
        scorer_pair=config.scorer_pair,
        n_rows=len(data),
        n_splits=len(splits),
        models=[{"name": s.name, "type": s.model_type, "spec": s.to_dict()} for s in grid],
        groups=_group_order(seen_groups),
        slices=list(config.slices),
        cells=cells,
        errors=errors,
    )


def oracle_bound_violations(table: ResultTable) -> list[str]:
    """Per-split accuracy cells where an oracle bound fails.

    The benevolent oracle bounds from above, and the adversarial oracle from
    below, every model that returns one of the pair's own predictions on each
    row: singles of either scorer, random picks and (composed) indirect
    pickers over the pair.
    """
    specs = {m["name"]: HybridSpec.from_dict(m["spec"]) for m in table.models}
    ben = [n for n, s in specs.items() if s.kind == "oracle_benevolent"]
    adv = [n for n, s in specs.items() if s.kind == "oracle_adversarial"]
    out = []
    for oracle_name, sign in [(n, 1) for n in ben] + [(n, -1) for n in adv]:
        pair = set(specs[oracle_name].scorers)
        bounded = [
            n for n, s in specs.items()
            if set(s.scorers) <= pair and (
                s.kind in ("random_pick", "indirect", "composed_indirect")
                or (s.kind == "single" and not s.use_features)
            )
        ]
        for g in table.groups:
            for sl in table.slices:
                ref = table.cells.get((oracle_name, g, sl))
                if ref is None:
                    continue
                for name in bounded:
                    other = table.cells.get((name, g, sl))
                    if other is None:
                        continue
                    for k, (a, b) in enumerate(zip(ref, other)):
                        if a is None or b is None:
                            continue
                        if sign * (a["accuracy"] - b["accuracy"]) < -1e-12:
                            out.append(f"{oracle_name} vs {name} [{g}/{sl}] split {k}: "
                                       f"{a['accuracy']:.4f} vs {b['accuracy']:.4f}")
    return out


# -- dataset-level analyses -------------------------------------------------------------


@dataclass
class Characterization:
    eight_case_tree: object  # Tree
    per_case_clusters: dict  # case -> ClusterResult
    case_feature_stats: dict  # case -> {"n", "priors_count", "age"}
    notes: list[str] = field(default_factory=list)


def _cases(dataset, pair, scores=None) -> dict[int, int]:
    scores = all_scores(dataset) if scores is None else scores
    a, b = (canonical_scorer(s) for s in pair)
    ids = dataset.ids
    machine = {i: scores[a][i].binarized for i in ids if i in scores[a]}
    human = {i: scores[b][i].binarized for i in ids if i in scores[b]}
    labels = {r.id: bool(r.recidivated) for r in dataset.defendants}
    return partition_cases(ids, machine, human, labels)


def characterize_partition(dataset, pair=(COMPAS, HNR), max_depth: int = 5, bandwidth=AUTO,
                           seed: int = 0, top_k_charges: int = 20) -> Characterization:
    """Eight-case tree, per-case mean-shift clusters and per-case feature means."""
    cases = _cases(dataset, pair)
    ids = dataset.ids
    y = np.array([cases[i] for i in ids], dtype=np.int64)
    X = FeatureMatrix(feature_columns(dataset, ids, top_k_charges))
    tree = fit_tree(X, y, max_depth=max_depth)
    Z = standardize(X.values)
    by_id = dataset.by_id
    clusters, stats, notes = {}, {}, []
    for c in range(1, 9):
        rows = np.flatnonzero(y == c)
        if len(rows) == 0:
            notes.append(str(EmptyCase(c)))
            stats[c] = {"n": 0, **{f: None for f in CASE_FEATURES}}
            continue
        clusters[c] = mean_shift(Z[rows], bandwidth=bandwidth, seed=seed)
        stats[c] = {"n": int(len(rows))}
        for f in CASE_FEATURES:
            stats[c][f] = float(np.mean([getattr(by_id[ids[r]], f) for r in rows]))
    return Characterization(tree, clusters, stats, notes)


def score_difference_trees(dataset, max_depth: int = 3, top_k_charges: int = 20) -> dict:
    """Regression trees on defendant features for the pairwise score differences."""
    scores = all_scores(dataset)
    ids = dataset.ids
    X = FeatureMatrix(feature_columns(dataset, ids, top_k_charges))
    out = {}
    for key, (a, b) in DIFF_TARGETS.items():
        diff = np.array([scores[a][i].value - scores[b][i].value for i in ids], dtype=np.float64)
        out[key] = fit_tree(X, diff, max_depth=max_depth, task=REGRESSION)
    return out


def feature_importance(dataset, n_rounds: int = 100, learning_rate: float = 0.1, n_bins: int = 32,
                       top_k_charges: int = 20) -> dict:
    """Additive model of each score on the defendant features."""
    scores = all_scores(dataset)
    ids = dataset.ids
    X = FeatureMatrix(feature_columns(dataset, ids, top_k_charges))
    out = {}
    for s in (COMPAS, HNR, HWR):
        y = np.array([scores[s][i].value for i in ids], dtype=np.float64)
        out[s] = fit_additive(X, y, n_rounds=n_rounds, learning_rate=learning_rate, n_bins=n_bins)
    return out


def score_metrics(dataset, slices=("all", "recidivate", "not_recidivate"), group="race") -> list:
    """Rows of (scorer, group, slice, MetricSet) for the binarized scores."""
    scores = all_scores(dataset)
    ids = dataset.ids
    labels = dataset.labels(ids)
    g = [getattr(dataset.by_id[i], group) for i in ids]
    rows = []
    for s in (COMPAS, HNR, HWR):
        values = np.array([scores[s][i].value for i in ids], dtype=np.float64)
        res = evaluate_by_group(values >= 5, labels, g, values, slices)
        for (gv, sl), m in res.items():
            rows.append((s, gv, sl, m))
    return rows


@dataclass
class Analysis:
    pair: tuple[str, str]
    partition_rows: list
    partition_summary: object
    disagreement_size: int
    curves: list
    scores: list
    diff_trees: dict
    characterization: Optional[Characterization] = None
    importance: Optional[dict] = None


def analyze_dataset(dataset, pair=(COMPAS, HNR), seed: int = 0, top_k_charges: int = 20,
                    characterize: bool = True, importance: bool = True) -> Analysis:
    pair = tuple(canonical_scorer(s) for s in pair)
    scores = all_scores(dataset)
    ids = dataset.ids
    cases = _cases(dataset, pair, scores)
    rows = []
    for i in ids:
        m, h, yv = CASE_BITS[cases[i]]
        rows.append((i, m, h, yv, cases[i]))
    summary = summarize_partition([cases[i] for i in ids])
    dis = disagreement_subset(dataset, scores[pair[0]], scores[pair[1]])
    labels = dataset.labels(ids)
    curves = [calibration_sweep([scores[s][i] for i in ids], labels, s) for s in (COMPAS, HNR, HWR)]
    return Analysis(
        pair=pair,
        partition_rows=rows,
        partition_summary=summary,
        disagreement_size=len(dis),
        curves=curves,
        scores=score_metrics(dataset),
        diff_trees=score_difference_trees(dataset, top_k_charges=top_k_charges),
        characterization=characterize_partition(dataset, pair, seed=seed, top_k_charges=top_k_charges)
        if characterize else None,
        importance=feature_importance(dataset, top_k_charges=top_k_charges) if importance else None,
    )


# -- report files -------------------------------------------------------------------------


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _aggregate_rows(table: ResultTable, stat: str):
    def cell(m, g, s):
        vals = [(table.mean if stat == "mean" else table.std)(m, g, s, k) for k in METRIC_NAMES]
        return [m, g, s, table.mean_n(m, g, s)] + [format_value(v) for v in vals]

    return [cell(*key) for key in table.keys()]


def write_table_csvs(out_dir, table: ResultTable) -> list[str]:
    written = []
    for fname, stat in (("metrics.csv", "mean"), ("metrics_std.csv", "std")):
        path = os.path.join(out_dir, fname)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            w.writerows(_aggregate_rows(table, stat))
        written.append(path)
    path = os.path.join(out_dir, "metrics_splits.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["split"] + CSV_HEADER)
        for m, g, s in table.keys():
            for k, c in enumerate(table.cells[(m, g, s)]):
                if c is not None:
                    w.writerow([k, m, g, s, c["n"]] + [format_value(c[x]) for x in METRIC_NAMES])
    written.append(path)
    return written


def _pm(mean, std) -> str:
    if mean is None:
        return ""
    return f"{mean:.2f}" if std is None else f"{mean:.2f} ± {std:.2f}"


def _md_table(header: Sequence[str], rows: Sequence[Sequence]) -> list[str]:
    out = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    out += ["| " + " | ".join(str(c) for c in r) + " |" for r in rows]
    return out


def analysis_payload(analysis: Analysis) -> dict:
    """JSON-safe summary of an :class:`Analysis` (all that the markdown needs)."""
    ps = analysis.partition_summary
    payload = {
        "pair": [SHORT_NAME[s] for s in analysis.pair],
        "n": ps.n,
        "case_counts": {str(c): ps.counts[c] for c in range(1, 9)},
        "group_shares": dict(ps.group_shares),
        "disagreement_size": analysis.disagreement_size,
        "scores": [
            {"scorer": SHORT_NAME[s], "group": g, "slice": sl, "n": m.n, **m.as_dict()}
            for s, g, sl, m in analysis.scores
        ],
        "calibration": [
            {"scorer": SHORT_NAME[c.scorer], "cutoff": p.cutoff, "accuracy": p.accuracy, "fpr": p.fpr, "fnr": p.fnr}
            for c in analysis.curves for p in c.points
        ],
    }
    ch = analysis.characterization
    if ch is not None:
        payload["case_stats"] = {
            str(c): {**st, "n_modes": ch.per_case_clusters[c].n_modes if c in ch.per_case_clusters else None}
            for c, st in ch.case_feature_stats.items()
        }
        payload["characterization_notes"] = list(ch.notes)
    if analysis.importance is not None:
        payload["importance"] = {
            SHORT_NAME[s]: [[f, m.feature_importance[f]] for f in m.ranked_features()]
            for s, m in analysis.importance.items()
        }
    return payload


def render_summary(payload: Optional[dict], table: Optional[ResultTable]) -> str:
    """Markdown summary: partition, score accuracy, calibration and model results."""
    lines = ["# hybridj summary", ""]
    if payload is not None:
        a, b = payload["pair"]
        n = payload["n"]
        lines += [f"## Partition ({a} vs {b})", "", f"Defendants: {n}. "
                  f"Disagreement subset ({a} and {b} binarized predictions differ): "
                  f"{payload['disagreement_size']} ({100 * payload['disagreement_size'] / n:.1f}%).", ""]
        stats = payload.get("case_stats", {})
        rows = []
        for gname, (c1, c2) in GROUPS.items():
            for c in (c1, c2):
                m, h, yv = CASE_BITS[c]
                st = stats.get(str(c), {})
                rows.append([
                    c, "High" if m else "Low", "High" if h else "Low", "Yes" if yv else "No",
                    payload["case_counts"][str(c)],
                    f"{100 * payload['group_shares'][gname]:.1f}" if c == c1 else "",
                    "" if st.get("priors_count") is None else f"{st['priors_count']:.2f}",
                    "" if st.get("age") is None else f"{st['age']:.2f}",
                    "" if st.get("n_modes") is None else st["n_modes"],
                ])
        lines += _md_table(
            ["Case", f"{a} risk", f"{b} risk", "Recidivated", "n", "% defendants (pair)",
             "mean priors", "mean age", "clusters"], rows)
        lines.append("")
        for note in payload.get("characterization_notes", []):
            lines.append(f"- {note}")
        scores = payload["scores"]

        def get(scorer, group, sl, metric):
            for r in scores:
                if (r["scorer"], r["group"], r["slice"]) == (scorer, group, sl):
                    return r[metric]
            return None

        groups = [ALL] + sorted({r["group"] for r in scores} - {ALL})
        scorers = ["C", "HNR", "HWR"]
        lines += ["## Score accuracy by race", ""]
        rows = []
        for metric in ("accuracy", "auc", "fpr", "fnr"):
            for s in scorers:
                rows.append([metric, s] + [format_value(get(s, g, "all", metric)) for g in groups])
        lines += _md_table(["metric", "scorer"] + groups, rows)
        lines += ["", "## Score accuracy by outcome", ""]
        rows = [[s] + [format_value(get(s, ALL, sl, "accuracy")) for sl in ("all", "recidivate", "not_recidivate")]
                for s in scorers]
        lines += _md_table(["scorer", "all", "recidivated", "did not recidivate"], rows)
        lines += ["", "## Calibration", ""]
        cal = payload["calibration"]
        rows = [[p["cutoff"]] + [
            format_value(next(q[m] for q in cal if q["scorer"] == s and q["cutoff"] == p["cutoff"]))
            for s in scorers for m in ("accuracy", "fpr", "fnr")
        ] for p in cal if p["scorer"] == "C"]
        lines += _md_table(["cutoff"] + [f"{s} {m}" for s in scorers for m in ("acc", "FPR", "FNR")], rows)
        if "importance" in payload:
            lines += ["", "## Feature importance (additive model shape range)", ""]
            rows = [[s, ", ".join(f"{f} ({v:.2f})" for f, v in ranked[:4])]
                    for s, ranked in payload["importance"].items()]
            lines += _md_table(["score", "top features"], rows)
        lines.append("")
    if table is not None and table.models:
        lines += [f"## Model results ({table.population}, {table.n_rows} rows, {table.n_splits} splits)", "",
                  "Mean ± sample standard deviation over splits; group All, all outcomes.", ""]
        rows = []
        for m in table.models:
            name = m["name"]
            rows.append([m["type"], name] + [
                _pm(table.mean(name, ALL, "all", k), table.std(name, ALL, "all", k))
                for k in ("auc", "bal_acc", "accuracy", "fpr", "fnr", "fdr", "for_")
            ])
        lines += _md_table(["Type", "Model", "AUC", "BalAcc", "Acc", "FPR", "FNR", "FDR", "FOR"], rows)
        groups = [g for g in table.groups if g != ALL]
        if groups:
            lines += ["", "### Accuracy by group", ""]
            rows = [[m["type"], m["name"]] + [
                _pm(table.mean(m["name"], g, "all", "accuracy"), table.std(m["name"], g, "all", "accuracy"))
                for g in table.groups] for m in table.models]
            lines += _md_table(["Type", "Model"] + table.groups, rows)
        violations = oracle_bound_violations(table)
        lines += ["", "Oracle bounds: " + ("hold on every split." if not violations
                                           else f"{len(violations)} violations.")]
        for v in violations:
            lines.append(f"- {v}")
        if table.errors:
            lines += ["", "### Failed cells", ""]
            for name in table.model_names:
                for e in table.errors.get(name, []):
                    lines.append(f"- {name}: {e}")
        lines.append("")
    return "\n".join(lines)


def emit_report(out_dir, table: Optional[ResultTable] = None, analysis: Optional[Analysis] = None,
                config: Optional[ExperimentConfig] = None) -> list[str]:
    """Write result CSVs, tree exports, calibration/partition CSVs, results.json and summary.md."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    payload = None
    if table is not None:
        written += write_table_csvs(out_dir, table)
    if analysis is not None:
        payload = analysis_payload(analysis)
        p = os.path.join(out_dir, "partition.csv")
        write_partition_csv(p, analysis.partition_rows)
        written.append(p)
        p = os.path.join(out_dir, "calibration.csv")
        write_calibration_csv(p, analysis.curves)
        written.append(p)
        p = os.path.join(out_dir, "scores_metrics.csv")
        write_metrics_csv(p, [(SHORT_NAME[s], g, sl, m) for s, g, sl, m in analysis.scores])
        written.append(p)
        for key, tree in analysis.diff_trees.items():
            p = os.path.join(out_dir, f"tree_diff_{key}.txt")
            _write_text(p, tree.export_text())
            written.append(p)
        if analysis.characterization is not None:
            p = os.path.join(out_dir, "tree_8case.txt")
            _write_text(p, analysis.characterization.eight_case_tree.export_text())
            written.append(p)
    bundle = {
        "config": None if config is None else config.to_dict(),
        "table": None if table is None else table.to_dict(),
        "analysis": payload,
    }
    p = os.path.join(out_dir, RESULTS_JSON)
    _write_text(p, json.dumps(bundle, indent=1, sort_keys=True) + "\n")
    written.append(p)
    p = os.path.join(out_dir, "summary.md")
    _write_text(p, render_summary(payload, table))
    written.append(p)
    return written


def rerender_report(results_dir) -> list[str]:
    """Rebuild metric CSVs and summary.md from a results directory's results.json."""
    with open(os.path.join(results_dir, RESULTS_JSON), encoding="utf-8") as fh:
        try:
            bundle = json.load(fh)
        except json.JSONDecodeError as e:
            raise InvalidConfig(f"{RESULTS_JSON}: {e}") from None
    table = None if bundle.get("table") is None else ResultTable.from_dict(bundle["table"])
    written = []
    if table is not None:
        written += write_table_csvs(results_dir, table)
    p = os.path.join(results_dir, "summary.md")
    _write_text(p, render_summary(bundle.get("analysis"), table))
    written.append(p)
    return written
