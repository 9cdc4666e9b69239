"""Defendant / worker-prediction data: CSV ingestion, writing and synthetic populations."""

from __future__ import annotations

import csv
import math
import warnings
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    BadValue,
    DanglingForeignKey,
    DuplicateKey,
    InvalidConfig,
    MissingColumn,
)
from .partition import CASE_BITS

DEFENDANT_COLUMNS = [
    "id",
    "age",
    "race",
    "sex",
    "juv_misd_count",
    "juv_felony_count",
    "priors_count",
    "charge_degree",
    "charge",
    "compas_score",
    "recidivated",
]
PREDICTION_COLUMNS = [
    "worker_id",
    "defendant_id",
    "condition",
    "prediction",
    "worker_race",
    "worker_sex",
    "worker_age",
]

RACES = ("black", "white", "other")
SEXES = ("male", "female")
CHARGE_DEGREES = ("misdemeanor", "felony")
CONDITIONS = ("no_race", "with_race")
OTHER = "__other__"
UNKNOWN = "unknown"

MIN_AGE, MAX_AGE = 12, 100

# Spellings found in the public releases.
_RACE_ALIASES = {
    "african-american": "black",
    "african american": "black",
    "caucasian": "white",
    "hispanic": "other",
    "asian": "other",
    "native american": "other",
}
_SEX_ALIASES = {"m": "male", "f": "female"}
_DEGREE_ALIASES = {"m": "misdemeanor", "f": "felony"}

# Table-1 pair masses, split within pairs.
DEFAULT_CASE_MIX = (0.275, 0.215, 0.081, 0.081, 0.0795, 0.0795, 0.0945, 0.0945)

FEATURE_NAMES = (
    "age",
    "race",
    "sex",
    "juv_misd_count",
    "juv_felony_count",
    "priors_count",
    "charge_degree",
    "charge",
)
CATEGORICAL_FEATURES = frozenset({"race", "sex", "charge_degree", "charge"})


@dataclass(frozen=True)
class DefendantRecord:
    id: int
    age: int
    race: str
    sex: str
    juv_misd_count: int
    juv_felony_count: int
    priors_count: int
    charge_degree: str
    charge: str
    recidivated: bool


@dataclass(frozen=True)
class WorkerPrediction:
    worker_id: int
    defendant_id: int
    condition: str
    prediction: int
    worker_race: str = UNKNOWN
    worker_sex: str = UNKNOWN
    worker_age: Optional[int] = None


@dataclass(frozen=True)
class Dataset:
    defendants: tuple[DefendantRecord, ...]
    compas_scores: dict[int, int]
    predictions: tuple[WorkerPrediction, ...]

    def __post_init__(self):
        object.__setattr__(self, "defendants", tuple(self.defendants))
        object.__setattr__(self, "predictions", tuple(self.predictions))
        object.__setattr__(self, "compas_scores", dict(self.compas_scores))
        seen = set()
        for d in self.defendants:
            if d.id in seen:
                raise DuplicateKey(d.id)
            seen.add(d.id)
        for i, s in self.compas_scores.items():
            if i not in seen:
                raise DanglingForeignKey(i)
            if not 1 <= s <= 10:
                raise BadValue(None, "compas_score", s, "must be in [1, 10]")
        keys = set()
        for p in self.predictions:
            if p.defendant_id not in seen:
                raise DanglingForeignKey(p.defendant_id)
            key = (p.worker_id, p.defendant_id, p.condition)
            if key in keys:
                raise DuplicateKey(key)
            keys.add(key)

    def __len__(self):
        return len(self.defendants)

    @cached_property
    def ids(self) -> list[int]:
        return [d.id for d in self.defendants]

    @cached_property
    def by_id(self) -> dict[int, DefendantRecord]:
        return {d.id: d for d in self.defendants}

    @cached_property
    def prediction_groups(self) -> dict[tuple[int, str], list[WorkerPrediction]]:
        """Worker predictions keyed by (defendant_id, condition), file order kept."""
        groups: dict[tuple[int, str], list[WorkerPrediction]] = {}
        for p in self.predictions:
            groups.setdefault((p.defendant_id, p.condition), []).append(p)
        return groups

    def labels(self, ids: Optional[Sequence[int]] = None) -> np.ndarray:
        ids = self.ids if ids is None else ids
        return np.array([int(self.by_id[i].recidivated) for i in ids], dtype=np.int64)

    def subset(self, ids) -> "Dataset":
        keep = set(ids)
        return Dataset(
            defendants=tuple(d for d in self.defendants if d.id in keep),
            compas_scores={i: s for i, s in self.compas_scores.items() if i in keep},
            predictions=tuple(p for p in self.predictions if p.defendant_id in keep),
        )


def feature_columns(dataset: Dataset, ids=None, top_k_charges: Optional[int] = 20) -> dict[str, list]:
    """Defendant features as ordered columns, ready for a FeatureMatrix.

    ``charge`` keeps the ``top_k_charges`` most frequent values of the *whole*
    dataset (ties broken alphabetically); the rest become ``"__other__"``.
    """
    ids = dataset.ids if ids is None else list(ids)
    keep_charges = None
    if top_k_charges is not None:
        freq = Counter(d.charge for d in dataset.defendants)
        ranked = sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))
        keep_charges = {c for c, _ in ranked[:top_k_charges]}
    cols: dict[str, list] = {name: [] for name in FEATURE_NAMES}
    for i in ids:
        d = dataset.by_id[i]
        for name in FEATURE_NAMES:
            v = getattr(d, name)
            if name == "charge" and keep_charges is not None and v not in keep_charges:
                v = OTHER
            cols[name].append(v)
    return cols


def worker_aggregates(dataset: Dataset, condition: str, ids=None) -> dict[str, list]:
    """Per-defendant worker demographics for one condition: mean age, modal race and sex.

    Modal ties go to the alphabetically first category. Defendants without
    predictions (or without known ages) get NaN age and ``"unknown"`` categories.
    """
    ids = dataset.ids if ids is None else list(ids)
    groups = dataset.prediction_groups
    prefix = "w_" + condition
    out: dict[str, list] = {f"{prefix}_age": [], f"{prefix}_race": [], f"{prefix}_sex": []}
    for i in ids:
        group = groups.get((i, condition), [])
        ages = [p.worker_age for p in group if p.worker_age is not None]
        out[f"{prefix}_age"].append(float(np.mean(ages)) if ages else math.nan)
        out[f"{prefix}_race"].append(_mode([p.worker_race for p in group]))
        out[f"{prefix}_sex"].append(_mode([p.worker_sex for p in group]))
    return out


def _mode(values: list[str]) -> str:
    if not values:
        return UNKNOWN
    counts = Counter(values)
    best = max(counts.values())
    return min(v for v, c in counts.items() if c == best)


# -- CSV ingestion -----------------------------------------------------------------


def _read_table(path: Path, required: list[str]):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise MissingColumn(col, str(path))
        extra = [c for c in header if c not in required]
        if extra:
            warnings.warn(f"{path}: ignoring unknown columns {extra}", stacklevel=3)
        # line 1 is the header
        for lineno, row in enumerate(reader, start=2):
            yield lineno, row


def _int(row, col, lineno, lo=None, hi=None) -> int:
    raw = (row.get(col) or "").strip()
    try:
        v = int(float(raw)) if raw and float(raw).is_integer() else int(raw)
    except ValueError:
        raise BadValue(lineno, col, raw, "not an integer") from None
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        raise BadValue(lineno, col, raw, f"outside [{lo}, {hi}]")
    return v


def _category(row, col, lineno, vocab, aliases) -> str:
    raw = (row.get(col) or "").strip()
    v = raw.lower()
    v = aliases.get(v, v)
    if v not in vocab:
        raise BadValue(lineno, col, raw, f"expected one of {list(vocab)}")
    return v


def _race(row, col, lineno) -> str:
    raw = (row.get(col) or "").strip()
    v = _RACE_ALIASES.get(raw.lower(), raw.lower())
    if v not in RACES:
        if not raw:
            raise BadValue(lineno, col, raw, "empty race")
        v = "other"
    return v


def load_dataset(defendants_path, predictions_path) -> Dataset:
    """Read and validate ``defendants.csv`` and ``predictions.csv``."""
    defendants_path, predictions_path = Path(defendants_path), Path(predictions_path)
    defendants = []
    compas = {}
    seen = set()
    for lineno, row in _read_table(defendants_path, DEFENDANT_COLUMNS):
        did = _int(row, "id", lineno)
        if did in seen:
            raise DuplicateKey(did, lineno)
        seen.add(did)
        rec = DefendantRecord(
            id=did,
            age=_int(row, "age", lineno, MIN_AGE, MAX_AGE),
            race=_race(row, "race", lineno),
            sex=_category(row, "sex", lineno, SEXES, _SEX_ALIASES),
            juv_misd_count=_int(row, "juv_misd_count", lineno, 0),
            juv_felony_count=_int(row, "juv_felony_count", lineno, 0),
            priors_count=_int(row, "priors_count", lineno, 0),
            charge_degree=_category(row, "charge_degree", lineno, CHARGE_DEGREES, _DEGREE_ALIASES),
            charge=(row.get("charge") or "").strip() or UNKNOWN,
            recidivated=bool(_int(row, "recidivated", lineno, 0, 1)),
        )
        compas[did] = _int(row, "compas_score", lineno, 1, 10)
        defendants.append(rec)

    predictions = []
    keys = set()
    for lineno, row in _read_table(predictions_path, PREDICTION_COLUMNS):
        did = _int(row, "defendant_id", lineno)
        if did not in seen:
            raise DanglingForeignKey(did, lineno)
        cond = (row.get("condition") or "").strip()
        if cond not in CONDITIONS:
            raise BadValue(lineno, "condition", cond, f"expected one of {list(CONDITIONS)}")
        wid = _int(row, "worker_id", lineno)
        key = (wid, did, cond)
        if key in keys:
            raise DuplicateKey(key, lineno)
        keys.add(key)
        age_raw = (row.get("worker_age") or "").strip()
        predictions.append(
            WorkerPrediction(
                worker_id=wid,
                defendant_id=did,
                condition=cond,
                prediction=_int(row, "prediction", lineno, 0, 1),
                worker_race=(row.get("worker_race") or "").strip() or UNKNOWN,
                worker_sex=(row.get("worker_sex") or "").strip() or UNKNOWN,
                worker_age=_int(row, "worker_age", lineno, 0) if age_raw else None,
            )
        )
    return Dataset(tuple(defendants), compas, tuple(predictions))


def load_dataset_dir(directory) -> Dataset:
    d = Path(directory)
    return load_dataset(d / "defendants.csv", d / "predictions.csv")


def write_dataset(dataset: Dataset, directory) -> tuple[Path, Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    dpath, ppath = d / "defendants.csv", d / "predictions.csv"
    with open(dpath, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DEFENDANT_COLUMNS)
        for r in dataset.defendants:
            w.writerow([
                r.id, r.age, r.race, r.sex, r.juv_misd_count, r.juv_felony_count,
                r.priors_count, r.charge_degree, r.charge,
                dataset.compas_scores[r.id], int(r.recidivated),
            ])
    with open(ppath, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PREDICTION_COLUMNS)
        for p in dataset.predictions:
            w.writerow([
                p.worker_id, p.defendant_id, p.condition, p.prediction,
                p.worker_race, p.worker_sex, "" if p.worker_age is None else p.worker_age,
            ])
    return dpath, ppath


# -- synthetic populations ---------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for :func:`generate_synthetic`.

    ``case_mix`` is the target probability of each of the eight agreement /
    correctness cases. ``feature_noise`` is the probability that a feature is
    drawn from the case-independent population distribution instead of the
    case-specific one; 0 makes the cases perfectly separable from features.
    """

    n_defendants: int = 1000
    n_workers_per_defendant: int = 20
    seed: int = 0
    case_mix: tuple[float, ...] = DEFAULT_CASE_MIX
    feature_noise: float = 0.3
    defendants_per_worker: int = 50

    def __post_init__(self):
        object.__setattr__(self, "case_mix", tuple(float(p) for p in self.case_mix))
        if self.n_defendants < 1 or self.n_workers_per_defendant < 1:
            raise InvalidConfig("n_defendants and n_workers_per_defendant must be >= 1")
        if self.defendants_per_worker < 1:
            raise InvalidConfig("defendants_per_worker must be >= 1")
        if len(self.case_mix) != 8:
            raise InvalidConfig(f"case_mix needs 8 probabilities, got {len(self.case_mix)}")
        if any(p < 0 or not math.isfinite(p) for p in self.case_mix):
            raise InvalidConfig("case_mix probabilities must be finite and nonnegative")
        if abs(sum(self.case_mix) - 1.0) > 1e-9:
            raise InvalidConfig(f"case_mix sums to {sum(self.case_mix)!r}, not 1")
        if not 0.0 <= self.feature_noise <= 1.0:
            raise InvalidConfig("feature_noise must be in [0, 1]")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidConfig("seed must be a 64-bit unsigned integer")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise InvalidConfig(f"unknown SynthConfig fields: {sorted(unknown)}")
        return cls(**d)


CHARGES = (
    "Battery", "Grand Theft in the 3rd Degree", "Possession of Cocaine",
    "Driving While License Revoked", "Petit Theft", "Burglary Unoccupied Dwelling",
    "Aggravated Assault w/Firearm", "Possession of Cannabis", "Resist/Obstruct W/O Violence",
    "Felony Driving While Lic Suspd", "DUI Property Damage/Injury", "Aggravated Battery",
    "Criminal Mischief", "Tampering With Physical Evidence", "Robbery / No Weapon",
    "Felony Petit Theft", "Trespass Structure/Conveyance", "Possession Burglary Tools",
    "Deliver Cocaine", "Uttering a Forged Instrument", "Fleeing or Eluding",
    "Carrying Concealed Firearm", "Leave Accd/Attend Veh/Less $50", "Lewd or Lascivious",
    "Stalking",
)
_CHARGE_P = np.array([1.0 / (k + 1) for k in range(len(CHARGES))])
_CHARGE_P /= _CHARGE_P.sum()

# (priors low, priors high, age low, age high), inclusive, per case profile 1-6
_PROFILES = {
    1: (2, 12, 18, 38),
    2: (0, 1, 24, 48),
    3: (0, 0, 24, 48),
    4: (2, 5, 33, 60),
    5: (2, 5, 33, 60),
    6: (0, 0, 24, 48),
}
_WORKER_RACES = ("white", "black", "asian", "hispanic", "other")


def _generic_priors(rng) -> int:
    return int(min(int(rng.exponential(3.5)), 30))


def _generic_age(rng) -> int:
    return int(min(18 + int(rng.gamma(2.0, 7.0)), 80))


def _vote_count(rng, n: int, high: bool, priors: int) -> int:
    """Positive votes out of ``n`` such that the aggregated score lands on the right side of 5."""
    half = (n + 1) // 2  # smallest k with 10k/n >= 5
    if high:
        q = min(0.9, 0.3 + 0.06 * priors)
        return half + int(rng.binomial(n - half, q))
    q = min(0.9, 0.2 + 0.1 * priors)
    return int(rng.binomial(half - 1, q)) if half > 1 else 0


def generate_synthetic(config: SynthConfig) -> Dataset:
    """Draw a population with a known case structure.

    Each defendant first draws a case from ``config.case_mix``; the case fixes the
    binarized COMPAS score, the binarized no-race human score and the label. Age
    and priors follow the case's profile (cases 7-8 borrow a random profile from
    1-6); the three bits of ``case - 1`` are planted in charge degree, juvenile
    misdemeanours and juvenile felonies. With probability ``feature_noise`` each
    feature is drawn from the population distribution instead.
    """
    rng = np.random.default_rng(config.seed)
    n, nw, noise = config.n_defendants, config.n_workers_per_defendant, config.feature_noise
    cases = rng.choice(8, size=n, p=np.asarray(config.case_mix) / sum(config.case_mix)) + 1

    defendants = []
    compas = {}
    plan = []  # (id, race, human_high_nr, human_high_wr, priors)
    for j in range(n):
        case = int(cases[j])
        machine_high, human_high, recid = CASE_BITS[case]
        profile = case if case <= 6 else int(rng.integers(1, 7))
        p_lo, p_hi, a_lo, a_hi = _PROFILES[profile]
        priors = int(rng.integers(p_lo, p_hi + 1))
        age = int(rng.integers(a_lo, a_hi + 1))
        if rng.random() < noise:
            priors = _generic_priors(rng)
        if rng.random() < noise:
            age = _generic_age(rng)
        bits = case - 1
        felony = bool(bits & 1) if rng.random() >= noise else bool(rng.random() < 0.6)
        if rng.random() >= noise:
            juv_misd = int(rng.integers(1, 4)) if bits & 2 else 0
        else:
            juv_misd = int(rng.integers(1, 4)) if rng.random() < 0.1 else 0
        if rng.random() >= noise:
            juv_fel = int(rng.integers(1, 4)) if bits & 4 else 0
        else:
            juv_fel = int(rng.integers(1, 4)) if rng.random() < 0.1 else 0
        race = str(rng.choice(RACES, p=[0.51, 0.40, 0.09]))
        sex = "male" if rng.random() < 0.8 else "female"
        charge = CHARGES[int(rng.choice(len(CHARGES), p=_CHARGE_P))]

        if machine_high:
            score = 5 + priors // 3 + int(rng.integers(0, 2))
            score = min(max(score, 5), 10)
        else:
            score = 1 + min(priors, 2) + int(age < 25) + int(rng.integers(0, 2))
            score = min(max(score, 1), 4)

        did = j + 1
        defendants.append(DefendantRecord(
            id=did, age=age, race=race, sex=sex, juv_misd_count=juv_misd,
            juv_felony_count=juv_fel, priors_count=priors,
            charge_degree="felony" if felony else "misdemeanor", charge=charge,
            recidivated=recid,
        ))
        compas[did] = score
        human_high_wr = human_high if rng.random() < 0.9 else not human_high
        plan.append((did, race, human_high, human_high_wr, priors))

    # Workers come in panels; each panel rates a batch of defendants, per condition.
    batches = math.ceil(n / config.defendants_per_worker)
    n_workers_total = 2 * batches * nw
    w_race = rng.choice(_WORKER_RACES, size=n_workers_total, p=[0.6, 0.12, 0.1, 0.1, 0.08])
    w_sex = np.where(rng.random(n_workers_total) < 0.5, "male", "female")
    w_age = rng.integers(18, 71, size=n_workers_total)

    predictions = []
    half = (nw + 1) // 2
    for j, (did, race, hi_nr, hi_wr, priors) in enumerate(plan):
        batch = j // config.defendants_per_worker
        for c, (cond, high) in enumerate((("no_race", hi_nr), ("with_race", hi_wr))):
            k = _vote_count(rng, nw, high, priors)
            if cond == "with_race":
                shift = {"black": 1, "white": -1}.get(race, 0)
                lo, hi = (half, nw) if high else (0, half - 1)
                k = min(max(k + shift, lo), hi)
            votes = np.zeros(nw, dtype=int)
            votes[rng.permutation(nw)[:k]] = 1
            base = (2 * batch + c) * nw
            for w in range(nw):
                widx = base + w
                predictions.append(WorkerPrediction(
                    worker_id=widx + 1, defendant_id=did, condition=cond,
                    prediction=int(votes[w]), worker_race=str(w_race[widx]),
                    worker_sex=str(w_sex[widx]), worker_age=int(w_age[widx]),
                ))
    return Dataset(tuple(defendants), compas, tuple(predictions))
