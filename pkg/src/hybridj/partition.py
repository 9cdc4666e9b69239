"""Agreement / correctness partition of (machine, human, ground truth) triples."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

from .errors import EmptyInput, MissingScore

# (machine_high, human_high, recidivated) -> case id
CASE_TABLE: dict[tuple[bool, bool, bool], int] = {
    (True, True, True): 1,
    (False, False, False): 2,
    (True, False, True): 3,
    (False, True, False): 4,
    (False, True, True): 5,
    (True, False, False): 6,
    (True, True, False): 7,
    (False, False, True): 8,
}
CASE_BITS: dict[int, tuple[bool, bool, bool]] = {v: k for k, v in CASE_TABLE.items()}

GROUPS: dict[str, tuple[int, int]] = {
    "both_correct": (1, 2),
    "machine_correct": (3, 4),
    "human_correct": (5, 6),
    "both_incorrect": (7, 8),
}
DISAGREEMENT_CASES = frozenset({3, 4, 5, 6})

PARTITION_HEADER = ["defendant_id", "machine_binary", "human_binary", "recidivated", "case_id"]


def assign_case(machine_binary: bool, human_binary: bool, recidivated: bool) -> int:
    """Return the case id (1-8) for one defendant."""
    return CASE_TABLE[(bool(machine_binary), bool(human_binary), bool(recidivated))]


@dataclass(frozen=True)
class PartitionSummary:
    counts: dict[int, int]
    group_shares: dict[str, float]

    @property
    def n(self) -> int:
        return sum(self.counts.values())

    def case_share(self, case_id: int) -> float:
        return self.counts[case_id] / self.n


def summarize_partition(cases: Iterable[int]) -> PartitionSummary:
    cases = list(cases)
    if not cases:
        raise EmptyInput("cannot summarize an empty partition")
    counts = {c: 0 for c in range(1, 9)}
    for c in cases:
        if c not in counts:
            raise ValueError(f"invalid case id {c!r}")
        counts[c] += 1
    n = len(cases)
    shares = {
        name: float(Fraction(counts[a] + counts[b], n)) for name, (a, b) in GROUPS.items()
    }
    return PartitionSummary(counts=counts, group_shares=shares)


def partition_cases(
    ids: Iterable[int],
    machine_binary: Mapping[int, bool],
    human_binary: Mapping[int, bool],
    labels: Mapping[int, bool],
) -> dict[int, int]:
    """Case id per defendant id. Raises MissingScore when a binarized score is absent."""
    out = {}
    for i in ids:
        if i not in machine_binary:
            raise MissingScore(i, "machine")
        if i not in human_binary:
            raise MissingScore(i, "human")
        out[i] = assign_case(machine_binary[i], human_binary[i], labels[i])
    return out


def disagreement_subset(dataset, machine_scores: Mapping, human_scores: Mapping) -> set[int]:
    """Ids whose machine and human binarized predictions differ (cases 3-6).

    ``machine_scores`` / ``human_scores`` map defendant id to either a boolean or
    any object with a ``binarized`` attribute (e.g. :class:`~hybridj.scoring.RiskScore`).
    """
    out = set()
    for rec in dataset.defendants:
        i = rec.id
        if i not in machine_scores:
            raise MissingScore(i, "machine")
        if i not in human_scores:
            raise MissingScore(i, "human")
        if _as_bool(machine_scores[i]) != _as_bool(human_scores[i]):
            out.add(i)
    return out


def _as_bool(v) -> bool:
    return bool(getattr(v, "binarized", v))


def write_partition_csv(path, rows: Iterable[tuple[int, bool, bool, bool, int]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PARTITION_HEADER)
        for did, m, h, y, c in rows:
            w.writerow([did, int(m), int(h), int(y), c])
