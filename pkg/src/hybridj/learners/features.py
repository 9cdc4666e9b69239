"""Mixed numeric / categorical feature tables and their one-hot encoding."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from ..errors import NonNumeric, SchemaMismatch

OTHER = "__other__"


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str  # "numeric" | "categorical"
    vocabulary: tuple = ()
    fill: float = 0.0  # imputation value for missing numerics

    def encoded_names(self) -> list[str]:
        if self.kind == "numeric":
            return [self.name]
        return [f"{self.name}={v}" for v in self.vocabulary]


def _is_number(v) -> bool:
    return isinstance(v, (bool, int, float, np.bool_, np.integer, np.floating))


class FeatureMatrix:
    """A table of named columns with a fixed one-hot encoding.

    Categorical vocabularies are taken in first-appearance order of the rows the
    matrix was built from. Use :meth:`transform` to encode new rows with the
    same layout; unseen categories map to ``"__other__"`` (an all-zero block if
    that value was never seen either). Missing numerics (None / NaN) are filled
    with the column mean of the building rows.
    """

    def __init__(self, columns: Mapping[str, Sequence], specs: Optional[Sequence[ColumnSpec]] = None):
        names = list(columns)
        lengths = {len(columns[n]) for n in names}
        if len(lengths) > 1:
            raise SchemaMismatch(f"columns have different lengths: {sorted(lengths)}")
        self.n_rows = lengths.pop() if lengths else 0
        if specs is None:
            specs = [self._infer_spec(n, columns[n]) for n in names]
        elif [s.name for s in specs] != names:
            raise SchemaMismatch(
                f"columns {names} do not match training columns {[s.name for s in specs]}"
            )
        self.specs = tuple(specs)
        self.columns = {n: list(columns[n]) for n in names}
        self.values = self._encode()

    @staticmethod
    def _infer_spec(name, values) -> ColumnSpec:
        if all(v is None or _is_number(v) for v in values):
            nums = [float(v) for v in values if v is not None and not math.isnan(float(v))]
            return ColumnSpec(name, "numeric", fill=float(np.mean(nums)) if nums else 0.0)
        vocab = []
        seen = set()
        for v in values:
            v = str(v)
            if v not in seen:
                seen.add(v)
                vocab.append(v)
        return ColumnSpec(name, "categorical", tuple(vocab))

    def _encode(self) -> np.ndarray:
        blocks = []
        for spec in self.specs:
            col = self.columns[spec.name]
            if spec.kind == "numeric":
                arr = np.array(
                    [spec.fill if v is None else float(v) for v in col], dtype=np.float64
                )
                arr[np.isnan(arr)] = spec.fill
                blocks.append(arr[:, None])
            else:
                index = {v: k for k, v in enumerate(spec.vocabulary)}
                block = np.zeros((self.n_rows, len(spec.vocabulary)), dtype=np.float64)
                for r, v in enumerate(col):
                    k = index.get(str(v), index.get(OTHER))
                    if k is not None:
                        block[r, k] = 1.0
                blocks.append(block)
        if not blocks:
            return np.zeros((self.n_rows, 0), dtype=np.float64)
        return np.hstack(blocks)

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def feature_names(self) -> list[str]:
        out = []
        for s in self.specs:
            out.extend(s.encoded_names())
        return out

    @property
    def column_names(self) -> list[str]:
        return [s.name for s in self.specs]

    def transform(self, columns: Mapping[str, Sequence]) -> "FeatureMatrix":
        return FeatureMatrix(columns, specs=self.specs)

    def take(self, rows) -> "FeatureMatrix":
        rows = list(rows)
        return FeatureMatrix(
            {n: [c[r] for r in rows] for n, c in self.columns.items()}, specs=self.specs
        )

    def __len__(self):
        return self.n_rows

    def __repr__(self):
        return f"FeatureMatrix({self.n_rows}x{self.n_cols}, columns={self.column_names})"


def as_array(X) -> tuple[np.ndarray, list[str]]:
    """Numeric matrix and column names from a FeatureMatrix or array-like."""
    if isinstance(X, FeatureMatrix):
        return X.values, X.feature_names
    arr = np.asarray(X)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.dtype == object or not np.issubdtype(arr.dtype, np.number) and arr.dtype != bool:
        raise NonNumeric("expected a numeric matrix")
    arr = arr.astype(np.float64)
    return arr, [f"x{j}" for j in range(arr.shape[1])]


def standardize(values: np.ndarray) -> np.ndarray:
    """Zero-mean, unit-variance columns; constant columns become zero."""
    values = np.asarray(values, dtype=np.float64)
    mu = values.mean(axis=0)
    sd = values.std(axis=0)
    sd[sd == 0] = 1.0
    return (values - mu) / sd
