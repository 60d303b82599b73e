"""Cohort table loading and preprocessing.

The preprocessing chain mirrors a typical imaging-feature workflow: drop
features that are mostly missing, clamp outliers with the 1.5 x IQR rule,
impute what is left with column means and z-normalize every column.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

DEFAULT_MISSING_TOKENS = ("", "NA")


class DataError(ValueError):
    """Input data violates a loader or preprocessing precondition."""


@dataclass(frozen=True)
class DataMatrix:
    values: np.ndarray
    missing: np.ndarray
    subject_ids: tuple[str, ...]
    feature_names: tuple[str, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        missing = np.asarray(self.missing, dtype=bool)
        if values.ndim != 2:
            raise DataError("values must be a 2-D array")
        if missing.shape != values.shape:
            raise DataError("missing mask shape does not match values")
        n, p = values.shape
        if n < 1 or p < 1:
            raise DataError(f"need at least one subject and one feature, got {n}x{p}")
        if len(self.subject_ids) != n or len(self.feature_names) != p:
            raise DataError("label lengths do not match matrix shape")
        if len(set(self.subject_ids)) != n:
            raise DataError("subject ids are not unique")
        if len(set(self.feature_names)) != p:
            raise DataError("feature names are not unique")
        values = np.where(missing, np.nan, values)
        values.setflags(write=False)
        missing = missing.copy()
        missing.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing", missing)
        object.__setattr__(self, "subject_ids", tuple(self.subject_ids))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @classmethod
    def from_array(cls, values, subject_ids=None, feature_names=None) -> "DataMatrix":
        """Wrap a dense array; NaN cells become missing."""
        values = np.atleast_2d(np.asarray(values, dtype=float))
        n, p = values.shape
        if subject_ids is None:
            subject_ids = [f"s{i}" for i in range(n)]
        if feature_names is None:
            feature_names = [f"f{j}" for j in range(p)]
        return cls(values, np.isnan(values), tuple(subject_ids), tuple(feature_names))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def dense(self) -> np.ndarray:
        """Return the values as a writable array; raises if any cell is masked."""
        if self.missing.any():
            raise DataError(f"{int(self.missing.sum())} masked cells remain")
        return np.array(self.values)

    def select_features(self, keep: Sequence[int]) -> "DataMatrix":
        keep = list(keep)
        return DataMatrix(
            self.values[:, keep],
            self.missing[:, keep],
            self.subject_ids,
            tuple(self.feature_names[j] for j in keep),
        )


@dataclass
class PreprocessReport:
    dropped_features: dict[str, float] = field(default_factory=dict)
    winsorized_counts: dict[str, int] = field(default_factory=dict)
    column_means: list[float] = field(default_factory=list)
    column_stds: list[float] = field(default_factory=list)
    imputed_counts: dict[str, int] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def merge(self, other: "PreprocessReport") -> "PreprocessReport":
        out = PreprocessReport(
            dropped_features={**self.dropped_features, **other.dropped_features},
            winsorized_counts={**self.winsorized_counts, **other.winsorized_counts},
            column_means=other.column_means or self.column_means,
            column_stds=other.column_stds or self.column_stds,
            imputed_counts={**self.imputed_counts, **other.imputed_counts},
            warnings=self.warnings + other.warnings,
        )
        return out

    def to_dict(self) -> dict:
        return {
            "dropped_features": self.dropped_features,
            "winsorized_counts": self.winsorized_counts,
            "column_means": self.column_means,
            "column_stds": self.column_stds,
            "imputed_counts": self.imputed_counts,
            "warnings": self.warnings,
        }

    def to_text(self) -> str:
        lines = [f"dropped features: {len(self.dropped_features)}"]
        for name, frac in self.dropped_features.items():
            lines.append(f"  {name}: {frac:.2%} missing")
        clamped = {k: v for k, v in self.winsorized_counts.items() if v}
        lines.append(f"winsorized cells: {sum(clamped.values())} in {len(clamped)} features")
        for name, count in clamped.items():
            lines.append(f"  {name}: {count}")
        lines.append(f"imputed cells: {sum(self.imputed_counts.values())}")
        for w in self.warnings:
            lines.append(f"warning: {w}")
        return "\n".join(lines) + "\n"


def _parse_float(token: str) -> float:
    value = float(token)
    if math.isnan(value):
        raise ValueError(token)
    return value


def load_matrix(
    path,
    id_column: str,
    feature_columns: Sequence[str] | None = None,
    missing_tokens: Sequence[str] = DEFAULT_MISSING_TOKENS,
) -> DataMatrix:
    """Read a comma-separated subject-by-feature table.

    Every column other than ``id_column`` is a feature unless
    ``feature_columns`` narrows the selection. Cells equal to one of
    ``missing_tokens`` (after stripping whitespace) are masked.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    missing_set = set(missing_tokens)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if id_column not in header:
            raise DataError(f"{path}: id column {id_column!r} not in header")
        id_idx = header.index(id_column)
        if feature_columns is None:
            feature_columns = [h for i, h in enumerate(header) if i != id_idx]
        else:
            absent = [c for c in feature_columns if c not in header]
            if absent:
                raise DataError(f"{path}: feature columns not in header: {absent}")
        if not feature_columns:
            raise DataError(f"{path}: no feature columns")
        col_idx = [header.index(c) for c in feature_columns]

        ids, rows, masks = [], [], []
        seen = set()
        for lineno, record in enumerate(reader, start=2):
            if not record or all(not cell.strip() for cell in record):
                continue
            if len(record) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(record)}")
            sid = record[id_idx].strip()
            if sid in seen:
                raise DataError(f"{path}:{lineno}: duplicate subject id {sid!r}")
            seen.add(sid)
            row, mask = [], []
            for name, j in zip(feature_columns, col_idx):
                token = record[j].strip()
                if token in missing_set:
                    row.append(np.nan)
                    mask.append(True)
                    continue
                try:
                    row.append(_parse_float(token))
                except ValueError:
                    raise DataError(
                        f"{path}:{lineno}: non-numeric value {token!r} in column {name!r}"
                    ) from None
                mask.append(False)
            ids.append(sid)
            rows.append(row)
            masks.append(mask)
    if not ids:
        raise DataError(f"{path}: no data rows")
    return DataMatrix(np.array(rows, dtype=float), np.array(masks, dtype=bool), tuple(ids), tuple(feature_columns))


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _format_value(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def write_matrix(X: DataMatrix, path, id_column: str = "id", header_comment: str | None = None) -> None:
    """Write a DataMatrix back to CSV; masked cells become empty fields.

    ``header_comment`` is not written into the CSV (the loader does not skip
    comment lines); pass it through a sidecar instead.
    """
    lines = [",".join([id_column, *X.feature_names])]
    for sid, row in zip(X.subject_ids, X.values):
        lines.append(",".join([sid, *(_format_value(v) for v in row)]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_report(report: PreprocessReport, path) -> None:
    """Write ``<path>`` as plain text and ``<path>.json`` as key/value JSON."""
    path = Path(path)
    atomic_write_text(path, report.to_text())
    atomic_write_text(path.with_name(path.name + ".json"), json.dumps(report.to_dict(), indent=2))


def drop_sparse_features(X: DataMatrix, max_missing_fraction: float = 0.5) -> tuple[DataMatrix, PreprocessReport]:
    if not 0.0 <= max_missing_fraction <= 1.0:
        raise DataError("max_missing_fraction must lie in [0, 1]")
    frac = X.missing.mean(axis=0)
    keep = [j for j in range(X.shape[1]) if frac[j] <= max_missing_fraction]
    dropped = {X.feature_names[j]: float(frac[j]) for j in range(X.shape[1]) if frac[j] > max_missing_fraction}
    if not keep:
        raise DataError("every feature exceeds the missing-fraction threshold")
    return X.select_features(keep), PreprocessReport(dropped_features=dropped)


def quantile_type7(values: np.ndarray, q: float) -> float:
    """Linear interpolation between order statistics (R type 7)."""
    x = np.sort(np.asarray(values, dtype=float))
    h = (len(x) - 1) * q
    lo = math.floor(h)
    hi = min(lo + 1, len(x) - 1)
    return float(x[lo] + (h - lo) * (x[hi] - x[lo]))


def winsorize_iqr(X: DataMatrix, factor: float = 1.5) -> tuple[DataMatrix, PreprocessReport]:
    values = np.array(X.values)
    counts = {}
    for j, name in enumerate(X.feature_names):
        observed = ~X.missing[:, j]
        col = values[observed, j]
        if col.size == 0:
            raise DataError(f"feature {name!r} has no observed values")
        q1 = quantile_type7(col, 0.25)
        q3 = quantile_type7(col, 0.75)
        lo = q1 - factor * (q3 - q1)
        hi = q3 + factor * (q3 - q1)
        clamped = np.clip(col, lo, hi)
        counts[name] = int(np.count_nonzero(clamped != col))
        values[observed, j] = clamped
    return replace(X, values=values), PreprocessReport(winsorized_counts=counts)


def impute_mean(X: DataMatrix) -> tuple[DataMatrix, PreprocessReport]:
    """Fill masked cells with the mean of the observed cells in their column."""
    values = np.array(X.values)
    counts = {}
    for j, name in enumerate(X.feature_names):
        mask = X.missing[:, j]
        counts[name] = int(mask.sum())
        if mask.all():
            raise DataError(f"feature {name!r} has no observed values")
        if mask.any():
            values[mask, j] = values[~mask, j].mean()
    return DataMatrix(values, np.zeros_like(X.missing), X.subject_ids, X.feature_names), PreprocessReport(imputed_counts=counts)


def zscore(X: DataMatrix) -> tuple[DataMatrix, PreprocessReport]:
    values = np.array(X.values)
    means, stds, warnings = [], [], []
    for j, name in enumerate(X.feature_names):
        observed = ~X.missing[:, j]
        col = values[observed, j]
        mu = float(col.mean()) if col.size else 0.0
        centered = col - mu
        sd = float(np.sqrt(np.mean(centered**2))) if col.size else 0.0
        # spread below rounding noise of the mean counts as constant
        if sd <= 1e-12 * max(1.0, abs(mu)):
            values[observed, j] = 0.0
            warnings.append(f"feature {name!r} has zero variance; set to 0")
            sd = 0.0
        else:
            values[observed, j] = centered / sd
        means.append(mu)
        stds.append(sd)
    report = PreprocessReport(column_means=means, column_stds=stds, warnings=warnings)
    return replace(X, values=values), report


def preprocess(
    X: DataMatrix,
    max_missing_fraction: float = 0.5,
    iqr_factor: float = 1.5,
    impute: bool = True,
) -> tuple[DataMatrix, PreprocessReport]:
    """drop sparse features -> winsorize -> (impute) -> z-score."""
    X, report = drop_sparse_features(X, max_missing_fraction)
    X, r = winsorize_iqr(X, iqr_factor)
    report = report.merge(r)
    if impute:
        X, r = impute_mean(X)
        report = report.merge(r)
    X, r = zscore(X)
    return X, report.merge(r)
