"""CSV ingestion for user-supplied observational tables."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import SchemaError
from .scm import Dataset

__all__ = ["ColumnMapping", "load_tabular_dataset"]

_MISSING = {"", "na", "n/a", "nan", "null", "none", "."}


@dataclass(frozen=True)
class ColumnMapping:
    treatment: str
    outcome: str
    covariates: tuple
    treatment_threshold: float | None = None
    threshold_op: str = "lt"  # treated iff value <op> threshold

    def __post_init__(self):
        if self.threshold_op not in ("lt", "le", "gt", "ge"):
            raise SchemaError(f"unknown threshold_op {self.threshold_op!r}")
        if not self.covariates:
            raise SchemaError("at least one covariate column is required")


_OPS = {
    "lt": np.less,
    "le": np.less_equal,
    "gt": np.greater,
    "ge": np.greater_equal,
}


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file or missing header")
        header = [h.strip() for h in reader.fieldnames]
        rows = [{k.strip(): (v or "").strip() for k, v in row.items()}
                for row in reader]
    return header, rows


def _is_missing(value: str) -> bool:
    return value.lower() in _MISSING


def _encode_column(name: str, values: list):
    """Numeric column as floats; otherwise one-hot columns (sorted levels)."""
    try:
        return [(name, np.array([float(v) for v in values]))], None
    except ValueError:
        pass
    levels = sorted(set(values))
    if len(levels) > 64:
        raise SchemaError(f"column {name!r} is non-numeric with {len(levels)} "
                          "levels; refusing to one-hot encode")
    # drop the first level: k-1 indicators keep the design full rank
    cols = [(f"{name}={lev}",
             np.array([1.0 if v == lev else 0.0 for v in values]))
            for lev in levels[1:]]
    return cols, {"column": name, "levels": levels, "baseline": levels[0]}


@dataclass
class LoadInfo:
    rows_total: int = 0
    rows_dropped: int = 0
    one_hot: list = field(default_factory=list)


def load_tabular_dataset(path, mapping: ColumnMapping):
    """Read a CSV into a Dataset (no ground truth).

    Rows with missing values in any mapped column are dropped (counts in the
    returned LoadInfo).  Non-numeric covariates are one-hot encoded.  The
    treatment is optionally binarized against `mapping.treatment_threshold`.
    """
    header, rows = _read_rows(path)
    needed = [mapping.treatment, mapping.outcome, *mapping.covariates]
    for col in needed:
        if col not in header:
            raise SchemaError(f"{path}: missing column {col!r}")

    kept = [r for r in rows if not any(_is_missing(r[c]) for c in needed)]
    info = LoadInfo(rows_total=len(rows), rows_dropped=len(rows) - len(kept))
    if len(kept) < 3:
        raise SchemaError(f"{path}: only {len(kept)} usable rows")

    def numeric(col):
        try:
            return np.array([float(r[col]) for r in kept])
        except ValueError as exc:
            raise SchemaError(f"{path}: column {col!r} is not numeric: {exc}")

    w = numeric(mapping.treatment)
    if mapping.treatment_threshold is not None:
        w = _OPS[mapping.threshold_op](w, mapping.treatment_threshold)
        w = w.astype(np.float64)
    if not np.isin(w, (0.0, 1.0)).all():
        raise SchemaError(f"{path}: treatment column {mapping.treatment!r} is "
                          "not binary after thresholding")
    y = numeric(mapping.outcome)

    names, arrays = [], []
    for col in mapping.covariates:
        encoded, one_hot = _encode_column(col, [r[col] for r in kept])
        if one_hot is not None:
            info.one_hot.append(one_hot)
        for name, arr in encoded:
            names.append(name)
            arrays.append(arr)
    x = np.column_stack(arrays)
    return Dataset(x=x, w=w, y=y, columns=names), info
