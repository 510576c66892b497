"""CSV datasets with per-column type inference."""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from ..ensemble import MISSING, FeatureCatalog, Instance
from ..errors import CatalogMismatchError, ParseError


@dataclass(frozen=True)
class Dataset:
    catalog: FeatureCatalog
    rows: tuple[tuple, ...]
    labels: tuple[float, ...] | None = None

    def __post_init__(self):
        rows = tuple(tuple(r) for r in self.rows)
        object.__setattr__(self, "rows", rows)
        if not rows:
            raise ParseError("dataset must contain at least one row")
        width = len(self.catalog)
        for i, r in enumerate(rows):
            if len(r) != width:
                raise ParseError(f"row {i} has {len(r)} values, catalog has {width}")
        if self.labels is not None:
            labels = tuple(float(v) for v in self.labels)
            if len(labels) != len(rows):
                raise ParseError(f"{len(rows)} rows but {len(labels)} labels")
            object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.rows)

    @classmethod
    def from_arrays(cls, X, y=None, names: Sequence[str] | None = None) -> Dataset:
        X = np.asarray(X, dtype=float)
        if names is None:
            names = [f"x{j}" for j in range(X.shape[1])]
        rows = [tuple(float(v) for v in row) for row in X]
        return cls(FeatureCatalog(names), tuple(rows), None if y is None else tuple(np.asarray(y, float)))

    @property
    def label_array(self) -> np.ndarray:
        if self.labels is None:
            raise ParseError("dataset has no labels")
        return np.asarray(self.labels, dtype=float)

    def has_binary_labels(self) -> bool:
        return self.labels is not None and all(v in (0.0, 1.0) for v in self.labels)

    def column(self, feature: int) -> list:
        return [r[feature] for r in self.rows]

    def numeric_matrix(self) -> np.ndarray:
        """Rows as a float matrix; raises ValueError on categorical or MISSING cells."""
        try:
            X = np.array(self.rows, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ValueError("dataset contains categorical or missing values") from exc
        if X.ndim != 2 or np.isnan(X).any():
            raise ValueError("dataset contains missing values")
        return X

    def aligned_to(self, catalog: FeatureCatalog) -> Dataset:
        """Reorder columns to match ``catalog``; extra columns are dropped."""
        if catalog == self.catalog:
            return self
        absent = [n for n in catalog.names if n not in self.catalog.index]
        if absent:
            raise CatalogMismatchError(f"dataset lacks model features: {absent}")
        cols = [self.catalog.index[n] for n in catalog.names]
        rows = tuple(tuple(r[c] for c in cols) for r in self.rows)
        return Dataset(catalog, rows, self.labels)

    def subset(self, indices: Sequence[int]) -> Dataset:
        labels = None if self.labels is None else tuple(self.labels[i] for i in indices)
        return Dataset(self.catalog, tuple(self.rows[i] for i in indices), labels)


def _as_number(cell: str) -> float | None:
    try:
        value = float(cell)
    except ValueError:
        return None
    return value


def load_csv(document: str, label_column: str | None, missing_token: str = "") -> Dataset:
    """Parse CSV text into a :class:`Dataset`.

    A column is numeric iff every non-missing cell parses as a float; otherwise
    all of its cells are kept as string tokens. ``label_column=None`` loads an
    unlabeled dataset.
    """
    try:
        records = list(csv.reader(io.StringIO(document)))
    except csv.Error as exc:
        raise ParseError(f"malformed CSV: {exc}") from exc
    records = [r for r in records if r]
    if not records:
        raise ParseError("CSV document is empty (header required)")
    header = [h.strip() for h in records[0]]
    body = [[c.strip() for c in r] for r in records[1:]]
    for lineno, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise ParseError(f"line {lineno}: expected {len(header)} fields, found {len(r)}")
    if not body:
        raise ParseError("CSV document has a header but no rows")

    if label_column is not None and label_column not in header:
        raise ParseError(f"label column {label_column!r} not found in header {header}")
    label_idx = header.index(label_column) if label_column is not None else None
    feature_cols = [j for j in range(len(header)) if j != label_idx]

    labels = None
    if label_idx is not None:
        labels = []
        for lineno, r in enumerate(body, start=2):
            value = _as_number(r[label_idx])
            if value is None or math.isnan(value):
                raise ParseError(f"line {lineno}: label {r[label_idx]!r} is not numeric")
            labels.append(value)

    columns = []
    for j in feature_cols:
        cells = [r[j] for r in body]
        parsed = [None if c == missing_token else _as_number(c) for c in cells]
        numeric = all(p is not None for p, c in zip(parsed, cells) if c != missing_token)
        if numeric:
            col = [MISSING if c == missing_token or math.isnan(p) else p for p, c in zip(parsed, cells)]
        else:
            col = [MISSING if c == missing_token else c for c in cells]
        columns.append(col)

    rows = tuple(zip(*columns)) if columns else tuple(() for _ in body)
    return Dataset(FeatureCatalog([header[j] for j in feature_cols]), rows, labels)


def dump_csv(catalog: FeatureCatalog, rows: Sequence[Instance], labels=None, label_column="y") -> str:
    """Inverse of :func:`load_csv` with an empty missing token."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = list(catalog.names) + ([label_column] if labels is not None else [])
    writer.writerow(header)
    for i, row in enumerate(rows):
        cells = ["" if v is MISSING else (repr(v) if isinstance(v, float) else v) for v in row]
        if labels is not None:
            cells.append(repr(float(labels[i])))
        writer.writerow(cells)
    return buf.getvalue()
