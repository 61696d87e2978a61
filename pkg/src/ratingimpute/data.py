"""Rating-matrix data model, CSV ingestion, scaling and rounding.

Missing ratings are stored as NaN inside a float array; every other entry is
an observed rating. Matrices are immutable once built.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import DegenerateColumnError, EmptyDataError, ParseError

DEFAULT_MISSING_TOKENS = frozenset({"", "NA", "NaN", "null"})


def _readonly(arr):
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RatingMatrix:
    """An ``m x n`` grid of ordinal ratings with missing entries.

    Rows are subjects, columns are rating providers. ``values`` holds NaN
    wherever a rating is missing.
    """

    values: np.ndarray
    row_labels: tuple = ()
    col_labels: tuple = ()
    integer_mode: bool = True

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError(f"rating matrix must be 2-D, got shape {values.shape}")
        if np.isinf(values).any():
            raise ValueError("observed ratings must be finite")
        observed = ~np.isnan(values)
        if self.integer_mode and not np.array_equal(
                values[observed], round_half_away(values[observed])):
            raise ValueError("integer mode requires integral observed ratings")
        m, n = values.shape
        rows = tuple(str(r) for r in self.row_labels) or tuple(f"s{i + 1}" for i in range(m))
        cols = tuple(str(c) for c in self.col_labels) or tuple(f"rp{j + 1}" for j in range(n))
        if len(rows) != m or len(cols) != n:
            raise ValueError("label counts do not match matrix shape")
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "row_labels", rows)
        object.__setattr__(self, "col_labels", cols)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence], **kwargs) -> "RatingMatrix":
        """Build from nested lists where ``None`` marks a missing rating."""
        arr = np.array([[np.nan if v is None else float(v) for v in row] for row in rows])
        return cls(arr, **kwargs)

    @property
    def shape(self):
        return self.values.shape

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def observed(self) -> np.ndarray:
        return ~np.isnan(self.values)

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.values)

    @property
    def n_missing(self) -> int:
        return int(self.missing.sum())

    def is_complete(self) -> bool:
        return not self.missing.any()

    def with_values(self, values, integer_mode=None) -> "RatingMatrix":
        mode = self.integer_mode if integer_mode is None else integer_mode
        return RatingMatrix(values, self.row_labels, self.col_labels, mode)

    def take(self, rows=None, cols=None) -> "RatingMatrix":
        """Sub-matrix restricted to the given row and column indices."""
        rows = np.arange(self.m) if rows is None else np.asarray(rows, dtype=int)
        cols = np.arange(self.n) if cols is None else np.asarray(cols, dtype=int)
        return RatingMatrix(self.values[np.ix_(rows, cols)],
                            tuple(self.row_labels[i] for i in rows),
                            tuple(self.col_labels[j] for j in cols),
                            self.integer_mode)

    def to_dict(self) -> dict:
        vals = [[None if math.isnan(v) else (int(v) if self.integer_mode else float(v))
                 for v in row] for row in self.values.tolist()]
        return {"row_labels": list(self.row_labels), "col_labels": list(self.col_labels),
                "integer_mode": self.integer_mode, "values": vals}

    @classmethod
    def from_dict(cls, d: dict) -> "RatingMatrix":
        return cls.from_rows(d["values"], row_labels=d.get("row_labels", ()),
                             col_labels=d.get("col_labels", ()),
                             integer_mode=d.get("integer_mode", True))

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def __eq__(self, other):
        if not isinstance(other, RatingMatrix):
            return NotImplemented
        return (self.row_labels == other.row_labels and self.col_labels == other.col_labels
                and self.integer_mode == other.integer_mode
                and np.array_equal(self.values, other.values, equal_nan=True))

    __hash__ = None


@dataclass(frozen=True)
class ColumnScale:
    """Observed minimum ``lower``, maximum ``upper`` per column."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower, upper = _readonly(self.lower), _readonly(self.upper)
        if lower.shape != upper.shape or np.any(lower > upper):
            raise ValueError("column scale requires lower <= upper for every column")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def categories(self) -> np.ndarray:
        """Category count ``upper - lower + 1`` per column."""
        return self.upper - self.lower + 1.0

    def take(self, cols) -> "ColumnScale":
        cols = np.asarray(cols, dtype=int)
        return ColumnScale(self.lower[cols], self.upper[cols])


@dataclass(frozen=True)
class MissingIndex:
    """Row-major ordered list of missing cells with a one-dimensional index."""

    rows: np.ndarray
    cols: np.ndarray
    _lookup: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_matrix(cls, M: RatingMatrix) -> "MissingIndex":
        rows, cols = np.nonzero(M.missing)  # nonzero is row-major already
        return cls.from_entries(list(zip(rows.tolist(), cols.tolist())))

    @classmethod
    def from_entries(cls, entries: Iterable) -> "MissingIndex":
        entries = sorted({(int(i), int(j)) for i, j in entries})
        rows = np.array([e[0] for e in entries], dtype=int)
        cols = np.array([e[1] for e in entries], dtype=int)
        rows.setflags(write=False)
        cols.setflags(write=False)
        return cls(rows, cols, {e: q for q, e in enumerate(entries)})

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(zip(self.rows.tolist(), self.cols.tolist()))

    def entry(self, q: int) -> tuple:
        return int(self.rows[q]), int(self.cols[q])

    def position(self, i: int, j: int) -> int:
        return self._lookup[(i, j)]


@dataclass(frozen=True)
class ConversionSpec:
    """How continuous scores are binned into 1-5 ratings.

    ``fixed-quantile`` places the four cut points at the given quantile
    fractions of the scores. ``equal-width`` splits ``bounds`` (or, if unset,
    the range between the given percentiles) into five equal bins.
    """

    mode: str = "equal-width"
    cutoffs: tuple = (0.1, 0.35, 0.65, 0.9)
    clip_percentiles: tuple = (1.0, 99.0)
    bounds: tuple | None = None

    def __post_init__(self):
        if self.mode not in ("fixed-quantile", "equal-width"):
            raise ValueError(f"unknown conversion mode {self.mode!r}")
        d = self.cutoffs
        if len(d) != 4 or not (0 < d[0] < d[1] < d[2] < d[3] < 1):
            raise ValueError("cutoffs must satisfy 0 < d1 < d2 < d3 < d4 < 1")
        lo, hi = self.clip_percentiles
        if not (0 <= lo < hi <= 100):
            raise ValueError("clip percentiles must satisfy 0 <= low < high <= 100")
        if self.bounds is not None and not self.bounds[0] < self.bounds[1]:
            raise ValueError("bounds must satisfy low < high")


def round_half_away(x):
    """Round to nearest integer, ties away from zero."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def column_scales(M: RatingMatrix) -> ColumnScale:
    observed = M.observed
    empty = np.nonzero(~observed.any(axis=0))[0]
    if len(empty):
        raise DegenerateColumnError(empty.tolist())
    return ColumnScale(np.nanmin(M.values, axis=0), np.nanmax(M.values, axis=0))


def normalize(M: RatingMatrix, scale: ColumnScale) -> RatingMatrix:
    """Divide every column by its category count."""
    return M.with_values(M.values / scale.categories, integer_mode=False)


def denormalize(M: RatingMatrix, scale: ColumnScale, integer_mode=True) -> RatingMatrix:
    values = M.values * scale.categories
    if integer_mode:
        values = np.where(np.isnan(values), np.nan, round_half_away(values))
    return M.with_values(values, integer_mode=integer_mode)


def round_clamp(value, scale: ColumnScale, col):
    """Round ``value`` and clamp it into column ``col``'s observed range.

    Works element-wise when ``value`` and ``col`` are arrays.
    """
    col = np.asarray(col, dtype=int)
    out = np.minimum(scale.upper[col], np.maximum(scale.lower[col], round_half_away(value)))
    return float(out) if out.ndim == 0 else out


def convert_scores(scores, spec: ConversionSpec = ConversionSpec()) -> np.ndarray:
    """Bin continuous scores into integer ratings 1..5 (5 best)."""
    s = np.asarray(scores, dtype=float)
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    if spec.mode == "fixed-quantile":
        if s.size < 1:
            raise ValueError("fixed-quantile conversion needs at least one score")
        cuts = np.quantile(s, spec.cutoffs)
    else:
        if spec.bounds is not None:
            lo, hi = spec.bounds
        else:
            if s.size < 5:
                raise ValueError("equal-width conversion needs at least five scores")
            lo, hi = np.percentile(s, spec.clip_percentiles)
        if hi <= lo:
            warnings.warn("all scores identical; assigning the middle rating 3", stacklevel=2)
            return np.full(s.shape, 3, dtype=int)
        width = (hi - lo) / 5.0
        cuts = lo + width * np.arange(1, 5)
    # rating = 1 + number of cut points at or below the score
    return 1 + np.searchsorted(cuts, s, side="right").astype(int)


def load_csv(path, missing_tokens=DEFAULT_MISSING_TOKENS, integer_mode=True):
    """Read a ratings CSV.

    The header names the columns; the first column holds subject ids. Rows
    with no observed rating are dropped.

    Returns
    -------
    (RatingMatrix, int)
        The matrix and the number of dropped rows.
    """
    tokens = {t.strip() for t in missing_tokens}
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataError(f"{path} is empty") from None
        except csv.Error as exc:
            raise ParseError(str(exc), row=1) from exc
        if len(header) < 2:
            raise ParseError("header needs a subject id column and at least one rating column", row=1)
        cols = [h.strip() for h in header[1:]]
        labels, data, dropped = [], [], 0
        try:
            for line_no, record in enumerate(reader, start=2):
                if not record or all(not c.strip() for c in record):
                    continue
                if len(record) != len(header):
                    raise ParseError(f"expected {len(header)} fields, found {len(record)}", row=line_no)
                row = []
                for cell in record[1:]:
                    cell = cell.strip()
                    if cell in tokens:
                        row.append(np.nan)
                        continue
                    try:
                        v = float(cell)
                    except ValueError:
                        raise ParseError(f"non-numeric rating {cell!r}", row=line_no) from None
                    if not math.isfinite(v):
                        raise ParseError(f"non-finite rating {cell!r}", row=line_no)
                    if integer_mode and v != round_half_away(v):
                        raise ParseError(f"non-integer rating {cell!r} in integer mode", row=line_no)
                    row.append(v)
                if all(math.isnan(v) for v in row):
                    dropped += 1
                    continue
                labels.append(record[0].strip())
                data.append(row)
        except csv.Error as exc:
            raise ParseError(str(exc), row=reader.line_num) from exc
    if not data:
        raise EmptyDataError(f"{path} has no rows with an observed rating")
    return RatingMatrix(np.array(data), tuple(labels), tuple(cols), integer_mode), dropped


def format_value(v, integer_mode=True, missing_token="NA"):
    if math.isnan(v):
        return missing_token
    return str(int(v)) if integer_mode else repr(float(v))


def save_csv(M: RatingMatrix, path, missing_token="NA", id_header="subject"):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([id_header, *M.col_labels])
        for label, row in zip(M.row_labels, M.values.tolist()):
            writer.writerow([label, *(format_value(v, M.integer_mode, missing_token) for v in row)])


def summarize(M: RatingMatrix) -> dict:
    """Table-style summary: size, column missing rates and row coverage."""
    miss = M.missing.mean(axis=0)
    per_row = M.observed.sum(axis=1)
    return {
        "rows": M.m,
        "cols": M.n,
        "column_missing_rate": dict(zip(M.col_labels, miss.tolist())),
        "missing_rate_avg": float(miss.mean()),
        "missing_rate_median": float(np.median(miss)),
        "missing_rate_min": float(miss.min()),
        "missing_rate_max": float(miss.max()),
        "rows_rated_by_one": float(np.mean(per_row == 1)),
        "rows_rated_by_all": float(np.mean(per_row == M.n)),
    }
