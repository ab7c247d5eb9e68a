"""Datasets, time grids, step functions and feature perturbation primitives.

Everything downstream (models, metrics, explanations) is built from the
types in this module. All of them are immutable: arrays are copied on
construction and marked read-only, so values can be shared freely between
worker threads.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

NUMERIC = "numeric"
BINARY = "binary"
CATEGORICAL = "categorical-encoded"
FEATURE_KINDS = (NUMERIC, BINARY, CATEGORICAL)

_TRUE = {"1", "true", "1.0"}
_FALSE = {"0", "false", "0.0"}


class DatasetError(ValueError):
    """Base class for dataset construction and loading failures."""


class MissingColumnError(DatasetError):
    pass


class InvalidTimeError(DatasetError):
    pass


class InvalidEventError(DatasetError):
    pass


class EmptyDatasetError(DatasetError):
    pass


class MissingValueError(DatasetError):
    pass


class NoEventsError(DatasetError):
    """Raised when an operation needs at least one observed event."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Encoding metadata
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ColumnEncoding:
    """How one raw CSV column maps onto model features."""

    name: str
    kind: str
    levels: tuple[str, ...] = ()

    def feature_names(self) -> list[str]:
        if self.kind == CATEGORICAL:
            return [f"{self.name}={lvl}" for lvl in self.levels]
        return [self.name]


@dataclass(frozen=True)
class Encoding:
    """Column layout recorded at load time.

    Serialized next to exported models so that new CSVs are encoded the same
    way (same one-hot level order) at prediction and explanation time.
    """

    columns: tuple[ColumnEncoding, ...]
    time_column: str = "time"
    event_column: str = "event"

    def feature_names(self) -> list[str]:
        return [nm for col in self.columns for nm in col.feature_names()]

    def feature_kinds(self) -> list[str]:
        kinds = []
        for col in self.columns:
            kinds.extend([col.kind] * len(col.feature_names()))
        return kinds

    def categorical_blocks(self) -> list[list[int]]:
        """Feature indices of each one-hot block, in column order."""
        blocks, start = [], 0
        for col in self.columns:
            width = len(col.feature_names())
            if col.kind == CATEGORICAL:
                blocks.append(list(range(start, start + width)))
            start += width
        return blocks

    def to_dict(self) -> dict:
        return {
            "time_column": self.time_column,
            "event_column": self.event_column,
            "columns": [
                {"name": c.name, "kind": c.kind, "levels": list(c.levels)}
                for c in self.columns
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Encoding":
        cols = tuple(
            ColumnEncoding(c["name"], c["kind"], tuple(c.get("levels", ())))
            for c in d["columns"]
        )
        return cls(cols, d.get("time_column", "time"), d.get("event_column", "event"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# SurvivalDataset
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """Feature matrix with right-censored (time, event) outcomes.

    Parameters
    ----------
    features : array-like, shape (n, p)
    times : array-like, shape (n,)
        Event or censoring times; strictly positive and finite.
    events : array-like, shape (n,)
        True where the event was observed, False when right-censored.
    feature_names, feature_kinds : sequences of length p, optional
    encoding : Encoding, optional
        Raw-column layout; synthesized from names/kinds when omitted.
    """

    features: np.ndarray
    times: np.ndarray
    events: np.ndarray
    feature_names: tuple[str, ...] = ()
    feature_kinds: tuple[str, ...] = ()
    encoding: Encoding | None = field(default=None, repr=False)
    name: str = "dataset"

    def __post_init__(self):
        X = np.array(self.features, dtype=float, copy=True)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise DatasetError(f"features must be 2-D, got shape {X.shape}")
        n, p = X.shape
        if n < 1:
            raise EmptyDatasetError("dataset has no rows")
        if p < 1:
            raise DatasetError("dataset has no feature columns")
        if not np.all(np.isfinite(X)):
            raise MissingValueError("features contain missing or non-finite values")
        times = np.asarray(self.times, dtype=float).ravel()
        events = np.asarray(self.events).ravel().astype(bool)
        if times.shape[0] != n or events.shape[0] != n:
            raise DatasetError(
                f"outcome length mismatch: {n} rows, {times.shape[0]} times, "
                f"{events.shape[0]} events"
            )
        if not np.all(np.isfinite(times)):
            raise InvalidTimeError("times must be finite")
        if np.any(times <= 0):
            raise InvalidTimeError("times must be strictly positive")

        names = tuple(self.feature_names) or tuple(f"x{j}" for j in range(p))
        kinds = tuple(self.feature_kinds) or tuple(_infer_kind(X[:, j]) for j in range(p))
        if len(names) != p or len(kinds) != p:
            raise DatasetError(
                f"{p} feature columns but {len(names)} names and {len(kinds)} kinds"
            )
        bad = [k for k in kinds if k not in FEATURE_KINDS]
        if bad:
            raise DatasetError(f"unknown feature kind(s): {bad}")
        encoding = self.encoding
        if encoding is None:
            encoding = Encoding(tuple(ColumnEncoding(nm, k) for nm, k in zip(names, kinds)))

        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "times", _frozen(times))
        object.__setattr__(self, "events", _frozen(events, dtype=bool))
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "feature_kinds", kinds)
        object.__setattr__(self, "encoding", encoding)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def n_events(self) -> int:
        return int(self.events.sum())

    def require_events(self) -> None:
        if self.n_events == 0:
            raise NoEventsError("no events: every observation is censored")

    def feature_index(self, name: str | int) -> int:
        if isinstance(name, (int, np.integer)):
            j = int(name)
            if not 0 <= j < self.p:
                raise IndexError(f"feature index {j} out of range for p={self.p}")
            return j
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise KeyError(f"unknown feature {name!r}") from None

    def with_features(self, X: np.ndarray) -> "SurvivalDataset":
        """Same outcomes and metadata, new feature matrix."""
        return SurvivalDataset(
            X, self.times, self.events, self.feature_names, self.feature_kinds,
            self.encoding, self.name,
        )

    def subset(self, rows: Sequence[int] | np.ndarray) -> "SurvivalDataset":
        rows = np.asarray(rows)
        return SurvivalDataset(
            self.features[rows], self.times[rows], self.events[rows],
            self.feature_names, self.feature_kinds, self.encoding, self.name,
        )


def _infer_kind(col: np.ndarray) -> str:
    vals = np.unique(col)
    if vals.size <= 2 and np.all(np.isin(vals, (0.0, 1.0))):
        return BINARY
    return NUMERIC


def _parse_float(s: str) -> float | None:
    try:
        return float(s)
    except ValueError:
        return None


def _parse_event(s: str, row: int) -> bool:
    v = s.strip().lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise InvalidEventError(f"row {row}: event value {s!r} is not one of 0, 1, true, false")


def load_dataset(
    source,
    time_col: str = "time",
    event_col: str = "event",
    encoding: Encoding | None = None,
    name: str | None = None,
) -> SurvivalDataset:
    """Read a comma-separated table with a header row.

    ``source`` may be a path or an open text stream. Every column other
    than the two outcome columns becomes a feature: numeric columns are used
    as-is, text columns are one-hot encoded with levels in order of first
    appearance. Pass ``encoding`` to reuse the layout recorded for a fitted
    model instead of inferring a new one.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            text = fh.read()
        name = name or os.path.splitext(os.path.basename(os.fspath(source)))[0]
    else:
        text = source.read()
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise EmptyDatasetError("input has no header row") from None
    rows = [r for r in reader if any(cell.strip() for cell in r)]

    if encoding is not None:
        time_col, event_col = encoding.time_column, encoding.event_column
    missing = [c for c in (time_col, event_col) if c not in header]
    if missing:
        raise MissingColumnError(f"missing outcome column(s): {', '.join(missing)}")
    if not rows:
        raise EmptyDatasetError("input has a header but no data rows")

    cells: dict[str, list[str]] = {h: [] for h in header}
    for i, r in enumerate(rows, start=2):
        if len(r) != len(header):
            raise DatasetError(f"line {i}: expected {len(header)} fields, got {len(r)}")
        for h, v in zip(header, r):
            v = v.strip()
            if v == "" or v.lower() in ("na", "nan"):
                raise MissingValueError(f"line {i}: missing value in column {h!r}")
            cells[h].append(v)

    times = []
    for i, v in enumerate(cells[time_col], start=2):
        t = _parse_float(v)
        if t is None:
            raise InvalidTimeError(f"line {i}: time {v!r} is not numeric")
        if not math.isfinite(t) or t <= 0:
            raise InvalidTimeError(f"line {i}: time {v!r} must be positive and finite")
        times.append(t)
    events = [_parse_event(v, i) for i, v in enumerate(cells[event_col], start=2)]

    feature_cols = [h for h in header if h not in (time_col, event_col)]
    if encoding is None:
        encoding = Encoding(
            tuple(_infer_column(h, cells[h]) for h in feature_cols), time_col, event_col
        )
    else:
        absent = [c.name for c in encoding.columns if c.name not in cells]
        if absent:
            raise MissingColumnError(f"missing feature column(s): {', '.join(absent)}")

    blocks = [_encode_column(col, cells[col.name]) for col in encoding.columns]
    if not blocks:
        raise DatasetError("no feature columns besides the outcome columns")
    X = np.column_stack(blocks)
    return SurvivalDataset(
        X, times, events, encoding.feature_names(), encoding.feature_kinds(),
        encoding, name or "dataset",
    )


def _infer_column(name: str, values: list[str]) -> ColumnEncoding:
    parsed = [_parse_float(v) for v in values]
    if all(v is not None for v in parsed):
        return ColumnEncoding(name, _infer_kind(np.array(parsed)))
    levels = list(dict.fromkeys(values))
    return ColumnEncoding(name, CATEGORICAL, tuple(levels))


def _encode_column(col: ColumnEncoding, values: list[str]) -> np.ndarray:
    if col.kind != CATEGORICAL:
        out = np.empty(len(values))
        for i, v in enumerate(values):
            f = _parse_float(v)
            if f is None:
                raise DatasetError(f"column {col.name!r}: value {v!r} is not numeric")
            out[i] = f
        return out.reshape(-1, 1)
    index = {lvl: k for k, lvl in enumerate(col.levels)}
    out = np.zeros((len(values), len(col.levels)))
    for i, v in enumerate(values):
        if v not in index:
            raise DatasetError(f"column {col.name!r}: unseen level {v!r}")
        out[i, index[v]] = 1.0
    return out


def write_dataset(ds: SurvivalDataset, path, float_format: str = "%.17g") -> None:
    """Write features and outcomes as CSV (LF line endings, '.' decimals).

    One-hot blocks are written back as their original text column, so the
    file reloads with ``ds.encoding``.
    """
    enc = ds.encoding
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([c.name for c in enc.columns] + [enc.time_column, enc.event_column])
        for x, t, e in zip(ds.features, ds.times, ds.events):
            cells, k = [], 0
            for col in enc.columns:
                if col.kind == CATEGORICAL:
                    block = x[k:k + len(col.levels)]
                    cells.append(col.levels[int(np.argmax(block))])
                    k += len(col.levels)
                else:
                    cells.append(float_format % x[k])
                    k += 1
            w.writerow(cells + [float_format % t, int(e)])


# ---------------------------------------------------------------------------
# Time grids and step functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing, positive evaluation times t_1 < ... < t_m."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_1d(np.asarray(self.points, dtype=float)).ravel()
        if pts.size < 1:
            raise ValueError("time grid needs at least one point")
        if not np.all(np.isfinite(pts)) or np.any(pts <= 0):
            raise ValueError("time grid points must be positive and finite")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("time grid points must be strictly increasing")
        object.__setattr__(self, "points", _frozen(pts))

    def __len__(self) -> int:
        return self.points.size

    def __eq__(self, other) -> bool:
        return isinstance(other, TimeGrid) and np.array_equal(self.points, other.points)

    __hash__ = None


DEFAULT_GRID_CAP = 100


def make_time_grid(
    ds: SurvivalDataset,
    strategy: str = "event-times",
    m: int | None = None,
) -> TimeGrid:
    """Build an evaluation grid from the observed event times.

    ``event-times`` returns the sorted unique event times; if there are more
    than ``m`` of them (default 100) it falls back to ``m`` quantiles.
    ``quantiles`` returns the quantiles at probabilities (k - 0.5)/m,
    k = 1..m, of the event-time distribution, deduplicated.
    """
    ds.require_events()
    event_times = np.sort(ds.times[ds.events])
    if strategy == "event-times":
        cap = DEFAULT_GRID_CAP if m is None else m
        if cap < 1:
            raise ValueError("grid size must be >= 1")
        uniq = np.unique(event_times)
        if uniq.size <= cap:
            return TimeGrid(uniq)
        return _quantile_grid(event_times, cap)
    if strategy == "quantiles":
        if m is None or m < 1:
            raise ValueError("quantile grid needs m >= 1")
        return _quantile_grid(event_times, m)
    raise ValueError(f"unknown grid strategy {strategy!r}")


def _quantile_grid(event_times: np.ndarray, m: int) -> TimeGrid:
    probs = (np.arange(1, m + 1) - 0.5) / m
    return TimeGrid(np.unique(np.quantile(event_times, probs)))


@dataclass(frozen=True, eq=False)
class StepFunction:
    """Right-continuous piecewise-constant function of time.

    ``f(t) = values[k]`` for the last knot ``knots[k] <= t``, and
    ``value_before_first_knot`` for ``t < knots[0]``.
    """

    knots: np.ndarray
    values: np.ndarray
    value_before_first_knot: float = 1.0

    def __post_init__(self):
        knots = np.atleast_1d(np.asarray(self.knots, dtype=float)).ravel()
        values = np.atleast_1d(np.asarray(self.values, dtype=float)).ravel()
        if knots.shape != values.shape:
            raise ValueError("knots and values must have the same length")
        if np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        object.__setattr__(self, "knots", _frozen(knots))
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "value_before_first_knot", float(self.value_before_first_knot))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.knots, t, side="right") - 1
        padded = np.concatenate(([self.value_before_first_knot], self.values))
        out = padded[idx + 1]
        return out if out.ndim else float(out)

    def on_grid(self, grid: TimeGrid) -> np.ndarray:
        return np.asarray(self(grid.points), dtype=float)

    def is_survival(self, atol: float = 1e-12) -> bool:
        v = np.concatenate(([self.value_before_first_knot], self.values))
        return (
            abs(self.value_before_first_knot - 1.0) <= atol
            and bool(np.all(v >= -atol)) and bool(np.all(v <= 1 + atol))
            and bool(np.all(np.diff(v) <= atol))
        )

    def is_cumhazard(self, atol: float = 1e-12) -> bool:
        v = np.concatenate(([self.value_before_first_knot], self.values))
        return (
            abs(self.value_before_first_knot) <= atol
            and bool(np.all(v >= -atol)) and bool(np.all(np.diff(v) >= -atol))
        )

    def to_dict(self) -> dict:
        return {
            "knots": self.knots.tolist(),
            "values": self.values.tolist(),
            "value_before_first_knot": self.value_before_first_knot,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StepFunction":
        return cls(d["knots"], d["values"], d["value_before_first_knot"])


def eval_step(sf: StepFunction, t: float) -> float:
    return sf(float(t))


# ---------------------------------------------------------------------------
# Feature substitution and permutation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureGroup:
    name: str
    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise ValueError(f"feature group {self.name!r} is empty")
        if len(set(idx)) != len(idx):
            raise ValueError(f"feature group {self.name!r} repeats an index")
        object.__setattr__(self, "indices", idx)


def validate_groups(groups: Iterable[FeatureGroup], p: int) -> list[FeatureGroup]:
    """Check index bounds and pairwise disjointness."""
    groups = list(groups)
    seen: dict[int, str] = {}
    for g in groups:
        for j in g.indices:
            if not 0 <= j < p:
                raise IndexError(f"group {g.name!r}: feature index {j} out of range for p={p}")
            if j in seen:
                raise ValueError(
                    f"groups {seen[j]!r} and {g.name!r} overlap on feature index {j}"
                )
            seen[j] = g.name
    return groups


def replace_feature(x, j: int, z: float) -> np.ndarray:
    """Copy of observation ``x`` with coordinate ``j`` set to ``z``."""
    out = np.array(x, dtype=float, copy=True)
    if not 0 <= j < out.shape[-1]:
        raise IndexError(f"feature index {j} out of range for p={out.shape[-1]}")
    out[..., j] = z
    return out


def replace_feature_all(ds: SurvivalDataset, j: int, z: float) -> SurvivalDataset:
    return ds.with_features(replace_feature(ds.features, j, z))


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def permute_rows(X: np.ndarray, columns: Sequence[int], seed) -> np.ndarray:
    """Shuffle the rows of ``X[:, columns]`` jointly with one permutation."""
    rng = _as_rng(seed)
    perm = rng.permutation(X.shape[0])
    out = np.array(X, dtype=float, copy=True)
    cols = np.asarray(columns, dtype=int)
    out[:, cols] = X[perm][:, cols]
    return out


def permute_features(ds: SurvivalDataset, group: FeatureGroup, seed) -> SurvivalDataset:
    """Dataset with the group's columns shuffled together as row units.

    ``seed`` is anything :func:`numpy.random.default_rng` accepts, including a
    spawned :class:`numpy.random.SeedSequence`.
    """
    validate_groups([group], ds.p)
    return ds.with_features(permute_rows(ds.features, group.indices, seed))
