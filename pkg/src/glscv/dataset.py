"""Ingestion of longitudinal data and construction of regression problems.

Two routes lead to a :class:`RegressionProblem`:

* a long-format CSV (one row per subject/time observation) plus a
  :class:`ModelSpec` naming the numeric and categorical terms, or
* a precomputed, headerless design matrix exported from elsewhere together
  with the response vector and a ``subject_id,time`` groups file.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from ._layout import BlockLayout
from .errors import DataError

_MISSING = {"", "na", "nan", "null", "none"}


def _subject_key(s):
    # numeric-looking ids sort numerically, the rest lexically after them
    try:
        return (0, float(s), s)
    except ValueError:
        return (1, 0.0, s)


def _parse_float(text, what, line):
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"line {line}: non-numeric {what} {text!r}") from None
    if not math.isfinite(value):
        raise DataError(f"line {line}: non-finite {what} {text!r}")
    return value


@dataclass(frozen=True)
class LongDataset:
    """Long-format observations sorted by ``(subject, time)``.

    Covariates hold float arrays for numeric columns and object arrays of
    strings for categorical ones.
    """

    subject: np.ndarray
    time: np.ndarray
    response: np.ndarray
    covariates: dict = field(default_factory=dict)
    subject_name: str = "subject_id"
    time_name: str = "time"
    response_name: str = "response"

    def __post_init__(self):
        n = len(self.subject)
        if len(self.time) != n or len(self.response) != n:
            raise DataError("subject, time and response columns differ in length")
        for name, col in self.covariates.items():
            if len(col) != n:
                raise DataError(f"covariate {name!r} has {len(col)} values, expected {n}")
        seen = {}
        for i, (s, t) in enumerate(zip(self.subject, self.time)):
            if (s, t) in seen:
                raise DataError(f"duplicate observation for subject {s!r} at time {t}")
            seen[(s, t)] = i
        order = _canonical_order(self.subject, self.time)
        if not np.array_equal(order, np.arange(n)):
            raise DataError("rows are not sorted by (subject, time)")

    @property
    def n_rows(self):
        return len(self.subject)

    @property
    def n_subjects(self):
        return len(set(self.subject))

    def group_sizes(self):
        _, counts = np.unique(self.subject, return_counts=True)
        return counts

    def column(self, name):
        if name == self.time_name:
            return self.time
        if name == self.response_name:
            return self.response
        try:
            return self.covariates[name]
        except KeyError:
            raise DataError(f"unknown column {name!r}") from None

    def has_column(self, name):
        return name in (self.time_name, self.response_name) or name in self.covariates


def _canonical_order(subject, time):
    keys = [(_subject_key(s), float(t)) for s, t in zip(subject, time)]
    return np.array(sorted(range(len(keys)), key=keys.__getitem__), dtype=np.intp)


def _sorted_dataset(subject, time, response, covariates, names):
    order = _canonical_order(subject, time)
    return LongDataset(
        subject=np.asarray(subject, dtype=object)[order],
        time=np.asarray(time, dtype=float)[order],
        response=np.asarray(response, dtype=float)[order],
        covariates={k: v[order] for k, v in covariates.items()},
        **names,
    )


def load_long_csv(path, schema):
    """Read a long-format CSV into a :class:`LongDataset`.

    ``schema`` maps the roles ``subject``, ``time`` and ``response`` to
    column names; an optional ``covariates`` entry restricts which of the
    remaining columns are kept (default: all of them).  Rows with any
    missing field are rejected.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    try:
        roles = {r: schema[r] for r in ("subject", "time", "response")}
    except KeyError as exc:
        raise DataError(f"schema lacks the {exc.args[0]!r} role") from None

    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        for role, name in roles.items():
            if name not in header:
                raise DataError(f"{path}: missing {role} column {name!r}")
        wanted = schema.get("covariates")
        if wanted is None:
            wanted = [h for h in header if h not in roles.values()]
        for name in wanted:
            if name not in header:
                raise DataError(f"{path}: unknown column {name!r}")
        pos = {h: k for k, h in enumerate(header)}

        subject, time, response = [], [], []
        raw = {name: [] for name in wanted}
        first_line = {}
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"line {line}: expected {len(header)} fields, got {len(row)}")
            used = list(roles.values()) + list(wanted)
            for name in used:
                if row[pos[name]].strip().lower() in _MISSING:
                    raise DataError(f"line {line}: missing value in column {name!r}")
            s = row[pos[roles["subject"]]].strip()
            t = _parse_float(row[pos[roles["time"]]], "time", line)
            if t < 0:
                raise DataError(f"line {line}: negative time {t}")
            y = _parse_float(row[pos[roles["response"]]], "response", line)
            if (s, t) in first_line:
                raise DataError(
                    f"line {line}: duplicate observation (subject {s!r}, time {t:g}),"
                    f" first seen on line {first_line[(s, t)]}"
                )
            first_line[(s, t)] = line
            subject.append(s)
            time.append(t)
            response.append(y)
            for name in wanted:
                raw[name].append(row[pos[name]].strip())

    covariates = {}
    for name, values in raw.items():
        try:
            covariates[name] = np.array([float(v) for v in values], dtype=float)
        except ValueError:
            covariates[name] = np.array(values, dtype=object)
    names = dict(subject_name=roles["subject"], time_name=roles["time"],
                 response_name=roles["response"])
    return _sorted_dataset(subject, time, response, covariates, names)


def write_long_csv(data, path):
    """Write ``data`` so that :func:`load_long_csv` reads it back unchanged."""
    names = [data.subject_name, data.time_name, data.response_name, *data.covariates]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(data.n_rows):
            row = [data.subject[i], repr(float(data.time[i])), repr(float(data.response[i]))]
            for col in data.covariates.values():
                v = col[i]
                row.append(repr(float(v)) if col.dtype.kind == "f" else v)
            w.writerow(row)


@dataclass(frozen=True)
class ModelSpec:
    """Which dataset columns enter the design matrix and how.

    ``categorical_terms`` is a list of ``(column, reference_level)`` pairs;
    each categorical column contributes one dummy column per non-reference
    level.
    """

    response: str | None = None
    numeric_terms: tuple = ()
    categorical_terms: tuple = ()
    intercept: bool = True

    def validate(self, data):
        if self.response is not None and not data.has_column(self.response):
            raise DataError(f"unknown column {self.response!r}")
        for name in self.numeric_terms:
            col = data.column(name)
            if col.dtype.kind != "f":
                raise DataError(f"column {name!r} is not numeric")
        for name, ref in self.categorical_terms:
            levels = {_level_str(v) for v in data.column(name)}
            if _level_str(ref) not in levels:
                raise DataError(f"unknown level {ref!r} for column {name!r}")
        if not self.intercept and not self.numeric_terms and not self.categorical_terms:
            raise DataError("model has no terms")


def _levels(values):
    return sorted({str(v) for v in values}, key=_subject_key)


def _level_str(v):
    # numeric covariates used as categorical: 5000.0 and "5000" should match
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return str(v)


def build_design(data, spec):
    """Assemble ``Y`` and ``X`` from a long dataset according to ``spec``."""
    spec.validate(data)
    n = data.n_rows
    columns, names = [], []
    if spec.intercept:
        columns.append(np.ones(n))
        names.append("(Intercept)")
    for name in spec.numeric_terms:
        columns.append(np.asarray(data.column(name), dtype=float))
        names.append(name)
    for name, ref in spec.categorical_terms:
        values = np.array([_level_str(v) for v in data.column(name)], dtype=object)
        ref = _level_str(ref)
        if ref not in set(values):
            raise DataError(f"unknown level {ref!r} for column {name!r}")
        for level in _levels(values):
            if level == ref:
                continue
            columns.append((values == level).astype(float))
            names.append(f"{name}[{level}]")
    response = spec.response or data.response_name
    Y = np.asarray(data.column(response), dtype=float)
    return RegressionProblem(
        Y=Y,
        X=np.column_stack(columns),
        group_ids=np.asarray(data.subject, dtype=object),
        times=np.asarray(data.time, dtype=float),
        column_names=tuple(names),
    )


def _read_numeric_matrix(path):
    rows = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for k, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            rows.append([_parse_float(c, "entry", f"{k} of {path}") for c in row])
    if not rows:
        raise DataError(f"{path}: empty file")
    width = len(rows[0])
    for k, r in enumerate(rows, start=1):
        if len(r) != width:
            raise DataError(f"{path}: row {k} has {len(r)} entries, expected {width}")
    return np.array(rows, dtype=float)


def load_design_csv(x_path, y_path, groups_path):
    """Load a precomputed design: headerless ``X``, response ``Y`` and groups.

    The groups file carries ``subject_id,time`` per observation in the same
    row order as ``X``; a header line is optional.
    """
    for p in (x_path, y_path, groups_path):
        if not Path(p).exists():
            raise DataError(f"{p}: no such file")
    X = _read_numeric_matrix(x_path)
    Y = _read_numeric_matrix(y_path)
    if Y.shape[1] != 1:
        raise DataError(f"{y_path}: expected a single column, got {Y.shape[1]}")
    Y = Y[:, 0]

    ids, times = [], []
    first = True
    with Path(groups_path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 2:
                raise DataError(f"line {reader.line_num}: groups file needs subject_id,time")
            if first:
                first = False
                try:
                    float(row[1])
                except ValueError:
                    continue  # header
            ids.append(row[0].strip())
            times.append(_parse_float(row[1], "time", reader.line_num))

    if not (len(X) == len(Y) == len(ids)):
        raise DataError(
            f"dimension mismatch: X has {len(X)} rows, Y has {len(Y)}, groups has {len(ids)}"
        )
    return RegressionProblem(
        Y=Y,
        X=X,
        group_ids=np.asarray(ids, dtype=object),
        times=np.asarray(times, dtype=float),
        column_names=tuple(f"x{j}" for j in range(X.shape[1])),
    )


def row_order(groups, times):
    """Permutation sorting rows by group (first appearance), then time."""
    first = {}
    for g in groups:
        first.setdefault(g, len(first))
    rank = np.array([first[g] for g in groups], dtype=np.intp)
    return np.lexsort((np.asarray(times, dtype=float), rank))


@dataclass(eq=False)
class RegressionProblem:
    """Response, design matrix and contiguous subject blocks.

    ``positions`` records each observation's index within its subject in the
    original data; AR(1) lags are measured in these positions, so deleting
    rows does not shift the lags of the rows that remain.
    """

    Y: np.ndarray
    X: np.ndarray
    group_ids: np.ndarray
    times: np.ndarray
    column_names: tuple = ()
    positions: np.ndarray | None = None

    def __post_init__(self):
        self.Y = np.asarray(self.Y, dtype=float).ravel()
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        self.group_ids = np.asarray(self.group_ids, dtype=object)
        self.times = np.asarray(self.times, dtype=float)
        n, p = self.X.shape
        if len(self.Y) != n or len(self.group_ids) != n or len(self.times) != n:
            raise DataError(
                f"dimension mismatch: X has {n} rows, Y has {len(self.Y)},"
                f" groups {len(self.group_ids)}, times {len(self.times)}"
            )
        if not (n > p >= 1):
            raise DataError(f"need n > p >= 1, got n={n}, p={p}")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.Y))):
            raise DataError("X and Y must be finite")
        if not self.column_names:
            self.column_names = tuple(f"x{j}" for j in range(p))
        if len(self.column_names) != p:
            raise DataError("column_names length does not match X")

        change = np.ones(n, dtype=bool)
        change[1:] = self.group_ids[1:] != self.group_ids[:-1]
        starts = np.flatnonzero(change)
        heads = self.group_ids[starts]
        if len(set(heads)) != len(heads):
            raise DataError("group blocks are not contiguous")
        sizes = np.diff(np.append(starts, n))
        self._sizes = sizes
        within = ~change
        if np.any(np.diff(self.times)[within[1:]] <= 0):
            bad = np.flatnonzero((np.diff(self.times) <= 0) & within[1:])[0] + 1
            raise DataError(
                f"times not strictly increasing within group {self.group_ids[bad]!r}"
                f" (observation {bad})"
            )
        if self.positions is None:
            self.positions = self.layout.local.astype(float)
        else:
            self.positions = np.asarray(self.positions, dtype=float)

    @classmethod
    def from_arrays(cls, X, y, groups=None, times=None, column_names=()):
        """Build a problem from arrays, sorting rows by (group, time).

        Groups keep their order of first appearance.  Without ``groups``
        all rows form one series; without ``times`` the row order is used.
        """
        X = np.asarray(X, dtype=float)
        n = len(X)
        groups = np.zeros(n, dtype=object) if groups is None else np.asarray(groups, dtype=object)
        times = np.arange(n, dtype=float) if times is None else np.asarray(times, dtype=float)
        if len(groups) != n or len(times) != n:
            raise DataError("groups/times length does not match X")
        order = row_order(groups, times)
        return cls(
            Y=np.asarray(y, dtype=float).ravel()[order],
            X=X[order],
            group_ids=groups[order],
            times=times[order],
            column_names=tuple(column_names),
        )

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @cached_property
    def layout(self):
        return BlockLayout(self._sizes)

    def group_slices(self):
        return self.layout.slices()

    def group_indices(self):
        return [np.arange(s.start, s.stop) for s in self.group_slices()]

    def subset(self, keep):
        """Problem restricted to the rows ``keep`` (sorted, original order kept)."""
        keep = np.unique(np.asarray(keep, dtype=np.intp))
        return RegressionProblem(
            Y=self.Y[keep],
            X=self.X[keep],
            group_ids=self.group_ids[keep],
            times=self.times[keep],
            column_names=self.column_names,
            positions=self.positions[keep],
        )

    def without(self, M):
        keep = np.setdiff1d(np.arange(self.n), np.asarray(M, dtype=np.intp))
        return self.subset(keep)

    def with_response(self, Y):
        return RegressionProblem(
            Y=Y, X=self.X, group_ids=self.group_ids, times=self.times,
            column_names=self.column_names, positions=self.positions,
        )

    def __repr__(self):
        return f"RegressionProblem(n={self.n}, p={self.p}, groups={self.layout.n_blocks})"
