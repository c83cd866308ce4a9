"""Sweep tables: column roles, CSV + manifest ingestion, cleaning and scaling."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, FormatError, RoleError


class ColumnRole(str, enum.Enum):
    PARAMETER = "parameter"
    INTERMEDIATE = "intermediate"
    OUTCOME = "outcome"
    IGNORE = "ignore"

    @property
    def tier(self) -> int:
        return {"parameter": 0, "intermediate": 1, "outcome": 2}.get(self.value, -1)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-labelled numeric table; NaN marks a missing cell until `preprocess`."""

    column_names: tuple[str, ...]
    roles: tuple[ColumnRole, ...]
    values: np.ndarray
    drop_log: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        names = tuple(self.column_names)
        roles = tuple(ColumnRole(r) for r in self.roles)
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise FormatError(f"duplicate column names: {', '.join(dup)}")
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim != 2 or values.shape[1] != len(names) or len(roles) != len(names):
            raise FormatError(
                f"shape {values.shape} does not match {len(names)} names / {len(roles)} roles"
            )
        values.setflags(write=False)
        object.__setattr__(self, "column_names", names)
        object.__setattr__(self, "roles", roles)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "drop_log", tuple(self.drop_log))

    @property
    def row_count(self) -> int:
        return self.values.shape[0]

    @property
    def col_count(self) -> int:
        return self.values.shape[1]

    def index(self, name: str) -> int:
        try:
            return self.column_names.index(name)
        except ValueError:
            raise DataError(f"unknown column '{name}'") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index(name)]

    def role(self, name: str) -> ColumnRole:
        return self.roles[self.index(name)]

    def names_with_role(self, role: ColumnRole | str) -> list[str]:
        role = ColumnRole(role)
        return [n for n, r in zip(self.column_names, self.roles) if r is role]

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        idx = [self.index(n) for n in names]
        return self.values[:, idx]

    def select(self, names: Sequence[str]) -> "Dataset":
        idx = [self.index(n) for n in names]
        return Dataset(
            tuple(self.column_names[i] for i in idx),
            tuple(self.roles[i] for i in idx),
            self.values[:, idx],
            self.drop_log,
        )

    def with_values(self, values: np.ndarray) -> "Dataset":
        return Dataset(self.column_names, self.roles, values, self.drop_log)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.column_names == other.column_names
            and self.roles == other.roles
            and self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    __hash__ = None


@dataclass(frozen=True)
class ScalingStats:
    column_names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray

    def scale(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.mean) / self.std

    def unscale(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=float) * self.std + self.mean

    def of(self, name: str) -> tuple[float, float]:
        i = self.column_names.index(name)
        return float(self.mean[i]), float(self.std[i])


# --- manifest -------------------------------------------------------------------


def read_manifest(path: str | Path) -> dict[str, ColumnRole]:
    """Parse a ``name,role`` manifest. ``#`` starts a comment."""
    roles: dict[str, ColumnRole] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2 or not parts[0]:
            raise FormatError(f"manifest line {lineno}: expected 'name,role', got {raw!r}")
        name, role = parts
        try:
            roles[name] = ColumnRole(role)
        except ValueError:
            raise FormatError(f"manifest line {lineno}: unknown role '{role}'") from None
    return roles


def write_manifest(path: str | Path, data: Dataset) -> None:
    lines = [f"{n},{r.value}" for n, r in zip(data.column_names, data.roles)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# --- CSV ------------------------------------------------------------------------

_MISSING = {"", "nan", "NaN", "NAN"}


def load_csv(path: str | Path, manifest: str | Path | dict[str, ColumnRole]) -> Dataset:
    roles = manifest if isinstance(manifest, dict) else read_manifest(manifest)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            parsed = []
            for col, cell in zip(header, row):
                cell = cell.strip()
                if cell in _MISSING:
                    parsed.append(math.nan)
                    continue
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise FormatError(
                        f"{path}:{lineno}: column '{col}': cannot parse {cell!r}"
                    ) from None
            rows.append(parsed)

    unknown = [h for h in header if h not in roles]
    if unknown:
        raise RoleError(f"columns without a manifest role: {', '.join(unknown)}")
    absent = [n for n in roles if n not in header]
    if absent:
        raise RoleError(f"manifest columns absent from CSV header: {', '.join(absent)}")

    values = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return Dataset(tuple(header), tuple(roles[h] for h in header), values)


def _fmt(x: float) -> str:
    return "NaN" if math.isnan(x) else repr(float(x))


def write_csv(path: str | Path, data: Dataset) -> None:
    """Write with shortest round-trip float repr so reloads are bit-exact."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(data.column_names)
        for row in data.values:
            writer.writerow([_fmt(x) for x in row])


# --- cleaning -------------------------------------------------------------------


def preprocess(data: Dataset, drop_constant: bool = True) -> Dataset:
    """Drop ignored columns, incomplete rows and (optionally) constant columns.

    A missing cell in any retained column drops its row. Dropped rows and
    columns are listed in the returned dataset's ``drop_log`` as
    ``dropped_row,<index>,<reason>`` / ``dropped_col,<name>,<reason>``.
    """
    log: list[str] = []
    keep_cols = []
    for i, (name, role) in enumerate(zip(data.column_names, data.roles)):
        if role is ColumnRole.IGNORE:
            log.append(f"dropped_col,{name},ignored")
        else:
            keep_cols.append(i)
    values = data.values[:, keep_cols]
    names = [data.column_names[i] for i in keep_cols]
    roles = [data.roles[i] for i in keep_cols]

    missing = np.isnan(values)
    bad_rows = np.flatnonzero(missing.any(axis=1))
    for r in bad_rows:
        cols = [names[j] for j in np.flatnonzero(missing[r])]
        log.append(f"dropped_row,{r},missing:{'|'.join(cols)}")
    values = values[~missing.any(axis=1)]
    if values.shape[0] == 0:
        raise DataError("empty dataset: every row has a missing cell")

    if drop_constant:
        keep = []
        for j, name in enumerate(names):
            if np.ptp(values[:, j]) == 0.0:
                log.append(f"dropped_col,{name},constant")
            else:
                keep.append(j)
        values = values[:, keep]
        names = [names[j] for j in keep]
        roles = [roles[j] for j in keep]

    if ColumnRole.OUTCOME not in roles:
        raise RoleError("no outcome column left after preprocessing")
    if ColumnRole.PARAMETER not in roles:
        raise RoleError("no parameter column left after preprocessing")
    if len(names) < 2:
        raise DataError("fewer than two columns left after preprocessing")
    return Dataset(tuple(names), tuple(roles), values, data.drop_log + tuple(log))


def standardize(data: Dataset) -> tuple[Dataset, ScalingStats]:
    """Centre and scale every column (population std, ddof=0)."""
    mean = data.values.mean(axis=0)
    std = data.values.std(axis=0)
    flat = [n for n, s in zip(data.column_names, std) if not s > 0]
    if flat:
        raise DataError(f"zero-variance columns reached standardize: {', '.join(flat)}")
    stats = ScalingStats(data.column_names, mean, std)
    return data.with_values(stats.scale(data.values)), stats


def dataset_from_columns(columns: dict[str, Iterable[float]], roles: dict[str, ColumnRole | str]) -> Dataset:
    names = tuple(columns)
    values = np.column_stack([np.asarray(list(columns[n]), dtype=float) for n in names])
    return Dataset(names, tuple(ColumnRole(roles[n]) for n in names), values)
