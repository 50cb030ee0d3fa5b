"""Column-labelled numeric tables and CSV ingestion."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError, EmptyFile, MissingTarget, NonNumericCell, SchemaMismatch

KINDS = ("continuous", "binary", "excluded")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix with named columns, an optional target and column kinds.

    ``kinds`` maps every feature to ``continuous`` (eligible for powers and
    smooths), ``binary`` (two values, linear only) or ``excluded`` (kept out
    of power and smooth blocks, e.g. constants or coded categories).
    """

    columns: tuple
    X: np.ndarray
    y: np.ndarray | None = None
    target: str | None = None
    kinds: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.columns):
            raise SchemaMismatch("X shape does not match the column list")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "columns", tuple(self.columns))
        if self.y is not None:
            object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        kinds = dict(self.kinds)
        for j, name in enumerate(self.columns):
            if name not in kinds:
                kinds[name] = infer_kind(X[:, j])
        object.__setattr__(self, "kinds", kinds)

    @classmethod
    def from_arrays(cls, X, y=None, columns=None, kinds=None, target="y"):
        X = np.asarray(X, dtype=float)
        if columns is None:
            columns = [f"x{j + 1}" for j in range(X.shape[1])]
        return cls(tuple(columns), X, y, target if y is not None else None, kinds or {})

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise SchemaMismatch(f"column {name!r} not in dataset") from None

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.index(name)]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        y = None if self.y is None else self.y[rows]
        return replace(self, X=self.X[rows], y=y)

    def with_target(self, y) -> "Dataset":
        return replace(self, y=np.asarray(y, dtype=float))

    def of_kind(self, *kinds) -> list:
        return [c for c in self.columns if self.kinds[c] in kinds]

    def fingerprint(self) -> list:
        return list(self.columns)

    def term(self, name: str) -> np.ndarray:
        return term_values(self, name)

    def term_matrix(self, names) -> np.ndarray:
        if not names:
            return np.empty((self.n, 0))
        return np.column_stack([term_values(self, t) for t in names])


def infer_kind(values) -> str:
    distinct = np.unique(values).size
    if distinct <= 1:
        return "excluded"
    if distinct == 2:
        return "binary"
    return "continuous"


def term_values(data: Dataset, name: str) -> np.ndarray:
    """Evaluate a term name: ``a``, ``a^k`` (power) or ``a:b`` (product)."""
    if ":" in name:
        out = np.ones(data.n)
        for part in name.split(":"):
            out = out * term_values(data, part)
        return out
    if "^" in name:
        base, power = name.rsplit("^", 1)
        return data.column(base) ** int(power)
    return data.column(name)


def check_schema(data: Dataset, columns) -> None:
    missing = [c for c in columns if c not in data.columns]
    if missing:
        raise SchemaMismatch(f"new data lacks columns {missing}")


def ingest_csv(path, target: str | None, kinds: dict | None = None) -> Dataset:
    """Read a comma-separated numeric table with a header row.

    Rows with empty cells are dropped (their count is recorded in the
    provenance); any other non-numeric cell raises :class:`NonNumericCell`.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not any(cell.strip() for cell in rows[0]):
        raise EmptyFile(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    for h in header:
        if ":" in h or "^" in h:
            raise DataError(f"column name {h!r} may not contain ':' or '^'")
    body = rows[1:]
    if not body:
        raise EmptyFile(f"{path} has a header but no rows")
    if target is not None and target not in header:
        raise MissingTarget(f"target {target!r} not among columns {header}")

    values, dropped = [], 0
    for i, row in enumerate(body, start=2):
        cells = [c.strip() for c in row]
        if len(cells) != len(header) or any(c == "" or c.upper() == "NA" for c in cells):
            dropped += 1
            continue
        try:
            parsed = [float(c) for c in cells]
        except ValueError:
            bad = next(c for c in cells if not _is_float(c))
            raise NonNumericCell(f"row {i}: cannot parse {bad!r}") from None
        if not all(math.isfinite(v) for v in parsed):
            dropped += 1
            continue
        values.append(parsed)
    if not values:
        raise EmptyFile(f"{path} has no complete rows")
    if dropped:
        warnings.warn(f"{path}: dropped {dropped} rows with missing cells")

    table = np.asarray(values)
    features = [h for h in header if h != target]
    X = table[:, [header.index(f) for f in features]]
    y = table[:, header.index(target)] if target is not None else None

    resolved = {}
    for j, name in enumerate(features):
        resolved[name] = infer_kind(X[:, j])
    for name, kind in (kinds or {}).items():
        if name not in resolved:
            raise DataError(f"kind override for unknown column {name!r}")
        if kind not in KINDS:
            raise DataError(f"unknown kind {kind!r} for {name!r}")
        resolved[name] = kind
    for name, kind in resolved.items():
        if kind == "binary" and np.unique(X[:, features.index(name)]).size != 2:
            raise DataError(f"column {name!r} marked binary but lacks exactly two values")

    provenance = {"path": str(path), "rows": len(values), "dropped_rows": dropped}
    return Dataset(tuple(features), X, y, target, resolved, provenance)


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def is_constant(data: Dataset, name: str) -> bool:
    col = data.column(name)
    return bool(np.all(col == col[0]))
