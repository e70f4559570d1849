"""CSV loading, Stata-style variable lists, and model-frame assembly."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

_RANGE_END = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*?)(\d+)$")


@dataclass(frozen=True)
class Table:
    """Rectangular numeric data. Missing cells are stored as NaN."""

    column_names: list[str]
    columns: list[np.ndarray]
    n_rows: int

    def __post_init__(self):
        if len(set(self.column_names)) != len(self.column_names):
            raise DataError("duplicate column names in table")
        if len(self.column_names) != len(self.columns):
            raise DataError("column names and columns differ in length")
        for name, col in zip(self.column_names, self.columns):
            if col.shape != (self.n_rows,):
                raise DataError(f"column {name!r} has length {col.shape[0]}, expected {self.n_rows}")

    @property
    def n_cols(self) -> int:
        return len(self.column_names)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.columns[self.column_names.index(name)]
        except ValueError:
            raise DataError(f"variable {name!r} not found") from None

    def missing(self, name: str) -> np.ndarray:
        return np.isnan(self.column(name))

    def summary(self) -> str:
        return f"({self.n_cols} vars, {self.n_rows} obs)"


def load_csv(path) -> Table:
    """Read a comma-separated file with a header row.

    Empty cells become missing (NaN). Any other non-numeric cell, or a row
    with the wrong number of fields, raises :class:`DataError` naming the
    offending row (1-based, header excluded) and column.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    if not rows:
        raise DataError(f"{path} is empty; a header row is required")
    header = [h.strip() for h in rows[0]]
    if any(not h for h in header):
        raise DataError(f"{path}: empty column name in header")
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names in header")

    body = [r for r in rows[1:] if r and any(c.strip() for c in r)]
    data = np.full((len(body), len(header)), np.nan)
    for i, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise DataError(f"{path}: row {i} has {len(row)} fields, expected {len(header)}")
        for j, cell in enumerate(row):
            cell = cell.strip()
            if not cell:
                continue
            try:
                value = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric value {cell!r} at row {i}, column {header[j]!r}"
                ) from None
            if not math.isfinite(value):
                raise DataError(f"{path}: non-finite value {cell!r} at row {i}, column {header[j]!r}")
            data[i - 1, j] = value

    return Table(header, [data[:, j].copy() for j in range(len(header))], len(body))


def expand_varlist(spec: str, available) -> list[str]:
    """Expand ``"z1-z4 w"`` style lists into explicit names.

    A range ``pfxN-pfxM`` stands for pfxN, pfxN+1, ..., pfxM; both ends must
    share the prefix and N <= M. Repeated names are dropped after their first
    occurrence, so expanding an already expanded list is a no-op.
    """
    available = list(available)
    known = set(available)
    out: list[str] = []
    for token in re.split(r"[\s,]+", spec.strip()):
        if not token:
            continue
        if "-" in token:
            names = _expand_range(token)
        else:
            names = [token]
        for name in names:
            if name not in known:
                raise DataError(f"variable {name!r} not found")
            if name not in out:
                out.append(name)
    return out


def _expand_range(token: str) -> list[str]:
    parts = token.split("-")
    if len(parts) != 2 or not all(parts):
        raise DataError(f"malformed variable range {token!r}")
    lo, hi = (_RANGE_END.match(p) for p in parts)
    if lo is None or hi is None:
        raise DataError(f"malformed variable range {token!r}: both ends need a numeric suffix")
    if lo.group(1) != hi.group(1):
        raise DataError(f"variable range {token!r} mixes prefixes {lo.group(1)!r} and {hi.group(1)!r}")
    start, stop = int(lo.group(2)), int(hi.group(2))
    if start > stop:
        raise DataError(f"variable range {token!r} runs backwards")
    return [f"{lo.group(1)}{i}" for i in range(start, stop + 1)]


@dataclass(frozen=True)
class ModelFrame:
    """Estimation-ready arrays.

    ``X`` is ordered [endogenous | included exogenous | constant] and
    ``Z_excl`` holds only the excluded instruments. The included block
    ``W = [x1 | const]`` enters every first-stage instrument set.
    """

    y: np.ndarray
    X: np.ndarray
    Z_excl: np.ndarray
    depvar: str = "y"
    endo_names: tuple[str, ...] = ()
    exog_names: tuple[str, ...] = ()
    iv_names: tuple[str, ...] = ()
    has_constant: bool = True
    n_dropped: int = 0
    W: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        y = np.ascontiguousarray(self.y, dtype=float)
        X = np.ascontiguousarray(self.X, dtype=float)
        Z = np.ascontiguousarray(self.Z_excl, dtype=float)
        if y.ndim != 1 or X.ndim != 2 or Z.ndim != 2:
            raise DataError("y must be a vector; X and Z_excl must be matrices")
        if not X.shape[0] == Z.shape[0] == y.shape[0]:
            raise DataError(f"row mismatch: y {y.shape}, X {X.shape}, Z_excl {Z.shape}")
        d1, d2 = len(self.endo_names), len(self.exog_names)
        if X.shape[1] != d1 + d2 + int(self.has_constant):
            raise DataError("X columns do not match the endogenous/exogenous/constant layout")
        if Z.shape[1] != len(self.iv_names):
            raise DataError("Z_excl columns do not match instrument names")
        for a in (y, X, Z):
            a.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Z_excl", Z)
        W = np.ascontiguousarray(X[:, d1:])
        W.setflags(write=False)
        object.__setattr__(self, "W", W)

    @classmethod
    def from_arrays(cls, y, Y, Z_excl, x1=None, constant=True, **names) -> "ModelFrame":
        """Assemble a frame from raw arrays; names default to y, x1.., z1.."""
        y = np.asarray(y, dtype=float)
        Y = np.asarray(Y, dtype=float).reshape(y.shape[0], -1)
        Z = np.asarray(Z_excl, dtype=float).reshape(y.shape[0], -1)
        x1 = np.empty((y.shape[0], 0)) if x1 is None else np.asarray(x1, dtype=float).reshape(y.shape[0], -1)
        blocks = [Y, x1]
        if constant:
            blocks.append(np.ones((y.shape[0], 1)))
        names.setdefault("endo_names", tuple(f"endog{i + 1}" for i in range(Y.shape[1])))
        names.setdefault("exog_names", tuple(f"exog{i + 1}" for i in range(x1.shape[1])))
        names.setdefault("iv_names", tuple(f"z{i + 1}" for i in range(Z.shape[1])))
        return cls(y=y, X=np.hstack(blocks), Z_excl=Z, has_constant=constant, **names)

    @property
    def N(self) -> int:
        return self.y.shape[0]

    @property
    def d1(self) -> int:
        return len(self.endo_names)

    @property
    def d2(self) -> int:
        return len(self.exog_names)

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def K(self) -> int:
        return self.Z_excl.shape[1]

    @property
    def q(self) -> int:
        """Number of included instruments (exogenous regressors plus constant)."""
        return self.W.shape[1]

    @property
    def coef_names(self) -> list[str]:
        return [*self.endo_names, *self.exog_names] + (["_cons"] if self.has_constant else [])

    @property
    def Z_full(self) -> np.ndarray:
        return np.hstack([self.Z_excl, self.W])

    def replace(self, **changes) -> "ModelFrame":
        kwargs = dict(
            y=self.y, X=self.X, Z_excl=self.Z_excl, depvar=self.depvar,
            endo_names=self.endo_names, exog_names=self.exog_names, iv_names=self.iv_names,
            has_constant=self.has_constant, n_dropped=self.n_dropped,
        )
        kwargs.update(changes)
        return ModelFrame(**kwargs)


def build_model_frame(table: Table, dep: str, exog, endo, iv, constant: bool = True) -> ModelFrame:
    exog, endo, iv = list(exog), list(endo), list(iv)
    if not endo:
        raise DataError("at least one endogenous variable is required")
    if not iv:
        raise DataError("at least one excluded instrument is required")
    roles = {"exog": exog, "endo": endo, "iv": iv}
    seen: dict[str, str] = {dep: "dep"}
    for role, names in roles.items():
        for name in names:
            if name in seen:
                raise DataError(f"variable {name!r} used as both {seen[name]} and {role}")
            seen[name] = role

    used = [dep, *endo, *exog, *iv]
    block = np.column_stack([table.column(name) for name in used])
    keep = ~np.isnan(block).any(axis=1)
    block = block[keep]
    if block.shape[0] == 0:
        raise DataError("no observations left after dropping rows with missing values")

    if constant:
        for j, name in enumerate(used[1:], start=1):
            col = block[:, j]
            if np.all(col == col[0]):
                raise DataError(f"variable {name!r} is constant and collinear with the intercept")

    n_endo, n_exog = len(endo), len(exog)
    y = block[:, 0]
    blocks = [block[:, 1:1 + n_endo + n_exog]]
    if constant:
        blocks.append(np.ones((block.shape[0], 1)))
    return ModelFrame(
        y=y,
        X=np.hstack(blocks),
        Z_excl=block[:, 1 + n_endo + n_exog:],
        depvar=dep,
        endo_names=tuple(endo),
        exog_names=tuple(exog),
        iv_names=tuple(iv),
        has_constant=constant,
        n_dropped=int((~keep).sum()),
    )
