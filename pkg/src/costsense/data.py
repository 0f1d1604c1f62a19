"""Cost dataset container, CSV ingestion and cost preprocessing.

The on-disk format is a plain CSV. By default the first four columns are
named ``cost,time,event,treat`` (``event`` is 1 where the cost was fully
observed, 0 where follow-up was censored) and every remaining column is
treated as a numeric covariate. A schema mapping can rename the role
columns, select a covariate subset, or address columns by position for
headerless files.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyDatasetError,
    InputNotFoundError,
    NoPositiveCostError,
    ParseError,
    SchemaError,
)

ROLE_NAMES = ("cost", "time", "event", "treat")


@dataclass(frozen=True)
class CostRecord:
    """One subject: observed cost, follow-up time, event flag, arm, covariates."""

    cost: float
    time: float
    uncensored: bool
    treatment: int
    covariates: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class CostDataset:
    """Immutable per-subject cost data held as column arrays.

    ``uncensored`` is True where the cost accumulated to the terminating
    event, False where follow-up stopped early. ``covariates`` holds one row
    per subject and one column per entry of ``covariate_names``.
    """

    cost: np.ndarray
    time: np.ndarray
    uncensored: np.ndarray
    treatment: np.ndarray
    covariates: np.ndarray
    covariate_names: tuple[str, ...]

    def __post_init__(self):
        cost = np.asarray(self.cost, dtype=np.float64)
        time = np.asarray(self.time, dtype=np.float64)
        uncensored = np.asarray(self.uncensored, dtype=bool)
        treatment = np.asarray(self.treatment, dtype=np.int64)
        covariates = np.atleast_2d(np.asarray(self.covariates, dtype=np.float64))
        names = tuple(str(n) for n in self.covariate_names)

        n = cost.shape[0]
        if covariates.size == 0:
            covariates = covariates.reshape(n, 0)
        if (
            cost.ndim != 1
            or time.shape != (n,)
            or uncensored.shape != (n,)
            or treatment.shape != (n,)
            or covariates.shape[0] != n
        ):
            raise ValueError("column arrays must share one length")
        if covariates.shape[1] != len(names):
            raise ValueError("covariate_names must match the covariate columns")
        if n == 0:
            raise EmptyDatasetError("dataset has no records")
        if not np.all(np.isfinite(cost)) or np.any(cost < 0):
            raise ValueError("costs must be finite and nonnegative")
        if not np.all(np.isfinite(time)) or np.any(time <= 0):
            raise ValueError("follow-up times must be finite and positive")
        if not np.all(np.isin(treatment, (0, 1))):
            raise ValueError("treatment must be coded 0/1")
        if not np.all(np.isfinite(covariates)):
            raise ValueError("covariates must be finite")
        if len(set(names)) != len(names):
            raise ValueError("covariate names must be unique")

        for field, value in (
            ("cost", cost),
            ("time", time),
            ("uncensored", uncensored),
            ("treatment", treatment),
            ("covariates", covariates),
            ("covariate_names", names),
        ):
            if isinstance(value, np.ndarray):
                value.setflags(write=False)
            object.__setattr__(self, field, value)

    def __len__(self) -> int:
        return int(self.cost.shape[0])

    @property
    def n_records(self) -> int:
        return len(self)

    @property
    def n_covariates(self) -> int:
        return int(self.covariates.shape[1])

    @property
    def censoring_rate(self) -> float:
        return float(np.mean(~self.uncensored))

    def record(self, i: int) -> CostRecord:
        return CostRecord(
            cost=float(self.cost[i]),
            time=float(self.time[i]),
            uncensored=bool(self.uncensored[i]),
            treatment=int(self.treatment[i]),
            covariates=tuple(float(v) for v in self.covariates[i]),
        )

    @property
    def records(self) -> list[CostRecord]:
        return [self.record(i) for i in range(len(self))]

    def __iter__(self):
        return iter(self.records)

    @classmethod
    def from_records(
        cls, records: list[CostRecord], covariate_names: tuple[str, ...] | None = None
    ) -> "CostDataset":
        if not records:
            raise EmptyDatasetError("no records supplied")
        k = len(records[0].covariates)
        if covariate_names is None:
            covariate_names = tuple(f"z{j + 1}" for j in range(k))
        return cls(
            cost=np.array([r.cost for r in records]),
            time=np.array([r.time for r in records]),
            uncensored=np.array([r.uncensored for r in records]),
            treatment=np.array([r.treatment for r in records]),
            covariates=np.array([r.covariates for r in records]).reshape(len(records), k),
            covariate_names=covariate_names,
        )


def _parse_number(token: str, row: int, column: str) -> float:
    token = token.strip()
    if token == "":
        raise ParseError(f"row {row}: column '{column}' is empty", row=row)
    try:
        value = float(token)
    except ValueError:
        raise ParseError(
            f"row {row}: column '{column}': cannot parse {token!r} as a number",
            row=row,
        ) from None
    if not np.isfinite(value):
        raise ParseError(
            f"row {row}: column '{column}': non-finite value {token!r}", row=row
        )
    return value


def _parse_indicator(token: str, row: int, column: str) -> int:
    value = _parse_number(token, row, column)
    if value not in (0.0, 1.0):
        raise ParseError(
            f"row {row}: column '{column}' must be 0 or 1, got {token.strip()!r}",
            row=row,
        )
    return int(value)


def _resolve_header_schema(header: list[str], schema: dict | None):
    schema = dict(schema or {})
    covariate_spec = schema.pop("covariates", None)
    positions = {}
    lookup = {name: i for i, name in enumerate(header)}
    for role in ROLE_NAMES:
        column = schema.pop(role, role)
        if column not in lookup:
            raise SchemaError(f"required column '{column}' not found in header")
        positions[role] = lookup[column]
    if schema:
        raise SchemaError(f"unknown schema keys: {sorted(schema)}")
    if covariate_spec is None:
        taken = set(positions.values())
        cov_idx = [i for i in range(len(header)) if i not in taken]
        cov_names = [header[i] for i in cov_idx]
    else:
        cov_idx, cov_names = [], []
        for column in covariate_spec:
            if column not in lookup:
                raise SchemaError(f"covariate column '{column}' not found in header")
            cov_idx.append(lookup[column])
            cov_names.append(column)
    return positions, cov_idx, cov_names


def _resolve_positional_schema(schema: dict, width: int):
    schema = dict(schema)
    covariate_spec = schema.pop("covariates", None)
    positions = {}
    for role in ROLE_NAMES:
        if role not in schema:
            raise SchemaError(f"positional schema must map '{role}' to a column index")
        index = schema.pop(role)
        if not isinstance(index, int) or not 0 <= index < width:
            raise SchemaError(f"column index for '{role}' out of range: {index!r}")
        positions[role] = index
    if schema:
        raise SchemaError(f"unknown schema keys: {sorted(schema)}")
    if covariate_spec is None:
        taken = set(positions.values())
        cov_idx = [i for i in range(width) if i not in taken]
    else:
        cov_idx = []
        for index in covariate_spec:
            if not isinstance(index, int) or not 0 <= index < width:
                raise SchemaError(f"covariate column index out of range: {index!r}")
            cov_idx.append(index)
    cov_names = [f"z{j + 1}" for j in range(len(cov_idx))]
    return positions, cov_idx, cov_names


def load_dataset(path, schema: dict | None = None) -> CostDataset:
    """Read a cost CSV into a :class:`CostDataset`.

    Parameters
    ----------
    path : str or pathlib.Path
        File to read.
    schema : dict, optional
        Role mapping. String values rename header columns, e.g.
        ``{"cost": "totcost"}``; integer values address columns by position
        in a headerless file. An optional ``"covariates"`` entry (list of
        names or indices) restricts which columns are used as covariates.

    Raises
    ------
    SchemaError
        A required column is missing, naming the column.
    ParseError
        A cell cannot be interpreted, naming the 1-based data row.
    EmptyDatasetError
        The file holds no data rows.
    """
    positional = bool(schema) and any(
        isinstance(schema.get(role), int) for role in ROLE_NAMES
    )
    try:
        handle = open(path, newline="", encoding="utf-8")
    except FileNotFoundError:
        raise InputNotFoundError(f"input file not found: {path}") from None
    with handle:
        rows = [row for row in csv.reader(handle) if any(cell.strip() for cell in row)]

    if positional:
        data_rows = rows
        if not data_rows:
            raise EmptyDatasetError(f"no data rows in {path}")
        positions, cov_idx, cov_names = _resolve_positional_schema(
            schema, width=len(data_rows[0])
        )
    else:
        if not rows:
            raise EmptyDatasetError(f"no data rows in {path}")
        header = [cell.strip() for cell in rows[0]]
        data_rows = rows[1:]
        if not data_rows:
            raise EmptyDatasetError(f"no data rows in {path}")
        positions, cov_idx, cov_names = _resolve_header_schema(header, schema)

    width = max(list(positions.values()) + cov_idx) + 1
    cost, time, event, treat = [], [], [], []
    covs = []
    for i, row in enumerate(data_rows, start=1):
        if len(row) < width:
            raise ParseError(
                f"row {i}: expected at least {width} columns, got {len(row)}", row=i
            )
        c = _parse_number(row[positions["cost"]], i, "cost")
        if c < 0:
            raise ParseError(f"row {i}: column 'cost' must be nonnegative", row=i)
        t = _parse_number(row[positions["time"]], i, "time")
        if t <= 0:
            raise ParseError(f"row {i}: column 'time' must be positive", row=i)
        cost.append(c)
        time.append(t)
        event.append(_parse_indicator(row[positions["event"]], i, "event"))
        treat.append(_parse_indicator(row[positions["treat"]], i, "treat"))
        covs.append(
            [_parse_number(row[j], i, cov_names[m]) for m, j in enumerate(cov_idx)]
        )

    return CostDataset(
        cost=np.array(cost),
        time=np.array(time),
        uncensored=np.array(event, dtype=bool),
        treatment=np.array(treat),
        covariates=np.array(covs, dtype=np.float64).reshape(len(cost), len(cov_idx)),
        covariate_names=tuple(cov_names),
    )


def save_dataset(path, dataset: CostDataset) -> None:
    """Write ``dataset`` as CSV with default role headers.

    Floats are serialized with ``repr``, so a save/load round trip
    reproduces every value bit for bit.
    """
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(list(ROLE_NAMES) + list(dataset.covariate_names))
        for i in range(len(dataset)):
            writer.writerow(
                [
                    repr(float(dataset.cost[i])),
                    repr(float(dataset.time[i])),
                    int(dataset.uncensored[i]),
                    int(dataset.treatment[i]),
                ]
                + [repr(float(v)) for v in dataset.covariates[i]]
            )


def zero_cost_shift(dataset: CostDataset) -> CostDataset:
    """Return a copy with half the smallest positive cost added to every cost.

    Multiplicative mean models cannot represent exact zeros, so accounting
    zeros are lifted by a common offset small relative to real spending.
    Applying the shift twice shifts twice; it is not idempotent.

    Raises
    ------
    NoPositiveCostError
        Every cost in the dataset is zero.
    """
    positive = dataset.cost[dataset.cost > 0]
    if positive.size == 0:
        raise NoPositiveCostError("all costs are zero; no positive cost to anchor the shift")
    shift = float(positive.min()) / 2.0
    return CostDataset(
        cost=dataset.cost + shift,
        time=dataset.time,
        uncensored=dataset.uncensored,
        treatment=dataset.treatment,
        covariates=dataset.covariates,
        covariate_names=dataset.covariate_names,
    )
