"""Parameter schema definition and run-corpus ingestion.

A schema declares the simulation's input space: continuous parameters with
inclusive bounds and discrete parameters with ordered symbolic alternatives.
One discrete parameter may be designated the policy, one the region; group
analyses key on those two. Corpus files are comma-separated UTF-8 with a
header row, one column per schema name plus any number of numeric indicator
columns.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from .errors import IngestError, SchemaError

ROLE_NONE = ""
ROLE_POLICY = "policy"
ROLE_REGION = "region"
_ROLES = (ROLE_NONE, ROLE_POLICY, ROLE_REGION)


@dataclass(frozen=True)
class ContinuousParamSpec:
    """A real-valued parameter with inclusive [lower, upper] bounds."""

    name: str
    lower: float
    upper: float

    def __post_init__(self):
        if not self.name:
            raise SchemaError("continuous parameter with empty name")
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise SchemaError(f"{self.name}: bounds must be finite")
        if self.lower >= self.upper:
            raise SchemaError(
                f"{self.name}: lower bound {self.lower} must be below upper {self.upper}"
            )

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


@dataclass(frozen=True)
class DiscreteParamSpec:
    """A categorical parameter with an ordered tuple of symbolic alternatives.

    The type accepts a single alternative (a pinned choice); schema files
    require at least two, which parse_schema enforces.
    """

    name: str
    alternatives: tuple[str, ...]
    role: str = ROLE_NONE

    def __post_init__(self):
        if not self.name:
            raise SchemaError("discrete parameter with empty name")
        object.__setattr__(self, "alternatives", tuple(str(a) for a in self.alternatives))
        if len(self.alternatives) == 0:
            raise SchemaError(f"{self.name}: empty alternatives")
        if len(set(self.alternatives)) != len(self.alternatives):
            raise SchemaError(f"{self.name}: duplicate alternatives")
        if self.role not in _ROLES:
            raise SchemaError(f"{self.name}: unknown role {self.role!r}")


@dataclass(frozen=True)
class ParameterSchema:
    """Ordered collection of parameter specs with optional policy/region roles."""

    continuous: tuple[ContinuousParamSpec, ...]
    discrete: tuple[DiscreteParamSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "continuous", tuple(self.continuous))
        object.__setattr__(self, "discrete", tuple(self.discrete))
        names = [p.name for p in self.continuous] + [p.name for p in self.discrete]
        if len(names) == 0:
            raise SchemaError("schema has no parameters")
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise SchemaError(f"duplicate parameter names: {sorted(dupes)}")
        for role in (ROLE_POLICY, ROLE_REGION):
            holders = [p.name for p in self.discrete if p.role == role]
            if len(holders) > 1:
                raise SchemaError(f"multiple parameters designated {role}: {holders}")

    @property
    def names(self) -> tuple[str, ...]:
        """All parameter names in schema order (continuous first)."""
        return tuple(p.name for p in self.continuous) + tuple(p.name for p in self.discrete)

    def param(self, name: str) -> ContinuousParamSpec | DiscreteParamSpec:
        for p in self.continuous:
            if p.name == name:
                return p
        for p in self.discrete:
            if p.name == name:
                return p
        raise SchemaError(f"no parameter named {name!r}")

    def _role_param(self, role: str) -> DiscreteParamSpec | None:
        for p in self.discrete:
            if p.role == role:
                return p
        return None

    @property
    def policy(self) -> DiscreteParamSpec | None:
        return self._role_param(ROLE_POLICY)

    @property
    def region(self) -> DiscreteParamSpec | None:
        return self._role_param(ROLE_REGION)


def parse_schema(text: str) -> ParameterSchema:
    """Parse a schema from its structured-text form.

    The document has two keys: ``continuous`` (list of {name, lower, upper})
    and ``discrete`` (list of {name, alternatives, role?}). Discrete rows
    need at least two alternatives here even though the dataclass itself
    tolerates one.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SchemaError(f"unparseable schema document: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("schema document must be a mapping")
    unknown = set(doc) - {"continuous", "discrete"}
    if unknown:
        raise SchemaError(f"unknown schema sections: {sorted(unknown)}")

    continuous = []
    for i, row in enumerate(doc.get("continuous") or []):
        if not isinstance(row, dict) or not {"name", "lower", "upper"} <= set(row):
            raise SchemaError(f"continuous entry {i}: need name, lower, upper")
        try:
            lower, upper = float(row["lower"]), float(row["upper"])
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"continuous entry {i}: non-numeric bound") from exc
        continuous.append(ContinuousParamSpec(str(row["name"]), lower, upper))

    discrete = []
    for i, row in enumerate(doc.get("discrete") or []):
        if not isinstance(row, dict) or "name" not in row or "alternatives" not in row:
            raise SchemaError(f"discrete entry {i}: need name and alternatives")
        alts = row["alternatives"]
        if not isinstance(alts, (list, tuple)) or len(alts) < 2:
            raise SchemaError(
                f"discrete entry {i} ({row['name']}): need at least two alternatives"
            )
        discrete.append(
            DiscreteParamSpec(str(row["name"]), tuple(str(a) for a in alts),
                              str(row.get("role", ROLE_NONE)))
        )
    return ParameterSchema(tuple(continuous), tuple(discrete))


def serialize_schema(schema: ParameterSchema) -> str:
    """Render a schema back to its structured-text form (round-trip safe)."""
    doc = {
        "continuous": [
            {"name": p.name, "lower": p.lower, "upper": p.upper} for p in schema.continuous
        ],
        "discrete": [
            {"name": p.name, "alternatives": list(p.alternatives)}
            | ({"role": p.role} if p.role else {})
            for p in schema.discrete
        ],
    }
    return yaml.safe_dump(doc, sort_keys=False, allow_unicode=True)


def load_schema(path: str | Path) -> ParameterSchema:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot read schema file {path}: {exc}") from exc
    return parse_schema(text)


def save_schema(schema: ParameterSchema, path: str | Path) -> None:
    Path(path).write_text(serialize_schema(schema), encoding="utf-8")


def default_schema() -> ParameterSchema:
    """The packaged default schema: 37 continuous parameters, 6 folded
    discrete choices, a 4-alternative policy row, and a 46-region row."""
    text = resources.files("policyforest.data").joinpath("default_schema.yaml").read_text("utf-8")
    return parse_schema(text)


@dataclass
class RunRecord:
    """One simulation run: its input configuration and output indicators."""

    config: dict[str, object]
    indicators: dict[str, float]
    valid: bool = True
    violations: tuple[str, ...] = ()


def validate_record(record: RunRecord, schema: ParameterSchema) -> list[str]:
    """Return all constraint violations of a record against a schema.

    An empty list means the record is clean. Violations carry the parameter
    name and the broken constraint, e.g. "out-of-bounds: Policy days > 3600".
    """
    violations: list[str] = []
    for p in schema.continuous:
        if p.name not in record.config:
            violations.append(f"missing: {p.name}")
            continue
        raw = record.config[p.name]
        try:
            value = float(raw)  # type: ignore[arg-type]
        except (TypeError, ValueError):
            violations.append(f"non-numeric: {p.name} = {raw!r}")
            continue
        if math.isnan(value):
            violations.append(f"missing: {p.name}")
        elif value < p.lower:
            violations.append(f"out-of-bounds: {p.name} < {p.lower:g}")
        elif value > p.upper:
            violations.append(f"out-of-bounds: {p.name} > {p.upper:g}")
    for p in schema.discrete:
        if p.name not in record.config:
            violations.append(f"missing: {p.name}")
            continue
        value = record.config[p.name]
        if value is None or (isinstance(value, float) and math.isnan(value)):
            violations.append(f"missing: {p.name}")
        elif str(value) not in p.alternatives:
            violations.append(f"unknown-alternative: {p.name} = {value!r}")
    return violations


@dataclass
class IngestResult:
    """A parsed corpus: frame plus per-row validity flags.

    Invalid rows are kept, flagged, and counted; nothing is silently
    dropped. ``frame`` holds schema columns (continuous as float64,
    discrete as str) followed by the file's indicator columns.
    """

    frame: pd.DataFrame
    valid: np.ndarray
    violations: dict[int, list[str]]
    indicator_columns: tuple[str, ...]
    schema: ParameterSchema = field(repr=False)

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())

    @property
    def n_invalid(self) -> int:
        return int(len(self.valid) - self.valid.sum())

    @cached_property
    def records(self) -> list[RunRecord]:
        """Materialize RunRecord objects (lazy; large corpora stay frame-based)."""
        names = list(self.schema.names)
        config_part = self.frame[names]
        ind_part = self.frame[list(self.indicator_columns)]
        out = []
        for i in range(len(self.frame)):
            viols = tuple(self.violations.get(i, ()))
            out.append(
                RunRecord(
                    config=dict(zip(names, config_part.iloc[i])),
                    indicators=dict(zip(self.indicator_columns, ind_part.iloc[i].astype(float))),
                    valid=not viols,
                    violations=viols,
                )
            )
        return out


def _coerce_numeric(frame: pd.DataFrame, col: str, kind: str) -> pd.Series:
    series = pd.to_numeric(frame[col], errors="coerce")
    bad = series.isna() & frame[col].notna()
    if bad.any():
        row = int(np.nonzero(bad.to_numpy())[0][0])
        raise IngestError(
            f"unparseable numeric cell in {kind} column {col!r}, "
            f"row {row}: {frame[col].iloc[row]!r}"
        )
    return series.astype(np.float64)


def ingest_runs(path: str | Path, schema: ParameterSchema) -> IngestResult:
    """Read a corpus file into a flagged frame of run records.

    Raises IngestError when the file itself is unusable (missing schema
    column, cell that cannot be parsed as a number). Rows that merely
    violate bounds or name unknown alternatives are flagged, not dropped.
    """
    discrete_names = [p.name for p in schema.discrete]
    try:
        frame = pd.read_csv(path, dtype={n: str for n in discrete_names}, encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read corpus file {path}: {exc}") from exc
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise IngestError(f"malformed corpus file {path}: {exc}") from exc

    missing = [n for n in schema.names if n not in frame.columns]
    if missing:
        raise IngestError(f"corpus file missing required columns: {missing}")
    indicator_columns = tuple(c for c in frame.columns if c not in set(schema.names))

    for p in schema.continuous:
        frame[p.name] = _coerce_numeric(frame, p.name, "parameter")
    for col in indicator_columns:
        frame[col] = _coerce_numeric(frame, col, "indicator")

    n = len(frame)
    violations: dict[int, list[str]] = {}

    def flag(mask: np.ndarray, message_for: callable) -> None:
        for i in np.nonzero(mask)[0]:
            violations.setdefault(int(i), []).append(message_for(int(i)))

    for p in schema.continuous:
        x = frame[p.name].to_numpy()
        flag(np.isnan(x), lambda i, p=p: f"missing: {p.name}")
        flag(x < p.lower, lambda i, p=p: f"out-of-bounds: {p.name} < {p.lower:g}")
        flag(x > p.upper, lambda i, p=p: f"out-of-bounds: {p.name} > {p.upper:g}")
    for p in schema.discrete:
        col = frame[p.name]
        missing_mask = col.isna().to_numpy()
        flag(missing_mask, lambda i, p=p: f"missing: {p.name}")
        known = col.isin(p.alternatives).to_numpy()
        flag(
            ~known & ~missing_mask,
            lambda i, p=p, col=col: f"unknown-alternative: {p.name} = {col.iloc[i]!r}",
        )

    valid = np.ones(n, dtype=bool)
    if violations:
        valid[list(violations)] = False
    return IngestResult(
        frame=frame,
        valid=valid,
        violations=violations,
        indicator_columns=indicator_columns,
        schema=schema,
    )


def records_to_frame(records: list[RunRecord], schema: ParameterSchema) -> pd.DataFrame:
    """Assemble records into the same frame shape ingest_runs produces."""
    if not records:
        raise IngestError("empty record list")
    indicator_names = list(records[0].indicators)
    data: dict[str, object] = {}
    for name in schema.names:
        data[name] = [r.config.get(name) for r in records]
    for name in indicator_names:
        data[name] = [r.indicators.get(name, math.nan) for r in records]
    frame = pd.DataFrame(data)
    for p in schema.continuous:
        frame[p.name] = frame[p.name].astype(np.float64)
    for p in schema.discrete:
        frame[p.name] = frame[p.name].astype(str)
    return frame


def corpus_frame(data, schema: ParameterSchema) -> tuple[pd.DataFrame, np.ndarray]:
    """Normalize corpus input to (frame of valid rows, source row ids).

    Accepts an IngestResult (invalid rows dropped here, already counted at
    ingestion), a plain frame (taken as all-valid), or a record list
    (records flagged invalid are dropped).
    """
    if isinstance(data, IngestResult):
        ids = np.nonzero(data.valid)[0].astype(np.int64)
        return data.frame.iloc[ids].reset_index(drop=True), ids
    if isinstance(data, pd.DataFrame):
        return data.reset_index(drop=True), np.arange(len(data), dtype=np.int64)
    records: list[RunRecord] = list(data)
    keep = [i for i, r in enumerate(records) if r.valid]
    frame = records_to_frame([records[i] for i in keep], schema)
    return frame, np.asarray(keep, dtype=np.int64)
