"""Execution records, feature schemas, and CSV/JSON log ingestion.

A log is stored as two files: a CSV table with one row per job or task,
and a sidecar JSON document declaring the kind, domain and role of every
feature column.  See ``docs/formats.md`` for the grammar of both.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

NUMERIC = "numeric"
NOMINAL = "nominal"
KINDS = (NUMERIC, NOMINAL)
ROLES = ("config", "metric", "data", "app", "outcome")
LEVELS = ("job", "task")

OUTCOME = "duration"
ID_COLUMN = "id"
PARENT_COLUMN = "parent_job_id"


class LogError(ValueError):
    """Raised when a schema or log file cannot be loaded.

    ``diagnostics`` holds one human readable line per offending row.
    """

    def __init__(self, message: str, diagnostics: Sequence[str] = ()):
        self.diagnostics = list(diagnostics)
        if self.diagnostics:
            message = message + "\n" + "\n".join("  " + d for d in self.diagnostics)
        super().__init__(message)


@dataclass(frozen=True)
class FeatureSchema:
    name: str
    kind: str
    domain: tuple | None = None
    role: str = "config"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.role not in ROLES:
            raise ValueError(f"feature {self.name!r}: unknown role {self.role!r}")
        if self.domain is not None:
            dom = tuple(self.domain)
            if self.kind == NOMINAL:
                dom = tuple(str(v) for v in dom)
            object.__setattr__(self, "domain", dom)
        if self.kind == NOMINAL and not self.domain:
            raise ValueError(f"nominal feature {self.name!r} needs a finite domain")
        if self.kind == NUMERIC and self.domain is not None:
            if len(self.domain) != 2 or self.domain[0] > self.domain[1]:
                raise ValueError(f"numeric feature {self.name!r}: domain must be [min, max]")

    @property
    def is_numeric(self) -> bool:
        return self.kind == NUMERIC

    def conforms(self, value: Any) -> bool:
        if value is None:
            return True
        if self.kind == NOMINAL:
            return value in self.domain
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return False
        if not math.isfinite(value):
            return False
        if self.domain is not None:
            lo, hi = self.domain
            return lo <= value <= hi
        return True

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind, "role": self.role}
        if self.domain is not None:
            d["domain"] = list(self.domain)
        return d


@dataclass(frozen=True)
class ExecutionRecord:
    id: str
    values: Mapping[str, Any]
    parent_job_id: str | None = None

    @property
    def duration(self) -> float | None:
        return self.values.get(OUTCOME)

    def get(self, name: str) -> Any:
        return self.values.get(name)


@dataclass(frozen=True)
class ExecutionLog:
    schema: tuple[FeatureSchema, ...]
    records: tuple[ExecutionRecord, ...]
    level: str = "job"
    _by_name: dict = field(default=None, init=False, repr=False, compare=False)
    _by_id: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "schema", tuple(self.schema))
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "_by_name", {f.name: f for f in self.schema})
        ids = {}
        for i, r in enumerate(self.records):
            ids.setdefault(r.id, i)
        object.__setattr__(self, "_by_id", ids)

    def __len__(self) -> int:
        return len(self.records)

    def feature(self, name: str) -> FeatureSchema:
        return self._by_name[name]

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.schema]

    def index_of(self, record_id: str) -> int:
        try:
            return self._by_id[record_id]
        except KeyError:
            raise KeyError(f"no record with id {record_id!r}") from None

    def record(self, record_id: str) -> ExecutionRecord:
        return self.records[self.index_of(record_id)]

    def __contains__(self, record_id: str) -> bool:
        return record_id in self._by_id

    def subset(self, records: Iterable[ExecutionRecord]) -> "ExecutionLog":
        return ExecutionLog(self.schema, tuple(records), self.level)


def validate_schema(schema: Sequence[FeatureSchema]) -> list[str]:
    problems = []
    seen = set()
    for f in schema:
        if f.name in seen:
            problems.append(f"feature {f.name!r} declared twice")
        seen.add(f.name)
        if f.name in (ID_COLUMN, PARENT_COLUMN):
            problems.append(f"feature name {f.name!r} is reserved")
    outcomes = [f for f in schema if f.role == "outcome"]
    if len(outcomes) != 1:
        problems.append(f"expected exactly one outcome feature, found {len(outcomes)}")
    elif outcomes[0].name != OUTCOME or outcomes[0].kind != NUMERIC:
        problems.append(f"outcome feature must be numeric and named {OUTCOME!r}")
    return problems


def validate_log(log: ExecutionLog) -> list[str]:
    """Check every log invariant; returns diagnostics, never raises."""
    diags = [f"schema: {p}" for p in validate_schema(log.schema)]
    by_name = {f.name: f for f in log.schema}
    seen: set[str] = set()
    for r in log.records:
        if r.id in seen:
            diags.append(f"record {r.id}: duplicate id")
        seen.add(r.id)
        if log.level == "task" and not r.parent_job_id:
            diags.append(f"record {r.id}: task record without parent_job_id")
        for name, value in r.values.items():
            f = by_name.get(name)
            if f is None:
                diags.append(f"record {r.id}: unknown feature {name!r}")
            elif not f.conforms(value):
                diags.append(f"record {r.id}: value {value!r} of {name!r} outside its domain")
        d = r.values.get(OUTCOME)
        if d is None:
            diags.append(f"record {r.id}: missing duration")
        elif isinstance(d, (int, float)) and d <= 0:
            diags.append(f"record {r.id}: duration must be positive")
    return diags


# -- schema file -------------------------------------------------------------

def schema_from_dict(doc: Mapping) -> tuple[list[FeatureSchema], str]:
    if not isinstance(doc, Mapping) or "features" not in doc:
        raise LogError("schema document must be an object with a 'features' list")
    level = doc.get("level", "job")
    if level not in LEVELS:
        raise LogError(f"schema: unknown level {level!r}")
    features = []
    for i, entry in enumerate(doc["features"]):
        try:
            features.append(FeatureSchema(
                name=entry["name"],
                kind=entry["kind"],
                domain=entry.get("domain"),
                role=entry.get("role", "config"),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise LogError(f"schema: bad feature entry #{i}: {exc}") from None
    problems = validate_schema(features)
    if problems:
        raise LogError("invalid schema", problems)
    return features, level


def schema_to_dict(schema: Sequence[FeatureSchema], level: str) -> dict:
    return {"level": level, "features": [f.to_dict() for f in schema]}


def load_schema(path: str | Path) -> tuple[list[FeatureSchema], str]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise LogError(f"cannot read schema {path}: {exc}") from None
    return schema_from_dict(doc)


# -- CSV ---------------------------------------------------------------------

def _parse_cell(f: FeatureSchema, cell: str) -> Any:
    if cell == "":
        return None
    if f.kind == NOMINAL:
        return cell
    try:
        value = float(cell)
    except ValueError:
        raise ValueError(f"{f.name!r}: {cell!r} is not a number") from None
    return value


def _format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_log(stream: io.TextIOBase, schema: Sequence[FeatureSchema], level: str = "job") -> ExecutionLog:
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise LogError("log file is empty") from None
    by_name = {f.name: f for f in schema}
    if ID_COLUMN not in header:
        raise LogError(f"log header lacks the {ID_COLUMN!r} column")
    unknown = [h for h in header if h not in by_name and h not in (ID_COLUMN, PARENT_COLUMN)]
    if unknown:
        raise LogError(f"log header names unknown feature(s): {', '.join(unknown)}")
    if len(set(header)) != len(header):
        raise LogError("log header repeats a column")

    records = []
    diags = []
    seen: set[str] = set()
    for rowno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            diags.append(f"row {rowno}: expected {len(header)} cells, got {len(row)}")
            continue
        cells = dict(zip(header, row))
        rid = cells.pop(ID_COLUMN)
        parent = cells.pop(PARENT_COLUMN, "") or None
        values = {}
        bad = False
        for name, cell in cells.items():
            f = by_name[name]
            try:
                value = _parse_cell(f, cell)
            except ValueError as exc:
                diags.append(f"row {rowno}: {exc}")
                bad = True
                continue
            if not f.conforms(value):
                diags.append(f"row {rowno}: value {cell!r} of {name!r} outside its domain")
                bad = True
            values[name] = value
        if not rid:
            diags.append(f"row {rowno}: empty id")
            bad = True
        elif rid in seen:
            diags.append(f"row {rowno}: duplicate id {rid!r}")
            bad = True
        seen.add(rid)
        d = values.get(OUTCOME)
        if d is None:
            diags.append(f"row {rowno}: missing duration")
            bad = True
        elif d <= 0:
            diags.append(f"row {rowno}: duration must be positive")
            bad = True
        if level == "task" and parent is None:
            diags.append(f"row {rowno}: task row without {PARENT_COLUMN}")
            bad = True
        if not bad:
            for name in by_name:
                values.setdefault(name, None)
            records.append(ExecutionRecord(rid, values, parent))
    if diags:
        raise LogError("log rejected", diags)
    return ExecutionLog(tuple(schema), tuple(records), level)


def write_log(log: ExecutionLog, stream: io.TextIOBase) -> None:
    header = [ID_COLUMN]
    has_parent = log.level == "task" or any(r.parent_job_id for r in log.records)
    if has_parent:
        header.append(PARENT_COLUMN)
    names = log.feature_names
    header.extend(names)
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(header)
    for r in log.records:
        row = [r.id]
        if has_parent:
            row.append(r.parent_job_id or "")
        row.extend(_format_cell(r.values.get(n)) for n in names)
        w.writerow(row)


def load_log(schema_path: str | Path, log_path: str | Path) -> ExecutionLog:
    schema, level = load_schema(schema_path)
    try:
        with open(log_path, newline="", encoding="utf-8") as fh:
            return read_log(fh, schema, level)
    except OSError as exc:
        raise LogError(f"cannot read log {log_path}: {exc}") from None
    except csv.Error as exc:
        raise LogError(f"malformed CSV in {log_path}: {exc}") from None


def save_log(log: ExecutionLog, schema_path: str | Path, log_path: str | Path) -> None:
    Path(schema_path).write_text(
        json.dumps(schema_to_dict(log.schema, log.level), indent=2) + "\n", encoding="utf-8")
    with open(log_path, "w", newline="", encoding="utf-8") as fh:
        write_log(log, fh)
