"""Parsing, validation, serialization, and partitioning of trace tables.

Two interchange formats are supported for each of the four tables: CSV
with a mandatory header row and newline-delimited JSON, both using the
integer enum codes from the model as the on-disk representation. Absent
optional fields are an empty string in CSV and an omitted key in NDJSON,
so absence is always distinguishable from 0.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, List, Optional, Sequence, Tuple

from .model import (
    CollectionEvent,
    CollectionType,
    EventType,
    InstanceEvent,
    InstanceType,
    MachineEvent,
    MachineEventType,
    MICROS_PER_SECOND,
    Resources,
    UsageRecord,
    VerticalScaling,
    is_sentinel,
)

CSV_FORMAT = "csv"
NDJSON_FORMAT = "ndjson"
STRICT = "strict"
PERMISSIVE = "permissive"

MAX_USAGE_WINDOW_US = 300 * MICROS_PER_SECOND


class TableKind(enum.Enum):
    COLLECTION_EVENTS = "collection_events"
    INSTANCE_EVENTS = "instance_events"
    INSTANCE_USAGE = "instance_usage"
    MACHINE_EVENTS = "machine_events"

    @property
    def stem(self) -> str:
        return self.value


class ParseError(Exception):
    """A strict-mode parse failure, carrying the offending line number."""

    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class RowError(Exception):
    """Internal: one malformed row, converted to a rejection entry."""


@dataclass(frozen=True)
class Rejection:
    line: int
    reason: str


@dataclass(frozen=True)
class IngestOptions:
    format: str = CSV_FORMAT
    strictness: str = PERMISSIVE
    partition_count: int = 1

    def __post_init__(self) -> None:
        if self.format not in (CSV_FORMAT, NDJSON_FORMAT):
            raise ValueError(f"unknown format: {self.format}")
        if self.strictness not in (STRICT, PERMISSIVE):
            raise ValueError(f"unknown strictness: {self.strictness}")
        if self.partition_count < 1:
            raise ValueError("partition_count must be >= 1")


@dataclass(frozen=True)
class TableProvenance:
    source: str
    accepted: int
    rejected: int


@dataclass
class TraceBundle:
    """The four parsed tables plus derived trace time bounds."""

    collection_events: List[CollectionEvent]
    instance_events: List[InstanceEvent]
    instance_usage: List[UsageRecord]
    machine_events: List[MachineEvent]
    trace_start: int
    trace_end: int
    provenance: dict = field(default_factory=dict)

    @property
    def horizon_us(self) -> int:
        return self.trace_end - self.trace_start


# --- column converters -------------------------------------------------

def _req_int(raw, name: str) -> int:
    if raw is None or raw == "":
        raise RowError(f"missing {name}")
    if isinstance(raw, bool) or not isinstance(raw, (int, str)):
        raise RowError(f"{name} must be an integer")
    try:
        return int(raw)
    except ValueError:
        raise RowError(f"{name} must be an integer") from None


def _opt_int(raw, name: str) -> Optional[int]:
    if raw is None or raw == "":
        return None
    return _req_int(raw, name)


def _req_float(raw, name: str) -> float:
    if raw is None or raw == "":
        raise RowError(f"missing {name}")
    if isinstance(raw, bool) or not isinstance(raw, (int, float, str)):
        raise RowError(f"{name} must be a number")
    try:
        value = float(raw)
    except ValueError:
        raise RowError(f"{name} must be a number") from None
    if math.isnan(value) or math.isinf(value):
        raise RowError(f"{name} must be finite")
    return value


def _time(raw, name: str = "time") -> int:
    value = _req_int(raw, name)
    if value < 0:
        raise RowError("negative timestamp")
    return value


def _identifier(raw, name: str) -> int:
    value = _req_int(raw, name)
    if value <= 0:
        raise RowError(f"{name} must be a positive identifier")
    return value


def _opt_identifier(raw, name: str) -> Optional[int]:
    if raw is None or raw == "":
        return None
    return _identifier(raw, name)


def _enum_code(raw, enum_cls, name: str):
    value = _req_int(raw, name)
    try:
        return enum_cls(value)
    except ValueError:
        raise RowError("enum out of range") from None


def _resource(raw_cpus, raw_memory, name: str) -> Resources:
    cpus = _req_float(raw_cpus, f"{name}_cpus")
    memory = _req_float(raw_memory, f"{name}_memory")
    if cpus < 0 or memory < 0:
        raise RowError(f"{name} components must be non-negative")
    return Resources(cpus, memory)


# --- per-table schemas --------------------------------------------------

def _build_collection_event(d: dict) -> CollectionEvent:
    return CollectionEvent(
        time=_time(d.get("time")),
        collection_id=_identifier(d.get("collection_id"), "collection_id"),
        event_type=_enum_code(d.get("event_type"), EventType, "event_type"),
        collection_type=_enum_code(
            d.get("collection_type"), CollectionType, "collection_type"
        ),
        priority=_req_int(d.get("priority"), "priority"),
        alloc_collection_id=_opt_identifier(
            d.get("alloc_collection_id"), "alloc_collection_id"
        ),
        parent_collection_id=_opt_identifier(
            d.get("parent_collection_id"), "parent_collection_id"
        ),
        max_per_machine=_opt_positive(d.get("max_per_machine"), "max_per_machine"),
        max_per_switch=_opt_positive(d.get("max_per_switch"), "max_per_switch"),
        vertical_scaling=_enum_code(
            d.get("vertical_scaling", 0), VerticalScaling, "vertical_scaling"
        ),
    )


def _opt_positive(raw, name: str) -> Optional[int]:
    value = _opt_int(raw, name)
    if value is not None and value < 1:
        raise RowError(f"{name} must be positive")
    return value


def _build_instance_event(d: dict) -> InstanceEvent:
    index = _req_int(d.get("instance_index"), "instance_index")
    if index < 0:
        raise RowError("instance_index must be non-negative")
    return InstanceEvent(
        time=_time(d.get("time")),
        collection_id=_identifier(d.get("collection_id"), "collection_id"),
        instance_index=index,
        event_type=_enum_code(d.get("event_type"), EventType, "event_type"),
        instance_type=_enum_code(d.get("instance_type"), InstanceType, "instance_type"),
        priority=_req_int(d.get("priority"), "priority"),
        machine_id=_opt_identifier(d.get("machine_id"), "machine_id"),
        alloc_collection_id=_opt_identifier(
            d.get("alloc_collection_id"), "alloc_collection_id"
        ),
        resource_request=_resource(
            d.get("resource_request_cpus"),
            d.get("resource_request_memory"),
            "resource_request",
        ),
    )


def _build_usage_record(d: dict) -> UsageRecord:
    start = _time(d.get("start_time"), "start_time")
    end = _time(d.get("end_time"), "end_time")
    if start >= end:
        raise RowError("start_time must precede end_time")
    if end - start > MAX_USAGE_WINDOW_US:
        raise RowError("usage record longer than one measurement window")
    index = _req_int(d.get("instance_index"), "instance_index")
    if index < 0:
        raise RowError("instance_index must be non-negative")
    return UsageRecord(
        start_time=start,
        end_time=end,
        collection_id=_identifier(d.get("collection_id"), "collection_id"),
        instance_index=index,
        machine_id=_identifier(d.get("machine_id"), "machine_id"),
        average_usage=_resource(
            d.get("average_usage_cpus"), d.get("average_usage_memory"), "average_usage"
        ),
    )


def _build_machine_event(d: dict) -> MachineEvent:
    return MachineEvent(
        time=_time(d.get("time")),
        machine_id=_identifier(d.get("machine_id"), "machine_id"),
        event_type=_enum_code(d.get("event_type"), MachineEventType, "event_type"),
        capacity=_resource(d.get("capacity_cpus"), d.get("capacity_memory"), "capacity"),
    )


_BUILDERS: dict = {
    TableKind.COLLECTION_EVENTS: _build_collection_event,
    TableKind.INSTANCE_EVENTS: _build_instance_event,
    TableKind.INSTANCE_USAGE: _build_usage_record,
    TableKind.MACHINE_EVENTS: _build_machine_event,
}

# Canonical CSV column order per table; structs flatten to two columns.
TABLE_COLUMNS: dict = {
    TableKind.COLLECTION_EVENTS: (
        "time",
        "collection_id",
        "event_type",
        "collection_type",
        "priority",
        "alloc_collection_id",
        "parent_collection_id",
        "max_per_machine",
        "max_per_switch",
        "vertical_scaling",
    ),
    TableKind.INSTANCE_EVENTS: (
        "time",
        "collection_id",
        "instance_index",
        "event_type",
        "instance_type",
        "priority",
        "machine_id",
        "alloc_collection_id",
        "resource_request_cpus",
        "resource_request_memory",
    ),
    TableKind.INSTANCE_USAGE: (
        "start_time",
        "end_time",
        "collection_id",
        "instance_index",
        "machine_id",
        "average_usage_cpus",
        "average_usage_memory",
    ),
    TableKind.MACHINE_EVENTS: (
        "time",
        "machine_id",
        "event_type",
        "capacity_cpus",
        "capacity_memory",
    ),
}

# NDJSON nests each struct under its own key with cpus/memory members.
_STRUCT_PREFIXES = ("resource_request", "average_usage", "capacity")


def _flatten_json_object(obj: dict) -> dict:
    flat = {}
    for key, value in obj.items():
        if key in _STRUCT_PREFIXES:
            if not isinstance(value, dict):
                raise RowError(f"{key} must be an object")
            for member, member_value in value.items():
                flat[f"{key}_{member}"] = member_value
        else:
            flat[key] = value
    return flat


def parse_table(
    kind: TableKind,
    lines: Iterable[str],
    options: IngestOptions,
) -> Tuple[list, List[Rejection]]:
    """Parse one table from text lines.

    Returns all well-formed records in input order plus a rejection log of
    (line number, reason) for malformed lines. In strict mode the first
    rejection raises ParseError instead. Line numbers are physical file
    lines, so the CSV header is line 1.
    """
    if options.format == CSV_FORMAT:
        return _parse_csv(kind, lines, options)
    return _parse_ndjson(kind, lines, options)


def _parse_csv(kind, lines, options):
    build = _BUILDERS[kind]
    known = set(TABLE_COLUMNS[kind])
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(1, "missing header row") from None
    header = [h.strip() for h in header]
    unknown = [h for h in header if h not in known]
    if unknown and options.strictness == STRICT:
        raise ParseError(1, f"unknown header column: {unknown[0]}")
    missing = [c for c in TABLE_COLUMNS[kind] if c not in header]
    if missing:
        raise ParseError(1, f"missing required column: {missing[0]}")
    positions = [(name, header.index(name)) for name in TABLE_COLUMNS[kind]]
    records = []
    rejections: List[Rejection] = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            if len(row) != len(header):
                raise RowError("wrong field count")
            d = {name: row[i] for name, i in positions}
            records.append(build(d))
        except RowError as exc:
            if options.strictness == STRICT:
                raise ParseError(line_no, str(exc)) from None
            rejections.append(Rejection(line_no, str(exc)))
    return records, rejections


def _parse_ndjson(kind, lines, options):
    build = _BUILDERS[kind]
    known = set(TABLE_COLUMNS[kind]) | set(_STRUCT_PREFIXES)
    records = []
    rejections: List[Rejection] = []
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                raise RowError("invalid JSON") from None
            if not isinstance(obj, dict):
                raise RowError("line is not a JSON object")
            if options.strictness == STRICT:
                for key in obj:
                    if key not in known:
                        raise RowError(f"unknown field: {key}")
            records.append(build(_flatten_json_object(obj)))
        except RowError as exc:
            if options.strictness == STRICT:
                raise ParseError(line_no, str(exc)) from None
            rejections.append(Rejection(line_no, str(exc)))
    return records, rejections


# --- serialization ------------------------------------------------------

def _record_cells(record) -> dict:
    """Flat field dict for one record; absent optionals map to None."""
    if isinstance(record, CollectionEvent):
        return {
            "time": record.time,
            "collection_id": record.collection_id,
            "event_type": int(record.event_type),
            "collection_type": int(record.collection_type),
            "priority": record.priority,
            "alloc_collection_id": record.alloc_collection_id,
            "parent_collection_id": record.parent_collection_id,
            "max_per_machine": record.max_per_machine,
            "max_per_switch": record.max_per_switch,
            "vertical_scaling": int(record.vertical_scaling),
        }
    if isinstance(record, InstanceEvent):
        return {
            "time": record.time,
            "collection_id": record.collection_id,
            "instance_index": record.instance_index,
            "event_type": int(record.event_type),
            "instance_type": int(record.instance_type),
            "priority": record.priority,
            "machine_id": record.machine_id,
            "alloc_collection_id": record.alloc_collection_id,
            "resource_request_cpus": record.resource_request.cpus,
            "resource_request_memory": record.resource_request.memory,
        }
    if isinstance(record, UsageRecord):
        return {
            "start_time": record.start_time,
            "end_time": record.end_time,
            "collection_id": record.collection_id,
            "instance_index": record.instance_index,
            "machine_id": record.machine_id,
            "average_usage_cpus": record.average_usage.cpus,
            "average_usage_memory": record.average_usage.memory,
        }
    if isinstance(record, MachineEvent):
        return {
            "time": record.time,
            "machine_id": record.machine_id,
            "event_type": int(record.event_type),
            "capacity_cpus": record.capacity.cpus,
            "capacity_memory": record.capacity.memory,
        }
    raise TypeError(f"not a trace record: {type(record)!r}")


def _cell_text(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_table_csv(records: Sequence, kind: TableKind, stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    columns = TABLE_COLUMNS[kind]
    writer.writerow(columns)
    for record in records:
        cells = _record_cells(record)
        writer.writerow([_cell_text(cells[c]) for c in columns])


def ndjson_line(record) -> str:
    cells = _record_cells(record)
    obj: dict = {}
    for key, value in cells.items():
        if value is None:
            continue
        handled = False
        for prefix in _STRUCT_PREFIXES:
            if key.startswith(prefix + "_"):
                obj.setdefault(prefix, {})[key[len(prefix) + 1:]] = value
                handled = True
                break
        if not handled:
            obj[key] = value
    return json.dumps(obj, separators=(",", ":"))


def write_table_ndjson(records: Sequence, kind: TableKind, stream) -> None:
    for record in records:
        stream.write(ndjson_line(record))
        stream.write("\n")


def write_rejections(rejections: Sequence[Rejection], stream) -> None:
    for r in rejections:
        stream.write(json.dumps({"line": r.line, "reason": r.reason}))
        stream.write("\n")


# --- partitioning -------------------------------------------------------

COLLECTION_KEY = "collection"
MACHINE_KEY = "machine"

_M64 = (1 << 64) - 1


def mix64(x: int) -> int:
    """SplitMix64 finalizer: stable, well-spread integer hash."""
    x &= _M64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _M64
    return x ^ (x >> 31)


def _partition_key_value(record, key: str) -> int:
    if key == COLLECTION_KEY:
        return record.collection_id
    if key == MACHINE_KEY:
        machine_id = record.machine_id
        if machine_id is None:
            raise ValueError("record has no machine_id to partition on")
        return machine_id
    raise ValueError(f"unknown partition key: {key}")


def partition_by_key(records: Sequence, key: str, n: int) -> List[list]:
    """Split records into n groups by a stable hash of their key field.

    All records sharing a key land in the same group and keep their input
    order; the assignment depends only on (key value, n), never on record
    order or the process running it.
    """
    if n < 1:
        raise ValueError("partition count must be >= 1")
    if n == 1:
        return [list(records)]
    groups: List[list] = [[] for _ in range(n)]
    for record in records:
        groups[mix64(_partition_key_value(record, key)) % n].append(record)
    return groups


# --- bundle assembly ----------------------------------------------------

def assemble_bundle(
    collection_events: List[CollectionEvent],
    instance_events: List[InstanceEvent],
    instance_usage: List[UsageRecord],
    machine_events: List[MachineEvent],
    provenance: Optional[dict] = None,
) -> TraceBundle:
    """Combine parsed tables, deriving trace bounds from the data.

    Bounds are the min and max over all non-sentinel timestamps in any
    table. A trace with no non-sentinel timestamps, or with a single
    instant (start == end), carries no analyzable horizon and is rejected.
    """
    lo = None
    hi = None
    timestamp_streams = (
        (e.time for e in collection_events),
        (e.time for e in instance_events),
        (u.start_time for u in instance_usage),
        (u.end_time for u in instance_usage),
        (m.time for m in machine_events),
    )
    for stream in timestamp_streams:
        for t in stream:
            if is_sentinel(t):
                continue
            if lo is None or t < lo:
                lo = t
            if hi is None or t > hi:
                hi = t
    if lo is None:
        raise ValueError("no non-sentinel timestamps: cannot derive trace bounds")
    if lo == hi:
        raise ValueError(f"degenerate trace bounds: start == end == {lo}")
    return TraceBundle(
        collection_events=collection_events,
        instance_events=instance_events,
        instance_usage=instance_usage,
        machine_events=machine_events,
        trace_start=lo,
        trace_end=hi,
        provenance=provenance or {},
    )


_TABLE_RECORDS: dict = {
    TableKind.COLLECTION_EVENTS: "collection_events",
    TableKind.INSTANCE_EVENTS: "instance_events",
    TableKind.INSTANCE_USAGE: "instance_usage",
    TableKind.MACHINE_EVENTS: "machine_events",
}


def read_bundle(directory: Path, options: IngestOptions) -> TraceBundle:
    """Read the four table files from a directory and assemble a bundle."""
    directory = Path(directory)
    tables = {}
    provenance = {}
    for kind in TableKind:
        path = directory / f"{kind.stem}.{options.format}"
        if not path.exists():
            raise FileNotFoundError(f"missing table file: {path}")
        with open(path, "r", encoding="utf-8", newline="") as fh:
            records, rejections = parse_table(kind, fh, options)
        tables[kind] = records
        provenance[kind.stem] = TableProvenance(
            source=str(path), accepted=len(records), rejected=len(rejections)
        )
    return assemble_bundle(
        tables[TableKind.COLLECTION_EVENTS],
        tables[TableKind.INSTANCE_EVENTS],
        tables[TableKind.INSTANCE_USAGE],
        tables[TableKind.MACHINE_EVENTS],
        provenance,
    )


def bundle_records(bundle: TraceBundle, kind: TableKind) -> list:
    return getattr(bundle, _TABLE_RECORDS[kind])


def bundle_digest(bundle: TraceBundle) -> str:
    """Content digest of the four tables in canonical NDJSON form."""
    h = hashlib.sha256()
    for kind in TableKind:
        h.update(kind.stem.encode())
        h.update(b"\n")
        for record in bundle_records(bundle, kind):
            h.update(ndjson_line(record).encode())
            h.update(b"\n")
    return h.hexdigest()
