"""Snapshot-based table format.

A table is a chain of immutable snapshots. Each snapshot owns one
complete manifest listing every data file that is live at that snapshot
(plus the files it removed, kept for history). Table metadata is a single
JSON object naming all schemas, partition specs, snapshots, and the
current pointers; a new metadata object is written for every change and
the catalog tree points at exactly one per table.

Schema evolution is by field id: adds allocate a fresh id, renames keep
the id, drops forget the id without touching data files. Partition spec
evolution appends a new spec; existing files keep the spec they were
written under, so one table can hold files from several layouts at once.
"""

from __future__ import annotations

import json
import re
import uuid as uuid_mod
from dataclasses import dataclass, replace
from typing import Any, Iterable, Mapping, Sequence

from . import canonical
from .errors import (
    CorruptMetadata,
    DropOfPartitionSource,
    DuplicateColumn,
    SchemaViolation,
    UnknownColumn,
    UnknownSnapshot,
)
from .model import COLUMN_TYPES, ColumnStats, DataFile, Field, Schema
from .partitioning import (
    PartitionSpec,
    Transform,
    build_spec,
    tag_partition,
    untag_partition,
)
from .store import ObjectStore

FORMAT_VERSION = 1

SUMMARY_KEYS = ("added_files", "deleted_files", "added_rows", "deleted_rows")


# --- snapshots ---------------------------------------------------------------

@dataclass(frozen=True)
class Snapshot:
    snapshot_id: int
    parent_id: int | None
    timestamp_ms: int
    operation: str
    manifest_key: str
    summary: tuple[int, int, int, int]  # added_files, deleted_files, added_rows, deleted_rows

    def to_dict(self) -> dict[str, Any]:
        return {
            "snapshot_id": self.snapshot_id,
            "parent_id": self.parent_id,
            "timestamp_ms": self.timestamp_ms,
            "operation": self.operation,
            "manifest_key": self.manifest_key,
            "summary": dict(zip(SUMMARY_KEYS, self.summary)),
        }

    @staticmethod
    def from_dict(d: Mapping[str, Any]) -> "Snapshot":
        try:
            summary = tuple(int(d["summary"][k]) for k in SUMMARY_KEYS)
            return Snapshot(
                snapshot_id=int(d["snapshot_id"]),
                parent_id=None if d["parent_id"] is None else int(d["parent_id"]),
                timestamp_ms=int(d["timestamp_ms"]),
                operation=str(d["operation"]),
                manifest_key=str(d["manifest_key"]),
                summary=summary,  # type: ignore[arg-type]
            )
        except KeyError as exc:
            raise CorruptMetadata(f"snapshot missing key {exc}") from exc


# --- table metadata ------------------------------------------------------------

@dataclass(frozen=True)
class TableMetadata:
    table_uuid: str
    location: str
    last_column_id: int
    schemas: tuple[Schema, ...]
    current_schema_id: int
    partition_specs: tuple[PartitionSpec, ...]
    current_spec_id: int
    snapshots: tuple[Snapshot, ...] = ()
    current_snapshot_id: int | None = None
    snapshot_log: tuple[tuple[int, int], ...] = ()  # (timestamp_ms, snapshot_id)
    properties: tuple[tuple[str, str], ...] = ()
    format_version: int = FORMAT_VERSION

    def __post_init__(self) -> None:
        self._validate()

    def _validate(self) -> None:
        if self.format_version != FORMAT_VERSION:
            raise CorruptMetadata(f"unsupported format version {self.format_version}")
        schema_ids = {s.schema_id for s in self.schemas}
        if len(schema_ids) != len(self.schemas):
            raise CorruptMetadata("duplicate schema ids")
        if self.current_schema_id not in schema_ids:
            raise CorruptMetadata(
                f"current_schema_id {self.current_schema_id} not among schemas"
            )
        spec_ids = {s.spec_id for s in self.partition_specs}
        if len(spec_ids) != len(self.partition_specs):
            raise CorruptMetadata("duplicate partition spec ids")
        if self.current_spec_id not in spec_ids:
            raise CorruptMetadata(
                f"current_spec_id {self.current_spec_id} not among specs"
            )
        for s in self.schemas:
            for f in s.fields:
                if f.field_id > self.last_column_id:
                    raise CorruptMetadata(
                        f"field id {f.field_id} exceeds last_column_id"
                        f" {self.last_column_id}"
                    )
        snap_ids = set()
        for snap in self.snapshots:
            if snap.snapshot_id in snap_ids:
                raise CorruptMetadata(f"duplicate snapshot id {snap.snapshot_id}")
            if snap.parent_id is not None:
                if snap.parent_id >= snap.snapshot_id:
                    raise CorruptMetadata(
                        f"snapshot {snap.snapshot_id} has parent {snap.parent_id}"
                        " not older than itself"
                    )
                if snap.parent_id not in snap_ids:
                    raise CorruptMetadata(
                        f"snapshot {snap.snapshot_id} parent {snap.parent_id} missing"
                    )
            snap_ids.add(snap.snapshot_id)
        if self.current_snapshot_id is not None and self.current_snapshot_id not in snap_ids:
            raise CorruptMetadata(
                f"current_snapshot_id {self.current_snapshot_id} not among snapshots"
            )
        prev_ts = None
        for ts, sid in self.snapshot_log:
            if sid not in snap_ids:
                raise CorruptMetadata(f"snapshot_log references missing snapshot {sid}")
            if prev_ts is not None and ts < prev_ts:
                raise CorruptMetadata("snapshot_log timestamps go backwards")
            prev_ts = ts

    # --- lookups -----------------------------------------------------------

    @property
    def current_schema(self) -> Schema:
        return self.schema_by_id(self.current_schema_id)

    @property
    def current_spec(self) -> PartitionSpec:
        return self.spec_by_id(self.current_spec_id)

    def schema_by_id(self, schema_id: int) -> Schema:
        for s in self.schemas:
            if s.schema_id == schema_id:
                return s
        raise CorruptMetadata(f"no schema with id {schema_id}")

    def spec_by_id(self, spec_id: int) -> PartitionSpec:
        for s in self.partition_specs:
            if s.spec_id == spec_id:
                return s
        raise CorruptMetadata(f"no partition spec with id {spec_id}")

    def snapshot_by_id(self, snapshot_id: int) -> Snapshot:
        for s in self.snapshots:
            if s.snapshot_id == snapshot_id:
                return s
        raise UnknownSnapshot(f"no snapshot with id {snapshot_id}")

    @property
    def current_snapshot(self) -> Snapshot | None:
        if self.current_snapshot_id is None:
            return None
        return self.snapshot_by_id(self.current_snapshot_id)

    def property_map(self) -> dict[str, str]:
        return dict(self.properties)

    # --- serialization -------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "table_uuid": self.table_uuid,
            "format_version": self.format_version,
            "location": self.location,
            "last_column_id": self.last_column_id,
            "schemas": [s.to_dict() for s in self.schemas],
            "current_schema_id": self.current_schema_id,
            "partition_specs": [s.to_dict() for s in self.partition_specs],
            "current_spec_id": self.current_spec_id,
            "snapshots": [s.to_dict() for s in self.snapshots],
            "current_snapshot_id": self.current_snapshot_id,
            "snapshot_log": [
                {"timestamp_ms": ts, "snapshot_id": sid} for ts, sid in self.snapshot_log
            ],
            "properties": {k: v for k, v in self.properties},
        }

    @staticmethod
    def from_dict(d: Mapping[str, Any]) -> "TableMetadata":
        try:
            return TableMetadata(
                table_uuid=str(d["table_uuid"]),
                format_version=int(d["format_version"]),
                location=str(d["location"]),
                last_column_id=int(d["last_column_id"]),
                schemas=tuple(Schema.from_dict(s) for s in d["schemas"]),
                current_schema_id=int(d["current_schema_id"]),
                partition_specs=tuple(
                    PartitionSpec.from_dict(s) for s in d["partition_specs"]
                ),
                current_spec_id=int(d["current_spec_id"]),
                snapshots=tuple(Snapshot.from_dict(s) for s in d["snapshots"]),
                current_snapshot_id=(
                    None
                    if d["current_snapshot_id"] is None
                    else int(d["current_snapshot_id"])
                ),
                snapshot_log=tuple(
                    (int(e["timestamp_ms"]), int(e["snapshot_id"]))
                    for e in d["snapshot_log"]
                ),
                properties=tuple(sorted(d["properties"].items())),
            )
        except KeyError as exc:
            raise CorruptMetadata(f"table metadata missing key {exc}") from exc
        except (TypeError, AttributeError) as exc:
            raise CorruptMetadata(f"malformed table metadata: {exc}") from exc


# --- schema text -----------------------------------------------------------------

_SCHEMA_PART = re.compile(r"\s*(\w+)\s*:\s*(\w+)\s*(?::\s*(required)\s*)?")


def parse_schema_text(text: str) -> list[tuple[str, str, bool]]:
    """Parse "name:type[:required]" comma-separated column definitions."""
    cols: list[tuple[str, str, bool]] = []
    if not text.strip():
        raise SchemaViolation("empty schema text")
    for piece in text.split(","):
        m = _SCHEMA_PART.fullmatch(piece)
        if not m:
            raise SchemaViolation(f"bad column definition {piece.strip()!r}")
        name, col_type, required = m.group(1), m.group(2), bool(m.group(3))
        if col_type not in COLUMN_TYPES:
            raise SchemaViolation(f"unknown column type {col_type!r}")
        cols.append((name, col_type, required))
    return cols


def new_table(
    name: str,
    columns: Sequence[tuple[str, str, bool]],
    partition: Sequence[tuple[str, Transform]] = (),
    table_uuid: str | None = None,
) -> TableMetadata:
    """Fresh metadata for an empty table named by the catalog."""
    fields = tuple(
        Field(field_id=i + 1, name=n, type=t, required=r)
        for i, (n, t, r) in enumerate(columns)
    )
    schema = Schema(schema_id=1, fields=fields)
    spec = build_spec(schema, list(partition), spec_id=0)
    return TableMetadata(
        table_uuid=table_uuid or str(uuid_mod.uuid4()),
        location=f"tables/{name}",
        last_column_id=len(fields),
        schemas=(schema,),
        current_schema_id=1,
        partition_specs=(spec,),
        current_spec_id=0,
    )


# --- schema evolution --------------------------------------------------------------

@dataclass(frozen=True)
class AddColumn:
    name: str
    type: str
    # new columns are always optional: existing files have no values for them


@dataclass(frozen=True)
class DropColumn:
    name: str


@dataclass(frozen=True)
class RenameColumn:
    name: str
    new_name: str


SchemaChange = AddColumn | DropColumn | RenameColumn


def evolve_schema(meta: TableMetadata, changes: Sequence[SchemaChange]) -> TableMetadata:
    """Apply schema changes, appending a fresh schema and making it current."""
    if not changes:
        raise SchemaViolation("no schema changes given")
    fields = list(meta.current_schema.fields)
    last_column_id = meta.last_column_id
    for change in changes:
        names = [f.name for f in fields]
        if isinstance(change, AddColumn):
            if change.type not in COLUMN_TYPES:
                raise SchemaViolation(f"unknown column type {change.type!r}")
            if change.name in names:
                raise DuplicateColumn(f"column {change.name!r} already exists")
            last_column_id += 1
            fields.append(
                Field(
                    field_id=last_column_id,
                    name=change.name,
                    type=change.type,
                    required=False,
                )
            )
        elif isinstance(change, RenameColumn):
            if change.name not in names:
                raise UnknownColumn(f"no column named {change.name!r}")
            if change.new_name in names:
                raise DuplicateColumn(f"column {change.new_name!r} already exists")
            i = names.index(change.name)
            fields[i] = replace(fields[i], name=change.new_name)
        elif isinstance(change, DropColumn):
            if change.name not in names:
                raise UnknownColumn(f"no column named {change.name!r}")
            i = names.index(change.name)
            if fields[i].field_id in meta.current_spec.source_field_ids:
                raise DropOfPartitionSource(
                    f"column {change.name!r} feeds the current partition spec"
                )
            del fields[i]
        else:
            raise SchemaViolation(f"unknown schema change {change!r}")
    if not fields:
        raise SchemaViolation("cannot drop every column")
    new_id = max(s.schema_id for s in meta.schemas) + 1
    schema = Schema(schema_id=new_id, fields=tuple(fields))
    return replace(
        meta,
        schemas=meta.schemas + (schema,),
        current_schema_id=new_id,
        last_column_id=last_column_id,
    )


def evolve_partition_spec(
    meta: TableMetadata, parts: Sequence[tuple[str, Transform]]
) -> TableMetadata:
    """Append a new partition spec built against the current schema."""
    new_id = max(s.spec_id for s in meta.partition_specs) + 1
    spec = build_spec(meta.current_schema, list(parts), spec_id=new_id)
    return replace(
        meta,
        partition_specs=meta.partition_specs + (spec,),
        current_spec_id=new_id,
    )


# --- manifests ------------------------------------------------------------------

STATUS_ORDER = ("ADDED", "EXISTING", "DELETED")


def _data_file_to_dict(df: DataFile) -> dict[str, Any]:
    stats = []
    for s in df.stats:
        entry: dict[str, Any] = {"field_id": s.field_id, "null_count": s.null_count}
        if s.min is not None:
            entry["min"] = canonical.tag_value(s.min, canonical.infer_type(s.min))
        if s.max is not None:
            entry["max"] = canonical.tag_value(s.max, canonical.infer_type(s.max))
        stats.append(entry)
    return {
        "key": df.key,
        "spec_id": df.spec_id,
        "partition": tag_partition(df.partition),
        "record_count": df.record_count,
        "file_size_bytes": df.file_size_bytes,
        "stats": stats,
    }


def _data_file_from_dict(d: Mapping[str, Any]) -> DataFile:
    try:
        stats = tuple(
            ColumnStats(
                field_id=int(s["field_id"]),
                min=canonical.untag_value(s.get("min")),
                max=canonical.untag_value(s.get("max")),
                null_count=int(s["null_count"]),
            )
            for s in d["stats"]
        )
        return DataFile(
            key=str(d["key"]),
            spec_id=int(d["spec_id"]),
            partition=untag_partition(d["partition"]),
            record_count=int(d["record_count"]),
            file_size_bytes=int(d["file_size_bytes"]),
            stats=stats,
        )
    except KeyError as exc:
        raise CorruptMetadata(f"manifest data file missing key {exc}") from exc


def write_manifest(
    store: ObjectStore,
    location: str,
    added: Sequence[DataFile],
    existing: Sequence[DataFile],
    deleted: Sequence[DataFile],
) -> str:
    """Store one complete manifest; returns its object key."""
    entries = []
    for status, files in zip(STATUS_ORDER, (added, existing, deleted)):
        for df in sorted(files, key=lambda f: f.key):
            entries.append({"status": status, "data_file": _data_file_to_dict(df)})
    key = f"{location}/metadata/{canonical.new_token()}.manifest.json"
    store.put(key, canonical.canonical_json({"entries": entries}))
    return key


def read_manifest(store: ObjectStore, key: str) -> dict[str, list[DataFile]]:
    """Load a manifest into {status: [DataFile...]} with ADDED/EXISTING/DELETED keys."""
    try:
        doc = json.loads(store.get(key).decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise CorruptMetadata(f"manifest {key} is not valid JSON: {exc}") from exc
    out: dict[str, list[DataFile]] = {s: [] for s in STATUS_ORDER}
    for entry in doc.get("entries", []):
        status = entry.get("status")
        if status not in out:
            raise CorruptMetadata(f"manifest {key} has bad status {status!r}")
        out[status].append(_data_file_from_dict(entry["data_file"]))
    return out


def live_files(
    store: ObjectStore, meta: TableMetadata, snapshot_id: int | None = None
) -> list[DataFile]:
    """Data files live at a snapshot (default: current), sorted by key."""
    sid = meta.current_snapshot_id if snapshot_id is None else snapshot_id
    if sid is None:
        return []
    snap = meta.snapshot_by_id(sid)
    manifest = read_manifest(store, snap.manifest_key)
    files = manifest["ADDED"] + manifest["EXISTING"]
    files.sort(key=lambda f: f.key)
    return files


# --- snapshot production -------------------------------------------------------------

def build_snapshot(
    store: ObjectStore,
    meta: TableMetadata,
    added: Sequence[DataFile],
    removed_keys: Iterable[str],
    operation: str,
    timestamp_ms: int,
) -> TableMetadata:
    """Produce the successor metadata with one new snapshot applied.

    removed_keys must all be live at the current snapshot; added files
    must not collide with live keys.
    """
    removed_set = set(removed_keys)
    prev_live = live_files(store, meta)
    prev_by_key = {f.key: f for f in prev_live}
    missing = removed_set - set(prev_by_key)
    if missing:
        raise CorruptMetadata(f"removing files that are not live: {sorted(missing)}")
    for df in added:
        if df.key in prev_by_key:
            raise CorruptMetadata(f"added file {df.key} is already live")
    existing = [f for f in prev_live if f.key not in removed_set]
    deleted = [prev_by_key[k] for k in sorted(removed_set)]
    manifest_key = write_manifest(store, meta.location, added, existing, deleted)
    sid = max((s.snapshot_id for s in meta.snapshots), default=0) + 1
    snap = Snapshot(
        snapshot_id=sid,
        parent_id=meta.current_snapshot_id,
        timestamp_ms=timestamp_ms,
        operation=operation,
        manifest_key=manifest_key,
        summary=(
            len(added),
            len(deleted),
            sum(f.record_count for f in added),
            sum(f.record_count for f in deleted),
        ),
    )
    return replace(
        meta,
        snapshots=meta.snapshots + (snap,),
        current_snapshot_id=sid,
        snapshot_log=meta.snapshot_log + ((timestamp_ms, sid),),
    )


def set_current_snapshot(
    meta: TableMetadata, snapshot_id: int, timestamp_ms: int
) -> TableMetadata:
    """Move the current pointer to an existing snapshot (rollback).

    No new snapshot is created; history is preserved and the move is
    recorded in the snapshot log.
    """
    meta.snapshot_by_id(snapshot_id)  # raises UnknownSnapshot
    return replace(
        meta,
        current_snapshot_id=snapshot_id,
        snapshot_log=meta.snapshot_log + ((timestamp_ms, snapshot_id),),
    )


def drop_snapshots(meta: TableMetadata, drop_ids: Iterable[int]) -> TableMetadata:
    """Remove snapshots from history, remapping orphaned parent pointers.

    The current snapshot cannot be dropped. Survivors whose parent is
    dropped point to the nearest surviving ancestor. Log entries for
    dropped snapshots disappear.
    """
    drop = set(drop_ids)
    if not drop:
        return meta
    if meta.current_snapshot_id in drop:
        raise UnknownSnapshot("cannot drop the current snapshot")
    by_id = {s.snapshot_id: s for s in meta.snapshots}
    for sid in drop:
        if sid not in by_id:
            raise UnknownSnapshot(f"no snapshot with id {sid}")

    def surviving_ancestor(pid: int | None) -> int | None:
        while pid is not None and pid in drop:
            pid = by_id[pid].parent_id
        return pid

    survivors = tuple(
        replace(s, parent_id=surviving_ancestor(s.parent_id))
        for s in meta.snapshots
        if s.snapshot_id not in drop
    )
    log = tuple((ts, sid) for ts, sid in meta.snapshot_log if sid not in drop)
    return replace(meta, snapshots=survivors, snapshot_log=log)


# --- metadata objects ---------------------------------------------------------------

def store_metadata(store: ObjectStore, meta: TableMetadata) -> str:
    """Write metadata as a new immutable object; returns its key."""
    key = f"{meta.location}/metadata/{canonical.new_token()}.json"
    store.put(key, canonical.canonical_json(meta.to_dict()))
    return key


def load_metadata(store: ObjectStore, key: str) -> TableMetadata:
    try:
        doc = json.loads(store.get(key).decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise CorruptMetadata(f"metadata {key} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise CorruptMetadata(f"metadata {key} is not a JSON object")
    return TableMetadata.from_dict(doc)


def data_file_key(location: str) -> str:
    return f"{location}/data/{canonical.new_token()}.mlf"


def write_data_file(
    store: ObjectStore,
    location: str,
    rows: Sequence[Mapping[str, Any]],
    schema: Schema,
    spec_id: int,
    partition: tuple[Any, ...],
) -> DataFile:
    """Encode normalized rows, store the object, return its descriptor."""
    from .filefmt import column_stats, encode_data_file

    if not rows:
        raise ValueError("data files must hold at least one row")
    data = encode_data_file(rows, schema)
    stats = tuple(
        column_stats([r[f.name] for r in rows], f.field_id, f.type)
        for f in schema.fields
    )
    key = data_file_key(location)
    store.put(key, data)
    return DataFile(
        key=key,
        spec_id=spec_id,
        partition=partition,
        record_count=len(rows),
        file_size_bytes=len(data),
        stats=stats,
    )


def expire_snapshot_ids(
    meta: TableMetadata, older_than_ms: int, keep_last: int
) -> set[int]:
    """Snapshot ids an expiry with these settings would drop.

    Kept no matter what: the current snapshot, the keep_last newest
    snapshots by id, and every snapshot at or after the cutoff.
    """
    if keep_last < 1:
        raise ValueError("keep_last must be at least 1")
    if not meta.snapshots:
        return set()
    ids_desc = sorted((s.snapshot_id for s in meta.snapshots), reverse=True)
    keep = set(ids_desc[:keep_last])
    if meta.current_snapshot_id is not None:
        keep.add(meta.current_snapshot_id)
    for s in meta.snapshots:
        if s.timestamp_ms >= older_than_ms:
            keep.add(s.snapshot_id)
    return {s.snapshot_id for s in meta.snapshots} - keep
