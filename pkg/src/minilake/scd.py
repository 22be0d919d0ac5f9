"""Slowly changing dimension merges, type 2.

The table keeps full history: every business key has at most one current
row (is_current true, effective_to null) plus any number of closed
versions. A merge compares source rows to current rows by key, closes
versions whose tracked columns changed, and inserts replacements and
first-time keys, all in one OVERWRITE snapshot.

Bookkeeping columns are fixed by name and type:

    effective_from  timestamp, set when a version is inserted
    effective_to    timestamp, optional; null while a version is current
    is_current      bool

Source rows carry business columns only. Tracked-column comparison
treats null versus non-null as a change and null versus null as no
change.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from typing import Any, Mapping, Sequence

from .errors import DuplicateSourceKey, SchemaViolation
from .filefmt import project_rows
from .model import Schema
from .transaction import Transaction

BOOKKEEPING = (
    ("effective_from", "timestamp"),
    ("effective_to", "timestamp"),
    ("is_current", "bool"),
)


@dataclass(frozen=True)
class Scd2Result:
    inserted: int
    closed: int
    unchanged: int


def _check_dimension_schema(
    schema: Schema, key_columns: Sequence[str], tracked_columns: Sequence[str]
) -> list[str]:
    """Validate bookkeeping, key, and tracked columns; returns business names."""
    for name, col_type in BOOKKEEPING:
        if not schema.has_name(name):
            raise SchemaViolation(f"dimension needs a {name!r} column")
        f = schema.field_by_name(name)
        if f.type != col_type:
            raise SchemaViolation(f"column {name!r} must be {col_type}, is {f.type}")
    if schema.field_by_name("effective_to").required:
        raise SchemaViolation("column 'effective_to' must be optional")
    bookkeeping_names = {name for name, _ in BOOKKEEPING}
    business = [f.name for f in schema.fields if f.name not in bookkeeping_names]
    if not key_columns:
        raise SchemaViolation("at least one key column is required")
    for group, cols in (("key", key_columns), ("tracked", tracked_columns)):
        for name in cols:
            schema.field_by_name(name)  # raises UnknownColumn
            if name in bookkeeping_names:
                raise SchemaViolation(
                    f"{group} column {name!r} is a bookkeeping column"
                )
    overlap = set(key_columns) & set(tracked_columns)
    if overlap:
        raise SchemaViolation(f"columns cannot be both key and tracked: {sorted(overlap)}")
    if len(set(key_columns)) != len(list(key_columns)):
        raise SchemaViolation("duplicate key columns")
    if len(set(tracked_columns)) != len(list(tracked_columns)):
        raise SchemaViolation("duplicate tracked columns")
    return business


def scd2_merge(
    tx: Transaction,
    table: str,
    source_rows: Sequence[Mapping[str, Any]],
    key_columns: Sequence[str],
    tracked_columns: Sequence[str],
    effective_ts: datetime,
) -> Scd2Result:
    """Stage a type 2 merge of source rows into a dimension table."""
    meta = tx.table_meta(table)
    schema = meta.current_schema
    business = _check_dimension_schema(schema, key_columns, tracked_columns)
    business_set = set(business)
    for i, row in enumerate(source_rows):
        extra = set(row) - business_set
        if extra:
            raise SchemaViolation(
                f"source row {i}: columns {sorted(extra)} are not business columns"
            )

    # index current rows by key tuple, remembering their file
    all_ids = [f.field_id for f in schema.fields]
    file_rows: dict[str, list[dict[str, Any]]] = {}
    current_index: dict[tuple[Any, ...], tuple[str, int]] = {}
    for df in tx.live(table):
        rows = project_rows(tx.store.get(df.key), schema, all_ids)
        file_rows[df.key] = rows
        for i, row in enumerate(rows):
            if row["is_current"] is True:
                key = tuple(row[c] for c in key_columns)
                if key in current_index:
                    raise SchemaViolation(
                        f"table holds multiple current rows for key {key!r}"
                    )
                current_index[key] = (df.key, i)

    # classify source rows
    seen_keys: set[tuple[Any, ...]] = set()
    to_close: dict[str, set[int]] = {}  # file key -> row indexes to close
    new_rows: list[dict[str, Any]] = []
    unchanged = 0
    for row in source_rows:
        key = tuple(row.get(c) for c in key_columns)
        if key in seen_keys:
            raise DuplicateSourceKey(f"source repeats key {key!r}")
        seen_keys.add(key)
        hit = current_index.get(key)
        if hit is not None:
            file_key, idx = hit
            old = file_rows[file_key][idx]
            changed = any(
                old.get(c) != row.get(c) for c in tracked_columns
            )
            if not changed:
                unchanged += 1
                continue
            to_close.setdefault(file_key, set()).add(idx)
        version = {name: row.get(name) for name in business}
        version["effective_from"] = effective_ts
        version["effective_to"] = None
        version["is_current"] = True
        new_rows.append(version)

    closed = sum(len(idxs) for idxs in to_close.values())
    if not new_rows and closed == 0:
        return Scd2Result(inserted=0, closed=0, unchanged=unchanged)

    # pool: affected files with closures applied, plus all new versions
    pool: list[dict[str, Any]] = []
    for file_key, idxs in sorted(to_close.items()):
        for i, row in enumerate(file_rows[file_key]):
            if i in idxs:
                closed_row = dict(row)
                closed_row["effective_to"] = effective_ts
                closed_row["is_current"] = False
                pool.append(closed_row)
            else:
                pool.append(row)
    pool.extend(new_rows)
    removed = sorted(to_close)

    tx.stage_overwrite_files(table, pool, removed)
    return Scd2Result(inserted=len(new_rows), closed=closed, unchanged=unchanged)
