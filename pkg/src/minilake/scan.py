"""Time-travel scans: snapshot selection, pruning, execution.

Planning prunes in two stages, both sound (a pruned file provably
contains no row that passes the predicate; kept files may still contain
none):

  1. Partition pruning, per file, against the spec the file was written
     under. Every row in a file shares one partition tuple, so a
     component refutes an atom for the whole file. Identity components
     evaluate atoms directly; truncate/year/month/day are monotone and
     support ranges; bucket supports equality only. Null components mean
     the source column is entirely null in the file.
  2. Statistics pruning against per-file min/max/null_count. Rows with
     null in a compared column never pass a conjunction, so null counts
     only matter for IS [NOT] NULL atoms.

Atoms over columns a file has no values for (added after the file was
written, or stats say all-null) refute every comparison.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Sequence

from .errors import NoSnapshotAsOf, TypeMismatch, UnknownColumn
from .filefmt import project_rows
from .model import DataFile, Schema
from .partitioning import PartitionSpec, apply_transform
from .predicate import Compare, NullCheck, Predicate, evaluate
from .store import ObjectStore
from .table import TableMetadata, live_files


# --- snapshot selection ------------------------------------------------------

@dataclass(frozen=True)
class Head:
    pass


@dataclass(frozen=True)
class AtSnapshot:
    snapshot_id: int


@dataclass(frozen=True)
class AsOf:
    timestamp_ms: int


Selector = Head | AtSnapshot | AsOf


def resolve_snapshot(meta: TableMetadata, selector: Selector) -> int | None:
    """Snapshot id a selector denotes, or None for an empty table head."""
    if isinstance(selector, Head):
        return meta.current_snapshot_id
    if isinstance(selector, AtSnapshot):
        meta.snapshot_by_id(selector.snapshot_id)  # raises UnknownSnapshot
        return selector.snapshot_id
    if isinstance(selector, AsOf):
        chosen = None
        for ts, sid in meta.snapshot_log:
            if ts <= selector.timestamp_ms:
                chosen = sid
            else:
                break
        if chosen is None:
            raise NoSnapshotAsOf(
                f"table has no snapshot at or before {selector.timestamp_ms}"
            )
        return chosen
    raise TypeError(f"unknown selector {selector!r}")


# --- partition pruning -------------------------------------------------------

def _atom_vs_identity(atom: Compare | NullCheck, component: Any) -> bool:
    """Can any row in a file with this identity component satisfy the atom?"""
    if isinstance(atom, NullCheck):
        is_null = component is None
        return is_null != atom.negated
    if component is None:
        return False  # column is null in every row, comparison never true
    return _compare(component, atom.op, atom.literal)


def _compare(value: Any, op: str, literal: Any) -> bool:
    if op == "=":
        return value == literal
    if op == "!=":
        return value != literal
    if op == "<":
        return value < literal
    if op == "<=":
        return value <= literal
    if op == ">":
        return value > literal
    return value >= literal


def _file_may_match(
    df: DataFile, spec: PartitionSpec, schema: Schema, pred: Predicate
) -> bool:
    """Partition-level check: False only when no row can pass."""
    by_source: dict[int, list[tuple[Any, Any]]] = {}
    for pf, component in zip(spec.fields, df.partition):
        by_source.setdefault(pf.source_field_id, []).append((pf.transform, component))
    for atom in pred.atoms:
        for transform, component in by_source.get(atom.field_id, ()):
            kind = transform.kind
            if kind == "identity":
                if not _atom_vs_identity(atom, component):
                    return False
                continue
            # non-identity transforms: null component means all-null source
            if component is None:
                if isinstance(atom, NullCheck):
                    if atom.negated:
                        return False
                    continue
                return False
            # non-null component means no nulls in the source column
            if isinstance(atom, NullCheck):
                if not atom.negated:
                    return False
                continue
            col_type = schema.field_by_id(atom.field_id).type
            lit_t = apply_transform(transform, atom.literal, col_type)
            if kind == "bucket":
                if atom.op == "=" and component != lit_t:
                    return False
                continue
            # truncate/year/month/day are monotone non-decreasing
            if atom.op == "=" and component != lit_t:
                return False
            if atom.op in ("<", "<=") and component > lit_t:
                return False
            if atom.op in (">", ">=") and component < lit_t:
                return False
            # != never prunes through a lossy monotone transform
    return True


# --- statistics pruning -------------------------------------------------------

def _stats_may_match(df: DataFile, pred: Predicate) -> bool:
    """Stats-level check: False only when no row can pass."""
    for atom in pred.atoms:
        stats = df.stats_for(atom.field_id)
        if stats is None:
            # column added after this file was written: reads as all null
            if isinstance(atom, NullCheck):
                if atom.negated:
                    return False
                continue
            return False
        if isinstance(atom, NullCheck):
            if atom.negated:
                if stats.null_count == df.record_count:
                    return False
            else:
                if stats.null_count == 0:
                    return False
            continue
        if stats.min is None:  # every value is null
            return False
        lo, hi = stats.min, stats.max
        lit = atom.literal
        op = atom.op
        if op == "=":
            if lit < lo or lit > hi:
                return False
        elif op == "!=":
            if lo == hi == lit:
                return False
        elif op == "<":
            if lo >= lit:
                return False
        elif op == "<=":
            if lo > lit:
                return False
        elif op == ">":
            if hi <= lit:
                return False
        elif op == ">=":
            if hi < lit:
                return False
    return True


def plan_scan(
    store: ObjectStore,
    meta: TableMetadata,
    snapshot_id: int | None,
    pred: Predicate,
) -> list[DataFile]:
    """Live files that may hold matching rows, in key order."""
    schema = meta.current_schema
    tasks = []
    for df in live_files(store, meta, snapshot_id):
        spec = meta.spec_by_id(df.spec_id)
        if not _file_may_match(df, spec, schema, pred):
            continue
        if not _stats_may_match(df, pred):
            continue
        tasks.append(df)
    return tasks


# --- execution ------------------------------------------------------------------

def execute_scan(
    store: ObjectStore,
    meta: TableMetadata,
    snapshot_id: int | None,
    pred: Predicate,
    projection: Sequence[str] | None = None,
) -> tuple[list[tuple[str, str]], list[dict[str, Any]]]:
    """Run a scan; returns ([(name, type)...] projected, matching rows).

    Row order is deterministic: files in key order, rows in file order.
    The full predicate re-runs on every row, so pruning can only drop
    whole files, never change results.
    """
    schema = meta.current_schema
    if projection is None:
        selected = list(schema.fields)
    else:
        selected = [schema.field_by_name(n) for n in projection]
        if len(set(projection)) != len(list(projection)):
            raise UnknownColumn(f"duplicate columns in projection: {list(projection)}")
    needed_ids = {f.field_id for f in selected} | set(pred.field_ids)
    out_rows: list[dict[str, Any]] = []
    for df in plan_scan(store, meta, snapshot_id, pred):
        rows = project_rows(store.get(df.key), schema, sorted(needed_ids))
        for row in rows:
            if evaluate(pred, row):
                out_rows.append({f.name: row[f.name] for f in selected})
    return [(f.name, f.type) for f in selected], out_rows


# --- referential integrity -------------------------------------------------------

def check_referential_integrity(
    store: ObjectStore,
    fact_meta: TableMetadata,
    fk_column: str,
    dim_meta: TableMetadata,
    key_column: str,
) -> list[Any]:
    """Distinct non-null fact foreign keys absent from the dimension.

    Both columns must share one type; null foreign keys are not
    violations. The result is sorted.
    """
    fk_field = fact_meta.current_schema.field_by_name(fk_column)
    key_field = dim_meta.current_schema.field_by_name(key_column)
    if fk_field.type != key_field.type:
        raise TypeMismatch(
            f"fact column {fk_column!r} is {fk_field.type},"
            f" dimension column {key_column!r} is {key_field.type}"
        )
    fact_values = _column_values(store, fact_meta, fk_field.field_id, fk_column)
    dim_values = _column_values(store, dim_meta, key_field.field_id, key_column)
    orphans = {v for v in fact_values if v is not None} - set(dim_values)
    return sorted(orphans)


def _column_values(
    store: ObjectStore, meta: TableMetadata, field_id: int, name: str
) -> Iterable[Any]:
    values = []
    for df in live_files(store, meta):
        for row in project_rows(store.get(df.key), meta.current_schema, [field_id]):
            values.append(row[name])
    return values
