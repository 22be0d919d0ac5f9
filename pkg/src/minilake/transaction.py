"""ACID transactions with optimistic concurrency control.

A transaction captures the branch head at open time, stages changes
against that base, and publishes them with a single compare-and-swap of
the branch ref. Until the CAS lands, nothing a transaction wrote is
reachable, so aborts and crashes leave only unreferenced objects behind.

Losing the CAS race is not a conflict by itself. The transaction reloads
the new head and revalidates each staged operation:

    append            always rebases (new data files collide with nothing)
    delete/overwrite/ rebase only if every file they replace is still
    replace           live on the new base; otherwise the read that
                      justified the rewrite is stale and we conflict
    schema/partition/ rebase only if the table is completely untouched
    rollback/expire   on the new base (its tree pointer is unchanged)
    create            rebases only while the table name is still absent

Validation failure raises ConflictError and permanently aborts the
transaction; repeated lost races raise RetriesExhausted after
max_retries retries with full-jitter backoff.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field as dc_field
from typing import Any, Callable, Mapping, Sequence

from . import canonical
from .catalog import Catalog
from .config import Config
from .errors import (
    AlreadyExists,
    ConflictError,
    CorruptMetadata,
    RetriesExhausted,
    TransactionClosed,
    UnknownTable,
)
from .filefmt import project_rows
from .model import DataFile, normalize_rows
from .partitioning import Transform, partition_tuple, tag_partition
from .predicate import Predicate, evaluate, parse_predicate
from .scan import plan_scan
from .store import ObjectStore
from .table import (
    SchemaChange,
    TableMetadata,
    build_snapshot,
    drop_snapshots,
    evolve_partition_spec,
    evolve_schema,
    expire_snapshot_ids,
    live_files,
    load_metadata,
    new_table,
    set_current_snapshot,
    store_metadata,
    write_data_file,
)

METADATA_KINDS = ("SCHEMA", "SPEC", "ROLLBACK", "EXPIRE")


@dataclass(frozen=True)
class StagedOp:
    kind: str  # CREATE APPEND DELETE OVERWRITE REPLACE SCHEMA SPEC ROLLBACK EXPIRE
    label: str
    added: tuple[DataFile, ...] = ()
    removed_keys: tuple[str, ...] = ()
    schema_changes: tuple[SchemaChange, ...] = ()
    spec_parts: tuple[tuple[str, Transform], ...] = ()
    rollback_to: int | None = None
    expire_args: tuple[int, int] | None = None  # (older_than_ms, keep_last)
    initial_meta: TableMetadata | None = None  # CREATE only


@dataclass
class _TableWork:
    base_key: str | None  # metadata key in the base tree; None if created here
    expected_uuid: str  # identity the table must keep across rebases
    meta: TableMetadata  # working view: base plus staged ops, stage-time stamps
    ops: list[StagedOp] = dc_field(default_factory=list)


class Transaction:
    def __init__(
        self,
        store: ObjectStore,
        catalog: Catalog,
        branch: str,
        config: Config,
        fault_hook: Callable[[str], None] | None = None,
        sleep: Callable[[float], None] | None = None,
    ):
        self.store = store
        self.catalog = catalog
        self.branch = branch
        self.config = config
        self._fault = fault_hook or (lambda point: None)
        self._sleep = sleep if sleep is not None else _default_sleep
        self._base_commit = catalog.load_commit(catalog.branch_head(branch))
        self._tables: dict[str, _TableWork] = {}
        self._state = "open"

    # --- bookkeeping ---------------------------------------------------------

    def _ensure_open(self) -> None:
        if self._state != "open":
            raise TransactionClosed(f"transaction is {self._state}")

    @property
    def state(self) -> str:
        return self._state

    @property
    def has_staged_changes(self) -> bool:
        return any(w.ops for w in self._tables.values())

    def abort(self) -> None:
        if self._state == "open":
            self._state = "aborted"

    def _work(self, table: str) -> _TableWork:
        work = self._tables.get(table)
        if work is not None:
            return work
        key = self._base_commit.tree_map().get(table)
        if key is None:
            raise UnknownTable(f"no table {table!r} on branch {self.branch!r}")
        meta = load_metadata(self.store, key)
        work = _TableWork(base_key=key, expected_uuid=meta.table_uuid, meta=meta)
        self._tables[table] = work
        return work

    def table_meta(self, table: str) -> TableMetadata:
        """Working metadata, reflecting changes staged so far."""
        return self._work(table).meta

    def live(self, table: str) -> list[DataFile]:
        return live_files(self.store, self._work(table).meta)

    def _stage(self, table: str, op: StagedOp) -> None:
        # The working meta makes staged changes visible to later ops in this
        # transaction; commit() rebuilds it with the one commit timestamp.
        work = self._tables[table]
        work.meta = self._apply_op(table, work.meta, op, canonical.now_ms())
        work.ops.append(op)

    # --- staging: tables -------------------------------------------------------

    def stage_create_table(
        self,
        name: str,
        columns: Sequence[tuple[str, str, bool]],
        partition: Sequence[tuple[str, Transform]] = (),
    ) -> TableMetadata:
        self._ensure_open()
        if name in self._tables or name in self._base_commit.tree_map():
            raise AlreadyExists(f"table {name!r} already exists")
        meta = new_table(name, columns, partition)
        op = StagedOp(kind="CREATE", label="create", initial_meta=meta)
        self._tables[name] = _TableWork(
            base_key=None, expected_uuid=meta.table_uuid, meta=meta
        )
        self._tables[name].ops.append(op)
        return meta

    # --- staging: data -----------------------------------------------------------

    def _write_grouped(
        self, meta: TableMetadata, rows: list[dict[str, Any]]
    ) -> list[DataFile]:
        """One data file per partition of the current spec, rows validated."""
        schema = meta.current_schema
        spec = meta.current_spec
        normalized = normalize_rows(rows, schema)
        groups: dict[bytes, tuple[tuple[Any, ...], list[dict[str, Any]]]] = {}
        for row in normalized:
            pt = partition_tuple(spec, row, schema)
            gk = canonical.canonical_json(tag_partition(pt))
            groups.setdefault(gk, (pt, []))[1].append(row)
        added = []
        for gk in sorted(groups):
            pt, group_rows = groups[gk]
            df = write_data_file(
                self.store, meta.location, group_rows, schema, spec.spec_id, pt
            )
            self._fault("file-written")
            added.append(df)
        return added

    def stage_append(self, table: str, rows: Sequence[Mapping[str, Any]]) -> int:
        """Validate and write rows; returns the row count (0 stages nothing)."""
        self._ensure_open()
        work = self._work(table)
        if not rows:
            return 0
        added = self._write_grouped(work.meta, [dict(r) for r in rows])
        self._stage(
            table, StagedOp(kind="APPEND", label="append", added=tuple(added))
        )
        return len(rows)

    def _split_matching(
        self, work: _TableWork, pred: Predicate
    ) -> tuple[int, list[DataFile], list[str]]:
        """Copy-on-write split of live files into survivors and removals."""
        meta = work.meta
        schema = meta.current_schema
        all_ids = [f.field_id for f in schema.fields]
        matched = 0
        added: list[DataFile] = []
        removed: list[str] = []
        for df in plan_scan(self.store, meta, meta.current_snapshot_id, pred):
            rows = project_rows(self.store.get(df.key), schema, all_ids)
            keep = [r for r in rows if not evaluate(pred, r)]
            hits = len(rows) - len(keep)
            if hits == 0:
                continue
            matched += hits
            removed.append(df.key)
            if keep:
                survivor = write_data_file(
                    self.store, meta.location, keep, schema, df.spec_id, df.partition
                )
                self._fault("file-written")
                added.append(survivor)
        return matched, added, removed

    def stage_delete(self, table: str, predicate: Predicate | str) -> int:
        """Copy-on-write delete; returns how many rows matched."""
        self._ensure_open()
        work = self._work(table)
        pred = self._bind(predicate, work.meta)
        matched, added, removed = self._split_matching(work, pred)
        if matched == 0:
            return 0
        self._stage(
            table,
            StagedOp(
                kind="DELETE",
                label="delete",
                added=tuple(added),
                removed_keys=tuple(removed),
            ),
        )
        return matched

    def stage_overwrite(
        self, table: str, predicate: Predicate | str, rows: Sequence[Mapping[str, Any]]
    ) -> int:
        """Replace matching rows with new rows in one snapshot."""
        self._ensure_open()
        work = self._work(table)
        pred = self._bind(predicate, work.meta)
        matched, survivors, removed = self._split_matching(work, pred)
        new_files = self._write_grouped(work.meta, [dict(r) for r in rows])
        if matched == 0 and not new_files:
            return 0
        self._stage(
            table,
            StagedOp(
                kind="OVERWRITE",
                label="overwrite",
                added=tuple(survivors + new_files),
                removed_keys=tuple(removed),
            ),
        )
        return matched

    def stage_overwrite_files(
        self,
        table: str,
        rows: Sequence[Mapping[str, Any]],
        removed_keys: Sequence[str],
    ) -> None:
        """Write rows grouped under the current spec, replacing named files."""
        self._ensure_open()
        work = self._work(table)
        added = self._write_grouped(work.meta, [dict(r) for r in rows])
        self._stage(
            table,
            StagedOp(
                kind="OVERWRITE",
                label="overwrite",
                added=tuple(added),
                removed_keys=tuple(removed_keys),
            ),
        )

    def stage_file_change(
        self,
        table: str,
        operation: str,
        added: Sequence[DataFile],
        removed_keys: Sequence[str],
    ) -> None:
        """Stage a prepared file-level rewrite (compaction, merge writers)."""
        self._ensure_open()
        work = self._work(table)
        kind = operation.upper()
        if kind not in ("REPLACE", "OVERWRITE", "APPEND", "DELETE"):
            raise ValueError(f"bad file-change operation {operation!r}")
        self._stage(
            table,
            StagedOp(
                kind=kind,
                label=operation.lower(),
                added=tuple(added),
                removed_keys=tuple(removed_keys),
            ),
        )

    def _bind(self, predicate: Predicate | str, meta: TableMetadata) -> Predicate:
        if isinstance(predicate, Predicate):
            return predicate
        return parse_predicate(predicate, meta.current_schema)

    # --- staging: metadata ----------------------------------------------------------

    def stage_schema_change(self, table: str, changes: Sequence[SchemaChange]) -> None:
        self._ensure_open()
        self._work(table)
        self._stage(
            table,
            StagedOp(kind="SCHEMA", label="schema", schema_changes=tuple(changes)),
        )

    def stage_spec_change(
        self, table: str, parts: Sequence[tuple[str, Transform]]
    ) -> None:
        self._ensure_open()
        self._work(table)
        self._stage(
            table, StagedOp(kind="SPEC", label="partition", spec_parts=tuple(parts))
        )

    def stage_rollback(self, table: str, to_snapshot: int) -> None:
        self._ensure_open()
        work = self._work(table)
        work.meta.snapshot_by_id(to_snapshot)  # raises UnknownSnapshot
        self._stage(
            table, StagedOp(kind="ROLLBACK", label="rollback", rollback_to=to_snapshot)
        )

    def stage_expire(self, table: str, older_than_ms: int, keep_last: int) -> set[int]:
        """Stage snapshot expiry; returns the ids it will drop."""
        self._ensure_open()
        work = self._work(table)
        drops = expire_snapshot_ids(work.meta, older_than_ms, keep_last)
        if not drops:
            return set()
        self._stage(
            table,
            StagedOp(
                kind="EXPIRE", label="expire", expire_args=(older_than_ms, keep_last)
            ),
        )
        return drops

    # --- op application (staging and rebase share this) ---------------------------

    def _apply_op(
        self,
        table: str,
        meta: TableMetadata | None,
        op: StagedOp,
        timestamp_ms: int,
        replaying: bool = False,
    ) -> TableMetadata:
        if op.kind == "CREATE":
            assert op.initial_meta is not None
            return op.initial_meta
        assert meta is not None
        if op.kind in ("APPEND", "DELETE", "OVERWRITE", "REPLACE"):
            try:
                built = build_snapshot(
                    self.store,
                    meta,
                    op.added,
                    op.removed_keys,
                    op.label,
                    timestamp_ms,
                )
            except CorruptMetadata as exc:
                if replaying:
                    raise ConflictError(
                        f"table {table!r}: files this transaction rewrites were"
                        f" changed concurrently ({exc})"
                    ) from exc
                raise
            self._fault("snapshot-built")
            return built
        if op.kind == "SCHEMA":
            return evolve_schema(meta, op.schema_changes)
        if op.kind == "SPEC":
            return evolve_partition_spec(meta, op.spec_parts)
        if op.kind == "ROLLBACK":
            assert op.rollback_to is not None
            return set_current_snapshot(meta, op.rollback_to, timestamp_ms)
        if op.kind == "EXPIRE":
            assert op.expire_args is not None
            drops = expire_snapshot_ids(meta, *op.expire_args)
            return drop_snapshots(meta, drops)
        raise AssertionError(f"unknown op kind {op.kind!r}")

    # --- commit --------------------------------------------------------------------

    def _base_for_rebase(
        self,
        name: str,
        work: _TableWork,
        origin_tree: Mapping[str, str],
        head_tree: Mapping[str, str],
    ) -> tuple[TableMetadata | None, bool]:
        """Validate one table against the head; returns (base meta, moved)."""
        origin_key = origin_tree.get(name)
        head_key = head_tree.get(name)
        if any(op.kind == "CREATE" for op in work.ops):
            if head_key is not None:
                raise ConflictError(f"table {name!r} was created concurrently")
            return None, False
        if head_key is None:
            raise ConflictError(f"table {name!r} disappeared concurrently")
        moved = head_key != origin_key
        if moved and any(op.kind in METADATA_KINDS for op in work.ops):
            raise ConflictError(
                f"table {name!r} changed concurrently with a staged"
                " metadata operation"
            )
        base = load_metadata(self.store, head_key)
        if base.table_uuid != work.expected_uuid:
            raise ConflictError(f"table {name!r} was replaced concurrently")
        return base, moved

    def commit(self, author: str, message: str) -> str:
        """Publish every staged change atomically; returns the commit hash.

        Each attempt replays the staged ops onto the branch head as it
        stands, stamping the commit and every snapshot it introduces with
        one clock reading. Data files written during staging are reused;
        only manifests, table metadata, and the commit are rebuilt.
        """
        self._ensure_open()
        if not self.has_staged_changes:
            raise ValueError("nothing to commit")
        self._fault("build-start")
        origin_tree = self._base_commit.tree_map()
        staged = [name for name in sorted(self._tables) if self._tables[name].ops]
        attempts = self.config.max_retries + 1
        try:
            for attempt in range(attempts):
                expected_head = self.catalog.branch_head(self.branch)
                head_commit = (
                    self._base_commit
                    if expected_head == self._base_commit.hash
                    else self.catalog.load_commit(expected_head)
                )
                head_tree = head_commit.tree_map()
                bases: dict[str, tuple[TableMetadata | None, bool]] = {
                    name: self._base_for_rebase(
                        name, self._tables[name], origin_tree, head_tree
                    )
                    for name in staged
                }
                ts = canonical.now_ms()
                for base, _ in bases.values():
                    if base is not None and base.snapshot_log:
                        ts = max(ts, base.snapshot_log[-1][0])
                tree = dict(head_tree)
                summary: dict[str, str] = {}
                for name in staged:
                    work = self._tables[name]
                    meta, moved = bases[name]
                    for op in work.ops:
                        meta = self._apply_op(name, meta, op, ts, replaying=moved)
                    assert meta is not None
                    work.meta = meta
                    tree[name] = store_metadata(self.store, meta)
                    self._fault("table-built")
                    labels = list(dict.fromkeys(op.label for op in work.ops))
                    summary[name] = "+".join(labels)
                commit_hash = self.catalog.store_commit(
                    parent=expected_head,
                    timestamp_ms=ts,
                    author=author,
                    message=message,
                    tree=tree,
                    change_summary=summary,
                )
                self._fault("commit-stored")
                self._fault("pre-cas")
                if self.store.cas_ref(
                    f"refs/heads/{self.branch}", expected_head, commit_hash
                ):
                    self._state = "committed"
                    return commit_hash
                if attempt < attempts - 1:
                    self._sleep(random.uniform(0.0, min(0.25, 0.005 * (2**attempt))))
            raise RetriesExhausted(
                f"lost the commit race {attempts} times on branch {self.branch!r}"
            )
        except (ConflictError, RetriesExhausted):
            self._state = "aborted"
            raise


def _default_sleep(seconds: float) -> None:
    import time

    time.sleep(seconds)
