"""Lakehouse facade: one object tying store, catalog, and config together.

Most methods are one-transaction conveniences; anything that needs
multiple operations in a single atomic commit should use begin() and the
Transaction API directly.
"""

from __future__ import annotations

import os
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

from . import canonical
from .catalog import Catalog, CatalogCommit, MergeResult
from .config import Config, load_config
from .errors import UnknownTable
from .maintenance import (
    MaintenanceReport,
    compact as _compact,
    expire_snapshots as _expire,
    remove_orphan_files,
)
from .partitioning import parse_partition_text
from .predicate import Predicate, parse_predicate
from .scan import (
    AsOf,
    AtSnapshot,
    Head,
    Selector,
    check_referential_integrity,
    execute_scan,
    resolve_snapshot,
)
from .scd import Scd2Result, scd2_merge as _scd2_merge
from .store import ObjectStore
from .table import SchemaChange, TableMetadata, load_metadata, parse_schema_text
from .transaction import Transaction


def default_author() -> str:
    return os.environ.get("MINILAKE_AUTHOR", "minilake")


class Lakehouse:
    def __init__(
        self,
        root: str | os.PathLike[str],
        config: Config | None = None,
        fault_hook: Callable[[str], None] | None = None,
    ):
        self.root = Path(root)
        self.config = config if config is not None else load_config(self.root)
        self.store = ObjectStore(self.root)
        self.catalog = Catalog(self.store, self.config.default_branch)
        self._fault = fault_hook

    # --- lifecycle -------------------------------------------------------------

    def init(self, author: str | None = None) -> str:
        return self.catalog.init(author or default_author())

    def begin(self, branch: str | None = None) -> Transaction:
        return Transaction(
            self.store,
            self.catalog,
            branch or self.config.default_branch,
            self.config,
            fault_hook=self._fault,
        )

    def _run(
        self,
        branch: str | None,
        author: str | None,
        message: str,
        fn: Callable[[Transaction], Any],
    ) -> tuple[Any, str | None]:
        """Run fn in one transaction; commit only if something was staged."""
        tx = self.begin(branch)
        result = fn(tx)
        if tx.has_staged_changes:
            commit = tx.commit(author or default_author(), message)
            return result, commit
        tx.abort()
        return result, None

    # --- tables ------------------------------------------------------------------

    def create_table(
        self,
        name: str,
        schema: str | Sequence[tuple[str, str, bool]],
        partition: str | Sequence = "",
        branch: str | None = None,
        author: str | None = None,
    ) -> str:
        columns = parse_schema_text(schema) if isinstance(schema, str) else list(schema)
        parts = (
            parse_partition_text(partition)
            if isinstance(partition, str)
            else list(partition)
        )
        _, commit = self._run(
            branch,
            author,
            f"Create table {name}",
            lambda tx: tx.stage_create_table(name, columns, parts),
        )
        assert commit is not None
        return commit

    def table_metadata(
        self, table: str, branch: str | None = None, committish: str | None = None
    ) -> TableMetadata:
        ref = committish or (branch or self.config.default_branch)
        key = self.catalog.lookup_table(ref, table)
        return load_metadata(self.store, key)

    def list_tables(self, branch: str | None = None) -> list[str]:
        return self.catalog.list_tables(branch or self.config.default_branch)

    # --- writes ---------------------------------------------------------------------

    def append(
        self,
        table: str,
        rows: Sequence[Mapping[str, Any]],
        branch: str | None = None,
        author: str | None = None,
    ) -> tuple[int, str | None]:
        return self._run(
            branch,
            author,
            f"Append {len(rows)} rows to {table}",
            lambda tx: tx.stage_append(table, rows),
        )

    def delete(
        self,
        table: str,
        predicate: str | Predicate,
        branch: str | None = None,
        author: str | None = None,
    ) -> tuple[int, str | None]:
        return self._run(
            branch,
            author,
            f"Delete from {table}",
            lambda tx: tx.stage_delete(table, predicate),
        )

    def evolve_schema(
        self,
        table: str,
        changes: Sequence[SchemaChange],
        branch: str | None = None,
        author: str | None = None,
    ) -> str:
        _, commit = self._run(
            branch,
            author,
            f"Evolve schema of {table}",
            lambda tx: tx.stage_schema_change(table, changes),
        )
        assert commit is not None
        return commit

    def evolve_partition(
        self,
        table: str,
        partition: str | Sequence,
        branch: str | None = None,
        author: str | None = None,
    ) -> str:
        parts = (
            parse_partition_text(partition)
            if isinstance(partition, str)
            else list(partition)
        )
        _, commit = self._run(
            branch,
            author,
            f"Evolve partition spec of {table}",
            lambda tx: tx.stage_spec_change(table, parts),
        )
        assert commit is not None
        return commit

    def rollback(
        self,
        table: str,
        to_snapshot: int,
        branch: str | None = None,
        author: str | None = None,
    ) -> str:
        _, commit = self._run(
            branch,
            author,
            f"Roll back {table} to snapshot {to_snapshot}",
            lambda tx: tx.stage_rollback(table, to_snapshot),
        )
        assert commit is not None
        return commit

    # --- reads -----------------------------------------------------------------------

    def scan(
        self,
        table: str,
        where: str | Predicate | None = None,
        select: Sequence[str] | None = None,
        branch: str | None = None,
        at_snapshot: int | None = None,
        as_of_ms: int | None = None,
        at_commit: str | None = None,
    ) -> tuple[list[tuple[str, str]], list[dict[str, Any]]]:
        """Scan a table, optionally back in time.

        at_snapshot, as_of_ms, and at_commit are mutually exclusive.
        at_commit reads the table exactly as that catalog commit saw it,
        including its schema.
        """
        chosen = [x for x in (at_snapshot, as_of_ms, at_commit) if x is not None]
        if len(chosen) > 1:
            raise ValueError("at most one of at_snapshot, as_of_ms, at_commit")
        meta = self.table_metadata(table, branch=branch, committish=at_commit)
        selector: Selector
        if at_snapshot is not None:
            selector = AtSnapshot(at_snapshot)
        elif as_of_ms is not None:
            selector = AsOf(as_of_ms)
        else:
            selector = Head()
        snapshot_id = resolve_snapshot(meta, selector)
        pred = self._bind(where, meta)
        return execute_scan(self.store, meta, snapshot_id, pred, select)

    def _bind(self, where: str | Predicate | None, meta: TableMetadata) -> Predicate:
        if where is None:
            return Predicate(atoms=())
        if isinstance(where, Predicate):
            return where
        return parse_predicate(where, meta.current_schema)

    def check_ri(
        self,
        fact_table: str,
        fk_column: str,
        dim_table: str,
        key_column: str,
        branch: str | None = None,
    ) -> list[Any]:
        fact_meta = self.table_metadata(fact_table, branch=branch)
        dim_meta = self.table_metadata(dim_table, branch=branch)
        return check_referential_integrity(
            self.store, fact_meta, fk_column, dim_meta, key_column
        )

    # --- catalog --------------------------------------------------------------------

    def create_branch(self, name: str, from_committish: str | None = None) -> str:
        return self.catalog.create_branch(name, from_committish)

    def create_tag(self, name: str, committish: str | None = None) -> str:
        return self.catalog.create_tag(name, committish)

    def branches(self) -> list[str]:
        return self.catalog.list_branches()

    def tags(self) -> list[str]:
        return self.catalog.list_tags()

    def log(
        self, committish: str | None = None, table: str | None = None
    ) -> Iterable[CatalogCommit]:
        return self.catalog.log(
            committish or self.config.default_branch, table_filter=table
        )

    def merge(
        self,
        source: str,
        target: str,
        author: str | None = None,
        message: str | None = None,
    ) -> MergeResult:
        return self.catalog.merge(
            source,
            target,
            author or default_author(),
            message=message,
            max_retries=self.config.max_retries,
        )

    # --- maintenance -----------------------------------------------------------------

    def compact(
        self,
        table: str,
        target_file_size_bytes: int | None = None,
        branch: str | None = None,
        author: str | None = None,
    ) -> tuple[MaintenanceReport, str | None]:
        target = (
            self.config.target_file_size_bytes
            if target_file_size_bytes is None
            else target_file_size_bytes
        )
        return self._run(
            branch,
            author,
            f"Compact {table}",
            lambda tx: _compact(tx, table, target),
        )

    def expire_snapshots(
        self,
        table: str,
        older_than_ms: int,
        keep_last: int = 1,
        branch: str | None = None,
        author: str | None = None,
    ) -> tuple[MaintenanceReport, str | None]:
        return self._run(
            branch,
            author,
            f"Expire snapshots of {table}",
            lambda tx: _expire(tx, table, older_than_ms, keep_last),
        )

    def gc(
        self,
        table: str,
        grace_ms: int | None = None,
        now_ms: int | None = None,
        branch: str | None = None,
    ) -> MaintenanceReport:
        # existence check against the branch, then collect across all refs
        self.table_metadata(table, branch=branch)
        grace = self.config.gc_grace_ms if grace_ms is None else grace_ms
        return remove_orphan_files(
            self.store, self.catalog, table, grace, now_ms=now_ms
        )

    # --- scd ----------------------------------------------------------------------------

    def scd2_merge(
        self,
        table: str,
        source_rows: Sequence[Mapping[str, Any]],
        key_columns: Sequence[str],
        tracked_columns: Sequence[str],
        effective_ts: datetime | None = None,
        branch: str | None = None,
        author: str | None = None,
    ) -> tuple[Scd2Result, str | None]:
        ts = (
            effective_ts
            if effective_ts is not None
            else canonical.micros_to_timestamp(canonical.now_ms() * 1000)
        )
        return self._run(
            branch,
            author,
            f"SCD2 merge into {table}",
            lambda tx: _scd2_merge(
                tx, table, source_rows, key_columns, tracked_columns, ts
            ),
        )
