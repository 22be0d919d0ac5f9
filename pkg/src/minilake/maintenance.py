"""Maintenance: compaction, snapshot expiry, orphan file collection.

Compaction and expiry are ordinary transactions: they publish a REPLACE
or EXPIRE commit and never change query results. Orphan collection is
the one operation that physically deletes objects; it only removes keys
unreachable from every ref and older than the grace period, so in-flight
commits whose CAS has not landed yet are never harmed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

from . import canonical
from .catalog import Catalog
from .errors import NothingToCompact
from .filefmt import project_rows
from .model import DataFile
from .partitioning import tag_partition
from .store import ObjectStore
from .table import load_metadata, read_manifest, write_data_file
from .transaction import Transaction


@dataclass(frozen=True)
class MaintenanceReport:
    operation: str
    counters: tuple[tuple[str, int], ...]

    def lines(self) -> Iterator[str]:
        yield f"operation={self.operation}"
        for key, value in self.counters:
            yield f"{key}={value}"

    def get(self, key: str) -> int:
        for k, v in self.counters:
            if k == key:
                return v
        raise KeyError(key)


# --- compaction -----------------------------------------------------------------

def _bin_pack(files: list[DataFile], capacity: int) -> list[list[DataFile]]:
    """First-fit decreasing by size; ties broken by key for determinism."""
    bins: list[tuple[int, list[DataFile]]] = []
    for df in sorted(files, key=lambda f: (-f.file_size_bytes, f.key)):
        for i, (used, members) in enumerate(bins):
            if used + df.file_size_bytes <= capacity:
                bins[i] = (used + df.file_size_bytes, members + [df])
                break
        else:
            bins.append((df.file_size_bytes, [df]))
    return [members for _, members in bins]


def compact(
    tx: Transaction, table: str, target_file_size_bytes: int
) -> MaintenanceReport:
    """Merge undersized files per partition; stages one REPLACE.

    Only bins holding two or more inputs are rewritten: rewriting a lone
    file cannot reduce the file count. Raises NothingToCompact when no
    partition has two undersized files.
    """
    meta = tx.table_meta(table)
    live = tx.live(table)
    groups: dict[bytes, list[DataFile]] = {}
    for df in live:
        if df.file_size_bytes >= target_file_size_bytes:
            continue
        gk = canonical.canonical_json(
            [df.spec_id, tag_partition(df.partition)]
        )
        groups.setdefault(gk, []).append(df)
    added: list[DataFile] = []
    removed: list[str] = []
    for gk in sorted(groups):
        members = groups[gk]
        if len(members) < 2:
            continue
        for bin_files in _bin_pack(members, target_file_size_bytes):
            if len(bin_files) < 2:
                continue
            schema = meta.current_schema
            all_ids = [f.field_id for f in schema.fields]
            rows: list[dict] = []
            for df in bin_files:
                rows.extend(project_rows(tx.store.get(df.key), schema, all_ids))
            new_df = write_data_file(
                tx.store,
                meta.location,
                rows,
                schema,
                bin_files[0].spec_id,
                bin_files[0].partition,
            )
            added.append(new_df)
            removed.extend(df.key for df in bin_files)
    if not removed:
        raise NothingToCompact(
            f"table {table!r} has no partition with two files under"
            f" {target_file_size_bytes} bytes"
        )
    tx.stage_file_change(table, "replace", added, removed)
    return MaintenanceReport(
        operation="compact",
        counters=(
            ("files_before", len(live)),
            ("files_after", len(live) - len(removed) + len(added)),
            ("files_rewritten", len(removed)),
            ("files_written", len(added)),
        ),
    )


# --- snapshot expiry ---------------------------------------------------------------

def expire_snapshots(
    tx: Transaction, table: str, older_than_ms: int, keep_last: int
) -> MaintenanceReport:
    """Stage removal of expirable snapshots from the table history."""
    dropped = tx.stage_expire(table, older_than_ms, keep_last)
    remaining = len(tx.table_meta(table).snapshots)
    return MaintenanceReport(
        operation="expire-snapshots",
        counters=(
            ("snapshots_removed", len(dropped)),
            ("snapshots_remaining", remaining),
        ),
    )


# --- orphan collection ----------------------------------------------------------------

def referenced_keys(store: ObjectStore, catalog: Catalog, table: str) -> set[str]:
    """Every object key under the table's prefix reachable from a ref head.

    Reachable means: the table's metadata object in the head commit of
    any branch or tag, every manifest its snapshots name, and every data
    file those manifests mention. DELETED manifest entries count; their
    history stays readable until snapshots expire. Metadata superseded on
    every ref is unreferenced: point a branch or tag at a commit to keep
    its table state alive past a cleanup.
    """
    referenced: set[str] = set()
    seen_metas: set[str] = set()
    for ref in store.list_refs():
        head = store.read_ref(ref)
        if head is None:
            continue
        meta_key = catalog.load_commit(head).tree_map().get(table)
        if meta_key is None or meta_key in seen_metas:
            continue
        seen_metas.add(meta_key)
        referenced.add(meta_key)
        meta = load_metadata(store, meta_key)
        for snap in meta.snapshots:
            if snap.manifest_key in referenced:
                continue
            referenced.add(snap.manifest_key)
            manifest = read_manifest(store, snap.manifest_key)
            for files in manifest.values():
                referenced.update(f.key for f in files)
    return referenced


def remove_orphan_files(
    store: ObjectStore,
    catalog: Catalog,
    table: str,
    grace_ms: int,
    now_ms: int | None = None,
) -> MaintenanceReport:
    """Delete unreachable objects under the table prefix, respecting grace.

    Objects younger than grace_ms are kept even when unreachable: they
    may belong to a commit that has not published yet.
    """
    now = canonical.now_ms() if now_ms is None else now_ms
    referenced = referenced_keys(store, catalog, table)
    deleted = 0
    kept_young = 0
    bytes_reclaimed = 0
    candidates = store.list(f"tables/{table}/")
    for key in candidates:
        if key in referenced:
            continue
        size, mtime_ms = store.stat(key)
        if now - mtime_ms < grace_ms:
            kept_young += 1
            continue
        store.delete(key)
        deleted += 1
        bytes_reclaimed += size
    return MaintenanceReport(
        operation="gc",
        counters=(
            ("keys_scanned", len(candidates)),
            ("keys_deleted", deleted),
            ("keys_kept_young", kept_young),
            ("bytes_reclaimed", bytes_reclaimed),
        ),
    )
