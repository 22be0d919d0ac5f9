"""Versioned catalog: content-addressed commits, branches, tags, merge.

A commit is an immutable JSON object stored at commits/<hash>, where
<hash> is the SHA-256 of its canonical payload. It names its single
parent, an author, a message, a tree mapping table names to metadata
object keys, and a per-table change summary. Branches are refs that
advance by compare-and-swap; tags are refs that nothing ever retargets.

Merging is three-way against the lowest common ancestor. Tables changed
on one side only move wholesale; tables changed on both sides are merged
by replaying the source branch's snapshots since the base onto the
target's metadata, which succeeds when the source only added or removed
files that do not collide with the target's changes. A merge commit has
one parent (the old target head) and records the source in a
Merged-From message trailer, so history stays a simple chain.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping

from . import canonical, table as tbl
from .errors import (
    AlreadyExists,
    AlreadyInitialized,
    CorruptCommit,
    CorruptMetadata,
    MergeConflict,
    NotFound,
    RefExists,
    RetriesExhausted,
    UnknownBranch,
    UnknownRef,
    UnknownTable,
)
from .store import ObjectStore

_HEX = set("0123456789abcdef")


@dataclass(frozen=True)
class CatalogCommit:
    hash: str
    parent: str | None
    timestamp_ms: int
    author: str
    message: str
    tree: tuple[tuple[str, str], ...]  # (table name, metadata key), sorted
    change_summary: tuple[tuple[str, str], ...]  # (table name, operation), sorted

    def tree_map(self) -> dict[str, str]:
        return dict(self.tree)

    def summary_map(self) -> dict[str, str]:
        return dict(self.change_summary)


def _commit_payload(
    parent: str | None,
    timestamp_ms: int,
    author: str,
    message: str,
    tree: Mapping[str, str],
    change_summary: Mapping[str, str],
) -> bytes:
    return canonical.canonical_json(
        {
            "parent": parent,
            "timestamp_ms": timestamp_ms,
            "author": author,
            "message": message,
            "tree": dict(tree),
            "change_summary": dict(change_summary),
        }
    )


@dataclass(frozen=True)
class MergeResult:
    kind: str  # "up-to-date" | "fast-forward" | "merge"
    commit: str
    tables: tuple[str, ...] = ()


class Catalog:
    """All catalog state lives in the object store; this class is stateless."""

    def __init__(self, store: ObjectStore, default_branch: str = "main"):
        self.store = store
        self.default_branch = default_branch

    # --- commits -------------------------------------------------------------

    def store_commit(
        self,
        parent: str | None,
        timestamp_ms: int,
        author: str,
        message: str,
        tree: Mapping[str, str],
        change_summary: Mapping[str, str],
    ) -> str:
        """Write a commit object; returns its hash. Idempotent by content."""
        payload = _commit_payload(
            parent, timestamp_ms, author, message, tree, change_summary
        )
        commit_hash = canonical.sha256_hex(payload)
        try:
            self.store.put(f"commits/{commit_hash}", payload)
        except AlreadyExists:
            pass  # identical content is already stored
        return commit_hash

    def load_commit(self, commit_hash: str) -> CatalogCommit:
        try:
            payload = self.store.get(f"commits/{commit_hash}")
        except NotFound:
            raise UnknownRef(f"no commit {commit_hash}") from None
        if canonical.sha256_hex(payload) != commit_hash:
            raise CorruptCommit(
                f"commit {commit_hash} does not match its content address"
            )
        try:
            doc = json.loads(payload.decode("utf-8"))
        except (ValueError, UnicodeDecodeError) as exc:
            raise CorruptCommit(f"commit {commit_hash} is not valid JSON: {exc}") from exc
        try:
            return CatalogCommit(
                hash=commit_hash,
                parent=doc["parent"],
                timestamp_ms=int(doc["timestamp_ms"]),
                author=str(doc["author"]),
                message=str(doc["message"]),
                tree=tuple(sorted(doc["tree"].items())),
                change_summary=tuple(sorted(doc["change_summary"].items())),
            )
        except (KeyError, AttributeError) as exc:
            raise CorruptCommit(f"commit {commit_hash} missing field: {exc}") from exc

    # --- init ------------------------------------------------------------------

    def init(self, author: str, timestamp_ms: int | None = None) -> str:
        """Create the root commit and the default branch."""
        ts = canonical.now_ms() if timestamp_ms is None else timestamp_ms
        if self.store.read_ref(f"refs/heads/{self.default_branch}") is not None:
            raise AlreadyInitialized(
                f"branch {self.default_branch!r} already exists"
            )
        root = self.store_commit(
            parent=None,
            timestamp_ms=ts,
            author=author,
            message="Initialize warehouse",
            tree={},
            change_summary={},
        )
        if not self.store.cas_ref(f"refs/heads/{self.default_branch}", None, root):
            raise AlreadyInitialized(
                f"branch {self.default_branch!r} already exists"
            )
        return root

    def is_initialized(self) -> bool:
        return self.store.read_ref(f"refs/heads/{self.default_branch}") is not None

    # --- refs -------------------------------------------------------------------

    def branch_head(self, branch: str) -> str:
        head = self.store.read_ref(f"refs/heads/{branch}")
        if head is None:
            raise UnknownBranch(f"no branch {branch!r}")
        return head

    def resolve(self, committish: str) -> str:
        """Resolve a ref name, branch, tag, or commit hash to a commit hash."""
        for name in (committish, f"refs/heads/{committish}", f"refs/tags/{committish}"):
            value = self.store.read_ref(name)
            if value is not None:
                return value
        if len(committish) == 64 and all(c in _HEX for c in committish):
            if self.store.exists(f"commits/{committish}"):
                return committish
        raise UnknownRef(f"cannot resolve {committish!r}")

    def create_branch(self, name: str, from_committish: str | None = None) -> str:
        src = self.resolve(from_committish or self.default_branch)
        if not self.store.cas_ref(f"refs/heads/{name}", None, src):
            raise RefExists(f"branch {name!r} already exists")
        return src

    def create_tag(self, name: str, committish: str | None = None) -> str:
        """Tags are immutable: created once, never retargeted."""
        src = self.resolve(committish or self.default_branch)
        if not self.store.cas_ref(f"refs/tags/{name}", None, src):
            raise RefExists(f"tag {name!r} already exists")
        return src

    def list_branches(self) -> list[str]:
        return [
            r[len("refs/heads/") :]
            for r in self.store.list_refs()
            if r.startswith("refs/heads/")
        ]

    def list_tags(self) -> list[str]:
        return [
            r[len("refs/tags/") :]
            for r in self.store.list_refs()
            if r.startswith("refs/tags/")
        ]

    # --- history ------------------------------------------------------------------

    def log(
        self, committish: str, table_filter: str | None = None
    ) -> Iterator[CatalogCommit]:
        """Commits newest-first along the parent chain."""
        commit_hash: str | None = self.resolve(committish)
        while commit_hash is not None:
            commit = self.load_commit(commit_hash)
            if table_filter is None or table_filter in commit.summary_map():
                yield commit
            commit_hash = commit.parent

    def list_tables(self, committish: str) -> list[str]:
        commit = self.load_commit(self.resolve(committish))
        return sorted(commit.tree_map())

    def lookup_table(self, committish: str, name: str) -> str:
        """Metadata object key for a table at a commit."""
        commit = self.load_commit(self.resolve(committish))
        key = commit.tree_map().get(name)
        if key is None:
            raise UnknownTable(f"no table {name!r} at {committish}")
        return key

    def _ancestors(self, commit_hash: str) -> Iterator[str]:
        cursor: str | None = commit_hash
        while cursor is not None:
            yield cursor
            cursor = self.load_commit(cursor).parent

    def is_ancestor(self, maybe_ancestor: str, descendant: str) -> bool:
        return any(h == maybe_ancestor for h in self._ancestors(descendant))

    def lowest_common_ancestor(self, a: str, b: str) -> str | None:
        seen = set(self._ancestors(a))
        for h in self._ancestors(b):
            if h in seen:
                return h
        return None

    # --- merge -----------------------------------------------------------------

    def merge(
        self,
        source: str,
        target: str,
        author: str,
        message: str | None = None,
        max_retries: int = 5,
        timestamp_ms: int | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> MergeResult:
        """Merge the source branch into the target branch.

        Retries the whole merge when the target head moves during the
        attempt; each retry recomputes against the fresh head.
        """
        source_head = self.branch_head(source)
        for attempt in range(max_retries + 1):
            target_head = self.branch_head(target)
            result = self._merge_once(
                source, source_head, target, target_head, author, message,
                timestamp_ms,
            )
            if result is not None:
                return result
            if attempt < max_retries:
                sleep(random.uniform(0, 0.01 * (2**attempt)))
        raise RetriesExhausted(
            f"merge of {source!r} into {target!r} lost the head race"
            f" {max_retries + 1} times"
        )

    def _merge_once(
        self,
        source: str,
        source_head: str,
        target: str,
        target_head: str,
        author: str,
        message: str | None,
        timestamp_ms: int | None,
    ) -> MergeResult | None:
        """One merge attempt; None means the CAS lost and we should retry."""
        if source_head == target_head or self.is_ancestor(source_head, target_head):
            return MergeResult(kind="up-to-date", commit=target_head)
        if self.is_ancestor(target_head, source_head):
            if self.store.cas_ref(f"refs/heads/{target}", target_head, source_head):
                return MergeResult(kind="fast-forward", commit=source_head)
            return None
        base = self.lowest_common_ancestor(source_head, target_head)
        if base is None:
            raise MergeConflict(
                f"{source!r} and {target!r} share no history", tables=()
            )
        ts = canonical.now_ms() if timestamp_ms is None else timestamp_ms
        tree_s = self.load_commit(source_head).tree_map()
        tree_t = self.load_commit(target_head).tree_map()
        tree_b = self.load_commit(base).tree_map()
        merged: dict[str, str] = {}
        summary: dict[str, str] = {}
        conflicts: list[str] = []
        for name in sorted(set(tree_s) | set(tree_t) | set(tree_b)):
            mk_s, mk_t, mk_b = tree_s.get(name), tree_t.get(name), tree_b.get(name)
            if mk_s == mk_t:
                if mk_t is not None:
                    merged[name] = mk_t
                continue
            if mk_s == mk_b:  # only target changed
                if mk_t is not None:
                    merged[name] = mk_t
                continue
            if mk_t == mk_b:  # only source changed
                if mk_s is not None:
                    merged[name] = mk_s
                    summary[name] = "merge"
                continue
            merged_key = self._merge_table(name, mk_s, mk_t, mk_b, ts)
            if merged_key is None:
                conflicts.append(name)
            else:
                merged[name] = merged_key
                summary[name] = "merge"
        if conflicts:
            raise MergeConflict(
                "cannot merge tables: " + ", ".join(conflicts),
                tables=tuple(conflicts),
            )
        # The trailer records the merged-in head so history stays auditable
        # even when the caller supplies its own message.
        subject = message or f"Merge branch '{source}' into '{target}'"
        full_message = f"{subject}\n\nMerged-From: {source} {source_head}"
        commit_hash = self.store_commit(
            parent=target_head,
            timestamp_ms=ts,
            author=author,
            message=full_message,
            tree=merged,
            change_summary=summary,
        )
        if self.store.cas_ref(f"refs/heads/{target}", target_head, commit_hash):
            return MergeResult(
                kind="merge", commit=commit_hash, tables=tuple(summary)
            )
        return None

    def _merge_table(
        self,
        name: str,
        mk_s: str | None,
        mk_t: str | None,
        mk_b: str | None,
        timestamp_ms: int,
    ) -> str | None:
        """Replay-merge one table changed on both sides; None on conflict."""
        if mk_s is None or mk_t is None or mk_b is None:
            # created independently on both sides, or dropped on one side
            # while changed on the other: no sensible auto-merge
            return None
        meta_s = tbl.load_metadata(self.store, mk_s)
        meta_t = tbl.load_metadata(self.store, mk_t)
        meta_b = tbl.load_metadata(self.store, mk_b)
        if not (meta_s.table_uuid == meta_t.table_uuid == meta_b.table_uuid):
            return None
        # the source side must be data-only relative to the base; schema,
        # spec, and property changes do not replay
        if (
            meta_s.schemas != meta_b.schemas
            or meta_s.current_schema_id != meta_b.current_schema_id
            or meta_s.partition_specs != meta_b.partition_specs
            or meta_s.current_spec_id != meta_b.current_spec_id
            or meta_s.properties != meta_b.properties
        ):
            return None
        chain = self._snapshot_chain(meta_s, meta_b.current_snapshot_id)
        if chain is None:
            return None
        work = meta_t
        try:
            for snap in chain:
                manifest = tbl.read_manifest(self.store, snap.manifest_key)
                removed_keys = [f.key for f in manifest["DELETED"]]
                live_keys = {f.key for f in tbl.live_files(self.store, work)}
                if not set(removed_keys) <= live_keys:
                    return None
                work = tbl.build_snapshot(
                    self.store,
                    work,
                    manifest["ADDED"],
                    removed_keys,
                    snap.operation,
                    timestamp_ms,
                )
        except CorruptMetadata:
            return None  # e.g. replayed file already live on target
        return tbl.store_metadata(self.store, work)

    def _snapshot_chain(
        self, meta: tbl.TableMetadata, base_snapshot_id: int | None
    ) -> list[tbl.Snapshot] | None:
        """Snapshots from just after base to current, oldest first.

        None when the current snapshot does not descend from the base,
        which happens after a rollback or expiry on the source side.
        """
        chain: list[tbl.Snapshot] = []
        cursor = meta.current_snapshot_id
        while cursor is not None and cursor != base_snapshot_id:
            snap = meta.snapshot_by_id(cursor)
            chain.append(snap)
            cursor = snap.parent_id
        if cursor != base_snapshot_id:
            return None
        chain.reverse()
        return chain
