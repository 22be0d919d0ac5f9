"""Transactions: staging, atomic publication, rebase, conflicts, crashes."""

from __future__ import annotations

import random

import pytest

from helpers import EVENT_COLUMNS, all_live_rows, eval_atoms, make_event_rows, row_multiset
from minilake import Config, Lakehouse
from minilake.errors import (
    AlreadyExists,
    ConflictError,
    RetriesExhausted,
    SchemaViolation,
    TransactionClosed,
    UnknownBranch,
    UnknownSnapshot,
    UnknownTable,
)
from minilake.table import AddColumn, RenameColumn
from minilake.transaction import Transaction

ROWS = [
    {"id": 1, "region": "EU", "amount": 5.0, "d": None, "ts": None, "ok": True},
    {"id": 2, "region": "US", "amount": 6.5, "d": None, "ts": None, "ok": False},
    {"id": 3, "region": "EU", "amount": None, "d": None, "ts": None, "ok": None},
]


def seed(lake: Lakehouse, table: str = "events", rows=ROWS) -> None:
    lake.create_table(table, EVENT_COLUMNS)
    if rows:
        lake.append(table, rows)


def live_ids(lake: Lakehouse, table: str = "events") -> list[int]:
    _, rows = lake.scan(table)
    return sorted(r["id"] for r in rows)


class Boom(Exception):
    pass


# --- lifecycle ---------------------------------------------------------------------

def test_begin_captures_branch_head(lake):
    seed(lake)
    tx = lake.begin()
    head_before = lake.catalog.branch_head("main")
    lake.append("events", [{"id": 9, "region": None, "amount": None,
                            "d": None, "ts": None, "ok": None}])
    # the transaction still sees its open-time base
    assert sorted(r["id"] for r in all_live_rows(lake.store, tx.table_meta("events"))) == [1, 2, 3]
    assert tx._base_commit.hash == head_before


def test_begin_unknown_branch(lake):
    with pytest.raises(UnknownBranch):
        lake.begin("nope")


def test_closed_transaction_rejects_everything(lake):
    seed(lake)
    tx = lake.begin()
    tx.stage_append("events", ROWS[:1])
    tx.abort()
    assert tx.state == "aborted"
    with pytest.raises(TransactionClosed):
        tx.stage_append("events", ROWS[:1])
    with pytest.raises(TransactionClosed):
        tx.commit("a", "m")
    # committing twice is also a use-after-close
    tx2 = lake.begin()
    tx2.stage_append("events", [{"id": 10, "region": None, "amount": None,
                                 "d": None, "ts": None, "ok": None}])
    tx2.commit("a", "m")
    assert tx2.state == "committed"
    with pytest.raises(TransactionClosed):
        tx2.commit("a", "m")


def test_commit_with_nothing_staged_fails(lake):
    seed(lake)
    tx = lake.begin()
    with pytest.raises(ValueError):
        tx.commit("a", "m")


def test_unknown_table_fails_at_staging(lake):
    tx = lake.begin()
    with pytest.raises(UnknownTable):
        tx.stage_append("ghost", ROWS)


def test_create_duplicate_table_fails_at_staging(lake):
    seed(lake)
    tx = lake.begin()
    with pytest.raises(AlreadyExists):
        tx.stage_create_table("events", EVENT_COLUMNS)


# --- durability -----------------------------------------------------------------------

def test_committed_data_survives_reopen(tmp_path, lake_factory):
    lake = lake_factory("wh1")
    seed(lake)
    reopened = lake_factory("wh1")
    assert live_ids(reopened) == [1, 2, 3]
    assert reopened.list_tables() == ["events"]
    # history too
    assert [c.message for c in reopened.log()][-1] == "Initialize warehouse"


# --- no-ops and validation ---------------------------------------------------------------

def test_empty_append_is_a_no_op(lake):
    seed(lake)
    head = lake.catalog.branch_head("main")
    count, commit = lake.append("events", [])
    assert (count, commit) == (0, None)
    assert lake.catalog.branch_head("main") == head


def test_schema_violation_writes_nothing(lake):
    seed(lake)
    head = lake.catalog.branch_head("main")
    objects_before = set(lake.store.list("tables/"))
    bad = [{"id": 4, "region": "EU", "amount": 1.0, "d": None, "ts": None, "ok": True},
           {"id": "oops", "region": None, "amount": None, "d": None, "ts": None,
            "ok": None}]
    with pytest.raises(SchemaViolation):
        lake.append("events", bad)
    assert lake.catalog.branch_head("main") == head
    assert set(lake.store.list("tables/")) == objects_before
    assert live_ids(lake) == [1, 2, 3]


def test_delete_matching_nothing_is_a_no_op(lake):
    seed(lake)
    head = lake.catalog.branch_head("main")
    matched, commit = lake.delete("events", "id = 999")
    assert (matched, commit) == (0, None)
    assert lake.catalog.branch_head("main") == head


def test_required_column_enforced(lake):
    seed(lake)
    with pytest.raises(SchemaViolation):
        lake.append("events", [{"id": None, "region": None, "amount": None,
                                "d": None, "ts": None, "ok": None}])
    with pytest.raises(SchemaViolation):
        lake.append("events", [{"region": "EU"}])


# --- copy-on-write delete ----------------------------------------------------------------

def test_whole_file_delete_writes_no_survivor(lake):
    lake.create_table("events", EVENT_COLUMNS, partition="identity(region)")
    lake.append("events", ROWS)  # files: EU(2 rows), US(1 row)
    matched, commit = lake.delete("events", "region = 'US'")
    assert matched == 1
    meta = lake.table_metadata("events")
    snap = meta.current_snapshot
    assert snap.summary == (0, 1, 0, 1)  # nothing added, one file dropped
    assert live_ids(lake) == [1, 3]


def test_partial_file_delete_rewrites_survivors(lake):
    seed(lake)  # single unpartitioned file with ids 1,2,3
    matched, _ = lake.delete("events", "id = 2")
    assert matched == 1
    meta = lake.table_metadata("events")
    assert meta.current_snapshot.summary == (1, 1, 2, 3)
    assert live_ids(lake) == [1, 3]
    # old snapshot still has all three
    assert sorted(
        r["id"] for r in all_live_rows(lake.store, meta, snapshot_id=1)
    ) == [1, 2, 3]


def test_delete_matches_against_random_oracle(lake):
    rng = random.Random(1234)
    lake.create_table("events", EVENT_COLUMNS, partition="bucket(2,id)")
    next_id = 0
    for case in range(100):
        rows = make_event_rows(rng, rng.randint(1, 12), id_start=next_id)
        next_id += len(rows)
        lake.append("events", rows)
        current = all_live_rows(lake.store, lake.table_metadata("events"))
        column, op = rng.choice([
            ("id", "<"), ("id", ">="), ("region", "="), ("region", "!="),
            ("amount", ">"), ("region", "isnull"), ("ok", "="), ("d", "notnull"),
        ])
        literal = {
            "id": rng.randrange(next_id + 1),
            "region": rng.choice(["EU", "US", "AP"]),
            "amount": round(rng.uniform(-400, 400), 2),
            "ok": rng.choice([True, False]),
            "d": None,
        }[column]
        atoms = [(column, op, literal)]
        expected_gone = [r for r in current if eval_atoms(atoms, r)]
        expected_kept = [r for r in current if not eval_atoms(atoms, r)]
        text = {
            "isnull": f"{column} IS NULL",
            "notnull": f"{column} IS NOT NULL",
        }.get(op)
        if text is None:
            if isinstance(literal, bool):
                rendered = "true" if literal else "false"
            elif isinstance(literal, float):
                rendered = repr(literal)
            elif isinstance(literal, str):
                rendered = f"'{literal}'"
            else:
                rendered = str(literal)
            text = f"{column} {op} {rendered}"
        matched, _ = lake.delete("events", text)
        assert matched == len(expected_gone)
        remaining = all_live_rows(lake.store, lake.table_metadata("events"))
        assert row_multiset(remaining) == row_multiset(expected_kept)


# --- multi-op and multi-table atomicity ------------------------------------------------

def test_multi_table_commit_is_one_atomic_transition(lake):
    seed(lake, "orders")
    seed(lake, "users", rows=[])
    observer = Lakehouse(lake.root)
    commits_before = len(list(observer.log()))

    tx = lake.begin()
    tx.stage_append("orders", [{"id": 50, "region": "AP", "amount": 1.0,
                                "d": None, "ts": None, "ok": True}])
    tx.stage_append("users", ROWS[:1])
    # nothing staged is visible before the CAS
    assert live_ids(observer, "orders") == [1, 2, 3]
    assert live_ids(observer, "users") == []
    commit = tx.commit("dev", "load both")

    assert live_ids(observer, "orders") == [1, 2, 3, 50]
    assert live_ids(observer, "users") == [1]
    log = list(observer.log())
    assert len(log) == commits_before + 1  # exactly one transition
    assert log[0].hash == commit
    assert log[0].summary_map() == {"orders": "append", "users": "append"}
    tree = log[0].tree_map()
    assert set(tree) == {"orders", "users"}


def test_ops_compose_within_one_transaction(lake):
    seed(lake)
    tx = lake.begin()
    tx.stage_append("events", [{"id": 4, "region": "AP", "amount": 2.0,
                                "d": None, "ts": None, "ok": None}])
    # the staged append is visible to the in-transaction delete
    matched = tx.stage_delete("events", "id = 4")
    assert matched == 1
    matched = tx.stage_delete("events", "id = 1")
    assert matched == 1
    tx.commit("dev", "append then delete")
    assert live_ids(lake) == [2, 3]
    meta = lake.table_metadata("events")
    assert lake.catalog.load_commit(
        lake.catalog.branch_head("main")
    ).summary_map() == {"events": "append+delete"}
    # one commit, several snapshots, all stamped with the commit timestamp
    commit = lake.catalog.load_commit(lake.catalog.branch_head("main"))
    new_snaps = [s for s in meta.snapshots if s.snapshot_id > 1]
    assert len(new_snaps) == 3
    assert {s.timestamp_ms for s in new_snaps} == {commit.timestamp_ms}


def test_single_timestamp_across_tables(lake):
    seed(lake, "a")
    seed(lake, "b")
    tx = lake.begin()
    tx.stage_append("a", ROWS[:1])
    tx.stage_append("b", ROWS[:1])
    commit_hash = tx.commit("dev", "both")
    commit = lake.catalog.load_commit(commit_hash)
    for t in ("a", "b"):
        meta = lake.table_metadata(t)
        assert meta.current_snapshot.timestamp_ms == commit.timestamp_ms
        assert meta.snapshot_log[-1] == (commit.timestamp_ms, meta.current_snapshot_id)


# --- schema and spec changes --------------------------------------------------------------

def test_added_column_reads_null_for_old_rows(lake):
    seed(lake)
    lake.evolve_schema("events", [AddColumn("note", "string")])
    cols, rows = lake.scan("events")
    assert ("note", "string") in cols
    assert all(r["note"] is None for r in rows)
    lake.append("events", [{"id": 4, "region": None, "amount": None, "d": None,
                            "ts": None, "ok": None, "note": "fresh"}])
    _, rows = lake.scan("events", where="note IS NOT NULL")
    assert [r["id"] for r in rows] == [4]


def test_rename_then_scan_by_new_name(lake):
    seed(lake)
    lake.evolve_schema("events", [RenameColumn("region", "zone")])
    _, rows = lake.scan("events", where="zone = 'EU'")
    assert sorted(r["id"] for r in rows) == [1, 3]


def test_rollback_restores_old_live_set(lake):
    seed(lake)
    lake.append("events", [{"id": 4, "region": None, "amount": None, "d": None,
                            "ts": None, "ok": None}])
    meta = lake.table_metadata("events")
    first = 1
    lake.rollback("events", first)
    assert live_ids(lake) == [1, 2, 3]
    # rolling back to an id that never existed fails at staging
    with pytest.raises(UnknownSnapshot):
        lake.rollback("events", 99)


def test_rollback_to_expired_snapshot_is_unknown(lake):
    seed(lake)
    lake.append("events", [{"id": 4, "region": None, "amount": None, "d": None,
                            "ts": None, "ok": None}])
    report, commit = lake.expire_snapshots("events", older_than_ms=2**62, keep_last=1)
    assert commit is not None
    with pytest.raises(UnknownSnapshot):
        lake.rollback("events", 1)


# --- concurrency: rebase and conflicts --------------------------------------------------

def two_transactions(lake, table="events"):
    tx1 = lake.begin()
    tx2 = lake.begin()
    return tx1, tx2


def test_concurrent_appends_both_land(lake):
    seed(lake)
    tx1, tx2 = two_transactions(lake)
    tx1.stage_append("events", [{"id": 10, "region": None, "amount": None,
                                 "d": None, "ts": None, "ok": None}])
    tx2.stage_append("events", [{"id": 11, "region": None, "amount": None,
                                 "d": None, "ts": None, "ok": None}])
    c1 = tx1.commit("dev", "first")
    c2 = tx2.commit("dev", "second")  # rebases over c1
    assert live_ids(lake) == [1, 2, 3, 10, 11]
    second = lake.catalog.load_commit(c2)
    assert second.parent == c1
    meta = lake.table_metadata("events")
    assert meta.current_snapshot.parent_id is not None


def test_concurrent_deletes_of_same_rows_conflict(lake):
    seed(lake)
    tx1, tx2 = two_transactions(lake)
    assert tx1.stage_delete("events", "id = 2") == 1
    assert tx2.stage_delete("events", "id = 2") == 1
    tx1.commit("dev", "win")
    with pytest.raises(ConflictError):
        tx2.commit("dev", "lose")
    assert tx2.state == "aborted"
    assert live_ids(lake) == [1, 3]


def test_delete_of_compacted_away_files_conflicts(lake):
    seed(lake)
    lake.append("events", [{"id": 4, "region": "EU", "amount": 1.0, "d": None,
                            "ts": None, "ok": None}])
    tx = lake.begin()
    assert tx.stage_delete("events", "id = 1") == 1
    # compaction rewrites every small file while tx is in flight
    report, commit = lake.compact("events")
    assert commit is not None
    with pytest.raises(ConflictError):
        tx.commit("dev", "stale delete")
    assert live_ids(lake) == [1, 2, 3, 4]


def test_concurrent_schema_changes_conflict(lake):
    seed(lake)
    tx1, tx2 = two_transactions(lake)
    tx1.stage_schema_change("events", [AddColumn("x", "int64")])
    tx2.stage_schema_change("events", [AddColumn("y", "int64")])
    tx1.commit("dev", "first wins")
    with pytest.raises(ConflictError):
        tx2.commit("dev", "second loses")
    fields = [f.name for f in lake.table_metadata("events").current_schema.fields]
    assert "x" in fields and "y" not in fields


def test_schema_change_over_untouched_table_rebases(lake):
    seed(lake, "a")
    seed(lake, "b")
    tx = lake.begin()
    tx.stage_schema_change("a", [AddColumn("x", "int64")])
    # concurrent commit touches only table b
    lake.append("b", [{"id": 7, "region": None, "amount": None, "d": None,
                       "ts": None, "ok": None}])
    commit = tx.commit("dev", "schema change rides along")
    assert commit == lake.catalog.branch_head("main")
    assert "x" in [f.name for f in lake.table_metadata("a").current_schema.fields]
    assert live_ids(lake, "b") == [1, 2, 3, 7]


def test_schema_change_conflicts_when_same_table_moves(lake):
    seed(lake)
    tx = lake.begin()
    tx.stage_schema_change("events", [AddColumn("x", "int64")])
    lake.append("events", [{"id": 7, "region": None, "amount": None, "d": None,
                            "ts": None, "ok": None}])  # same table advances
    with pytest.raises(ConflictError):
        tx.commit("dev", "stale schema change")


def test_append_rebases_over_schema_change(lake):
    seed(lake)
    tx = lake.begin()
    tx.stage_append("events", [{"id": 9, "region": None, "amount": None,
                                "d": None, "ts": None, "ok": None}])
    lake.evolve_schema("events", [AddColumn("note", "string")])
    tx.commit("dev", "rebase append")
    meta = lake.table_metadata("events")
    # the schema change survives and the appended file is live
    assert "note" in [f.name for f in meta.current_schema.fields]
    assert live_ids(lake) == [1, 2, 3, 9]


def test_create_vs_create_conflicts(lake):
    tx1, tx2 = two_transactions(lake)
    tx1.stage_create_table("events", EVENT_COLUMNS)
    tx2.stage_create_table("events", EVENT_COLUMNS)
    tx1.commit("dev", "create")
    with pytest.raises(ConflictError):
        tx2.commit("dev", "create too")
    assert lake.list_tables() == ["events"]


def test_concurrent_expires_conflict(lake):
    seed(lake)
    lake.append("events", [{"id": 4, "region": None, "amount": None, "d": None,
                            "ts": None, "ok": None}])
    tx1, tx2 = two_transactions(lake)
    assert tx1.stage_expire("events", older_than_ms=2**62, keep_last=1)
    assert tx2.stage_expire("events", older_than_ms=2**62, keep_last=1)
    tx1.commit("dev", "expire")
    with pytest.raises(ConflictError):
        tx2.commit("dev", "expire too")


# --- retries -----------------------------------------------------------------------------

def interloper_hook(lake, table, point="pre-cas", times=1):
    """Fault hook that lands competing appends at a fault point."""
    state = {"left": times}

    def hook(p):
        if p == point and state["left"] > 0:
            state["left"] -= 1
            rival = Lakehouse(lake.root)
            rival.append(table, [{"id": 1000 + state["left"], "region": None,
                                  "amount": None, "d": None, "ts": None,
                                  "ok": None}])

    return hook


def test_lost_cas_retries_and_lands(lake):
    seed(lake)
    tx = Transaction(lake.store, lake.catalog, "main", lake.config,
                     fault_hook=interloper_hook(lake, "events", times=1),
                     sleep=lambda s: None)
    tx.stage_append("events", [{"id": 20, "region": None, "amount": None,
                                "d": None, "ts": None, "ok": None}])
    commit = tx.commit("dev", "after one lost race")
    assert tx.state == "committed"
    assert live_ids(lake) == [1, 2, 3, 20, 1000]
    # the landed commit's parent is the interloper's commit
    parent = lake.catalog.load_commit(commit).parent
    assert "1 rows" in lake.catalog.load_commit(parent).message


def test_retries_exhausted_aborts(lake):
    seed(lake)
    config = Config(max_retries=2)
    tx = Transaction(lake.store, lake.catalog, "main", config,
                     fault_hook=interloper_hook(lake, "events", times=100),
                     sleep=lambda s: None)
    tx.stage_append("events", [{"id": 20, "region": None, "amount": None,
                                "d": None, "ts": None, "ok": None}])
    with pytest.raises(RetriesExhausted):
        tx.commit("dev", "never lands")
    assert tx.state == "aborted"
    # three interlopers landed (one per attempt), ours did not
    assert live_ids(lake) == [1, 2, 3, 1097, 1098, 1099]


def test_zero_retries_config(lake):
    seed(lake)
    config = Config(max_retries=0)
    tx = Transaction(lake.store, lake.catalog, "main", config,
                     fault_hook=interloper_hook(lake, "events", times=1),
                     sleep=lambda s: None)
    tx.stage_append("events", [{"id": 20, "region": None, "amount": None,
                                "d": None, "ts": None, "ok": None}])
    with pytest.raises(RetriesExhausted):
        tx.commit("dev", "one attempt only")


# --- crash safety ----------------------------------------------------------------------

FAULT_POINTS = [
    "build-start",
    "file-written",
    "snapshot-built",
    "table-built",
    "commit-stored",
    "pre-cas",
]


@pytest.mark.parametrize("point", FAULT_POINTS)
def test_crash_at_fault_point_leaves_state_unchanged(tmp_path, point):
    armed = {"point": None}

    def hook(p):
        if p == armed["point"]:
            raise Boom(p)

    lake = Lakehouse(tmp_path / "wh", fault_hook=hook)
    lake.init()
    seed(lake)
    head = lake.catalog.branch_head("main")
    rows_before = row_multiset(all_live_rows(lake.store, lake.table_metadata("events")))

    armed["point"] = point
    with pytest.raises(Boom):
        lake.append("events", [{"id": 99, "region": "EU", "amount": 1.0,
                                "d": None, "ts": None, "ok": True}])
    armed["point"] = None

    # a fresh handle on the same directory sees the pre-crash state
    reopened = Lakehouse(tmp_path / "wh")
    assert reopened.catalog.branch_head("main") == head
    assert row_multiset(
        all_live_rows(reopened.store, reopened.table_metadata("events"))
    ) == rows_before
    # and the warehouse still accepts writes afterwards
    count, commit = reopened.append(
        "events", [{"id": 100, "region": None, "amount": None, "d": None,
                    "ts": None, "ok": None}])
    assert count == 1 and commit is not None
