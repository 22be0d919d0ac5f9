"""End-to-end tour of a minilake warehouse.

Walks one warehouse through the full lifecycle: table creation with hidden
partitioning, appends, predicate scans with file pruning, copy-on-write
deletes, time travel, schema evolution, branching and merging, a Type 2
slowly-changing dimension, and the maintenance trio (compact, expire, gc).

Run:  python scripts/demo_workflow.py [--root DIR] [--keep]
"""

from __future__ import annotations

import argparse
import shutil
import sys
import tempfile
import time
from datetime import datetime, timedelta

from minilake.lakehouse import Lakehouse
from minilake.scan import Head, plan_scan, resolve_snapshot
from minilake.table import AddColumn, RenameColumn

BASE = datetime(2024, 3, 1, 9, 0, 0)
REGIONS = ("EU", "US", "AP")


def section(title: str) -> None:
    print(f"\n=== {title} " + "=" * max(0, 60 - len(title)))


def event(i: int) -> dict:
    return {
        "id": i,
        "region": REGIONS[i % len(REGIONS)],
        "amount": round(50.0 + 37.5 * i, 2),
        "ts": BASE + timedelta(days=i % 3, hours=i),
    }


def show_rows(rows: list[dict], limit: int = 6) -> None:
    for row in rows[:limit]:
        print("   ", {k: v for k, v in sorted(row.items())})
    if len(rows) > limit:
        print(f"    ... {len(rows) - limit} more")


def pruning(lake: Lakehouse, table: str, where: str) -> str:
    meta = lake.table_metadata(table)
    head = resolve_snapshot(meta, Head())
    total = plan_scan(lake.store, meta, head, lake._bind(None, meta))
    kept = plan_scan(lake.store, meta, head, lake._bind(where, meta))
    return f"{len(total) - len(kept)} of {len(total)} files pruned"


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--root", help="warehouse directory (default: a temp dir)")
    parser.add_argument(
        "--keep", action="store_true", help="leave the warehouse on disk afterwards"
    )
    args = parser.parse_args(argv)

    root = args.root or tempfile.mkdtemp(prefix="minilake-demo-")
    lake = Lakehouse(root)

    section("init")
    commit = lake.init(author="demo")
    print(f"warehouse at {root}")
    print(f"root commit {commit[:12]}")

    section("create + append")
    lake.create_table(
        "events",
        "id:int64:required, region:string, amount:float64, ts:timestamp",
        partition="bucket(4, id)|day(ts)",
    )
    count, _ = lake.append("events", [event(i) for i in range(12)])
    print(f"appended {count} rows")
    count, first_commit = lake.append("events", [event(i) for i in range(12, 24)])
    print(f"appended {count} more in commit {first_commit[:12]}")
    snap_after_appends = lake.table_metadata("events").current_snapshot_id

    section("scan with pruning")
    where = "region = 'EU' AND amount > 300.0"
    _, rows = lake.scan("events", where=where)
    print(f"where {where!r} -> {len(rows)} rows ({pruning(lake, 'events', where)})")
    show_rows(rows)

    section("copy-on-write delete")
    removed, _ = lake.delete("events", "id = 3")
    _, remaining = lake.scan("events", where="id = 3")
    print(f"deleted {removed} row(s); id = 3 now matches {len(remaining)} rows")

    section("time travel")
    _, old = lake.scan("events", where="id = 3", at_snapshot=snap_after_appends)
    print(f"at snapshot {snap_after_appends} the row is still visible:")
    show_rows(old)

    section("schema evolution")
    lake.evolve_schema("events", [AddColumn("note", "string"), RenameColumn("amount", "amt")])
    lake.append(
        "events",
        [{"id": 100, "region": "EU", "amt": 999.0, "ts": BASE, "note": "post-evolution"}],
    )
    _, rows = lake.scan("events", where="amt > 900.0", select=("id", "amt", "note"))
    print("old files read through the new schema (note projects as null):")
    show_rows(rows)

    section("branch + merge")
    lake.create_branch("dev")
    lake.append("events", [{"id": 200, "region": "AP", "amt": 1.0, "ts": BASE}], branch="dev")
    _, on_main = lake.scan("events", where="id = 200")
    _, on_dev = lake.scan("events", where="id = 200", branch="dev")
    print(f"id = 200 on main: {len(on_main)} rows, on dev: {len(on_dev)} rows")
    result = lake.merge("dev", "main")
    _, on_main = lake.scan("events", where="id = 200")
    print(f"merge dev -> main ({result.kind}); id = 200 on main: {len(on_main)} rows")

    section("slowly-changing dimension (Type 2)")
    lake.create_table(
        "customers",
        [
            ("customer_id", "int64", True),
            ("name", "string", False),
            ("address", "string", False),
            ("effective_from", "timestamp", True),
            ("effective_to", "timestamp", False),
            ("is_current", "bool", True),
        ],
    )
    day1 = [
        {"customer_id": 1, "name": "ann", "address": "12 elm"},
        {"customer_id": 2, "name": "bo", "address": "9 oak"},
    ]
    res, _ = lake.scd2_merge("customers", day1, ("customer_id",), ("address",), BASE)
    print(f"day 1: inserted={res.inserted} closed={res.closed} unchanged={res.unchanged}")
    day2 = [
        {"customer_id": 1, "name": "ann", "address": "12 elm"},
        {"customer_id": 2, "name": "bo", "address": "31 pine"},
    ]
    res, _ = lake.scd2_merge(
        "customers", day2, ("customer_id",), ("address",), BASE + timedelta(days=1)
    )
    print(f"day 2: inserted={res.inserted} closed={res.closed} unchanged={res.unchanged}")
    _, history = lake.scan("customers", where="customer_id = 2")
    history.sort(key=lambda r: r["effective_from"])
    print("version history for customer 2:")
    show_rows(history)

    section("maintenance")
    report, _ = lake.compact("events")
    print("  ".join(report.lines()))
    horizon = int(time.time() * 1000) + 1000  # everything but the kept tail
    report, _ = lake.expire_snapshots("events", older_than_ms=horizon, keep_last=2)
    print("  ".join(report.lines()))
    report = lake.gc("events", grace_ms=0)
    print("  ".join(report.lines()))
    report = lake.gc("customers", grace_ms=0)
    print("  ".join(report.lines()))

    section("log (most recent first)")
    for entry in list(lake.log())[:5]:
        summary = ", ".join(f"{t} ({op})" for t, op in entry.change_summary) or "(root)"
        print(f"    {entry.hash[:12]}  {summary}: {entry.message}")

    if args.keep or args.root:
        print(f"\nwarehouse kept at {root}")
    else:
        shutil.rmtree(root)
        print("\nwarehouse removed (pass --keep to keep it)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
