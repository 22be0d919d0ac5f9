"""Concurrent-writer stress for the optimistic commit protocol.

Spawns N threads that each land M single-row append commits against one
table, then verifies the outcome: every row present exactly once, the
commit history a single linear chain, and one append commit per row.
Losing a compare-and-swap race costs a rebase and a retry, so the retry
budget must scale with contention; --max-retries raises it.

Run:  python scripts/stress_writers.py [--threads 8] [--commits 25]
"""

from __future__ import annotations

import argparse
import shutil
import sys
import tempfile
import threading
import time

from minilake.config import Config
from minilake.lakehouse import Lakehouse


def writer(lake: Lakehouse, ids: range, failures: list[str]) -> None:
    for i in ids:
        try:
            lake.append("events", [{"id": i, "source": threading.current_thread().name}])
        except Exception as exc:  # collected, not raised: other threads keep going
            failures.append(f"id {i}: {type(exc).__name__}: {exc}")


def verify(lake: Lakehouse, expected_ids: set[int]) -> list[str]:
    problems: list[str] = []
    _, rows = lake.scan("events")
    got = sorted(r["id"] for r in rows)
    if got != sorted(expected_ids):
        missing = expected_ids - set(got)
        extra = [i for i in got if i not in expected_ids]
        problems.append(f"row set wrong: {len(missing)} missing, {len(extra)} extra/dup")
    entries = list(lake.log())
    for newer, older in zip(entries, entries[1:]):
        if newer.parent != older.hash:
            problems.append(f"history not linear at {newer.hash[:12]}")
            break
    if entries[-1].parent is not None:
        problems.append("history does not end at the root commit")
    appends = sum(
        1 for e in entries if dict(e.change_summary).get("events") == "append"
    )
    if appends != len(expected_ids):
        problems.append(f"expected {len(expected_ids)} append commits, found {appends}")
    return problems


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=8)
    parser.add_argument("--commits", type=int, default=25, help="commits per thread")
    parser.add_argument(
        "--max-retries", type=int, default=500, help="CAS retry budget per commit"
    )
    parser.add_argument("--root", help="warehouse directory (default: a temp dir)")
    args = parser.parse_args(argv)

    root = args.root or tempfile.mkdtemp(prefix="minilake-stress-")
    lake = Lakehouse(root, config=Config(max_retries=args.max_retries))
    lake.init(author="stress")
    lake.create_table("events", "id:int64:required, source:string")

    total = args.threads * args.commits
    print(f"{args.threads} threads x {args.commits} commits -> {total} rows")
    failures: list[str] = []
    threads = [
        threading.Thread(
            name=f"w{t}",
            target=writer,
            args=(lake, range(t * args.commits, (t + 1) * args.commits), failures),
        )
        for t in range(args.threads)
    ]
    started = time.perf_counter()
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    elapsed = time.perf_counter() - started

    for line in failures[:5]:
        print(f"  FAILED {line}")
    problems = [] if not failures else [f"{len(failures)} commits failed"]
    problems += verify(lake, set(range(total)))

    print(f"elapsed {elapsed:.2f}s ({total / elapsed:.1f} commits/s)")
    if args.root is None:
        shutil.rmtree(root)
    if problems:
        for p in problems:
            print(f"PROBLEM: {p}")
        return 1
    print("verified: all rows landed once, history is one linear chain")
    return 0


if __name__ == "__main__":
    sys.exit(main())
