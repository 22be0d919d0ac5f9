"""Command-line interface.

Exit codes: 0 success, 1 domain error (printed as "error: <code>:
<message>" on stderr), 2 usage error. The warehouse root comes from
--root, the MINILAKE_ROOT environment variable, or the current
directory, in that order.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Sequence

from . import canonical, csvio
from .errors import MinilakeError
from .lakehouse import Lakehouse, default_author
from .table import AddColumn, DropColumn, RenameColumn


def _parse_time_ms(text: str) -> int:
    """Accept epoch milliseconds or an ISO-8601 UTC timestamp with Z."""
    if text.isdigit():
        return int(text)
    try:
        return canonical.timestamp_to_micros(canonical.parse_timestamp(text)) // 1000
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"expected epoch milliseconds or ISO-8601 Z timestamp: {exc}"
        ) from None


def _parse_ts(text: str):
    try:
        return canonical.parse_timestamp(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _csv_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minilake",
        description="Single-node lakehouse: versioned tables on a local object store.",
    )
    parser.add_argument(
        "--root",
        default=None,
        help="warehouse root directory (default: $MINILAKE_ROOT or .)",
    )
    parser.add_argument(
        "--branch", default=None, help="branch to operate on (default from config)"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("init", help="create an empty warehouse")

    p_table = sub.add_parser("table", help="table management")
    table_sub = p_table.add_subparsers(dest="table_command", required=True)
    p_create = table_sub.add_parser("create", help="create a table")
    p_create.add_argument("--name", required=True)
    p_create.add_argument(
        "--schema",
        required=True,
        help="columns as name:type[:required], comma separated",
    )
    p_create.add_argument(
        "--partition",
        default="",
        help="partition spec, e.g. 'identity(region)|day(ts)|bucket(16,user_id)'",
    )

    p_ingest = sub.add_parser("ingest", help="append rows from a CSV file")
    p_ingest.add_argument("--table", required=True)
    p_ingest.add_argument("--csv", required=True, help="path to a CSV file with header")

    p_scan = sub.add_parser("scan", help="query a table; CSV on stdout")
    p_scan.add_argument("--table", required=True)
    p_scan.add_argument("--select", default=None, help="columns, comma separated")
    p_scan.add_argument("--where", default=None, help="predicate text")
    when = p_scan.add_mutually_exclusive_group()
    when.add_argument("--at-snapshot", type=int, default=None)
    when.add_argument(
        "--as-of", type=_parse_time_ms, default=None, metavar="TIME",
        help="epoch ms or ISO-8601 Z timestamp",
    )
    when.add_argument("--at-commit", default=None, metavar="COMMITTISH")

    p_delete = sub.add_parser("delete", help="delete matching rows")
    p_delete.add_argument("--table", required=True)
    p_delete.add_argument("--where", required=True)

    p_schema = sub.add_parser("schema", help="schema management")
    schema_sub = p_schema.add_subparsers(dest="schema_command", required=True)
    p_evolve = schema_sub.add_parser("evolve", help="add, rename, or drop columns")
    p_evolve.add_argument("--table", required=True)
    p_evolve.add_argument(
        "--add", action="append", default=[], metavar="NAME:TYPE",
        help="add an optional column (repeatable)",
    )
    p_evolve.add_argument(
        "--rename", action="append", default=[], metavar="OLD:NEW",
        help="rename a column (repeatable)",
    )
    p_evolve.add_argument(
        "--drop", action="append", default=[], metavar="NAME",
        help="drop a column (repeatable)",
    )

    p_part = sub.add_parser("partition", help="partition spec management")
    part_sub = p_part.add_subparsers(dest="partition_command", required=True)
    p_pevolve = part_sub.add_parser("evolve", help="switch to a new partition spec")
    p_pevolve.add_argument("--table", required=True)
    p_pevolve.add_argument("--spec", required=True)

    p_branch = sub.add_parser("branch", help="branch management")
    branch_sub = p_branch.add_subparsers(dest="branch_command", required=True)
    p_bcreate = branch_sub.add_parser("create", help="create a branch")
    p_bcreate.add_argument("name")
    p_bcreate.add_argument("--from", dest="from_ref", default=None, metavar="COMMITTISH")
    branch_sub.add_parser("list", help="list branches")

    p_tag = sub.add_parser("tag", help="tag management")
    tag_sub = p_tag.add_subparsers(dest="tag_command", required=True)
    p_tcreate = tag_sub.add_parser("create", help="create an immutable tag")
    p_tcreate.add_argument("name")
    p_tcreate.add_argument("--at", dest="at_ref", default=None, metavar="COMMITTISH")

    p_merge = sub.add_parser("merge", help="merge one branch into another")
    p_merge.add_argument("source")
    p_merge.add_argument("--into", required=True, metavar="BRANCH")

    p_log = sub.add_parser("log", help="commit history, newest first")
    p_log.add_argument("--table", default=None, help="only commits touching this table")
    p_log.add_argument("--ref", default=None, help="start from this committish")

    p_rollback = sub.add_parser("rollback", help="point a table at an older snapshot")
    p_rollback.add_argument("--table", required=True)
    p_rollback.add_argument("--to-snapshot", type=int, required=True)

    p_compact = sub.add_parser("compact", help="merge small files")
    p_compact.add_argument("--table", required=True)
    p_compact.add_argument("--target-file-size", type=int, default=None, metavar="BYTES")

    p_expire = sub.add_parser("expire-snapshots", help="drop old snapshots")
    p_expire.add_argument("--table", required=True)
    p_expire.add_argument(
        "--older-than", type=_parse_time_ms, required=True, metavar="TIME",
        help="epoch ms or ISO-8601 Z timestamp",
    )
    p_expire.add_argument("--keep-last", type=int, default=1)

    p_gc = sub.add_parser("gc", help="delete unreachable files after a grace period")
    p_gc.add_argument("--table", required=True)
    p_gc.add_argument("--grace", type=int, default=None, metavar="MS")

    p_scd = sub.add_parser("scd2-merge", help="type 2 merge from a CSV source")
    p_scd.add_argument("--table", required=True)
    p_scd.add_argument("--source", required=True, help="path to a CSV file with header")
    p_scd.add_argument("--key", required=True, type=_csv_list, help="key columns")
    p_scd.add_argument(
        "--tracked", required=True, type=_csv_list, help="tracked columns"
    )
    p_scd.add_argument(
        "--ts", type=_parse_ts, default=None, metavar="TIMESTAMP",
        help="effective time (ISO-8601 Z)",
    )

    p_ri = sub.add_parser("check-ri", help="list foreign keys missing from a dimension")
    p_ri.add_argument("--fact", required=True)
    p_ri.add_argument("--fk", required=True)
    p_ri.add_argument("--dim", required=True)
    p_ri.add_argument("--key", required=True)

    return parser


def _read_file(path: str) -> str:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return fh.read()


def _cmd(args: argparse.Namespace, out) -> int:
    root = args.root or os.environ.get("MINILAKE_ROOT") or "."
    lake = Lakehouse(root)
    branch = args.branch

    if args.command == "init":
        commit = lake.init()
        print(f"initialized warehouse at {lake.root} ({commit})", file=out)
        return 0

    if args.command == "table":
        commit = lake.create_table(
            args.name, args.schema, args.partition, branch=branch
        )
        print(f"created table {args.name} ({commit})", file=out)
        return 0

    if args.command == "ingest":
        meta = lake.table_metadata(args.table, branch=branch)
        rows = csvio.rows_from_csv(_read_file(args.csv), meta.current_schema)
        count, commit = lake.append(args.table, rows, branch=branch)
        if commit is None:
            print("ingested 0 rows", file=out)
        else:
            print(f"ingested {count} rows into {args.table} ({commit})", file=out)
        return 0

    if args.command == "scan":
        columns, rows = lake.scan(
            args.table,
            where=args.where,
            select=_csv_list(args.select) if args.select else None,
            branch=branch,
            at_snapshot=args.at_snapshot,
            as_of_ms=args.as_of,
            at_commit=args.at_commit,
        )
        out.write(csvio.rows_to_csv(rows, columns))
        return 0

    if args.command == "delete":
        matched, commit = lake.delete(args.table, args.where, branch=branch)
        if commit is None:
            print("deleted 0 rows", file=out)
        else:
            print(f"deleted {matched} rows from {args.table} ({commit})", file=out)
        return 0

    if args.command == "schema":
        changes: list = []
        for spec in args.add:
            name, _, col_type = spec.partition(":")
            changes.append(AddColumn(name=name.strip(), type=col_type.strip()))
        for spec in args.rename:
            old, _, new = spec.partition(":")
            changes.append(RenameColumn(name=old.strip(), new_name=new.strip()))
        for name in args.drop:
            changes.append(DropColumn(name=name.strip()))
        commit = lake.evolve_schema(args.table, changes, branch=branch)
        print(f"evolved schema of {args.table} ({commit})", file=out)
        return 0

    if args.command == "partition":
        commit = lake.evolve_partition(args.table, args.spec, branch=branch)
        print(f"evolved partition spec of {args.table} ({commit})", file=out)
        return 0

    if args.command == "branch":
        if args.branch_command == "create":
            commit = lake.create_branch(args.name, args.from_ref)
            print(f"created branch {args.name} at {commit}", file=out)
        else:
            for name in lake.branches():
                print(name, file=out)
        return 0

    if args.command == "tag":
        commit = lake.create_tag(args.name, args.at_ref)
        print(f"created tag {args.name} at {commit}", file=out)
        return 0

    if args.command == "merge":
        result = lake.merge(args.source, args.into)
        print(f"{result.kind}: {args.source} -> {args.into} ({result.commit})", file=out)
        return 0

    if args.command == "log":
        first = True
        for commit in lake.log(args.ref or branch, table=args.table):
            if not first:
                print("", file=out)
            first = False
            ts = canonical.format_timestamp(
                canonical.micros_to_timestamp(commit.timestamp_ms * 1000)
            )
            print(f"commit {commit.hash}", file=out)
            print(f"author {commit.author}", file=out)
            print(f"date {ts}", file=out)
            if commit.change_summary:
                tables = ", ".join(
                    f"{name} ({op})" for name, op in commit.change_summary
                )
                print(f"tables {tables}", file=out)
            for line in commit.message.splitlines():
                print(f"    {line}", file=out)
        return 0

    if args.command == "rollback":
        commit = lake.rollback(args.table, args.to_snapshot, branch=branch)
        print(
            f"rolled back {args.table} to snapshot {args.to_snapshot} ({commit})",
            file=out,
        )
        return 0

    if args.command == "compact":
        report, commit = lake.compact(
            args.table, target_file_size_bytes=args.target_file_size, branch=branch
        )
        for line in report.lines():
            print(line, file=out)
        if commit is not None:
            print(f"commit {commit}", file=out)
        return 0

    if args.command == "expire-snapshots":
        report, commit = lake.expire_snapshots(
            args.table, args.older_than, keep_last=args.keep_last, branch=branch
        )
        for line in report.lines():
            print(line, file=out)
        if commit is not None:
            print(f"commit {commit}", file=out)
        return 0

    if args.command == "gc":
        report = lake.gc(args.table, grace_ms=args.grace, branch=branch)
        for line in report.lines():
            print(line, file=out)
        return 0

    if args.command == "scd2-merge":
        meta = lake.table_metadata(args.table, branch=branch)
        rows = csvio.rows_from_csv(_read_file(args.source), meta.current_schema)
        ts = args.ts
        result, commit = lake.scd2_merge(
            args.table,
            rows,
            key_columns=args.key,
            tracked_columns=args.tracked,
            effective_ts=ts,
            branch=branch,
        )
        print(f"inserted={result.inserted}", file=out)
        print(f"closed={result.closed}", file=out)
        print(f"unchanged={result.unchanged}", file=out)
        if commit is not None:
            print(f"commit {commit}", file=out)
        return 0

    if args.command == "check-ri":
        meta = lake.table_metadata(args.fact, branch=branch)
        col_type = meta.current_schema.field_by_name(args.fk).type
        orphans = lake.check_ri(args.fact, args.fk, args.dim, args.key, branch=branch)
        for value in orphans:
            print(canonical.encode_scalar(value, col_type), file=out)
        return 0

    raise AssertionError(f"unhandled command {args.command!r}")


def run(argv: Sequence[str] | None = None, out=None) -> int:
    out = out if out is not None else sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _cmd(args, out)
    except MinilakeError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: IoError: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
