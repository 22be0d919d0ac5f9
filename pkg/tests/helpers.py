"""Shared test helpers: row generators, independent oracles, probes.

The oracle code here deliberately avoids the library's own evaluation and
planning paths wherever a test uses it to judge them: predicates are
re-evaluated by eval_atoms below, statistics by plain min/max, file
contents by decoding every live file without pruning.
"""

from __future__ import annotations

import random
from datetime import date, datetime, timedelta
from typing import Any, Iterable, Mapping, Sequence

from minilake.filefmt import decode_data_file, project_rows
from minilake.table import TableMetadata, live_files

EVENT_COLUMNS = [
    ("id", "int64", True),
    ("region", "string", False),
    ("amount", "float64", False),
    ("d", "date", False),
    ("ts", "timestamp", False),
    ("ok", "bool", False),
]

REGIONS = ["EU", "US", "AP", "SA", "AF", None]
BASE_DATE = date(2023, 1, 1)
BASE_TS = datetime(2023, 1, 1, 0, 0, 0)


def make_event_rows(rng: random.Random, n: int, id_start: int = 0) -> list[dict[str, Any]]:
    """Deterministic random rows over the shared event schema."""
    rows = []
    for i in range(n):
        rows.append(
            {
                "id": id_start + i,
                "region": rng.choice(REGIONS),
                "amount": None if rng.random() < 0.1 else round(rng.uniform(-500, 500), 3),
                "d": None if rng.random() < 0.1 else BASE_DATE + timedelta(days=rng.randrange(30)),
                "ts": None
                if rng.random() < 0.1
                else BASE_TS + timedelta(hours=rng.randrange(30 * 24)),
                "ok": rng.choice([True, False, None]),
            }
        )
    return rows


# --- row comparison ----------------------------------------------------------

def freeze_row(row: Mapping[str, Any]) -> tuple:
    """Row as a sortable tuple; None sorts before everything of its column."""
    out = []
    for key in sorted(row):
        v = row[key]
        out.append((key, v is not None, str(type(v).__name__), repr(v)))
    return tuple(out)


def row_multiset(rows: Iterable[Mapping[str, Any]]) -> list[tuple]:
    return sorted(freeze_row(r) for r in rows)


# --- independent predicate oracle ----------------------------------------------

def eval_atoms(atoms: Sequence[tuple[str, str, Any]], row: Mapping[str, Any]) -> bool:
    """Evaluate a conjunction of (column, op, literal) atoms the slow way.

    op is one of = != < <= > >= isnull notnull; a comparison against a null
    cell never passes. This is the test-side oracle for scan results.
    """
    for column, op, literal in atoms:
        value = row.get(column)
        if op == "isnull":
            if value is not None:
                return False
            continue
        if op == "notnull":
            if value is None:
                return False
            continue
        if value is None:
            return False
        if op == "=" and not value == literal:
            return False
        if op == "!=" and not value != literal:
            return False
        if op == "<" and not value < literal:
            return False
        if op == "<=" and not value <= literal:
            return False
        if op == ">" and not value > literal:
            return False
        if op == ">=" and not value >= literal:
            return False
    return True


def atoms_to_text(atoms: Sequence[tuple[str, str, Any]]) -> str:
    """Render oracle atoms in the predicate language."""
    parts = []
    for column, op, literal in atoms:
        if op == "isnull":
            parts.append(f"{column} IS NULL")
        elif op == "notnull":
            parts.append(f"{column} IS NOT NULL")
        elif isinstance(literal, bool):
            parts.append(f"{column} {op} {'true' if literal else 'false'}")
        elif isinstance(literal, int):
            parts.append(f"{column} {op} {literal}")
        elif isinstance(literal, float):
            parts.append(f"{column} {op} {literal!r}")
        elif isinstance(literal, str):
            parts.append(f"{column} {op} '" + literal.replace("'", "''") + "'")
        elif isinstance(literal, datetime):
            text = literal.strftime("%Y-%m-%dT%H:%M:%S.%f") + "Z"
            parts.append(f"{column} {op} TIMESTAMP '{text}'")
        elif isinstance(literal, date):
            parts.append(f"{column} {op} DATE '{literal.isoformat()}'")
        else:
            raise AssertionError(f"bad literal {literal!r}")
    return " AND ".join(parts)


# --- brute-force table reads -----------------------------------------------------

def all_live_rows(store, meta: TableMetadata, snapshot_id: int | None = None) -> list[dict[str, Any]]:
    """Every row of every live file, read through the current schema, unpruned."""
    sid = meta.current_snapshot_id if snapshot_id is None else snapshot_id
    if sid is None:
        return []
    rows: list[dict[str, Any]] = []
    for df in live_files(store, meta, sid):
        rows.extend(project_rows(store.get(df.key), meta.current_schema))
    return rows


def raw_file_rows(store, key: str) -> list[dict[str, Any]]:
    """Rows of one file under its own write schema."""
    rows, _footer = decode_data_file(store.get(key))
    return rows
