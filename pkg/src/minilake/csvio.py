"""CSV to row mapping.

The textual conventions are fixed so ingest and scan output round-trip:
empty cell is null, booleans are exactly "true"/"false", dates are
YYYY-MM-DD, timestamps are ISO-8601 UTC with a trailing Z. A consequence
is that the empty string is not representable in CSV; it reads back as
null.
"""

from __future__ import annotations

import csv
import io
from typing import Any, Iterable, Mapping, Sequence

from . import canonical
from .errors import SchemaViolation
from .model import Schema


def _parse_cell(text: str, col_type: str) -> Any:
    if text == "":
        return None
    if col_type == "bool":
        if text == "true":
            return True
        if text == "false":
            return False
        raise ValueError(f"bad bool {text!r} (expected true or false)")
    if col_type == "int64":
        return int(text)
    if col_type == "float64":
        return float(text)
    if col_type == "string":
        return text
    if col_type == "date":
        return canonical.parse_date(text)
    if col_type == "timestamp":
        return canonical.parse_timestamp(text)
    raise ValueError(f"unknown column type {col_type!r}")


def rows_from_csv(text: str, schema: Schema) -> list[dict[str, Any]]:
    """Parse CSV text with a header row into raw rows for the schema.

    The header must mention only known columns. Values are converted by
    column type; conversion failures raise SchemaViolation naming the
    line.
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaViolation("CSV input has no header row") from None
    types = {}
    for name in header:
        f = schema.field_by_name(name)  # raises UnknownColumn
        types[name] = f.type
    if len(set(header)) != len(header):
        raise SchemaViolation(f"duplicate columns in CSV header: {header}")
    rows: list[dict[str, Any]] = []
    for line_no, record in enumerate(reader, start=2):
        if len(record) != len(header):
            raise SchemaViolation(
                f"line {line_no}: expected {len(header)} cells, got {len(record)}"
            )
        row: dict[str, Any] = {}
        for name, cell in zip(header, record):
            try:
                row[name] = _parse_cell(cell, types[name])
            except ValueError as exc:
                raise SchemaViolation(f"line {line_no}: column {name!r}: {exc}") from exc
        rows.append(row)
    return rows


def cell_text(value: Any, col_type: str) -> str:
    """Render one value for CSV output; null is the empty string."""
    if value is None:
        return ""
    return canonical.encode_scalar(value, col_type)


def rows_to_csv(
    rows: Iterable[Mapping[str, Any]],
    columns: Sequence[tuple[str, str]],
) -> str:
    """Render rows as CSV text with a header; columns is (name, type) pairs."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([name for name, _ in columns])
    for row in rows:
        writer.writerow([cell_text(row.get(name), t) for name, t in columns])
    return buf.getvalue()
