"""MLF1 columnar file codec.

Layout, front to back:

    magic "MLF1"
    per column, in footer order:
        null bitmap   ceil(row_count / 8) bytes, LSB-first,
                      bit i set means row i is non-null; padding bits zero
        packed values non-null values only, little-endian
    footer            canonical JSON (see below)
    footer length     u32 little-endian
    magic "MLF1"

Value packing: bool is one byte 0/1, int64 is <q, float64 is <d, date is
<i days since 1970-01-01, timestamp is <q microseconds since epoch,
string is u32 byte length then UTF-8 bytes.

The footer records the write schema (field_id, name, required, type per
column), per-column min/max/null_count, row_count, and schema_id. Readers
resolve columns by field_id against their own schema, so renames and
drops never touch data files. Encoding is fully deterministic: equal
(rows, schema) inputs produce equal bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

from . import canonical
from .errors import CorruptFile
from .model import ColumnStats, Schema

MAGIC = b"MLF1"

_FIXED = {
    "bool": None,  # handled directly
    "int64": struct.Struct("<q"),
    "float64": struct.Struct("<d"),
    "date": struct.Struct("<i"),
    "timestamp": struct.Struct("<q"),
}
_U32 = struct.Struct("<I")


# --- encode -----------------------------------------------------------------

def _pack_value(value: Any, col_type: str) -> bytes:
    if col_type == "bool":
        return b"\x01" if value else b"\x00"
    if col_type == "int64":
        return _FIXED["int64"].pack(value)
    if col_type == "float64":
        return _FIXED["float64"].pack(value)
    if col_type == "date":
        return _FIXED["date"].pack(canonical.date_to_days(value))
    if col_type == "timestamp":
        return _FIXED["timestamp"].pack(canonical.timestamp_to_micros(value))
    if col_type == "string":
        raw = value.encode("utf-8")
        return _U32.pack(len(raw)) + raw
    raise ValueError(f"unknown column type {col_type!r}")


def _bitmap(values: Sequence[Any], row_count: int) -> bytes:
    n_bytes = (row_count + 7) // 8
    bits = bytearray(n_bytes)
    for i, v in enumerate(values):
        if v is not None:
            bits[i // 8] |= 1 << (i % 8)
    return bytes(bits)


def column_stats(values: Sequence[Any], field_id: int, col_type: str) -> ColumnStats:
    """min/max over non-null values plus the null count."""
    non_null = [v for v in values if v is not None]
    nulls = len(values) - len(non_null)
    if not non_null:
        return ColumnStats(field_id=field_id, min=None, max=None, null_count=nulls)
    return ColumnStats(
        field_id=field_id,
        min=min(non_null),
        max=max(non_null),
        null_count=nulls,
    )


def encode_data_file(rows: Sequence[Mapping[str, Any]], schema: Schema) -> bytes:
    """Serialize normalized rows to MLF1 bytes.

    Rows must already be normalized against the schema (explicit None for
    nulls, correct runtime types).
    """
    row_count = len(rows)
    body = bytearray(MAGIC)
    footer_cols: list[dict[str, Any]] = []
    for f in schema.fields:
        values = [row[f.name] for row in rows]
        body += _bitmap(values, row_count)
        for v in values:
            if v is not None:
                body += _pack_value(v, f.type)
        stats = column_stats(values, f.field_id, f.type)
        col_entry: dict[str, Any] = {
            "field_id": f.field_id,
            "name": f.name,
            "required": f.required,
            "type": f.type,
            "null_count": stats.null_count,
        }
        if stats.min is not None:
            col_entry["min"] = canonical.encode_scalar(stats.min, f.type)
        if stats.max is not None:
            col_entry["max"] = canonical.encode_scalar(stats.max, f.type)
        footer_cols.append(col_entry)
    footer = canonical.canonical_json(
        {"columns": footer_cols, "row_count": row_count, "schema_id": schema.schema_id}
    )
    body += footer
    body += _U32.pack(len(footer))
    body += MAGIC
    return bytes(body)


# --- decode -----------------------------------------------------------------

@dataclass(frozen=True)
class Footer:
    row_count: int
    schema_id: int
    columns: tuple[dict[str, Any], ...]

    def stats(self) -> tuple[ColumnStats, ...]:
        return tuple(
            ColumnStats.from_dict(c, c["type"]) for c in self.columns
        )


def read_footer(data: bytes) -> Footer:
    """Parse and validate the footer region of an MLF1 file."""
    min_size = len(MAGIC) * 2 + _U32.size
    if len(data) < min_size:
        raise CorruptFile(f"file too short: {len(data)} bytes")
    if data[: len(MAGIC)] != MAGIC:
        raise CorruptFile("bad leading magic")
    if data[-len(MAGIC) :] != MAGIC:
        raise CorruptFile("bad trailing magic")
    (footer_len,) = _U32.unpack(data[-len(MAGIC) - _U32.size : -len(MAGIC)])
    footer_end = len(data) - len(MAGIC) - _U32.size
    footer_start = footer_end - footer_len
    if footer_start < len(MAGIC):
        raise CorruptFile(f"footer length {footer_len} exceeds file body")
    try:
        import json

        footer = json.loads(data[footer_start:footer_end].decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise CorruptFile(f"footer is not valid JSON: {exc}") from exc
    if not isinstance(footer, dict):
        raise CorruptFile("footer is not a JSON object")
    try:
        row_count = footer["row_count"]
        schema_id = footer["schema_id"]
        columns = footer["columns"]
    except KeyError as exc:
        raise CorruptFile(f"footer missing key {exc}") from exc
    if not isinstance(row_count, int) or row_count < 0:
        raise CorruptFile(f"bad row_count {row_count!r}")
    if not isinstance(schema_id, int):
        raise CorruptFile(f"bad schema_id {schema_id!r}")
    if not isinstance(columns, list):
        raise CorruptFile("footer columns is not a list")
    seen_ids = set()
    cols: list[dict[str, Any]] = []
    for c in columns:
        if not isinstance(c, dict):
            raise CorruptFile("footer column entry is not an object")
        for req in ("field_id", "name", "required", "type", "null_count"):
            if req not in c:
                raise CorruptFile(f"footer column missing {req!r}")
        if c["type"] not in _FIXED and c["type"] != "string":
            raise CorruptFile(f"footer column has unknown type {c['type']!r}")
        if not isinstance(c["null_count"], int) or not (0 <= c["null_count"] <= row_count):
            raise CorruptFile(f"bad null_count {c['null_count']!r}")
        if c["field_id"] in seen_ids:
            raise CorruptFile(f"duplicate field id {c['field_id']} in footer")
        seen_ids.add(c["field_id"])
        cols.append(c)
    return Footer(row_count=row_count, schema_id=schema_id, columns=tuple(cols))


def _unpack_column(
    data: bytes, offset: int, col: Mapping[str, Any], row_count: int
) -> tuple[list[Any], int]:
    """Decode one column region starting at offset; returns (values, next offset)."""
    n_bytes = (row_count + 7) // 8
    if offset + n_bytes > len(data):
        raise CorruptFile(f"column {col['name']!r}: bitmap runs past file end")
    bitmap = data[offset : offset + n_bytes]
    offset += n_bytes
    present = [bool(bitmap[i // 8] >> (i % 8) & 1) for i in range(row_count)]
    # padding bits beyond row_count must be zero
    for i in range(row_count, n_bytes * 8):
        if bitmap[i // 8] >> (i % 8) & 1:
            raise CorruptFile(f"column {col['name']!r}: non-zero bitmap padding")
    non_null = sum(present)
    if row_count - non_null != col["null_count"]:
        raise CorruptFile(
            f"column {col['name']!r}: bitmap nulls {row_count - non_null}"
            f" != footer null_count {col['null_count']}"
        )
    col_type = col["type"]
    values: list[Any] = []
    if col_type == "string":
        for flag in present:
            if not flag:
                values.append(None)
                continue
            if offset + _U32.size > len(data):
                raise CorruptFile(f"column {col['name']!r}: string length runs past end")
            (length,) = _U32.unpack_from(data, offset)
            offset += _U32.size
            if offset + length > len(data):
                raise CorruptFile(f"column {col['name']!r}: string bytes run past end")
            try:
                values.append(data[offset : offset + length].decode("utf-8"))
            except UnicodeDecodeError as exc:
                raise CorruptFile(f"column {col['name']!r}: bad UTF-8: {exc}") from exc
            offset += length
    elif col_type == "bool":
        for flag in present:
            if not flag:
                values.append(None)
                continue
            if offset + 1 > len(data):
                raise CorruptFile(f"column {col['name']!r}: value runs past end")
            b = data[offset]
            offset += 1
            if b not in (0, 1):
                raise CorruptFile(f"column {col['name']!r}: bad bool byte {b}")
            values.append(b == 1)
    else:
        packer = _FIXED[col_type]
        for flag in present:
            if not flag:
                values.append(None)
                continue
            if offset + packer.size > len(data):
                raise CorruptFile(f"column {col['name']!r}: value runs past end")
            (raw,) = packer.unpack_from(data, offset)
            offset += packer.size
            if col_type == "date":
                values.append(canonical.days_to_date(raw))
            elif col_type == "timestamp":
                values.append(canonical.micros_to_timestamp(raw))
            else:
                values.append(raw)
    return values, offset


def decode_data_file(data: bytes) -> tuple[list[dict[str, Any]], Footer]:
    """Decode a whole MLF1 file to rows keyed by the writer's column names."""
    footer = read_footer(data)
    offset = len(MAGIC)
    columns: dict[str, list[Any]] = {}
    for col in footer.columns:
        values, offset = _unpack_column(data, offset, col, footer.row_count)
        columns[col["name"]] = values
    footer_start = len(data) - len(MAGIC) - _U32.size - _footer_len(data)
    if offset != footer_start:
        raise CorruptFile(
            f"column data ends at {offset}, footer starts at {footer_start}"
        )
    rows = [
        {name: values[i] for name, values in columns.items()}
        for i in range(footer.row_count)
    ]
    return rows, footer


def _footer_len(data: bytes) -> int:
    (footer_len,) = _U32.unpack(data[-len(MAGIC) - _U32.size : -len(MAGIC)])
    return footer_len


def project_rows(
    data: bytes, read_schema: Schema, projection: Iterable[int] | None = None
) -> list[dict[str, Any]]:
    """Decode a file through a reader schema, resolving columns by field id.

    projection is an iterable of field ids; None means every field of the
    reader schema. Fields absent from the file read as all-null columns.
    A field present under the same id but a different type is corruption.
    """
    rows, footer = decode_data_file(data)
    by_id = {c["field_id"]: c for c in footer.columns}
    wanted = list(projection) if projection is not None else [
        f.field_id for f in read_schema.fields
    ]
    out: list[dict[str, Any]] = [dict() for _ in range(footer.row_count)]
    for fid in wanted:
        f = read_schema.field_by_id(fid)
        src = by_id.get(fid)
        if src is None:
            for r in out:
                r[f.name] = None
            continue
        if src["type"] != f.type:
            raise CorruptFile(
                f"field id {fid}: file has type {src['type']!r},"
                f" reader expects {f.type!r}"
            )
        src_name = src["name"]
        for i, r in enumerate(out):
            r[f.name] = rows[i][src_name]
    return out
