"""Hidden partitioning: transforms, partition specs, partition tuples.

A partition spec maps source columns (by field id) through transforms to
named partition fields. Writers derive the partition tuple from row
values; readers never see partition columns, they only benefit from
pruning. Null inputs map to null outputs for every transform.

Transforms and the column types they accept:

    identity      everything except float64
    bucket(n)     int64, string, date, timestamp
    truncate(w)   int64, string
    year/month/day  date, timestamp

float64 is never a legal partition source: its canonical bytes are too
easy to get wrong across writers, so bucketing or grouping on it would
silently fracture partitions.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from datetime import date, datetime
from typing import Any, Mapping

from . import canonical
from .errors import (
    CorruptMetadata,
    DuplicateColumn,
    UnknownColumn,
    UnsupportedTransform,
)
from .model import Schema

FNV_OFFSET = 14695981039346656037
FNV_PRIME = 1099511628211
_MASK64 = (1 << 64) - 1

_I64 = struct.Struct("<q")


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & _MASK64
    return h


# --- transforms -------------------------------------------------------------

_TRANSFORM_SOURCES = {
    "identity": {"bool", "int64", "string", "date", "timestamp"},
    "bucket": {"int64", "string", "date", "timestamp"},
    "truncate": {"int64", "string"},
    "year": {"date", "timestamp"},
    "month": {"date", "timestamp"},
    "day": {"date", "timestamp"},
}


@dataclass(frozen=True)
class Transform:
    kind: str
    param: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in _TRANSFORM_SOURCES:
            raise CorruptMetadata(f"unknown transform kind {self.kind!r}")
        needs_param = self.kind in ("bucket", "truncate")
        if needs_param and (self.param is None or self.param < 1):
            raise CorruptMetadata(f"{self.kind} needs a positive parameter")
        if not needs_param and self.param is not None:
            raise CorruptMetadata(f"{self.kind} takes no parameter")

    def serialize(self) -> str:
        if self.param is not None:
            return f"{self.kind}[{self.param}]"
        return self.kind

    @staticmethod
    def deserialize(text: str) -> "Transform":
        m = re.fullmatch(r"([a-z]+)(?:\[(\d+)\])?", text)
        if not m:
            raise CorruptMetadata(f"bad transform text {text!r}")
        kind, param = m.group(1), m.group(2)
        return Transform(kind=kind, param=int(param) if param is not None else None)

    def accepts(self, col_type: str) -> bool:
        return col_type in _TRANSFORM_SOURCES[self.kind]

    def result_type(self, col_type: str) -> str:
        """Type of the transform output given the source type."""
        if self.kind == "identity":
            return col_type
        if self.kind == "truncate":
            return col_type  # int64 -> int64, string -> string
        return "int64"  # bucket, year, month, day


def _bucket_bytes(value: Any, col_type: str) -> bytes:
    """Stable byte encoding hashed by the bucket transform."""
    if col_type in ("int64",):
        return _I64.pack(value)
    if col_type == "string":
        return value.encode("utf-8")
    if col_type == "date":
        # dates widen to their epoch-day count as int64
        return _I64.pack(canonical.date_to_days(value))
    if col_type == "timestamp":
        return _I64.pack(canonical.timestamp_to_micros(value))
    raise UnsupportedTransform(f"bucket cannot hash {col_type}")


def apply_transform(transform: Transform, value: Any, col_type: str) -> Any:
    """Apply one transform to one value; null propagates to null."""
    if not transform.accepts(col_type):
        raise UnsupportedTransform(
            f"{transform.serialize()} does not accept {col_type}"
        )
    if value is None:
        return None
    kind = transform.kind
    if kind == "identity":
        return value
    if kind == "bucket":
        return fnv1a64(_bucket_bytes(value, col_type)) % transform.param  # type: ignore[operator]
    if kind == "truncate":
        w = transform.param
        if col_type == "int64":
            return (value // w) * w  # floors toward -inf, stable for negatives
        return value[:w]
    if kind == "year":
        return value.year
    if kind == "month":
        return (value.year - 1970) * 12 + (value.month - 1)
    if kind == "day":
        if isinstance(value, datetime):
            return canonical.timestamp_to_micros(value) // 86_400_000_000
        return canonical.date_to_days(value)
    raise UnsupportedTransform(f"unknown transform {kind!r}")


# --- partition specs ----------------------------------------------------------

@dataclass(frozen=True)
class PartitionField:
    source_field_id: int
    transform: Transform
    name: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "source_field_id": self.source_field_id,
            "transform": self.transform.serialize(),
            "name": self.name,
        }

    @staticmethod
    def from_dict(d: Mapping[str, Any]) -> "PartitionField":
        try:
            return PartitionField(
                source_field_id=int(d["source_field_id"]),
                transform=Transform.deserialize(str(d["transform"])),
                name=str(d["name"]),
            )
        except KeyError as exc:
            raise CorruptMetadata(f"partition field missing key {exc}") from exc


@dataclass(frozen=True)
class PartitionSpec:
    spec_id: int
    fields: tuple[PartitionField, ...] = ()

    def __post_init__(self) -> None:
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise DuplicateColumn(f"duplicate partition field names: {names}")

    @property
    def source_field_ids(self) -> frozenset[int]:
        return frozenset(f.source_field_id for f in self.fields)

    def to_dict(self) -> dict[str, Any]:
        return {
            "spec_id": self.spec_id,
            "fields": [f.to_dict() for f in self.fields],
        }

    @staticmethod
    def from_dict(d: Mapping[str, Any]) -> "PartitionSpec":
        try:
            return PartitionSpec(
                spec_id=int(d["spec_id"]),
                fields=tuple(PartitionField.from_dict(f) for f in d["fields"]),
            )
        except KeyError as exc:
            raise CorruptMetadata(f"partition spec missing key {exc}") from exc


def _generated_name(source_name: str, transform: Transform) -> str:
    if transform.kind == "identity":
        return source_name
    if transform.kind == "bucket":
        return f"{source_name}_bucket{transform.param}"
    if transform.kind == "truncate":
        return f"{source_name}_trunc{transform.param}"
    return f"{source_name}_{transform.kind}"


def build_spec(
    schema: Schema,
    parts: list[tuple[str, Transform]],
    spec_id: int,
) -> PartitionSpec:
    """Build a spec from (source column name, transform) pairs.

    Validates source existence and transform/type compatibility; partition
    field names are generated from the source name and transform, and must
    not collide with each other or with schema column names (except that
    identity reuses the source name on purpose).
    """
    fields = []
    taken: set[str] = set()
    for source_name, transform in parts:
        f = schema.field_by_name(source_name)  # raises UnknownColumn
        if not transform.accepts(f.type):
            raise UnsupportedTransform(
                f"{transform.serialize()} does not accept {f.type}"
                f" (column {source_name!r})"
            )
        name = _generated_name(source_name, transform)
        if name in taken:
            raise DuplicateColumn(f"partition field name {name!r} repeats")
        if transform.kind != "identity" and schema.has_name(name):
            raise DuplicateColumn(
                f"partition field name {name!r} collides with a column"
            )
        taken.add(name)
        fields.append(
            PartitionField(source_field_id=f.field_id, transform=transform, name=name)
        )
    return PartitionSpec(spec_id=spec_id, fields=tuple(fields))


def partition_tuple(
    spec: PartitionSpec, row: Mapping[str, Any], schema: Schema
) -> tuple[Any, ...]:
    """Partition values of one normalized row under a spec."""
    out = []
    for pf in spec.fields:
        f = schema.field_by_id(pf.source_field_id)
        out.append(apply_transform(pf.transform, row.get(f.name), f.type))
    return tuple(out)


def tag_partition(values: tuple[Any, ...]) -> list[Any]:
    """Render a partition tuple to its tagged JSON form.

    Component types are inferred from the runtime values; every transform
    output is a bool, int, str, date, or datetime, so inference is exact.
    """
    return [
        canonical.tag_value(v, canonical.infer_type(v)) if v is not None else None
        for v in values
    ]


def untag_partition(tagged: list[Any]) -> tuple[Any, ...]:
    return tuple(canonical.untag_value(t) for t in tagged)


# --- text forms ----------------------------------------------------------------

_PART_RE = re.compile(
    r"""
    (?:
        (?P<plain>year|month|day|identity)\(\s*(?P<pcol>\w+)\s*\)
      | bucket\(\s*(?P<bn>\d+)\s*,\s*(?P<bcol>\w+)\s*\)
      | truncate\(\s*(?P<tw>\d+)\s*,\s*(?P<tcol>\w+)\s*\)
    )
    """,
    re.VERBOSE,
)


def parse_partition_text(text: str) -> list[tuple[str, Transform]]:
    """Parse the CLI partition syntax: pipe-separated transform calls.

    Examples: "identity(region)", "bucket(16,user_id)|day(ts)".
    """
    parts: list[tuple[str, Transform]] = []
    text = text.strip()
    if not text:
        return parts
    for piece in text.split("|"):
        piece = piece.strip()
        m = _PART_RE.fullmatch(piece)
        if not m:
            raise UnknownColumn(f"bad partition clause {piece!r}")
        if m.group("plain"):
            parts.append((m.group("pcol"), Transform(m.group("plain"))))
        elif m.group("bn"):
            parts.append((m.group("bcol"), Transform("bucket", int(m.group("bn")))))
        else:
            parts.append((m.group("tcol"), Transform("truncate", int(m.group("tw")))))
    return parts
