"""Core data model: column types, schemas, file descriptors, row checking.

Schemas identify columns by immutable field ids; names are labels that can
be changed without touching data files. A data file records the schema it
was written with, so readers resolve columns by id and never by position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from typing import Any, Iterable, Mapping

from . import canonical
from .errors import CorruptMetadata, DuplicateColumn, SchemaViolation, UnknownColumn

COLUMN_TYPES = ("bool", "int64", "float64", "string", "date", "timestamp")

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1


# --- schema ---------------------------------------------------------------

@dataclass(frozen=True)
class Field:
    field_id: int
    name: str
    type: str
    required: bool = False

    def __post_init__(self) -> None:
        if self.type not in COLUMN_TYPES:
            raise CorruptMetadata(f"unknown column type {self.type!r}")
        if self.field_id < 1:
            raise CorruptMetadata(f"field id must be positive, got {self.field_id}")
        if not self.name:
            raise CorruptMetadata("field name must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {
            "field_id": self.field_id,
            "name": self.name,
            "type": self.type,
            "required": self.required,
        }

    @staticmethod
    def from_dict(d: Mapping[str, Any]) -> "Field":
        try:
            return Field(
                field_id=int(d["field_id"]),
                name=str(d["name"]),
                type=str(d["type"]),
                required=bool(d["required"]),
            )
        except KeyError as exc:
            raise CorruptMetadata(f"field missing key {exc}") from exc


@dataclass(frozen=True)
class Schema:
    schema_id: int
    fields: tuple[Field, ...]

    def __post_init__(self) -> None:
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise DuplicateColumn(f"duplicate column names in schema: {names}")
        ids = [f.field_id for f in self.fields]
        if len(set(ids)) != len(ids):
            raise CorruptMetadata(f"duplicate field ids in schema: {ids}")

    def field_by_name(self, name: str) -> Field:
        for f in self.fields:
            if f.name == name:
                return f
        raise UnknownColumn(f"no column named {name!r}")

    def field_by_id(self, field_id: int) -> Field:
        for f in self.fields:
            if f.field_id == field_id:
                return f
        raise UnknownColumn(f"no column with field id {field_id}")

    def has_name(self, name: str) -> bool:
        return any(f.name == name for f in self.fields)

    def has_id(self, field_id: int) -> bool:
        return any(f.field_id == field_id for f in self.fields)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields)

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_id": self.schema_id,
            "fields": [f.to_dict() for f in self.fields],
        }

    @staticmethod
    def from_dict(d: Mapping[str, Any]) -> "Schema":
        try:
            return Schema(
                schema_id=int(d["schema_id"]),
                fields=tuple(Field.from_dict(f) for f in d["fields"]),
            )
        except KeyError as exc:
            raise CorruptMetadata(f"schema missing key {exc}") from exc


# --- statistics and file descriptors ---------------------------------------

@dataclass(frozen=True)
class ColumnStats:
    """Per-column min/max/null_count for one data file.

    min and max are None when every value in the column is null.
    """

    field_id: int
    min: Any
    max: Any
    null_count: int

    def to_dict(self, col_type: str) -> dict[str, Any]:
        d: dict[str, Any] = {
            "field_id": self.field_id,
            "null_count": self.null_count,
        }
        if self.min is not None:
            d["min"] = canonical.encode_scalar(self.min, col_type)
        if self.max is not None:
            d["max"] = canonical.encode_scalar(self.max, col_type)
        return d

    @staticmethod
    def from_dict(d: Mapping[str, Any], col_type: str) -> "ColumnStats":
        return ColumnStats(
            field_id=int(d["field_id"]),
            min=canonical.decode_scalar(d["min"], col_type) if "min" in d else None,
            max=canonical.decode_scalar(d["max"], col_type) if "max" in d else None,
            null_count=int(d["null_count"]),
        )


@dataclass(frozen=True)
class DataFile:
    """Manifest entry describing one immutable data object."""

    key: str
    spec_id: int
    partition: tuple[Any, ...]
    record_count: int
    file_size_bytes: int
    stats: tuple[ColumnStats, ...] = field(default=())

    def stats_for(self, field_id: int) -> ColumnStats | None:
        for s in self.stats:
            if s.field_id == field_id:
                return s
        return None


# --- value checking --------------------------------------------------------

def check_value(value: Any, col_type: str) -> Any:
    """Validate and normalize one non-null scalar for a column type.

    Returns the normalized value or raises ValueError with a reason.
    """
    if col_type == "bool":
        if not isinstance(value, bool):
            raise ValueError(f"expected bool, got {type(value).__name__}")
        return value
    if col_type == "int64":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"expected int, got {type(value).__name__}")
        if not (INT64_MIN <= value <= INT64_MAX):
            raise ValueError(f"int64 out of range: {value}")
        return value
    if col_type == "float64":
        if isinstance(value, bool):
            raise ValueError("expected float, got bool")
        if isinstance(value, int):
            value = float(value)
        if not isinstance(value, float):
            raise ValueError(f"expected float, got {type(value).__name__}")
        if not math.isfinite(value):
            # stats min/max need a canonical decimal rendering
            raise ValueError(f"non-finite float {value!r} is not storable")
        return value
    if col_type == "string":
        if not isinstance(value, str):
            raise ValueError(f"expected str, got {type(value).__name__}")
        return value
    if col_type == "date":
        if isinstance(value, datetime) or not isinstance(value, date):
            raise ValueError(f"expected date, got {type(value).__name__}")
        return value
    if col_type == "timestamp":
        if not isinstance(value, datetime):
            raise ValueError(f"expected datetime, got {type(value).__name__}")
        if value.tzinfo is not None:
            value = value.astimezone(timezone.utc).replace(tzinfo=None)
        return value
    raise ValueError(f"unknown column type {col_type!r}")


def normalize_row(row: Mapping[str, Any], schema: Schema) -> dict[str, Any]:
    """Check one row against a schema; returns a normalized copy.

    Unknown keys, missing required values, and type mismatches raise
    SchemaViolation. Missing optional columns become explicit nulls.
    """
    known = set(schema.names)
    extra = set(row) - known
    if extra:
        raise SchemaViolation(f"unknown columns {sorted(extra)}")
    out: dict[str, Any] = {}
    for f in schema.fields:
        value = row.get(f.name)
        if value is None:
            if f.required:
                raise SchemaViolation(f"column {f.name!r} is required but null")
            out[f.name] = None
            continue
        try:
            out[f.name] = check_value(value, f.type)
        except ValueError as exc:
            raise SchemaViolation(f"column {f.name!r}: {exc}") from exc
    return out


def normalize_rows(rows: Iterable[Mapping[str, Any]], schema: Schema) -> list[dict[str, Any]]:
    out = []
    for i, row in enumerate(rows):
        try:
            out.append(normalize_row(row, schema))
        except SchemaViolation as exc:
            raise SchemaViolation(f"row {i}: {exc}") from exc
    return out
