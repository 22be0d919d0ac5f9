"""Canonical text encodings.

Everything that is hashed or compared byte-for-byte funnels through this
module: canonical JSON for metadata objects and commit payloads, and the
canonical scalar rendering used inside partition tuples and statistics.

Canonical JSON is UTF-8, keys sorted, no whitespace. Floats never appear
as raw JSON numbers in hashed payloads; they are carried as canonical
strings so the byte encoding is the shortest round-trip decimal with no
platform variation.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from datetime import date, datetime, timezone

from .errors import CorruptMetadata

EPOCH_DATE = date(1970, 1, 1)


# --- json -----------------------------------------------------------------

def _reject_float(value: object) -> object:
    raise TypeError(f"raw float {value!r} not allowed in canonical payload")


def canonical_json(obj: object) -> bytes:
    """Serialize to canonical JSON bytes: sorted keys, no whitespace, UTF-8.

    Floats must already be rendered to strings by the caller; a raw float
    anywhere in the structure is a programming error.
    """
    if _contains_float(obj):
        raise TypeError("raw float not allowed in canonical payload")
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return text.encode("utf-8")


def _contains_float(obj: object) -> bool:
    if isinstance(obj, float):
        return True
    if isinstance(obj, dict):
        return any(_contains_float(k) or _contains_float(v) for k, v in obj.items())
    if isinstance(obj, (list, tuple)):
        return any(_contains_float(v) for v in obj)
    return False


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


# --- time -----------------------------------------------------------------

def now_ms() -> int:
    return time.time_ns() // 1_000_000


def new_token() -> str:
    """Random 32-hex token for object key uniqueness."""
    return os.urandom(16).hex()


# --- dates and timestamps -------------------------------------------------

def format_date(d: date) -> str:
    return d.isoformat()


def parse_date(text: str) -> date:
    return date.fromisoformat(text)


def format_timestamp(dt: datetime) -> str:
    """Render a UTC timestamp as YYYY-MM-DDTHH:MM:SS.ssssssZ.

    Fields are always printed at full width (including years below 1000,
    which strftime would leave unpadded) so equal instants have equal text.
    """
    if dt.tzinfo is not None:
        dt = dt.astimezone(timezone.utc).replace(tzinfo=None)
    return (
        f"{dt.year:04d}-{dt.month:02d}-{dt.day:02d}"
        f"T{dt.hour:02d}:{dt.minute:02d}:{dt.second:02d}.{dt.microsecond:06d}Z"
    )


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 UTC timestamp ending in Z to a naive UTC datetime.

    fromisoformat on this interpreter does not accept the Z suffix, so the
    suffix is stripped by hand.
    """
    if not text.endswith("Z"):
        raise ValueError(f"timestamp must end with Z: {text!r}")
    body = text[:-1]
    dt = datetime.fromisoformat(body)
    if dt.tzinfo is not None:
        raise ValueError(f"timestamp must not carry an offset besides Z: {text!r}")
    return dt


def timestamp_to_micros(dt: datetime) -> int:
    if dt.tzinfo is not None:
        dt = dt.astimezone(timezone.utc).replace(tzinfo=None)
    delta = dt - datetime(1970, 1, 1)
    return (delta.days * 86_400 + delta.seconds) * 1_000_000 + delta.microseconds


def micros_to_timestamp(us: int) -> datetime:
    return datetime(1970, 1, 1) + _micros_delta(us)


def _micros_delta(us: int):
    from datetime import timedelta

    return timedelta(microseconds=us)


def date_to_days(d: date) -> int:
    return (d - EPOCH_DATE).days


def days_to_date(days: int) -> date:
    from datetime import timedelta

    return EPOCH_DATE + timedelta(days=days)


# --- scalar canonical form ------------------------------------------------

def render_float(value: float) -> str:
    """Shortest decimal that round-trips; -0.0 renders as 0.0."""
    if math.isnan(value) or math.isinf(value):
        raise ValueError(f"non-finite float {value!r} has no canonical form")
    if value == 0.0:
        return "0.0"
    return repr(value)


def encode_scalar(value: object, col_type: str) -> str:
    """Render a non-null typed scalar to its canonical string."""
    if col_type == "bool":
        return "true" if value else "false"
    if col_type == "int64":
        return str(value)
    if col_type == "float64":
        return render_float(float(value))
    if col_type == "string":
        return str(value)
    if col_type == "date":
        return format_date(value)  # type: ignore[arg-type]
    if col_type == "timestamp":
        return format_timestamp(value)  # type: ignore[arg-type]
    raise ValueError(f"unknown column type {col_type!r}")


def decode_scalar(text: str, col_type: str) -> object:
    """Parse a canonical scalar string back to its runtime value."""
    if col_type == "bool":
        if text == "true":
            return True
        if text == "false":
            return False
        raise ValueError(f"bad canonical bool {text!r}")
    if col_type == "int64":
        return int(text)
    if col_type == "float64":
        return float(text)
    if col_type == "string":
        return text
    if col_type == "date":
        return parse_date(text)
    if col_type == "timestamp":
        return parse_timestamp(text)
    raise ValueError(f"unknown column type {col_type!r}")


# --- tagged values --------------------------------------------------------
# Partition tuple components travel through JSON as ["<type>", "<canonical>"]
# pairs (or null), so heterogeneous tuples stay unambiguous and orderable
# after a round-trip.

_TAGS = {"bool", "int64", "float64", "string", "date", "timestamp"}


def infer_type(value: object) -> str:
    """Column type of a runtime scalar; datetime outranks date."""
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int64"
    if isinstance(value, float):
        return "float64"
    if isinstance(value, str):
        return "string"
    if isinstance(value, datetime):
        return "timestamp"
    if isinstance(value, date):
        return "date"
    raise ValueError(f"no column type for {type(value).__name__}")


def tag_value(value: object, col_type: str) -> object:
    if value is None:
        return None
    if col_type not in _TAGS:
        raise ValueError(f"unknown column type {col_type!r}")
    return [col_type, encode_scalar(value, col_type)]


def untag_value(tagged: object) -> object:
    if tagged is None:
        return None
    if (
        not isinstance(tagged, list)
        or len(tagged) != 2
        or tagged[0] not in _TAGS
        or not isinstance(tagged[1], str)
    ):
        raise CorruptMetadata(f"bad tagged value {tagged!r}")
    return decode_scalar(tagged[1], tagged[0])


def tagged_type(tagged: object) -> str | None:
    if tagged is None:
        return None
    return tagged[0]
