"""Canonical encodings: the byte-level vocabulary everything else hashes."""

from __future__ import annotations

import hashlib
import json
from datetime import date, datetime, timedelta, timezone

import pytest
from hypothesis import given, strategies as st

from minilake import canonical
from minilake.errors import CorruptMetadata


# --- canonical json ------------------------------------------------------------

def test_canonical_json_sorts_keys_and_strips_whitespace():
    data = canonical.canonical_json({"b": 1, "a": [1, 2], "c": {"z": None, "y": "s"}})
    assert data == b'{"a":[1,2],"b":1,"c":{"y":"s","z":null}}'


def test_canonical_json_is_utf8_not_escaped():
    assert canonical.canonical_json({"k": "café"}) == '{"k":"café"}'.encode("utf-8")


def test_canonical_json_rejects_raw_floats_anywhere():
    for payload in (1.5, {"a": 1.5}, [1, [2, 3.0]], {"a": {"b": (1.25,)}}):
        with pytest.raises(TypeError):
            canonical.canonical_json(payload)


@given(
    st.recursive(
        st.none() | st.booleans() | st.integers() | st.text(max_size=20),
        lambda children: st.lists(children, max_size=4)
        | st.dictionaries(st.text(max_size=8), children, max_size=4),
        max_leaves=20,
    )
)
def test_canonical_json_round_trips_and_is_deterministic(obj):
    data = canonical.canonical_json(obj)
    assert canonical.canonical_json(obj) == data
    assert json.loads(data.decode("utf-8")) == _normalize(obj)


def _normalize(obj):
    # json round-trip turns tuples into lists; mirror that for comparison
    if isinstance(obj, dict):
        return {k: _normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_normalize(v) for v in obj]
    return obj


def test_sha256_hex_matches_hashlib():
    data = b"minilake canonical block"
    assert canonical.sha256_hex(data) == hashlib.sha256(data).hexdigest()


# --- floats ------------------------------------------------------------------

def test_render_float_shortest_round_trip():
    assert canonical.render_float(0.1) == "0.1"
    assert canonical.render_float(1.0) == "1.0"
    assert canonical.render_float(-2.5e300) == "-2.5e+300"


def test_render_float_negative_zero_collapses():
    assert canonical.render_float(-0.0) == "0.0"
    assert canonical.render_float(0.0) == "0.0"


def test_render_float_rejects_non_finite():
    for bad in (float("nan"), float("inf"), float("-inf")):
        with pytest.raises(ValueError):
            canonical.render_float(bad)


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_render_float_round_trips(x):
    assert float(canonical.render_float(x)) == (0.0 if x == 0.0 else x)


# --- dates and timestamps -------------------------------------------------------

def test_format_timestamp_always_six_digit_micros():
    dt = datetime(2023, 7, 15, 12, 0, 0)
    assert canonical.format_timestamp(dt) == "2023-07-15T12:00:00.000000Z"
    dt2 = datetime(2023, 7, 15, 12, 0, 0, 250)
    assert canonical.format_timestamp(dt2) == "2023-07-15T12:00:00.000250Z"


def test_format_timestamp_converts_aware_to_utc():
    aware = datetime(2023, 7, 15, 14, 0, 0, tzinfo=timezone(timedelta(hours=2)))
    assert canonical.format_timestamp(aware) == "2023-07-15T12:00:00.000000Z"


def test_parse_timestamp_requires_z_suffix():
    with pytest.raises(ValueError):
        canonical.parse_timestamp("2023-07-15T12:00:00")
    with pytest.raises(ValueError):
        canonical.parse_timestamp("2023-07-15T12:00:00+02:00")


@given(
    st.datetimes(
        min_value=datetime(1900, 1, 1),
        max_value=datetime(2200, 1, 1),
    )
)
def test_timestamp_text_round_trips(dt):
    assert canonical.parse_timestamp(canonical.format_timestamp(dt)) == dt


@given(
    st.datetimes(
        min_value=datetime(1900, 1, 1),
        max_value=datetime(2200, 1, 1),
    )
)
def test_timestamp_micros_round_trips(dt):
    assert canonical.micros_to_timestamp(canonical.timestamp_to_micros(dt)) == dt


def test_timestamp_micros_oracle():
    # hand-computed: 2023-07-15T12:00:00Z is 19553 days + 12h after epoch
    dt = datetime(2023, 7, 15, 12, 0, 0)
    days = (date(2023, 7, 15) - date(1970, 1, 1)).days
    assert canonical.timestamp_to_micros(dt) == (days * 86_400 + 12 * 3600) * 1_000_000


@given(st.dates(min_value=date(1900, 1, 1), max_value=date(2200, 1, 1)))
def test_date_days_round_trip_and_ordinal_oracle(d):
    days = canonical.date_to_days(d)
    assert days == d.toordinal() - date(1970, 1, 1).toordinal()
    assert canonical.days_to_date(days) == d
    assert canonical.parse_date(canonical.format_date(d)) == d


# --- scalar encode/decode ----------------------------------------------------------

SCALARS = [
    (True, "bool", "true"),
    (False, "bool", "false"),
    (-42, "int64", "-42"),
    (0.25, "float64", "0.25"),
    ("it's", "string", "it's"),
    (date(2023, 7, 15), "date", "2023-07-15"),
    (datetime(2023, 7, 15, 8, 30), "timestamp", "2023-07-15T08:30:00.000000Z"),
]


@pytest.mark.parametrize("value,col_type,text", SCALARS)
def test_encode_scalar_canonical_forms(value, col_type, text):
    assert canonical.encode_scalar(value, col_type) == text
    assert canonical.decode_scalar(text, col_type) == value


@pytest.mark.parametrize("value,col_type,text", SCALARS)
def test_tag_value_round_trips(value, col_type, text):
    tagged = canonical.tag_value(value, col_type)
    assert tagged == [col_type, text]
    assert canonical.untag_value(tagged) == value
    assert canonical.tagged_type(tagged) == col_type


def test_tag_value_null_passthrough():
    assert canonical.tag_value(None, "int64") is None
    assert canonical.untag_value(None) is None
    assert canonical.tagged_type(None) is None


@pytest.mark.parametrize(
    "bad", [["int64"], ["int64", 5], ["nope", "5"], "5", [1, "5"], ["int64", "5", "x"]]
)
def test_untag_value_rejects_malformed(bad):
    with pytest.raises(CorruptMetadata):
        canonical.untag_value(bad)


def test_infer_type_priorities():
    # bool is an int subclass and datetime is a date subclass; order matters
    assert canonical.infer_type(True) == "bool"
    assert canonical.infer_type(7) == "int64"
    assert canonical.infer_type(7.5) == "float64"
    assert canonical.infer_type("x") == "string"
    assert canonical.infer_type(datetime(2023, 1, 1)) == "timestamp"
    assert canonical.infer_type(date(2023, 1, 1)) == "date"
    with pytest.raises(ValueError):
        canonical.infer_type(b"bytes")
