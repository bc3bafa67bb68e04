import json
from datetime import datetime, timezone

import pytest
from hypothesis import given
from hypothesis import strategies as st

from abflow.canonical import (
    FixedClock,
    canonical_json,
    digest,
    digest_value,
    format_timestamp,
    is_timestamp,
    parse_timestamp,
)

json_values = st.recursive(
    st.none() | st.booleans() | st.integers() | st.text(max_size=20),
    lambda children: st.lists(children, max_size=4)
    | st.dictionaries(st.text(max_size=8), children, max_size=4),
    max_leaves=20,
)


@given(json_values)
def test_canonical_json_is_stable_and_sorted(value):
    a = canonical_json(value)
    b = canonical_json(json.loads(a))
    assert a == b
    assert ": " not in a and ", " not in a


def test_digest_is_sha256_hex():
    assert digest(b"") == (
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    )
    assert digest_value({"a": 1}) == digest(b'{"a":1}')


def test_timestamp_round_trip():
    dt = datetime(2025, 8, 9, 12, 34, 56, tzinfo=timezone.utc)
    text = format_timestamp(dt)
    assert text == "2025-08-09T12:34:56Z"
    assert parse_timestamp(text) == dt


@pytest.mark.parametrize("bad", ["", "2025-08-09", "2025-08-09 12:00:00Z",
                                 "not a time", 123])
def test_timestamp_rejects_garbage(bad):
    assert not is_timestamp(bad)
    with pytest.raises(ValueError):
        parse_timestamp(bad)


def test_fixed_clock_is_frozen():
    clock = FixedClock("2025-08-09T00:00:00Z")
    assert clock.now_text() == clock.now_text() == "2025-08-09T00:00:00Z"
