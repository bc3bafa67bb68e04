import pytest
from hypothesis import given
from hypothesis import strategies as st

from abflow.errors import SchemaViolation
from abflow.schema import (
    parse_type,
    schema_depth,
    type_depth,
    validate_payload,
    validate_schema,
    validation_error,
)


def test_parse_scalars():
    for name in ("text", "integer", "real", "timestamp"):
        assert parse_type(name) == ("scalar", name)


def test_parse_nested_series_and_record():
    parsed = parse_type("series-of-<record-of-<a:text,b:series-of-<real>>>")
    assert parsed[0] == "series"
    assert parsed[1][0] == "record"
    assert parsed[1][1]["b"] == ("series", ("scalar", "real"))


def test_record_commas_split_at_top_level_only():
    parsed = parse_type("record-of-<a:record-of-<x:text,y:real>,b:integer>")
    assert set(parsed[1]) == {"a", "b"}


@pytest.mark.parametrize("bad", [
    "bool", "series-of-<>", "record-of-<>", "record-of-<a>", "series<text>",
    "record-of-<a:text,a:real>",
])
def test_parse_rejects_bad_expressions(bad):
    with pytest.raises(SchemaViolation):
        parse_type(bad)


def test_depth_counting():
    assert type_depth(parse_type("text")) == 0
    assert type_depth(parse_type("series-of-<text>")) == 1
    assert type_depth(parse_type("series-of-<record-of-<a:series-of-<text>>>")) == 3
    assert schema_depth({"a": "text", "b": "series-of-<real>"}) == 1


def test_depth_cap_enforced_when_requested():
    deep = {"a": "series-of-<record-of-<x:series-of-<record-of-<y:text>>>>"}
    validate_schema(deep)  # unlimited by default
    with pytest.raises(SchemaViolation):
        validate_schema(deep, max_depth=3)


def test_payload_field_mismatches():
    schema = {"a": "integer", "b": "text"}
    assert validation_error(schema, {"a": 1, "b": "x"}) is None
    assert "missing" in validation_error(schema, {"a": 1})
    assert "undeclared" in validation_error(schema, {"a": 1, "b": "x", "c": 2})
    assert validation_error(schema, {"a": True, "b": "x"})  # bool is not integer
    assert validation_error(schema, {"a": 1.5, "b": "x"})


def test_real_accepts_int_rejects_bool():
    assert validation_error({"a": "real"}, {"a": 3}) is None
    assert validation_error({"a": "real"}, {"a": True})


def test_timestamp_fields_validated():
    assert validation_error({"t": "timestamp"}, {"t": "2025-08-09T00:00:00Z"}) is None
    assert validation_error({"t": "timestamp"}, {"t": "soon"})


# --- property: payloads built to match a generated schema validate, and a
# --- single type mutation is always caught ------------------------------------

scalar_types = st.sampled_from(["text", "integer", "real", "timestamp"])


def _value_for(parsed, draw):
    kind = parsed[0]
    if kind == "scalar":
        return {
            "text": draw(st.text(max_size=10)),
            "integer": draw(st.integers(-100, 100)),
            "real": draw(st.floats(allow_nan=False, allow_infinity=False,
                                   width=32)),
            "timestamp": "2025-08-09T00:00:00Z",
        }[parsed[1]]
    if kind == "series":
        return [_value_for(parsed[1], draw) for _ in range(draw(st.integers(0, 3)))]
    return {name: _value_for(sub, draw) for name, sub in parsed[1].items()}


type_exprs = st.recursive(
    scalar_types,
    lambda children: st.builds("series-of-<{}>".format, children),
    max_leaves=4,
)


@st.composite
def schema_and_payload(draw):
    schema = {
        f"f{i}": draw(type_exprs)
        for i in range(draw(st.integers(1, 3)))
    }
    payload = {name: _value_for(parse_type(expr), draw)
               for name, expr in schema.items()}
    return schema, payload


@given(schema_and_payload())
def test_matching_payloads_validate(pair):
    schema, payload = pair
    validate_payload(schema, payload)


@given(schema_and_payload())
def test_wrong_typed_field_is_caught(pair):
    schema, payload = pair
    name = sorted(schema)[0]
    payload[name] = object()  # never a legal value for any expression
    assert validation_error(schema, payload) is not None
