"""Flat named-field schemas with a small semantic-type grammar.

A schema maps field names to type expressions:

    text | integer | real | timestamp
    series-of-<T>
    record-of-<name:T,name:T,...>

Nesting is allowed; context payload schemas are capped at depth 3 (enforced
by the context store), gateway output schemas are not.
"""

from __future__ import annotations

from typing import Dict, Optional

from .canonical import is_timestamp
from .errors import SchemaViolation

SCALARS = ("text", "integer", "real", "timestamp")


def parse_type(expr: str):
    """Parse a type expression into ("scalar", name) / ("series", inner) /
    ("record", {field: inner})."""
    expr = expr.strip()
    if expr in SCALARS:
        return ("scalar", expr)
    if expr.startswith("series-of-<") and expr.endswith(">"):
        return ("series", parse_type(expr[len("series-of-<"):-1]))
    if expr.startswith("record-of-<") and expr.endswith(">"):
        body = expr[len("record-of-<"):-1]
        fields = {}
        for part in _split_top(body):
            if ":" not in part:
                raise SchemaViolation(f"bad record field {part!r} in {expr!r}")
            name, sub = part.split(":", 1)
            name = name.strip()
            if not name or name in fields:
                raise SchemaViolation(f"bad record field name in {expr!r}")
            fields[name] = parse_type(sub)
        if not fields:
            raise SchemaViolation(f"empty record type: {expr!r}")
        return ("record", fields)
    raise SchemaViolation(f"unknown type expression: {expr!r}")


def _split_top(body: str):
    """Split on commas not nested inside <>."""
    parts, depth, cur = [], 0, []
    for ch in body:
        if ch == "<":
            depth += 1
        elif ch == ">":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if cur:
        parts.append("".join(cur))
    return parts


def type_depth(parsed) -> int:
    kind = parsed[0]
    if kind == "scalar":
        return 0
    if kind == "series":
        return 1 + type_depth(parsed[1])
    return 1 + max(type_depth(sub) for sub in parsed[1].values())


def schema_depth(schema: Dict[str, str]) -> int:
    if not schema:
        return 0
    return max(type_depth(parse_type(expr)) for expr in schema.values())


def validate_schema(schema, max_depth: Optional[int] = None) -> None:
    """Check that a schema declaration itself is well-formed."""
    if not isinstance(schema, dict) or not schema:
        raise SchemaViolation("schema must be a non-empty field mapping")
    for name, expr in schema.items():
        if not isinstance(name, str) or not name:
            raise SchemaViolation("schema field names must be non-empty strings")
        if not isinstance(expr, str):
            raise SchemaViolation(f"schema type for {name!r} must be a string")
        parsed = parse_type(expr)
        if max_depth is not None and type_depth(parsed) > max_depth:
            raise SchemaViolation(
                f"field {name!r} exceeds nesting depth {max_depth}"
            )


def _check(parsed, value, path: str):
    kind = parsed[0]
    if kind == "scalar":
        t = parsed[1]
        if t == "text":
            if not isinstance(value, str):
                raise SchemaViolation(f"{path}: expected text, got {type(value).__name__}")
        elif t == "integer":
            if not isinstance(value, int) or isinstance(value, bool):
                raise SchemaViolation(f"{path}: expected integer, got {value!r}")
        elif t == "real":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise SchemaViolation(f"{path}: expected real, got {value!r}")
        elif t == "timestamp":
            if not is_timestamp(value):
                raise SchemaViolation(f"{path}: expected RFC 3339 timestamp, got {value!r}")
        return
    if kind == "series":
        if not isinstance(value, list):
            raise SchemaViolation(f"{path}: expected series (list), got {type(value).__name__}")
        for i, item in enumerate(value):
            _check(parsed[1], item, f"{path}[{i}]")
        return
    # record
    if not isinstance(value, dict):
        raise SchemaViolation(f"{path}: expected record (object), got {type(value).__name__}")
    fields = parsed[1]
    missing = sorted(set(fields) - set(value))
    extra = sorted(set(value) - set(fields))
    if missing:
        raise SchemaViolation(f"{path}: missing field(s) {', '.join(missing)}")
    if extra:
        raise SchemaViolation(f"{path}: undeclared field(s) {', '.join(extra)}")
    for name, sub in fields.items():
        _check(sub, value[name], f"{path}.{name}")


def validate_payload(schema: Dict[str, str], payload, max_depth: Optional[int] = None) -> None:
    """Validate a payload object against a schema; raises SchemaViolation."""
    validate_schema(schema, max_depth=max_depth)
    if not isinstance(payload, dict):
        raise SchemaViolation(f"payload must be an object, got {type(payload).__name__}")
    missing = sorted(set(schema) - set(payload))
    extra = sorted(set(payload) - set(schema))
    if missing:
        raise SchemaViolation(f"payload missing declared field(s): {', '.join(missing)}")
    if extra:
        raise SchemaViolation(f"payload has undeclared field(s): {', '.join(extra)}")
    for name, expr in schema.items():
        _check(parse_type(expr), payload[name], name)


def validation_error(schema: Dict[str, str], payload, max_depth: Optional[int] = None) -> Optional[str]:
    """Like validate_payload but returns the error message instead of raising."""
    try:
        validate_payload(schema, payload, max_depth=max_depth)
    except SchemaViolation as exc:
        return str(exc)
    return None
