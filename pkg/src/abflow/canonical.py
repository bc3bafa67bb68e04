"""Canonical serialization helpers: stable JSON, RFC 3339 timestamps, digests.

Every durable document (context snapshots, plans, checkpoints, manifests) goes
through canonical_json so that byte-level comparisons in tests and the
checkpoint digest are meaningful.
"""

from __future__ import annotations

import hashlib
import json
import re
from datetime import datetime, timezone


def canonical_json(value) -> str:
    """Serialize with sorted keys and no whitespace; stable across runs."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_bytes(value) -> bytes:
    return canonical_json(value).encode("utf-8")


def digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def digest_value(value) -> str:
    return digest(canonical_bytes(value))


_RFC3339 = re.compile(
    r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(\.\d+)?(Z|[+-]\d{2}:\d{2})$"
)


def format_timestamp(dt: datetime) -> str:
    """UTC RFC 3339 with second precision, Z suffix."""
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(text: str) -> datetime:
    if not isinstance(text, str) or not _RFC3339.match(text):
        raise ValueError(f"not an RFC 3339 timestamp: {text!r}")
    return datetime.fromisoformat(text.replace("Z", "+00:00")).astimezone(timezone.utc)


def is_timestamp(text) -> bool:
    return isinstance(text, str) and bool(_RFC3339.match(text))


class Clock:
    """Injectable time source; demo/test runs pin it for byte reproducibility."""

    def now(self) -> datetime:
        return datetime.now(timezone.utc)

    def now_text(self) -> str:
        return format_timestamp(self.now())


class FixedClock(Clock):
    def __init__(self, at: str):
        self._at = parse_timestamp(at)

    def now(self) -> datetime:
        return self._at
