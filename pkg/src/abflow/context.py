"""Typed execution context shared across plan steps.

Context objects are the dependency currency of plans: each step declares which
(type, instance) keys it consumes and the single key it produces. Objects are
immutable once stored; the store serializes to a canonical JSON fragment that
is embedded in checkpoints, so two snapshots of the same state are
byte-identical.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .canonical import canonical_json, is_timestamp
from .errors import DuplicateKey, NotFound, SchemaViolation, UnknownSession
from .schema import validate_payload

_IDENT = re.compile(r"^[A-Z0-9_]+$")

# Context payload schemas stay shallow; deep structure belongs in artifacts.
PAYLOAD_DEPTH_LIMIT = 3


def normalize_identifier(raw: str) -> str:
    """Uppercase and collapse separators; reject anything else."""
    if not isinstance(raw, str):
        raise SchemaViolation(f"identifier must be a string, got {type(raw).__name__}")
    norm = re.sub(r"[\s\-.]+", "_", raw.strip()).upper()
    if not norm or not _IDENT.match(norm):
        raise SchemaViolation(f"invalid identifier: {raw!r}")
    return norm


@dataclass(frozen=True, order=True)
class ContextKey:
    context_type: str
    instance_key: str

    @staticmethod
    def of(context_type: str, instance_key: str) -> "ContextKey":
        return ContextKey(
            normalize_identifier(context_type), normalize_identifier(instance_key)
        )

    def as_dict(self) -> Dict[str, str]:
        return {"type": self.context_type, "key": self.instance_key}

    @staticmethod
    def from_dict(doc) -> "ContextKey":
        return ContextKey.of(doc["type"], doc["key"])

    def __str__(self) -> str:
        return f"{self.context_type}/{self.instance_key}"


@dataclass(frozen=True)
class ContextObject:
    key: ContextKey
    schema: Dict[str, str]
    payload: dict
    provenance: str  # step index as "step-N", or "user" / "external-source"
    created_at: str  # RFC 3339

    def __post_init__(self):
        validate_payload(self.schema, self.payload, max_depth=PAYLOAD_DEPTH_LIMIT)
        if not self.provenance:
            raise SchemaViolation("provenance must be set")
        if not is_timestamp(self.created_at):
            raise SchemaViolation(f"created_at not RFC 3339: {self.created_at!r}")

    def as_dict(self) -> dict:
        return {
            "type": self.key.context_type,
            "key": self.key.instance_key,
            "schema": dict(self.schema),
            "payload": self.payload,
            "provenance": self.provenance,
            "created_at": self.created_at,
        }

    @staticmethod
    def from_dict(doc) -> "ContextObject":
        return ContextObject(
            key=ContextKey.of(doc["type"], doc["key"]),
            schema=doc["schema"],
            payload=doc["payload"],
            provenance=doc["provenance"],
            created_at=doc["created_at"],
        )


@dataclass
class Message:
    role: str  # user | assistant | system
    text: str
    timestamp: str

    ROLES = ("user", "assistant", "system")

    def __post_init__(self):
        if self.role not in self.ROLES:
            raise SchemaViolation(f"unknown role {self.role!r}")


@dataclass
class ConversationHistory:
    session_id: str
    messages: List[Message] = field(default_factory=list)

    def append(self, role: str, text: str, timestamp: str) -> None:
        if self.messages and timestamp < self.messages[-1].timestamp:
            raise SchemaViolation("message timestamps must be non-decreasing")
        self.messages.append(Message(role, text, timestamp))

    def last_user_message(self) -> Optional[Message]:
        for msg in reversed(self.messages):
            if msg.role == "user":
                return msg
        return None

    def as_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "messages": [
                {"role": m.role, "text": m.text, "timestamp": m.timestamp}
                for m in self.messages
            ],
        }

    @staticmethod
    def from_dict(doc) -> "ConversationHistory":
        hist = ConversationHistory(session_id=doc["session_id"])
        for m in doc["messages"]:
            hist.messages.append(Message(m["role"], m["text"], m["timestamp"]))
        return hist


@dataclass
class ExtractedTask:
    statement: str
    constraints: List[str] = field(default_factory=list)
    dependencies: List[Tuple[str, str]] = field(default_factory=list)  # (fragment, prerequisite)
    source_refs: List[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.statement:
            raise SchemaViolation("task statement must be non-empty")
        corpus = [self.statement] + list(self.constraints)
        for frag, prereq in self.dependencies:
            for piece in (frag, prereq):
                if not any(piece in text for text in corpus):
                    raise SchemaViolation(
                        f"dependency fragment {piece!r} not present in statement or constraints"
                    )

    def as_dict(self) -> dict:
        return {
            "statement": self.statement,
            "constraints": list(self.constraints),
            "dependencies": [
                {"fragment": f, "requires": p} for f, p in self.dependencies
            ],
            "source_refs": list(self.source_refs),
        }

    @staticmethod
    def from_dict(doc) -> "ExtractedTask":
        return ExtractedTask(
            statement=doc["statement"],
            constraints=list(doc.get("constraints", [])),
            dependencies=[
                (d["fragment"], d["requires"]) for d in doc.get("dependencies", [])
            ],
            source_refs=list(doc.get("source_refs", [])),
        )


class ContextStore:
    """Per-session store of immutable context objects."""

    def __init__(self):
        self._objects: Dict[ContextKey, ContextObject] = {}

    def put(self, obj: ContextObject) -> ContextKey:
        if obj.key in self._objects:
            raise DuplicateKey(f"context key already stored: {obj.key}")
        self._objects[obj.key] = obj
        return obj.key

    def get(self, key: ContextKey) -> ContextObject:
        try:
            return self._objects[key]
        except KeyError:
            raise NotFound(f"no context object under {key}") from None

    def has(self, key: ContextKey) -> bool:
        return key in self._objects

    def inventory(self) -> List[dict]:
        """Keys, schemas and provenance only; payloads stay out of prompts."""
        return [
            {
                "type": k.context_type,
                "key": k.instance_key,
                "schema": dict(self._objects[k].schema),
                "provenance": self._objects[k].provenance,
            }
            for k in sorted(self._objects)
        ]

    def fresh_instance_key(self, context_type: str, base: str = "RAW") -> str:
        """Auto-suffix _2, _3, ... when a type already has that instance."""
        context_type = normalize_identifier(context_type)
        base = normalize_identifier(base)
        if ContextKey(context_type, base) not in self._objects:
            return base
        n = 2
        while ContextKey(context_type, f"{base}_{n}") in self._objects:
            n += 1
        return f"{base}_{n}"

    def snapshot(self) -> dict:
        """Canonical checkpoint fragment; sorted for byte determinism."""
        return {"context": [self._objects[k].as_dict() for k in sorted(self._objects)]}

    def snapshot_text(self) -> str:
        return canonical_json(self.snapshot())

    @staticmethod
    def from_snapshot(doc) -> "ContextStore":
        store = ContextStore()
        for entry in doc.get("context", []):
            store.put(ContextObject.from_dict(entry))
        return store

    def __len__(self) -> int:
        return len(self._objects)


class ContextService:
    """Session-keyed context stores; the executor is the single writer per
    session, so no locking beyond that discipline is needed."""

    def __init__(self):
        self._sessions: Dict[str, ContextStore] = {}

    def create_session(self, session_id: str) -> ContextStore:
        if session_id in self._sessions:
            raise DuplicateKey(f"session already exists: {session_id}")
        store = ContextStore()
        self._sessions[session_id] = store
        return store

    def store(self, session_id: str) -> ContextStore:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise UnknownSession(session_id) from None

    def put_context(self, session_id: str, obj: ContextObject) -> ContextKey:
        return self.store(session_id).put(obj)

    def get_context(self, session_id: str, key: ContextKey) -> ContextObject:
        return self.store(session_id).get(key)

    def inventory(self, session_id: str) -> List[dict]:
        return self.store(session_id).inventory()
