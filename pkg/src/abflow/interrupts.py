"""Human-in-the-loop gates: plan approval, step approval, memory writes.

An interrupt is durable: it is embedded in the session checkpoint before any
side effect of the gated action, survives restarts, and is re-presented
byte-identically. Decisions are appended to an immutable per-session audit
log. At most one interrupt may be unresolved per session.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

from .canonical import Clock, canonical_json
from .errors import InterruptAlreadyPending, SchemaViolation

INTERRUPT_KINDS = ("plan_approval", "step_approval", "memory_write")
VERDICTS = ("approve", "reject", "edit")


def make_interrupt(session_id: str, kind: str, payload: dict,
                   clock: Clock, serial: int) -> dict:
    """Interrupt requests are plain dicts so they embed directly in the
    canonical checkpoint document."""
    assert kind in INTERRUPT_KINDS, kind
    return {
        "interrupt_id": f"int-{session_id}-{serial}",
        "session_id": session_id,
        "kind": kind,
        "payload": payload,
        "raised_at": clock.now_text(),
    }


@dataclass(frozen=True)
class ApprovalDecision:
    interrupt_id: str
    verdict: str
    decided_by: str
    decided_at: str
    edited_payload: Optional[dict] = None

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise SchemaViolation(f"unknown verdict {self.verdict!r}")
        if self.verdict == "edit" and self.edited_payload is None:
            raise SchemaViolation("edit verdict requires edited_payload")
        if self.verdict != "edit" and self.edited_payload is not None:
            raise SchemaViolation("edited_payload only valid for edit verdict")

    def as_dict(self) -> dict:
        return {
            "interrupt_id": self.interrupt_id,
            "verdict": self.verdict,
            "decided_by": self.decided_by,
            "decided_at": self.decided_at,
            "edited_payload": self.edited_payload,
        }


class AuditLog:
    """Append-only approvals log at sessions/<id>/approvals.jsonl."""

    def __init__(self, data_dir: str, session_id: str):
        self.path = os.path.join(data_dir, "sessions", session_id, "approvals.jsonl")

    def append(self, decision: ApprovalDecision) -> None:
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(canonical_json(decision.as_dict()) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def read(self):
        import json
        if not os.path.exists(self.path):
            return []
        with open(self.path, "r", encoding="utf-8") as fh:
            return [json.loads(line) for line in fh if line.strip()]


def check_none_pending(pending: Optional[dict]) -> None:
    if pending is not None:
        raise InterruptAlreadyPending(pending["interrupt_id"])
