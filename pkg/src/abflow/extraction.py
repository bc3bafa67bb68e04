"""Turning multi-turn conversation plus external sources into one structured task.

Two stages: context compression (one structured gateway call producing salient
points, with the latest user request always carried through verbatim) and task
formalization (one structured call producing statement, constraints,
dependency hints, and consulted source refs).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from .context import ConversationHistory, ExtractedTask
from .errors import SchemaViolation
from .gateway import Gateway, PromptRequest

COMPRESS_SCHEMA = {"points": "series-of-<text>"}

TASK_SCHEMA = {
    "actionable": "integer",  # 1 = actionable task present, 0 = nothing to do
    "statement": "text",
    "constraints": "series-of-<text>",
    "dependencies": "series-of-<record-of-<fragment:text,requires:text>>",
    "source_refs": "series-of-<text>",
}


@dataclass
class MemoryEntry:
    user_id: str
    text: str
    tags: List[str] = field(default_factory=list)
    created_at: str = ""
    entry_id: str = ""

    def __post_init__(self):
        if not self.text:
            raise SchemaViolation("memory entry text must be non-empty")

    def as_dict(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "user_id": self.user_id,
            "text": self.text,
            "tags": list(self.tags),
            "created_at": self.created_at,
        }


@dataclass
class SourceBundle:
    memory: List[MemoryEntry] = field(default_factory=list)
    knowledge_refs: List[str] = field(default_factory=list)
    external_refs: List[Tuple[str, str]] = field(default_factory=list)  # (source, locator)


class MemoryStore:
    """Line-delimited JSON per user under <data_dir>/memory/."""

    def __init__(self, data_dir: str):
        self.root = os.path.join(data_dir, "memory")

    def _path(self, user_id: str) -> str:
        return os.path.join(self.root, f"{user_id}.jsonl")

    def entries(self, user_id: str) -> List[MemoryEntry]:
        path = self._path(user_id)
        if not os.path.exists(path):
            return []
        out = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                doc = json.loads(line)
                out.append(MemoryEntry(
                    user_id=doc["user_id"], text=doc["text"],
                    tags=doc.get("tags", []), created_at=doc.get("created_at", ""),
                    entry_id=doc.get("entry_id", ""),
                ))
        return out

    def append(self, entry: MemoryEntry) -> None:
        os.makedirs(self.root, exist_ok=True)
        with open(self._path(entry.user_id), "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry.as_dict(), sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())


def compress_history(gateway: Gateway, history: ConversationHistory, budget: int) -> str:
    """Condense a conversation to at most `budget` characters.

    The latest user message is carried verbatim (truncated only if it alone
    exceeds the budget), so its objective phrase always survives compression.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    last = history.last_user_message()
    last_text = last.text if last else ""

    transcript = "\n".join(f"{m.role}: {m.text}" for m in history.messages)
    completion = gateway.complete_structured(
        PromptRequest(
            purpose="extraction",
            messages=[
                ("system",
                 "Condense this conversation into the minimal list of salient "
                 "points needed to act on the user's current request."),
                ("user", transcript),
            ],
            output_schema=COMPRESS_SCHEMA,
        ),
        max_repair_attempts=1,
    )
    points = [p for p in completion.structured["points"] if p.strip()]

    anchor = f"Latest request: {last_text}" if last_text else ""
    if len(anchor) > budget:
        anchor = anchor[:budget]
    parts: List[str] = []
    used = len(anchor)
    for point in points:
        line = f"- {point}"
        extra = len(line) + (1 if parts or anchor else 0)
        if used + extra > budget:
            break
        parts.append(line)
        used += extra
    condensed = "\n".join(parts + ([anchor] if anchor else []))
    assert len(condensed) <= budget
    return condensed


def _sources_rendering(sources: SourceBundle) -> str:
    lines = []
    for entry in sources.memory:
        lines.append(f"memory[{entry.entry_id}]: {entry.text}")
    for ref in sources.knowledge_refs:
        lines.append(f"knowledge[{ref}]")
    for name, locator in sources.external_refs:
        lines.append(f"external[{name}]: {locator}")
    return "\n".join(lines) if lines else "(none)"


def extract_task(gateway: Gateway, condensed: str,
                 sources: Optional[SourceBundle] = None) -> Optional[ExtractedTask]:
    """Formalize the condensed context into a task, or None when there is no
    actionable request (a clarification response, not a failure)."""
    if not condensed:
        raise ValueError("condensed context must be non-empty")
    sources = sources or SourceBundle()
    completion = gateway.complete_structured(
        PromptRequest(
            purpose="extraction",
            messages=[
                ("system",
                 "Formalize the user's request into an explicit task with "
                 "constraints and ordering dependencies. Record which of the "
                 "listed sources you consulted in source_refs. If there is no "
                 "actionable request, set actionable to 0."),
                ("user",
                 f"Context:\n{condensed}\n\nAvailable sources:\n"
                 f"{_sources_rendering(sources)}"),
            ],
            output_schema=TASK_SCHEMA,
        ),
        max_repair_attempts=1,
    )
    doc = completion.structured
    if not doc["actionable"] or not doc["statement"].strip():
        return None
    return ExtractedTask(
        statement=doc["statement"],
        constraints=list(doc["constraints"]),
        dependencies=[(d["fragment"], d["requires"]) for d in doc["dependencies"]],
        source_refs=list(doc["source_refs"]),
    )
