"""Uniform boundary to language models.

Two backends share one contract: a live OpenAI-compatible chat-completions
endpoint, and a deterministic scripted backend that replays canned responses
keyed by (purpose, substring-of-final-user-message) fingerprints. Structured
output is enforced by embedding the schema in the prompt and validating the
reply, with a bounded repair loop; retry policy beyond that lives in the
executor.
"""

from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from .errors import (
    BackendRejected,
    BackendUnavailable,
    DuplicateFingerprint,
    StructuredOutputFailure,
)
from .schema import validation_error

PURPOSES = ("extraction", "classification", "planning", "codegen", "response")


@dataclass
class PromptRequest:
    purpose: str
    messages: List[Tuple[str, str]]  # (role, text)
    output_schema: Optional[Dict[str, str]] = None
    temperature: float = 0.0
    max_tokens: int = 4096

    def __post_init__(self):
        if self.purpose not in PURPOSES:
            raise ValueError(f"unknown purpose {self.purpose!r}")
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.output_schema is not None:
            # Structured purposes demand reproducibility.
            self.temperature = 0.0

    def final_user_text(self) -> str:
        for role, text in reversed(self.messages):
            if role == "user":
                return text
        return ""


@dataclass
class Completion:
    text: str
    structured: Optional[object]
    usage: Tuple[int, int]  # (prompt_tokens, completion_tokens)
    backend: str


def _strip_fences(text: str) -> str:
    text = text.strip()
    if text.startswith("```"):
        text = re.sub(r"^```[a-zA-Z0-9_-]*\s*", "", text)
        text = re.sub(r"\s*```$", "", text)
    return text.strip()


def try_parse(text: str, schema: Dict[str, str]) -> Tuple[Optional[object], Optional[str]]:
    """Parse a model reply as JSON and validate it; (value, error)."""
    raw = _strip_fences(text)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError as exc:
        return None, f"reply is not valid JSON: {exc}"
    err = validation_error(schema, value)
    if err:
        return None, err
    return value, None


def schema_instruction(schema: Dict[str, str]) -> str:
    lines = ["Respond with a single JSON object with exactly these fields:"]
    for name in sorted(schema):
        lines.append(f"  {name}: {schema[name]}")
    lines.append("No prose outside the JSON object.")
    return "\n".join(lines)


class ScriptedBackend:
    """Closed-world deterministic backend for tests and demos.

    A fingerprint is (purpose, matcher-text); a request matches when purposes
    are equal and the matcher is a substring of the final user message.
    Responses are consumed in order; an exhausted or unmatched request fails.
    """

    name = "scripted"

    def __init__(self):
        self._scripts: List[dict] = []
        self._lock = threading.Lock()

    def register_script(self, purpose: str, matcher: str, responses: List[str]) -> None:
        if purpose not in PURPOSES:
            raise ValueError(f"unknown purpose {purpose!r}")
        for s in self._scripts:
            if s["purpose"] == purpose and s["matcher"] == matcher:
                raise DuplicateFingerprint(f"({purpose}, {matcher!r})")
        self._scripts.append(
            {"purpose": purpose, "matcher": matcher, "responses": list(responses), "cursor": 0}
        )

    @staticmethod
    def from_file(path: str) -> "ScriptedBackend":
        backend = ScriptedBackend()
        with open(path, "r", encoding="utf-8") as fh:
            entries = json.load(fh)
        for entry in entries:
            backend.register_script(entry["purpose"], entry["match"], entry["responses"])
        return backend

    def chat(self, request: PromptRequest) -> Tuple[str, Tuple[int, int]]:
        final = request.final_user_text()
        with self._lock:
            for s in self._scripts:
                if s["purpose"] == request.purpose and s["matcher"] in final:
                    if s["cursor"] >= len(s["responses"]):
                        raise BackendUnavailable(
                            f"script exhausted for ({s['purpose']}, {s['matcher']!r})"
                        )
                    text = s["responses"][s["cursor"]]
                    s["cursor"] += 1
                    prompt_tokens = sum(len(t) for _, t in request.messages) // 4
                    return text, (prompt_tokens, len(text) // 4)
        raise BackendUnavailable(
            f"unmatched fingerprint: purpose={request.purpose} final_user={final[:120]!r}"
        )


class HttpBackend:
    """OpenAI-compatible chat-completions client (single endpoint, no stream)."""

    name = "http"

    def __init__(self, base_url: Optional[str] = None, api_key: Optional[str] = None,
                 model: Optional[str] = None, timeout: float = 120.0):
        self.base_url = (base_url or os.environ.get("AB_LM_BASE_URL", "")).rstrip("/")
        self.api_key = api_key or os.environ.get("AB_LM_API_KEY", "")
        self.model = model or os.environ.get("AB_LM_MODEL", "")
        self.timeout = timeout
        if not self.base_url:
            raise ValueError("no LM base URL configured (AB_LM_BASE_URL)")

    def chat(self, request: PromptRequest) -> Tuple[str, Tuple[int, int]]:
        import requests

        body = {
            "model": self.model,
            "messages": [{"role": r, "content": t} for r, t in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(
                f"{self.base_url}/chat/completions", json=body,
                headers=headers, timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise BackendUnavailable(str(exc)) from exc
        if resp.status_code in (401, 403, 429):
            raise BackendRejected(f"backend rejected request: HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise BackendUnavailable(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            doc = resp.json()
            text = doc["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError) as exc:
            raise BackendUnavailable(f"malformed completion response: {exc}") from exc
        usage = doc.get("usage", {})
        return text, (usage.get("prompt_tokens", 0), usage.get("completion_tokens", 0))


class Gateway:
    """Backend-agnostic completion API with structured-output enforcement."""

    def __init__(self, backend):
        self.backend = backend

    def complete(self, request: PromptRequest) -> Completion:
        messages = request.messages
        if request.output_schema is not None:
            messages = [("system", schema_instruction(request.output_schema))] + list(messages)
        wire = PromptRequest(
            purpose=request.purpose,
            messages=messages,
            output_schema=request.output_schema,
            temperature=request.temperature,
            max_tokens=request.max_tokens,
        )
        text, usage = self.backend.chat(wire)
        structured = None
        if request.output_schema is not None:
            structured, _ = try_parse(text, request.output_schema)
        return Completion(text=text, structured=structured,
                          usage=usage, backend=self.backend.name)

    def complete_structured(
        self,
        request: PromptRequest,
        max_repair_attempts: int = 1,
        check: Optional[Callable[[object], Optional[str]]] = None,
    ) -> Completion:
        """Re-ask with the validation error quoted until the reply validates.

        At most 1 + max_repair_attempts backend calls. `check` may add a
        semantic validation pass beyond the schema.
        """
        if request.output_schema is None:
            raise ValueError("complete_structured requires output_schema")
        if max_repair_attempts < 0:
            raise ValueError("max_repair_attempts must be >= 0")
        messages = list(request.messages)
        original_final = request.final_user_text()
        last_error = None
        for _ in range(1 + max_repair_attempts):
            attempt = PromptRequest(
                purpose=request.purpose,
                messages=messages,
                output_schema=request.output_schema,
                temperature=request.temperature,
                max_tokens=request.max_tokens,
            )
            completion = self.complete(attempt)
            value, err = try_parse(completion.text, request.output_schema)
            if value is not None and check is not None:
                semantic_err = check(value)
                if semantic_err:
                    value, err = None, semantic_err
            if value is not None:
                completion.structured = value
                return completion
            last_error = err
            messages = messages + [
                ("assistant", completion.text),
                # Repeat the original request text so scripted fingerprints
                # (substring of the final user message) keep matching.
                ("user",
                 f"That reply was invalid: {err}\n"
                 f"Original request: {original_final}\n"
                 "Reply again with only a corrected JSON object."),
            ]
        raise StructuredOutputFailure(f"no valid structured output: {last_error}")
