"""Step-by-step plan execution with durable checkpoints and bounded recovery.

The execution loop is deliberately boring: resolve inputs, call the provider,
store the output, checkpoint, advance. Every failure is classified into a
RecoveryAction (retry / replan / reclassify / abort) by a pure decision
function, and a checkpoint is written after every step outcome so a crash at
any boundary resumes to a byte-identical final state.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Set

from .artifacts import ArtifactStore
from .canonical import Clock, canonical_json, digest
from .capabilities import ActiveCapabilitySet, CapabilityRegistry, ClassificationResult
from .context import ContextKey, ContextObject, ContextStore, ConversationHistory, ExtractedTask
from .errors import (
    BackendRejected,
    BackendUnavailable,
    CorruptCheckpoint,
    DuplicateKey,
    InvalidPlan,
    NotFound,
    ProviderError,
    SchemaViolation,
    ScriptCrash,
    ScriptTimeout,
    OutputSchemaViolation,
    StructuredOutputFailure,
    UnknownSession,
)
from .planner import ExecutionPlan, deserialize_plan, serialize_plan

STATUSES = ("pending_approval", "running", "suspended_interrupt", "completed", "aborted")

EVENT_KINDS = (
    "step_started", "step_succeeded", "step_failed", "recovery",
    "interrupt_raised", "interrupt_resolved", "plan_revised",
    "session_completed", "session_aborted",
)

RECOVERY_KINDS = ("retry", "replan", "reclassify", "abort")

# Coarse error classes consumed by the recovery decision table.
E_TRANSIENT = "transient"
E_CONTRACT = "contract"
E_PERMANENT = "permanent"
E_INVALID_PLAN = "invalid_plan"
E_MISSING_CAPABILITY = "missing_capability"
E_FATAL = "fatal"
ERROR_CLASSES = (
    E_TRANSIENT, E_CONTRACT, E_PERMANENT, E_INVALID_PLAN, E_MISSING_CAPABILITY, E_FATAL,
)


@dataclass(frozen=True)
class Budgets:
    max_retries_per_step: int = 2
    max_replans: int = 2
    max_reclassifies: int = 1

    def __post_init__(self):
        assert min(self.max_retries_per_step, self.max_replans, self.max_reclassifies) >= 0


@dataclass(frozen=True)
class RecoveryAction:
    kind: str
    reason: str
    originating_step: Optional[int] = None

    def __post_init__(self):
        assert self.kind in RECOVERY_KINDS


def error_class_of(exc: Exception) -> str:
    """Map a raised exception to its coarse recovery class."""
    if isinstance(exc, BackendRejected):
        return E_FATAL
    if isinstance(exc, (BackendUnavailable, StructuredOutputFailure, ScriptTimeout)):
        return E_TRANSIENT
    if isinstance(exc, InvalidPlan):
        kinds = {d.kind for d in exc.defects}
        if kinds & {"unknown_capability", "inactive_capability"}:
            return E_MISSING_CAPABILITY
        return E_INVALID_PLAN
    if isinstance(exc, ProviderError):
        return exc.kind  # transient | permanent | contract
    if isinstance(exc, (ScriptCrash, OutputSchemaViolation, SchemaViolation,
                        NotFound, DuplicateKey)):
        return E_CONTRACT
    return E_PERMANENT


def classify_error(
    error_class: str,
    step_index: Optional[int],
    attempts: int,
    replan_count: int,
    reclassify_count: int,
    budgets: Budgets,
) -> RecoveryAction:
    """Pure recovery decision table.

    transient -> retry while attempts < max_retries_per_step;
    exhausted transient, contract errors, and invalid plans -> replan while
    replan budget lasts; planning failures caused by a missing capability ->
    reclassify while that budget lasts; everything else (and exhausted
    budgets) -> abort. Fatal backend rejection aborts immediately.
    """
    assert error_class in ERROR_CLASSES, error_class
    if error_class == E_FATAL:
        return RecoveryAction("abort", "backend rejected request", step_index)
    if error_class == E_PERMANENT:
        return RecoveryAction("abort", "permanent provider failure", step_index)
    if error_class == E_TRANSIENT and attempts < budgets.max_retries_per_step:
        return RecoveryAction(
            "retry", f"transient failure, attempt {attempts + 1}", step_index
        )
    if error_class == E_MISSING_CAPABILITY:
        if reclassify_count < budgets.max_reclassifies:
            return RecoveryAction(
                "reclassify", "planning failed for lack of a capability", step_index
            )
        return RecoveryAction("abort", "reclassification budget exhausted", step_index)
    # transient-exhausted, contract, invalid_plan
    if replan_count < budgets.max_replans:
        reasons = {
            E_TRANSIENT: "retries exhausted",
            E_CONTRACT: "contract violation",
            E_INVALID_PLAN: "plan failed validation",
        }
        return RecoveryAction("replan", reasons[error_class], step_index)
    return RecoveryAction("abort", "replan budget exhausted", step_index)


# --- durable session state ---------------------------------------------------

@dataclass
class SessionState:
    session_id: str
    user_id: str = "anonymous"
    status: str = "running"
    plan: Optional[ExecutionPlan] = None
    cursor: int = 1
    store: ContextStore = field(default_factory=ContextStore)
    pending_interrupt: Optional[dict] = None
    attempt_counters: Dict[int, int] = field(default_factory=dict)
    replan_count: int = 0
    reclassify_count: int = 0
    task: Optional[ExtractedTask] = None
    active: Optional[ActiveCapabilitySet] = None
    history: Optional[ConversationHistory] = None
    step_approvals: Set[int] = field(default_factory=set)
    abort_reason: Optional[str] = None

    def to_doc(self) -> dict:
        return {
            "session_id": self.session_id,
            "user_id": self.user_id,
            "status": self.status,
            "plan": self.plan.as_dict() if self.plan else None,
            "cursor": self.cursor,
            "context": self.store.snapshot(),
            "pending_interrupt": self.pending_interrupt,
            "attempt_counters": {str(k): v for k, v in self.attempt_counters.items()},
            "replan_count": self.replan_count,
            "reclassify_count": self.reclassify_count,
            "task": self.task.as_dict() if self.task else None,
            "active": self.active.as_dict() if self.active else None,
            "history": self.history.as_dict() if self.history else None,
            "step_approvals": sorted(self.step_approvals),
            "abort_reason": self.abort_reason,
        }

    @staticmethod
    def from_doc(doc: dict) -> "SessionState":
        active = None
        if doc.get("active"):
            a = doc["active"]
            active = ActiveCapabilitySet(
                task_hash=a["task_hash"], members=list(a["members"]),
                results=[ClassificationResult(**r) for r in a["results"]],
            )
        return SessionState(
            session_id=doc["session_id"],
            user_id=doc.get("user_id", "anonymous"),
            status=doc["status"],
            plan=(deserialize_plan(json.dumps(doc["plan"])) if doc.get("plan") else None),
            cursor=doc["cursor"],
            store=ContextStore.from_snapshot(doc.get("context", {})),
            pending_interrupt=doc.get("pending_interrupt"),
            attempt_counters={int(k): v for k, v in doc.get("attempt_counters", {}).items()},
            replan_count=doc.get("replan_count", 0),
            reclassify_count=doc.get("reclassify_count", 0),
            task=(ExtractedTask.from_dict(doc["task"]) if doc.get("task") else None),
            active=active,
            history=(ConversationHistory.from_dict(doc["history"]) if doc.get("history") else None),
            step_approvals=set(doc.get("step_approvals", [])),
            abort_reason=doc.get("abort_reason"),
        )


class CheckpointStore:
    """One canonical checkpoint document per session, written atomically
    (temp + rename + fsync) with a digest sidecar for corruption detection."""

    def __init__(self, data_dir: str):
        self.data_dir = data_dir

    def session_dir(self, session_id: str) -> str:
        return os.path.join(self.data_dir, "sessions", session_id)

    def create_session(self, session_id: str) -> None:
        os.makedirs(self.session_dir(session_id), exist_ok=False)

    def exists(self, session_id: str) -> bool:
        return os.path.isdir(self.session_dir(session_id))

    def list_sessions(self) -> List[str]:
        root = os.path.join(self.data_dir, "sessions")
        if not os.path.isdir(root):
            return []
        return sorted(os.listdir(root))

    def save(self, state: SessionState) -> None:
        path = os.path.join(self.session_dir(state.session_id), "checkpoint.json")
        data = canonical_json(state.to_doc()).encode("utf-8")
        tmp = path + ".tmp"
        with open(tmp, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
        with open(path + ".sha256", "w", encoding="utf-8") as fh:
            fh.write(digest(data))
            fh.flush()
            os.fsync(fh.fileno())

    def load(self, session_id: str) -> SessionState:
        sdir = self.session_dir(session_id)
        path = os.path.join(sdir, "checkpoint.json")
        if not os.path.isdir(sdir) or not os.path.exists(path):
            raise UnknownSession(session_id)
        with open(path, "rb") as fh:
            data = fh.read()
        sidecar = path + ".sha256"
        if os.path.exists(sidecar):
            with open(sidecar, "r", encoding="utf-8") as fh:
                expected = fh.read().strip()
            if digest(data) != expected:
                raise CorruptCheckpoint(session_id)
        try:
            doc = json.loads(data.decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise CorruptCheckpoint(f"{session_id}: {exc}") from exc
        return SessionState.from_doc(doc)


class EventLog:
    """Append-only JSONL event log with gapless per-session sequences."""

    def __init__(self, data_dir: str, session_id: str, clock: Clock):
        self.path = os.path.join(data_dir, "sessions", session_id, "events.jsonl")
        self.clock = clock
        self._next = len(self.read())

    def append(self, kind: str, step_index: Optional[int] = None,
               payload: Optional[dict] = None) -> dict:
        assert kind in EVENT_KINDS, kind
        event = {
            "sequence": self._next,
            "kind": kind,
            "step_index": step_index,
            "payload": payload or {},
            "timestamp": self.clock.now_text(),
        }
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(canonical_json(event) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        self._next += 1
        return event

    def read(self, from_sequence: int = 0) -> List[dict]:
        if not os.path.exists(self.path):
            return []
        events = []
        with open(self.path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    ev = json.loads(line)
                    if ev["sequence"] >= from_sequence:
                        events.append(ev)
        return events


class SimulatedCrash(Exception):
    """Test hook: raised after a chosen step's checkpoint to model a kill."""


@dataclass
class ProviderContext:
    """What a capability provider gets to see: its step, the task, and the
    engine services it may use. Never the whole context store."""
    session_id: str
    step: object  # PlanStep
    task: Optional[ExtractedTask]
    gateway: object
    artifact_store: ArtifactStore
    script_runner: object
    clock: Clock


# Provider signature: (ProviderContext, Dict[ContextKey, ContextObject])
#   -> (schema, payload)
ProviderFn = Callable[[ProviderContext, Dict[ContextKey, ContextObject]], tuple]


class Executor:
    def __init__(
        self,
        checkpoints: CheckpointStore,
        artifact_store: ArtifactStore,
        registry: CapabilityRegistry,
        providers: Dict[str, ProviderFn],
        gateway,
        script_runner,
        clock: Clock,
        budgets: Budgets = Budgets(),
        replan_hook: Optional[Callable[[SessionState, str], None]] = None,
        reclassify_hook: Optional[Callable[[SessionState], None]] = None,
        interrupt_hook: Optional[Callable[[SessionState, object], None]] = None,
        scripted_mode: bool = True,
        crash_after_step: Optional[int] = None,
    ):
        self.checkpoints = checkpoints
        self.artifact_store = artifact_store
        self.registry = registry
        self.providers = providers
        self.gateway = gateway
        self.script_runner = script_runner
        self.clock = clock
        self.budgets = budgets
        self.replan_hook = replan_hook
        self.reclassify_hook = reclassify_hook
        self.interrupt_hook = interrupt_hook
        self.scripted_mode = scripted_mode
        self.crash_after_step = crash_after_step
        # Per-capability provider invocation counts; approval-gating tests
        # assert these stay zero until a decision exists.
        self.provider_calls: Dict[str, int] = {}

    def _events(self, session_id: str) -> EventLog:
        return EventLog(self.checkpoints.data_dir, session_id, self.clock)

    def _backoff(self, attempt: int) -> None:
        if self.scripted_mode:
            return
        time.sleep(min(30.0, 1.0 * (2 ** attempt)))

    def execute_step(self, state: SessionState, step) -> ContextObject:
        cap = self.registry.get(step.capability)
        if cap is None:
            raise ProviderError("permanent", f"no capability {step.capability!r}")
        provider = self.providers.get(cap.provider)
        if provider is None:
            raise ProviderError("permanent", f"no provider hook {cap.provider!r}")
        inputs: Dict[ContextKey, ContextObject] = {}
        for key in step.inputs:
            try:
                inputs[key] = state.store.get(key)
            except NotFound as exc:
                raise ProviderError("contract", f"unmet input {key}") from exc
        ctx = ProviderContext(
            session_id=state.session_id, step=step, task=state.task,
            gateway=self.gateway, artifact_store=self.artifact_store,
            script_runner=self.script_runner, clock=self.clock,
        )
        self.provider_calls[cap.name] = self.provider_calls.get(cap.name, 0) + 1
        schema, payload = provider(ctx, inputs)
        try:
            obj = ContextObject(
                key=step.output, schema=schema, payload=payload,
                provenance=f"step-{step.index}", created_at=self.clock.now_text(),
            )
            state.store.put(obj)
        except (SchemaViolation, DuplicateKey) as exc:
            raise ProviderError("contract", str(exc)) from exc
        return obj

    def run(self, state: SessionState) -> str:
        """Drive the session to a terminal or suspended status."""
        events = self._events(state.session_id)
        if state.status in ("completed", "aborted"):
            return state.status
        if state.pending_interrupt is not None:
            return state.status
        state.status = "running"

        while True:
            plan = state.plan
            assert plan is not None
            if state.cursor > len(plan.steps):
                state.status = "completed"
                self.checkpoints.save(state)
                events.append("session_completed")
                return state.status

            step = plan.steps[state.cursor - 1]
            cap = self.registry.get(step.capability)
            if (cap is not None and cap.requires_approval
                    and step.index not in state.step_approvals):
                if self.interrupt_hook is None:
                    state.status = "aborted"
                    state.abort_reason = "approval required but no interrupt channel"
                    self.checkpoints.save(state)
                    events.append("session_aborted",
                                  payload={"reason": state.abort_reason})
                    return state.status
                self.interrupt_hook(state, step)  # writes checkpoint + event
                return state.status

            events.append("step_started", step_index=step.index,
                          payload={"capability": step.capability})
            try:
                self.execute_step(state, step)
            except Exception as exc:  # every failure becomes a RecoveryAction
                events.append("step_failed", step_index=step.index,
                              payload={"error": str(exc),
                                       "class": error_class_of(exc)})
                done = self._recover(state, events, step.index, exc)
                if done is not None:
                    return done
                continue

            state.cursor += 1
            events.append("step_succeeded", step_index=step.index,
                          payload={"output": step.output.as_dict()})
            self.checkpoints.save(state)
            if self.crash_after_step == step.index:
                raise SimulatedCrash(step.index)

    def _recover(self, state: SessionState, events: EventLog,
                 step_index: int, exc: Exception) -> Optional[str]:
        """Apply one recovery decision; returns a status when the session
        leaves the run loop, None to continue."""
        err_class = error_class_of(exc)
        attempts = state.attempt_counters.get(step_index, 0)
        action = classify_error(
            err_class, step_index, attempts,
            state.replan_count, state.reclassify_count, self.budgets,
        )
        events.append("recovery", step_index=step_index, payload={
            "action": action.kind, "reason": action.reason,
            "error_class": err_class,
        })

        if action.kind == "retry":
            state.attempt_counters[step_index] = attempts + 1
            self.checkpoints.save(state)
            self._backoff(attempts)
            return None

        if action.kind == "abort":
            state.status = "aborted"
            state.abort_reason = action.reason
            self.checkpoints.save(state)
            events.append("session_aborted", payload={"reason": action.reason})
            return state.status

        if action.kind == "reclassify":
            state.reclassify_count += 1
            if self.reclassify_hook is None:
                state.status = "aborted"
                state.abort_reason = "no reclassify hook configured"
                self.checkpoints.save(state)
                events.append("session_aborted",
                              payload={"reason": state.abort_reason})
                return state.status
            try:
                self.reclassify_hook(state)
            except Exception as inner:
                return self._recover(state, events, step_index, inner)
            # A fresh classification is only useful with a fresh plan.
            return self._apply_replan(state, events, step_index,
                                      f"reclassified after: {exc}")

        # replan
        state.replan_count += 1
        return self._apply_replan(state, events, step_index, str(exc))

    def _apply_replan(self, state: SessionState, events: EventLog,
                      step_index: int, detail: str) -> Optional[str]:
        if self.replan_hook is None:
            state.status = "aborted"
            state.abort_reason = "no replan hook configured"
            self.checkpoints.save(state)
            events.append("session_aborted", payload={"reason": state.abort_reason})
            return state.status
        try:
            self.replan_hook(state, detail)
        except Exception as inner:
            return self._recover(state, events, step_index, inner)
        state.cursor = 1
        state.attempt_counters = {}
        self.checkpoints.save(state)
        events.append("plan_revised", payload={
            "revision": state.plan.revision, "detail": detail,
        })
        if state.pending_interrupt is not None:
            # Replanned under planning mode: wait for a fresh approval.
            return state.status
        return None

    def resume(self, session_id: str) -> str:
        """Reload the durable checkpoint and continue where it points."""
        state = self.checkpoints.load(session_id)
        if state.status in ("completed", "aborted"):
            return state.status
        if state.pending_interrupt is not None:
            return state.status  # waits for an operator decision
        if state.status == "pending_approval":
            return state.status
        return self.run(state)
