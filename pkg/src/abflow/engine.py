"""Session orchestration: the full turn pipeline and interrupt resolution.

A turn runs extraction -> classification -> planning, then either holds the
plan for approval (planning mode, the default) or executes it directly. The
engine owns the hooks the executor calls back into for replanning,
reclassification, and step-approval interrupts.
"""

from __future__ import annotations

import uuid
from dataclasses import replace
from typing import Dict, Optional

from .artifacts import ArtifactStore, export_bundle
from .canonical import Clock
from .capabilities import (
    CapabilityRegistry,
    assemble_planner_material,
    classify_all,
)
from .context import ConversationHistory
from .errors import (
    InvalidEdit,
    InvalidPlan,
    UnknownInterrupt,
    UnknownSession,
)
from .executor import (
    Budgets,
    CheckpointStore,
    EventLog,
    Executor,
    SessionState,
)
from .extraction import (
    MemoryEntry,
    MemoryStore,
    SourceBundle,
    compress_history,
    extract_task,
)
from .gateway import Gateway
from .interrupts import (
    ApprovalDecision,
    AuditLog,
    check_none_pending,
    make_interrupt,
)
from .planner import generate_plan, revise_plan, serialize_plan
from .scriptexec import ScriptRunner

CLARIFICATION_TEXT = (
    "I could not find an actionable request in that message. "
    "Could you say what you would like done?"
)


class Engine:
    def __init__(
        self,
        data_dir: str,
        registry: CapabilityRegistry,
        gateway: Gateway,
        providers: Dict[str, object],
        clock: Optional[Clock] = None,
        planning_mode: bool = True,
        budgets: Budgets = Budgets(),
        compress_budget: int = 4000,
        scripted_mode: bool = True,
        crash_after_step: Optional[int] = None,
    ):
        self.data_dir = data_dir
        self.registry = registry
        self.gateway = gateway
        self.clock = clock or Clock()
        self.planning_mode = planning_mode
        self.compress_budget = compress_budget
        self.checkpoints = CheckpointStore(data_dir)
        self.artifact_store = ArtifactStore(data_dir, self.clock)
        self.script_runner = ScriptRunner(data_dir)
        self.memory = MemoryStore(data_dir)
        self.executor = Executor(
            checkpoints=self.checkpoints,
            artifact_store=self.artifact_store,
            registry=registry,
            providers=providers,
            gateway=gateway,
            script_runner=self.script_runner,
            clock=self.clock,
            budgets=budgets,
            replan_hook=self._replan,
            reclassify_hook=self._reclassify,
            interrupt_hook=self._raise_step_interrupt,
            scripted_mode=scripted_mode,
            crash_after_step=crash_after_step,
        )

    # --- sessions ------------------------------------------------------------

    def create_session(self, user_id: str = "anonymous",
                       session_id: Optional[str] = None) -> str:
        session_id = session_id or f"s-{uuid.uuid4().hex[:12]}"
        self.checkpoints.create_session(session_id)
        state = SessionState(
            session_id=session_id, user_id=user_id, status="running",
            history=ConversationHistory(session_id=session_id),
        )
        self.checkpoints.save(state)
        return session_id

    def state(self, session_id: str) -> SessionState:
        return self.checkpoints.load(session_id)

    def events(self, session_id: str, from_sequence: int = 0):
        if not self.checkpoints.exists(session_id):
            raise UnknownSession(session_id)
        log = EventLog(self.data_dir, session_id, self.clock)
        return log.read(from_sequence)

    def _event_log(self, session_id: str) -> EventLog:
        return EventLog(self.data_dir, session_id, self.clock)

    # --- turn pipeline -------------------------------------------------------

    def submit_message(self, session_id: str, text: str,
                       sources: Optional[SourceBundle] = None) -> SessionState:
        state = self.checkpoints.load(session_id)
        check_none_pending(state.pending_interrupt)
        if state.history is None:
            state.history = ConversationHistory(session_id=session_id)
        state.history.append("user", text, self.clock.now_text())

        if sources is None:
            entries = self.memory.entries(state.user_id)
            sources = SourceBundle(memory=entries)

        condensed = compress_history(self.gateway, state.history, self.compress_budget)
        task = extract_task(self.gateway, condensed, sources)
        if task is None:
            state.history.append("assistant", CLARIFICATION_TEXT, self.clock.now_text())
            state.status = "completed"
            self.checkpoints.save(state)
            return state

        state.task = task
        state.active = classify_all(self.gateway, task, self.registry)
        material = assemble_planner_material(state.active, self.registry)
        inventory = state.store.inventory()
        plan = generate_plan(
            self.gateway, task, material, inventory, state.active,
            self.registry, self.clock,
        )
        state.plan = plan
        state.cursor = 1
        state.attempt_counters = {}

        if self.planning_mode:
            self._raise_plan_approval(state)
            return state

        state.plan = replace(plan, approved=True)
        state.status = "running"
        self.checkpoints.save(state)
        self.executor.run(state)
        return self.checkpoints.load(session_id)

    # --- interrupts ----------------------------------------------------------

    def _interrupt_serial(self, session_id: str) -> int:
        raised = [e for e in self._event_log(session_id).read()
                  if e["kind"] == "interrupt_raised"]
        return len(raised)

    def _raise_plan_approval(self, state: SessionState) -> None:
        check_none_pending(state.pending_interrupt)
        serial = self._interrupt_serial(state.session_id)
        # Payload is exactly the canonical plan document (the wire contract).
        state.pending_interrupt = make_interrupt(
            state.session_id, "plan_approval", state.plan.as_dict(),
            self.clock, serial,
        )
        state.status = "pending_approval"
        self.checkpoints.save(state)
        self._event_log(state.session_id).append(
            "interrupt_raised",
            payload={"interrupt_id": state.pending_interrupt["interrupt_id"],
                     "kind": "plan_approval"},
        )

    def _raise_step_interrupt(self, state: SessionState, step) -> None:
        check_none_pending(state.pending_interrupt)
        serial = self._interrupt_serial(state.session_id)
        state.pending_interrupt = make_interrupt(
            state.session_id, "step_approval", {"step": step.as_dict()},
            self.clock, serial,
        )
        state.status = "suspended_interrupt"
        self.checkpoints.save(state)
        self._event_log(state.session_id).append(
            "interrupt_raised", step_index=step.index,
            payload={"interrupt_id": state.pending_interrupt["interrupt_id"],
                     "kind": "step_approval"},
        )

    def request_memory_write(self, session_id: str, entry: MemoryEntry) -> dict:
        """Gate a memory write behind an approval interrupt."""
        state = self.checkpoints.load(session_id)
        check_none_pending(state.pending_interrupt)
        serial = self._interrupt_serial(session_id)
        state.pending_interrupt = make_interrupt(
            session_id, "memory_write",
            {"entry": entry.as_dict(), "prior_status": state.status},
            self.clock, serial,
        )
        state.status = "suspended_interrupt"
        self.checkpoints.save(state)
        self._event_log(session_id).append(
            "interrupt_raised",
            payload={"interrupt_id": state.pending_interrupt["interrupt_id"],
                     "kind": "memory_write"},
        )
        return state.pending_interrupt

    def find_session_by_interrupt(self, interrupt_id: str) -> Optional[str]:
        for sid in self.checkpoints.list_sessions():
            try:
                state = self.checkpoints.load(sid)
            except Exception:
                continue
            if (state.pending_interrupt
                    and state.pending_interrupt["interrupt_id"] == interrupt_id):
                return sid
        return None

    def resolve(self, session_id: str, decision: ApprovalDecision) -> SessionState:
        state = self.checkpoints.load(session_id)
        pending = state.pending_interrupt
        if pending is None or pending["interrupt_id"] != decision.interrupt_id:
            raise UnknownInterrupt(decision.interrupt_id)
        AuditLog(self.data_dir, session_id).append(decision)
        events = self._event_log(session_id)

        kind = pending["kind"]
        if decision.verdict == "reject":
            state.pending_interrupt = None
            events.append("interrupt_resolved",
                          payload={"interrupt_id": pending["interrupt_id"],
                                   "verdict": "reject"})
            if kind == "memory_write":
                state.status = pending["payload"].get("prior_status", "running")
                self.checkpoints.save(state)
                return state
            state.status = "aborted"
            state.abort_reason = "operator rejection"
            self.checkpoints.save(state)
            events.append("session_aborted", payload={"reason": state.abort_reason})
            return state

        if decision.verdict == "edit":
            if kind != "plan_approval" and kind != "memory_write":
                raise InvalidEdit([])  # edit is not valid for step approvals
            if kind == "memory_write":
                pending["payload"]["entry"] = decision.edited_payload
                self.checkpoints.save(state)
                return state
            import json as _json
            try:
                revised = revise_plan(
                    state.plan, _json.dumps(decision.edited_payload),
                    state.active, self.registry, state.store.inventory(),
                )
            except InvalidPlan as exc:
                # Interrupt stays pending; the operator can try again.
                raise InvalidEdit(exc.defects) from exc
            state.plan = revised
            state.pending_interrupt = None
            events.append("interrupt_resolved",
                          payload={"interrupt_id": pending["interrupt_id"],
                                   "verdict": "edit"})
            events.append("plan_revised", payload={"revision": revised.revision})
            self._raise_plan_approval(state)
            return state

        # approve
        state.pending_interrupt = None
        events.append("interrupt_resolved",
                      payload={"interrupt_id": pending["interrupt_id"],
                               "verdict": "approve"})
        if kind == "plan_approval":
            state.plan = replace(state.plan, approved=True)
            state.status = "running"
            self.checkpoints.save(state)
            self.executor.run(state)
        elif kind == "step_approval":
            step_index = pending["payload"]["step"]["index"]
            state.step_approvals.add(step_index)
            state.status = "running"
            self.checkpoints.save(state)
            self.executor.run(state)
        else:  # memory_write
            entry_doc = pending["payload"]["entry"]
            self.memory.append(MemoryEntry(
                user_id=entry_doc["user_id"], text=entry_doc["text"],
                tags=entry_doc.get("tags", []),
                created_at=entry_doc.get("created_at", ""),
                entry_id=entry_doc.get("entry_id", ""),
            ))
            state.status = pending["payload"].get("prior_status", "running")
            self.checkpoints.save(state)
        return self.checkpoints.load(session_id)

    # --- recovery hooks ------------------------------------------------------

    def _replan(self, state: SessionState, failure_detail: str) -> None:
        material = assemble_planner_material(state.active, self.registry)
        inventory = state.store.inventory()
        plan = generate_plan(
            self.gateway, state.task, material, inventory, state.active,
            self.registry, self.clock,
            revision=state.plan.revision + 1,
            failure_detail=failure_detail,
        )
        if self.planning_mode:
            state.plan = plan
            self._raise_plan_approval(state)
        else:
            state.plan = replace(plan, approved=True)

    def _reclassify(self, state: SessionState) -> None:
        state.active = classify_all(self.gateway, state.task, self.registry)

    # --- convenience ---------------------------------------------------------

    def resume(self, session_id: str) -> str:
        return self.executor.resume(session_id)

    def export_bundle(self, session_id: str) -> bytes:
        return export_bundle(self.data_dir, session_id)

    def plan_document(self, session_id: str) -> Optional[str]:
        state = self.checkpoints.load(session_id)
        return serialize_plan(state.plan) if state.plan else None
