"""HTTP service exposing sessions, plans, approvals, events, and artifacts.

Single process over the on-disk checkpoint store; per-session state changes
are serialized with a lock, matching the executor's single-writer discipline.
State-changing endpoints accept a client-supplied request_id and replay the
original response on retried delivery. The event feed is a server-push stream
(text/event-stream framing) resumable from any sequence number.
"""

from __future__ import annotations

import json
import threading
import time
from typing import Optional

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.responses import StreamingResponse

from .engine import Engine
from .errors import (
    EngineError,
    InterruptAlreadyPending,
    InvalidEdit,
    SessionNotTerminal,
    UnknownInterrupt,
    UnknownSession,
)
from .executor import SessionState
from .interrupts import ApprovalDecision, AuditLog


def session_record(state: SessionState) -> dict:
    pending = state.pending_interrupt
    return {
        "session_id": state.session_id,
        "user_id": state.user_id,
        "status": state.status,
        "plan_id": state.plan.plan_id if state.plan else None,
        "revision": state.plan.revision if state.plan else None,
        "cursor": state.cursor,
        "pending_interrupt": pending,
        "abort_reason": state.abort_reason,
    }


class ServiceState:
    def __init__(self, engine: Engine):
        self.engine = engine
        self._locks: dict = {}
        self._locks_guard = threading.Lock()
        self._idempotent: dict = {}

    def lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(session_id, threading.Lock())

    def replay(self, scope: str, request_id: Optional[str]):
        if request_id:
            return self._idempotent.get((scope, request_id))
        return None

    def remember(self, scope: str, request_id: Optional[str], response: dict):
        if request_id:
            self._idempotent[(scope, request_id)] = response


def build_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="abflow", version="0.1.0")
    svc = ServiceState(engine)

    def _load(session_id: str) -> SessionState:
        try:
            return engine.state(session_id)
        except UnknownSession:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")

    @app.post("/sessions")
    def create_session(body: dict):
        request_id = body.get("request_id")
        cached = svc.replay("sessions", request_id)
        if cached is not None:
            return cached
        sid = engine.create_session(
            user_id=body.get("user_id", "anonymous"),
            session_id=body.get("session_id"),
        )
        record = session_record(engine.state(sid))
        svc.remember("sessions", request_id, record)
        return record

    @app.post("/sessions/{session_id}/messages")
    def post_message(session_id: str, body: dict):
        if "text" not in body or not isinstance(body["text"], str):
            raise HTTPException(status_code=400, detail="body needs text")
        request_id = body.get("request_id")
        scope = f"messages:{session_id}"
        cached = svc.replay(scope, request_id)
        if cached is not None:
            return cached
        _load(session_id)
        with svc.lock(session_id):
            try:
                state = engine.submit_message(session_id, body["text"])
            except InterruptAlreadyPending as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            except EngineError as exc:
                raise HTTPException(status_code=500, detail=str(exc))
        record = session_record(state)
        svc.remember(scope, request_id, record)
        return record

    @app.get("/sessions")
    def list_sessions():
        out = []
        for sid in engine.checkpoints.list_sessions():
            try:
                out.append(session_record(engine.state(sid)))
            except EngineError:
                continue
        return out

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return session_record(_load(session_id))

    @app.get("/sessions/{session_id}/plan")
    def get_plan(session_id: str):
        state = _load(session_id)
        if state.plan is None:
            raise HTTPException(status_code=404, detail="no plan yet")
        return state.plan.as_dict()

    @app.post("/sessions/{session_id}/plan:revise")
    def revise(session_id: str, body: dict):
        if "document" not in body:
            raise HTTPException(status_code=400, detail="body needs document")
        request_id = body.get("request_id")
        scope = f"revise:{session_id}"
        cached = svc.replay(scope, request_id)
        if cached is not None:
            return cached
        state = _load(session_id)
        pending = state.pending_interrupt
        if pending is None or pending["kind"] != "plan_approval":
            raise HTTPException(status_code=409,
                                detail="no plan approval pending for this session")
        decision = ApprovalDecision(
            interrupt_id=pending["interrupt_id"], verdict="edit",
            decided_by=body.get("decided_by", "operator"),
            decided_at=engine.clock.now_text(),
            edited_payload=body["document"],
        )
        with svc.lock(session_id):
            try:
                state = engine.resolve(session_id, decision)
            except InvalidEdit as exc:
                raise HTTPException(status_code=400, detail={
                    "defects": [d.as_dict() for d in exc.defects]})
        record = session_record(state)
        svc.remember(scope, request_id, record)
        return record

    @app.post("/interrupts/{interrupt_id}/decision")
    def decide(interrupt_id: str, body: dict):
        verdict = body.get("verdict")
        if verdict not in ("approve", "reject", "edit"):
            raise HTTPException(status_code=400, detail="verdict must be approve/reject/edit")
        request_id = body.get("request_id")
        scope = f"decision:{interrupt_id}"
        cached = svc.replay(scope, request_id)
        if cached is not None:
            return cached
        session_id = engine.find_session_by_interrupt(interrupt_id)
        if session_id is None:
            # Distinguish an already-resolved interrupt from a bogus id.
            for sid in engine.checkpoints.list_sessions():
                for rec in AuditLog(engine.data_dir, sid).read():
                    if rec["interrupt_id"] == interrupt_id:
                        raise HTTPException(status_code=409,
                                            detail="interrupt already resolved")
            raise HTTPException(status_code=404, detail="unknown interrupt")
        decision = ApprovalDecision(
            interrupt_id=interrupt_id, verdict=verdict,
            decided_by=body.get("decided_by", "operator"),
            decided_at=engine.clock.now_text(),
            edited_payload=body.get("edited_payload"),
        )
        with svc.lock(session_id):
            try:
                state = engine.resolve(session_id, decision)
            except UnknownInterrupt:
                raise HTTPException(status_code=409, detail="interrupt already resolved")
            except InvalidEdit as exc:
                raise HTTPException(status_code=400, detail={
                    "defects": [d.as_dict() for d in exc.defects]})
        record = session_record(state)
        svc.remember(scope, request_id, record)
        return record

    @app.get("/sessions/{session_id}/events")
    def events(session_id: str, request: Request, response: Response,
               from_: int = 0):
        # FastAPI can't take `from` as a parameter name directly.
        try:
            from_ = int(request.query_params.get("from", from_))
        except ValueError:
            raise HTTPException(status_code=400, detail="from must be an integer")
        last_id = request.headers.get("Last-Event-ID")
        if last_id is not None:
            try:
                from_ = int(last_id) + 1
            except ValueError:
                pass
        _load(session_id)
        accept = request.headers.get("accept", "")
        if "text/event-stream" not in accept:
            return engine.events(session_id, from_sequence=from_)

        def stream():
            cursor = from_
            while True:
                for ev in engine.events(session_id, from_sequence=cursor):
                    cursor = ev["sequence"] + 1
                    yield f"id: {ev['sequence']}\ndata: {json.dumps(ev)}\n\n"
                state = engine.state(session_id)
                if state.status in ("completed", "aborted"):
                    if not engine.events(session_id, from_sequence=cursor):
                        return
                    continue
                time.sleep(0.1)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.get("/sessions/{session_id}/artifacts")
    def list_artifacts(session_id: str):
        _load(session_id)
        return [a.as_dict() for a in engine.artifact_store.list_artifacts(session_id)]

    @app.get("/artifacts/{artifact_id}")
    def get_artifact(artifact_id: str):
        art = engine.artifact_store.get(artifact_id)
        if art is None:
            raise HTTPException(status_code=404, detail="unknown artifact")
        return Response(content=engine.artifact_store.read_blob(artifact_id),
                        media_type=art.media_type)

    @app.get("/sessions/{session_id}/bundle")
    def bundle(session_id: str):
        _load(session_id)
        try:
            data = engine.export_bundle(session_id)
        except SessionNotTerminal as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return Response(content=data, media_type="application/x-tar")

    return app
