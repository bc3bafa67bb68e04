"""Command line entry points.

Exit codes: 0 success, 1 user error (bad input, rejected approval),
2 engine failure (aborted run, backend failure).
"""

from __future__ import annotations

import json
import os
import sys
import tempfile
from typing import Optional

import click

from .canonical import FixedClock
from .capabilities import load_registry_manifest
from .context import ContextKey
from .engine import CLARIFICATION_TEXT, Engine
from .errors import EngineError, InvalidEdit, UnknownSession
from .gateway import Gateway, HttpBackend, ScriptedBackend
from .interrupts import ApprovalDecision
from .packs.windfarm import (
    DEMO_REFERENCE,
    USER_REQUEST,
    WindfarmProviders,
    build_demo_fixture,
    registry_manifest_path,
)

EXIT_OK = 0
EXIT_USER = 1
EXIT_ENGINE = 2


def _data_dir(value: Optional[str]) -> str:
    return value or os.environ.get("AB_DATA_DIR") or os.path.join(
        tempfile.gettempdir(), "abflow-data")


def _build_backend(lm_script: Optional[str]):
    if lm_script:
        return ScriptedBackend.from_file(lm_script)
    if os.environ.get("AB_LM_BASE_URL"):
        return HttpBackend()
    raise click.UsageError(
        "no model backend: pass --lm-script or set AB_LM_BASE_URL")


def _build_engine(data_dir: Optional[str], registry_path: Optional[str],
                  lm_script: Optional[str], planning_mode: bool,
                  clock=None) -> Engine:
    backend = _build_backend(lm_script)
    path = registry_path or registry_manifest_path()
    registry = load_registry_manifest(path)
    providers = WindfarmProviders().as_dict()
    dd = _data_dir(data_dir)
    os.makedirs(dd, exist_ok=True)
    return Engine(
        data_dir=dd, registry=registry, gateway=Gateway(backend),
        providers=providers, clock=clock, planning_mode=planning_mode,
        scripted_mode=lm_script is not None,
    )


def _common(fn):
    fn = click.option("--data-dir", default=None,
                      help="State directory (default AB_DATA_DIR).")(fn)
    fn = click.option("--registry", "registry_path", default=None,
                      help="Capability registry manifest (JSON).")(fn)
    fn = click.option("--lm-script", default=None,
                      help="Scripted backend fixture file; omit for a live "
                           "backend via AB_LM_BASE_URL.")(fn)
    return fn


def _print_state(state) -> None:
    click.echo(f"session {state.session_id}: {state.status}")
    if state.plan:
        click.echo(f"plan {state.plan.plan_id} revision {state.plan.revision} "
                   f"({len(state.plan.steps)} steps)")
    if state.pending_interrupt:
        click.echo(f"pending interrupt: {state.pending_interrupt['interrupt_id']} "
                   f"({state.pending_interrupt['kind']})")
    if state.abort_reason:
        click.echo(f"abort reason: {state.abort_reason}")


def _final_response(engine: Engine, state) -> Optional[str]:
    key = ContextKey.of("FINAL_RESPONSE", "RAW")
    if not state.store.has(key):
        return None
    return state.store.get(key).payload.get("report")


@click.group()
def main():
    """Plan-first agent orchestration engine."""


@main.command()
@_common
@click.option("--listen", default=None, help="host:port (default AB_LISTEN_ADDR).")
@click.option("--planning-mode/--no-planning-mode", default=True)
@click.option("--fixed-clock", default=None, metavar="TIMESTAMP",
              help="Pin the service clock (scripted demos and tests).")
def serve(data_dir, registry_path, lm_script, listen, planning_mode, fixed_clock):
    """Run the HTTP service."""
    import uvicorn

    from .service import build_app

    addr = listen or os.environ.get("AB_LISTEN_ADDR", "127.0.0.1:8080")
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise click.UsageError(f"bad listen address {addr!r}, want host:port")
    clock = FixedClock(fixed_clock) if fixed_clock else None
    engine = _build_engine(data_dir, registry_path, lm_script, planning_mode,
                           clock=clock)
    uvicorn.run(build_app(engine), host=host, port=int(port), log_level="warning")


@main.command()
@_common
@click.option("--task", required=True, help="Request text for the turn.")
@click.option("--auto-approve", is_flag=True, default=False)
@click.option("--session", "session_id", default=None)
@click.option("--user", "user_id", default="cli")
def run(data_dir, registry_path, lm_script, task, auto_approve, session_id, user_id):
    """Run one task to completion (or to the approval gate)."""
    engine = _build_engine(data_dir, registry_path, lm_script,
                           planning_mode=not auto_approve)
    try:
        if session_id is None:
            session_id = engine.create_session(user_id=user_id)
        state = engine.submit_message(session_id, task)
    except EngineError as exc:
        click.echo(f"engine failure: {exc}", err=True)
        sys.exit(EXIT_ENGINE)
    _print_state(state)
    if state.status == "completed":
        text = _final_response(engine, state)
        if text:
            click.echo("")
            click.echo(text)
        sys.exit(EXIT_OK)
    if state.status == "pending_approval":
        click.echo("plan awaiting approval; use `abflow plan show/approve`.")
        sys.exit(EXIT_OK)
    sys.exit(EXIT_ENGINE)


@main.command()
@_common
@click.option("--user", "user_id", default="cli")
def chat(data_dir, registry_path, lm_script, user_id):
    """Interactive loop; plans are shown for approval before execution."""
    engine = _build_engine(data_dir, registry_path, lm_script, planning_mode=True)
    session_id = engine.create_session(user_id=user_id)
    click.echo(f"session {session_id} (empty line to quit)")
    while True:
        try:
            text = click.prompt("you", default="", show_default=False)
        except (EOFError, click.Abort):
            break
        if not text.strip():
            break
        try:
            state = engine.submit_message(session_id, text)
        except EngineError as exc:
            click.echo(f"engine failure: {exc}", err=True)
            sys.exit(EXIT_ENGINE)
        while state.status == "pending_approval" and state.pending_interrupt:
            click.echo(json.dumps(state.pending_interrupt["payload"], indent=2))
            verdict = click.prompt("approve plan? [approve/reject]",
                                   default="approve")
            verdict = "approve" if verdict.lower().startswith("a") else "reject"
            decision = ApprovalDecision(
                interrupt_id=state.pending_interrupt["interrupt_id"],
                verdict=verdict, decided_by=user_id,
                decided_at=engine.clock.now_text(),
            )
            state = engine.resolve(session_id, decision)
        if state.status == "completed":
            reply = _final_response(engine, state) or CLARIFICATION_TEXT
            click.echo(reply)
            state.status = "running"  # session stays open for the next turn
            engine.checkpoints.save(state)
        elif state.status == "aborted":
            click.echo(f"run aborted: {state.abort_reason}", err=True)
            break
    sys.exit(EXIT_OK)


@main.group()
def plan():
    """Inspect and act on a session's plan."""


def _load_state(engine, session_id):
    try:
        return engine.state(session_id)
    except UnknownSession:
        click.echo(f"unknown session {session_id}", err=True)
        sys.exit(EXIT_USER)


@plan.command("show")
@_common
@click.argument("session_id")
def plan_show(data_dir, registry_path, lm_script, session_id):
    engine = _build_engine(data_dir, registry_path, lm_script, planning_mode=True)
    state = _load_state(engine, session_id)
    if state.plan is None:
        click.echo("no plan yet", err=True)
        sys.exit(EXIT_USER)
    click.echo(json.dumps(state.plan.as_dict(), indent=2))
    sys.exit(EXIT_OK)


def _pending_plan_interrupt(state):
    pending = state.pending_interrupt
    if pending is None or pending["kind"] != "plan_approval":
        click.echo("no plan approval pending", err=True)
        sys.exit(EXIT_USER)
    return pending


@plan.command("approve")
@_common
@click.argument("session_id")
@click.option("--by", "decided_by", default="operator")
def plan_approve(data_dir, registry_path, lm_script, session_id, decided_by):
    engine = _build_engine(data_dir, registry_path, lm_script, planning_mode=True)
    state = _load_state(engine, session_id)
    pending = _pending_plan_interrupt(state)
    decision = ApprovalDecision(
        interrupt_id=pending["interrupt_id"], verdict="approve",
        decided_by=decided_by, decided_at=engine.clock.now_text(),
    )
    try:
        state = engine.resolve(session_id, decision)
    except EngineError as exc:
        click.echo(f"engine failure: {exc}", err=True)
        sys.exit(EXIT_ENGINE)
    _print_state(state)
    sys.exit(EXIT_OK if state.status != "aborted" else EXIT_ENGINE)


@plan.command("edit")
@_common
@click.argument("session_id")
@click.option("--file", "document_path", required=True,
              help="JSON plan document replacing the pending plan.")
@click.option("--by", "decided_by", default="operator")
def plan_edit(data_dir, registry_path, lm_script, session_id, document_path, decided_by):
    engine = _build_engine(data_dir, registry_path, lm_script, planning_mode=True)
    state = _load_state(engine, session_id)
    pending = _pending_plan_interrupt(state)
    try:
        with open(document_path, "r", encoding="utf-8") as fh:
            document = json.load(fh)
    except (OSError, ValueError) as exc:
        click.echo(f"cannot read plan document: {exc}", err=True)
        sys.exit(EXIT_USER)
    decision = ApprovalDecision(
        interrupt_id=pending["interrupt_id"], verdict="edit",
        decided_by=decided_by, decided_at=engine.clock.now_text(),
        edited_payload=document,
    )
    try:
        state = engine.resolve(session_id, decision)
    except InvalidEdit as exc:
        click.echo("plan edit rejected:", err=True)
        for defect in exc.defects:
            click.echo(f"  {defect.kind}: {defect.detail}", err=True)
        sys.exit(EXIT_USER)
    _print_state(state)
    sys.exit(EXIT_OK)


@main.command()
@_common
@click.argument("session_id")
def resume(data_dir, registry_path, lm_script, session_id):
    """Resume an interrupted session from its checkpoint."""
    engine = _build_engine(data_dir, registry_path, lm_script, planning_mode=True)
    _load_state(engine, session_id)
    try:
        status = engine.resume(session_id)
    except EngineError as exc:
        click.echo(f"engine failure: {exc}", err=True)
        sys.exit(EXIT_ENGINE)
    click.echo(f"session {session_id}: {status}")
    sys.exit(EXIT_OK if status != "aborted" else EXIT_ENGINE)


@main.command()
@_common
@click.argument("session_id")
@click.option("--output", "-o", default=None, help="Bundle path (default stdout).")
def export(data_dir, registry_path, lm_script, session_id, output):
    """Export a terminal session as a reproducible tar bundle."""
    engine = _build_engine(data_dir, registry_path, lm_script, planning_mode=True)
    _load_state(engine, session_id)
    try:
        data = engine.export_bundle(session_id)
    except EngineError as exc:
        click.echo(f"cannot export: {exc}", err=True)
        sys.exit(EXIT_USER)
    if output:
        with open(output, "wb") as fh:
            fh.write(data)
        click.echo(f"wrote {output} ({len(data)} bytes)")
    else:
        sys.stdout.buffer.write(data)
    sys.exit(EXIT_OK)


@main.group()
def demo():
    """Canned end-to-end demonstrations."""


@demo.command("windfarm")
@click.option("--data-dir", default=None)
@click.option("--bundle", "bundle_path", default=None,
              help="Also write the session bundle here.")
def demo_windfarm(data_dir, bundle_path):
    """Deterministic wind farm analysis run against the scripted backend."""
    backend = ScriptedBackend()
    for entry in build_demo_fixture():
        backend.register_script(entry["purpose"], entry["match"], entry["responses"])
    registry = load_registry_manifest(registry_manifest_path())
    dd = _data_dir(data_dir)
    os.makedirs(dd, exist_ok=True)
    engine = Engine(
        data_dir=dd, registry=registry, gateway=Gateway(backend),
        providers=WindfarmProviders().as_dict(),
        clock=FixedClock(DEMO_REFERENCE), planning_mode=False,
    )
    session_id = engine.create_session(user_id="demo")
    click.echo(f"request: {USER_REQUEST}")
    state = engine.submit_message(session_id, USER_REQUEST)
    _print_state(state)
    if state.status != "completed":
        sys.exit(EXIT_ENGINE)
    text = _final_response(engine, state)
    if text:
        click.echo("")
        click.echo(text)
    if bundle_path:
        data = engine.export_bundle(session_id)
        with open(bundle_path, "wb") as fh:
            fh.write(data)
        click.echo(f"\nwrote {bundle_path} ({len(data)} bytes)")
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
