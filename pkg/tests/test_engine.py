import json

import pytest

from abflow.context import ContextKey
from abflow.executor import Budgets, SimulatedCrash
from abflow.packs.windfarm import USER_REQUEST, build_demo_fixture

from conftest import (
    demo_engine,
    flaky_archiver_providers,
    recovery_fixture_entries,
)


def run_golden(engine):
    sid = engine.create_session(user_id="tester")
    return sid, engine.submit_message(sid, USER_REQUEST)


def test_golden_run_completes(tmp_path, engine):
    sid, state = run_golden(engine)
    assert state.status == "completed"
    assert len(state.plan.steps) == 6
    assert len(state.store) == 6
    report = state.store.get(ContextKey.of("FINAL_RESPONSE", "RAW"))
    assert "Maintenance required: T-04." in report.payload["report"]


def test_clarification_turn_for_non_actionable_message(tmp_path):
    fixture = [
        {"purpose": "extraction", "match": "Available sources:",
         "responses": [json.dumps({"actionable": 0, "statement": "",
                                   "constraints": [], "dependencies": [],
                                   "source_refs": []})]},
        {"purpose": "extraction", "match": "thanks, that is all",
         "responses": [json.dumps({"points": []})]},
    ]
    engine = demo_engine(tmp_path / "d", fixture_entries=fixture)
    sid = engine.create_session()
    state = engine.submit_message(sid, "thanks, that is all")
    assert state.status == "completed"
    assert state.plan is None
    assert state.history.messages[-1].role == "assistant"
    assert "actionable" in state.history.messages[-1].text


def test_transient_failure_retries_then_replans_then_completes(tmp_path):
    providers, calls = flaky_archiver_providers(failures=3)
    engine = demo_engine(
        tmp_path / "d", providers=providers,
        fixture_entries=recovery_fixture_entries(),
        budgets=Budgets(2, 2, 1),
    )
    sid, state = run_golden(engine)
    assert state.status == "completed"
    assert calls["n"] == 4  # three failed attempts, one success after replan
    events = engine.events(sid)
    kinds = [e["kind"] for e in events]
    recoveries = [e for e in events if e["kind"] == "recovery"]
    assert [r["payload"]["action"] for r in recoveries] == [
        "retry", "retry", "replan"]
    assert "plan_revised" in kinds
    assert state.replan_count == 1
    assert len(state.plan.steps) == 5  # the recovery plan reuses TIME_RANGE


def test_transient_exhaustion_without_replan_budget_aborts(tmp_path):
    providers, calls = flaky_archiver_providers(failures=99)
    engine = demo_engine(
        tmp_path / "d", providers=providers,
        fixture_entries=build_demo_fixture(),
        budgets=Budgets(2, 0, 1),
    )
    sid, state = run_golden(engine)
    assert state.status == "aborted"
    assert state.abort_reason == "replan budget exhausted"
    assert calls["n"] == 3


def test_crash_after_step_then_resume_in_fresh_engine(tmp_path):
    data = tmp_path / "d"
    engine = demo_engine(data, crash_after_step=3)
    sid = engine.create_session(session_id="s-crash")
    with pytest.raises(SimulatedCrash):
        engine.submit_message(sid, USER_REQUEST)
    state = engine.state(sid)
    assert state.status == "running" and state.cursor == 4

    fresh = demo_engine(data)  # new process: fresh scripted cursors
    assert fresh.resume(sid) == "completed"
    assert len(fresh.state(sid).store) == 6


def test_resume_is_idempotent_on_terminal_sessions(tmp_path, engine):
    sid, state = run_golden(engine)
    before = engine.state(sid).to_doc()
    assert engine.resume(sid) == "completed"
    assert engine.state(sid).to_doc() == before


def test_session_ids_are_unique_and_listable(tmp_path, engine):
    ids = {engine.create_session() for _ in range(5)}
    assert len(ids) == 5
    assert ids <= set(engine.checkpoints.list_sessions())


def test_events_require_known_session(tmp_path, engine):
    from abflow.errors import UnknownSession
    with pytest.raises(UnknownSession):
        engine.events("missing-session")
