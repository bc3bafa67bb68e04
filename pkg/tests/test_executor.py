import itertools
import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from abflow.canonical import FixedClock
from abflow.context import ContextKey, ContextObject, ContextStore, ConversationHistory
from abflow.errors import (
    BackendRejected,
    BackendUnavailable,
    CorruptCheckpoint,
    InvalidPlan,
    NotFound,
    ProviderError,
    ScriptCrash,
    ScriptTimeout,
    StructuredOutputFailure,
    UnknownSession,
)
from abflow.executor import (
    Budgets,
    CheckpointStore,
    ERROR_CLASSES,
    EventLog,
    SessionState,
    classify_error,
    error_class_of,
)
from abflow.planner import PlanDefect, serialize_plan

from conftest import clean_plan

NOW = "2025-08-09T00:00:00Z"
CLOCK = FixedClock(NOW)


# --- error classification -----------------------------------------------------

@pytest.mark.parametrize("exc,expected", [
    (BackendRejected("401"), "fatal"),
    (BackendUnavailable("503"), "transient"),
    (StructuredOutputFailure("no valid output"), "transient"),
    (ScriptTimeout("60s"), "transient"),
    (ScriptCrash("exit 1"), "contract"),
    (NotFound("missing"), "contract"),
    (ProviderError("transient", "x"), "transient"),
    (ProviderError("permanent", "x"), "permanent"),
    (ProviderError("contract", "x"), "contract"),
    (InvalidPlan([PlanDefect("missing_input", "d")]), "invalid_plan"),
    (InvalidPlan([PlanDefect("unknown_capability", "d")]), "missing_capability"),
    (InvalidPlan([PlanDefect("inactive_capability", "d")]), "missing_capability"),
    (RuntimeError("surprise"), "permanent"),
])
def test_error_class_of(exc, expected):
    assert error_class_of(exc) == expected


def expected_action(error_class, attempts, replans, reclassifies, budgets):
    """Reference decision table, written out independently of the engine."""
    if error_class == "fatal" or error_class == "permanent":
        return "abort"
    if error_class == "transient" and attempts < budgets.max_retries_per_step:
        return "retry"
    if error_class == "missing_capability":
        return ("reclassify" if reclassifies < budgets.max_reclassifies
                else "abort")
    return "replan" if replans < budgets.max_replans else "abort"


def test_decision_table_exhaustive():
    budgets = Budgets(2, 2, 1)
    checked = 0
    for cls, attempts, replans, reclassifies in itertools.product(
            ERROR_CLASSES, range(4), range(4), range(3)):
        action = classify_error(cls, 1, attempts, replans, reclassifies, budgets)
        assert action.kind == expected_action(
            cls, attempts, replans, reclassifies, budgets), (
            cls, attempts, replans, reclassifies)
        checked += 1
    assert checked == 6 * 4 * 4 * 3


@given(
    st.sampled_from(ERROR_CLASSES),
    st.integers(0, 50), st.integers(0, 50), st.integers(0, 50),
    st.integers(0, 5), st.integers(0, 5), st.integers(0, 5),
)
def test_decisions_never_exceed_budgets(cls, attempts, replans, reclassifies,
                                        b_retry, b_replan, b_reclass):
    budgets = Budgets(b_retry, b_replan, b_reclass)
    action = classify_error(cls, None, attempts, replans, reclassifies, budgets)
    if action.kind == "retry":
        assert attempts < budgets.max_retries_per_step
    if action.kind == "replan":
        assert replans < budgets.max_replans
    if action.kind == "reclassify":
        assert reclassifies < budgets.max_reclassifies
    if cls in ("fatal", "permanent"):
        assert action.kind == "abort"


# --- durable state ------------------------------------------------------------

def make_state(session_id="s1"):
    store = ContextStore()
    store.put(ContextObject(
        key=ContextKey.of("TIME_RANGE", "RAW"), schema={"note": "text"},
        payload={"note": "x"}, provenance="step-1", created_at=NOW,
    ))
    history = ConversationHistory(session_id=session_id)
    history.append("user", "hello", NOW)
    return SessionState(
        session_id=session_id, user_id="u", status="running",
        plan=clean_plan(random.Random(4)), cursor=2, store=store,
        attempt_counters={2: 1}, replan_count=1, step_approvals={1},
        history=history,
    )


def test_checkpoint_save_load_round_trip(tmp_path):
    cps = CheckpointStore(str(tmp_path))
    state = make_state()
    cps.create_session("s1")
    cps.save(state)
    loaded = cps.load("s1")
    assert loaded.to_doc() == state.to_doc()
    assert serialize_plan(loaded.plan) == serialize_plan(state.plan)


def test_checkpoint_corruption_detected(tmp_path):
    cps = CheckpointStore(str(tmp_path))
    cps.create_session("s1")
    cps.save(make_state())
    path = tmp_path / "sessions" / "s1" / "checkpoint.json"
    path.write_bytes(path.read_bytes()[:-2] + b"!}")
    with pytest.raises(CorruptCheckpoint):
        cps.load("s1")


def test_unknown_session(tmp_path):
    with pytest.raises(UnknownSession):
        CheckpointStore(str(tmp_path)).load("nope")


def test_event_log_sequences_are_gapless(tmp_path):
    (tmp_path / "sessions" / "s1").mkdir(parents=True)
    log = EventLog(str(tmp_path), "s1", CLOCK)
    for _ in range(5):
        log.append("step_started", step_index=1)
    # a second handle continues the same sequence
    log2 = EventLog(str(tmp_path), "s1", CLOCK)
    log2.append("session_completed")
    events = log2.read()
    assert [e["sequence"] for e in events] == list(range(6))
    assert [e["sequence"] for e in log2.read(from_sequence=4)] == [4, 5]


def test_event_log_rejects_unknown_kinds(tmp_path):
    (tmp_path / "sessions" / "s1").mkdir(parents=True)
    with pytest.raises(AssertionError):
        EventLog(str(tmp_path), "s1", CLOCK).append("made_up_kind")


def test_session_state_json_round_trip():
    state = make_state()
    doc = state.to_doc()
    again = SessionState.from_doc(json.loads(json.dumps(doc)))
    assert again.to_doc() == doc
    assert again.attempt_counters == {2: 1}
    assert again.step_approvals == {1}
