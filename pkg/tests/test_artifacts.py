import hashlib
import io
import tarfile

import pytest

from abflow.artifacts import ArtifactStore, export_bundle
from abflow.canonical import FixedClock
from abflow.errors import SessionNotTerminal, UnknownSession
from abflow.packs.windfarm import USER_REQUEST

from conftest import demo_engine

CLOCK = FixedClock("2025-08-09T00:00:00Z")


def store_with_session(tmp_path):
    (tmp_path / "sessions" / "s1").mkdir(parents=True)
    return ArtifactStore(str(tmp_path), CLOCK)


def test_artifact_id_is_content_digest(tmp_path):
    store = store_with_session(tmp_path)
    art = store.put_artifact("s1", 1, "report", "text/markdown", b"hello", "r.md")
    assert art.artifact_id == hashlib.sha256(b"hello").hexdigest()
    assert store.read_blob(art.artifact_id) == b"hello"
    assert art.bytes_ref.startswith(f"blobs/{art.artifact_id[:2]}/")


def test_identical_bytes_store_once(tmp_path):
    store = store_with_session(tmp_path)
    a = store.put_artifact("s1", 1, "report", "text/markdown", b"same", "a.md")
    b = store.put_artifact("s1", 2, "report", "text/markdown", b"same", "b.md")
    assert a == b
    assert len(store.list_artifacts("s1")) == 1


def test_unknown_session_rejected(tmp_path):
    store = ArtifactStore(str(tmp_path), CLOCK)
    with pytest.raises(UnknownSession):
        store.put_artifact("ghost", 1, "report", "text/plain", b"x", "x")
    with pytest.raises(UnknownSession):
        export_bundle(str(tmp_path), "ghost")


def completed_session(tmp_path):
    engine = demo_engine(tmp_path / "d")
    sid = engine.create_session(user_id="t")
    engine.submit_message(sid, USER_REQUEST)
    return engine, sid


def test_bundle_requires_terminal_session(tmp_path):
    engine = demo_engine(tmp_path / "d", planning_mode=True)
    sid = engine.create_session(user_id="t")
    engine.submit_message(sid, USER_REQUEST)  # pending approval, not terminal
    with pytest.raises(SessionNotTerminal):
        engine.export_bundle(sid)


def test_bundle_layout_and_determinism(tmp_path):
    engine, sid = completed_session(tmp_path)
    first = engine.export_bundle(sid)
    second = engine.export_bundle(sid)
    assert first == second  # re-export is byte-identical

    with tarfile.open(fileobj=io.BytesIO(first)) as tar:
        names = tar.getnames()
        assert names[:4] == ["manifest.json", "plan.json", "events.jsonl",
                             "run_report.md"]
        assert sum(1 for n in names if n.startswith("artifacts/")) == 3
        for info in tar.getmembers():
            assert info.mtime == 0 and info.uid == 0 and info.gid == 0
        report = tar.extractfile("run_report.md").read().decode()
        assert "Final status: completed" in report
        assert "analysis_script.py" in report


def test_bundle_artifact_names_carry_digest_and_label(tmp_path):
    engine, sid = completed_session(tmp_path)
    arts = engine.artifact_store.list_artifacts(sid)
    with tarfile.open(fileobj=io.BytesIO(engine.export_bundle(sid))) as tar:
        for art in arts:
            member = f"artifacts/{art.artifact_id}_{art.label}"
            assert tar.extractfile(member).read() == \
                engine.artifact_store.read_blob(art.artifact_id)
