"""Content-addressed artifact capture and deterministic session bundles.

Blobs live under <data_dir>/blobs/<digest[:2]>/<digest>; each session keeps a
canonical artifact index next to its checkpoint. A bundle is a tar archive
(manifest, plan, events, artifacts, run report) that is a pure function of
session state, so re-export is byte-identical.
"""

from __future__ import annotations

import io
import json
import os
import tarfile
from dataclasses import dataclass
from typing import List, Optional

from .canonical import Clock, canonical_json, digest
from .errors import SessionNotTerminal, UnknownSession

ARTIFACT_KINDS = ("script", "table", "figure", "report", "log")

TERMINAL_STATUSES = ("completed", "aborted")


@dataclass(frozen=True)
class Artifact:
    artifact_id: str
    session_id: str
    step_index: int
    kind: str
    media_type: str
    bytes_ref: str
    label: str
    created_at: str

    def as_dict(self) -> dict:
        return {
            "artifact_id": self.artifact_id,
            "session_id": self.session_id,
            "step_index": self.step_index,
            "kind": self.kind,
            "media_type": self.media_type,
            "bytes_ref": self.bytes_ref,
            "label": self.label,
            "created_at": self.created_at,
        }

    @staticmethod
    def from_dict(doc) -> "Artifact":
        return Artifact(**doc)


def _atomic_write(path: str, data: bytes) -> None:
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


class ArtifactStore:
    def __init__(self, data_dir: str, clock: Optional[Clock] = None):
        self.data_dir = data_dir
        self.clock = clock or Clock()

    def _session_dir(self, session_id: str) -> str:
        path = os.path.join(self.data_dir, "sessions", session_id)
        if not os.path.isdir(path):
            raise UnknownSession(session_id)
        return path

    def _index_path(self, session_id: str) -> str:
        return os.path.join(self._session_dir(session_id), "artifacts.json")

    def list_artifacts(self, session_id: str) -> List[Artifact]:
        path = self._index_path(session_id)
        if not os.path.exists(path):
            return []
        with open(path, "r", encoding="utf-8") as fh:
            return [Artifact.from_dict(d) for d in json.load(fh)]

    def blob_path(self, artifact_digest: str) -> str:
        return os.path.join(self.data_dir, "blobs", artifact_digest[:2], artifact_digest)

    def read_blob(self, artifact_id: str) -> bytes:
        with open(self.blob_path(artifact_id), "rb") as fh:
            return fh.read()

    def get(self, artifact_id: str) -> Optional[Artifact]:
        sessions_root = os.path.join(self.data_dir, "sessions")
        if os.path.isdir(sessions_root):
            for sid in os.listdir(sessions_root):
                for art in self.list_artifacts(sid):
                    if art.artifact_id == artifact_id:
                        return art
        return None

    def put_artifact(self, session_id: str, step_index: int, kind: str,
                     media_type: str, data: bytes, label: str) -> Artifact:
        assert kind in ARTIFACT_KINDS, kind
        d = digest(data)
        blob = self.blob_path(d)
        if not os.path.exists(blob):
            os.makedirs(os.path.dirname(blob), exist_ok=True)
            _atomic_write(blob, data)
        artifacts = self.list_artifacts(session_id)
        for art in artifacts:
            if art.artifact_id == d:
                return art  # content addressing: identical bytes, same artifact
        art = Artifact(
            artifact_id=d, session_id=session_id, step_index=step_index,
            kind=kind, media_type=media_type,
            bytes_ref=f"blobs/{d[:2]}/{d}", label=label,
            created_at=self.clock.now_text(),
        )
        artifacts.append(art)
        _atomic_write(
            self._index_path(session_id),
            canonical_json([a.as_dict() for a in artifacts]).encode("utf-8"),
        )
        return art


def _tar_add(tar: tarfile.TarFile, name: str, data: bytes) -> None:
    info = tarfile.TarInfo(name=name)
    info.size = len(data)
    info.mtime = 0
    info.uid = info.gid = 0
    info.uname = info.gname = ""
    info.mode = 0o644
    tar.addfile(info, io.BytesIO(data))


def _run_report(plan_doc: Optional[dict], events: List[dict],
                artifacts: List[Artifact], status: str) -> str:
    lines = ["# Session run report", "", f"Final status: {status}", ""]
    steps = (plan_doc or {}).get("steps", [])
    by_step_events = {}
    for ev in events:
        if ev.get("step_index") is not None:
            by_step_events.setdefault(ev["step_index"], []).append(ev)
    for step in steps:
        idx = step["index"]
        lines.append(f"## Step {idx}: {step['capability']}")
        lines.append(step["objective"])
        for ev in by_step_events.get(idx, []):
            lines.append(f"- {ev['kind']} (seq {ev['sequence']})")
        for art in artifacts:
            if art.step_index == idx:
                lines.append(f"- artifact [{art.kind}] {art.label} ({art.artifact_id[:12]})")
        lines.append("")
    return "\n".join(lines)


def export_bundle(data_dir: str, session_id: str) -> bytes:
    """Single tar archive: manifest.json, plan, event log, artifacts, report.

    Deterministic: fixed mtimes, sorted artifact entries.
    """
    session_dir = os.path.join(data_dir, "sessions", session_id)
    if not os.path.isdir(session_dir):
        raise UnknownSession(session_id)
    checkpoint_path = os.path.join(session_dir, "checkpoint.json")
    checkpoint = {}
    if os.path.exists(checkpoint_path):
        with open(checkpoint_path, "r", encoding="utf-8") as fh:
            checkpoint = json.load(fh)
    status = checkpoint.get("status", "unknown")
    if status not in TERMINAL_STATUSES:
        raise SessionNotTerminal(f"session {session_id} is {status}")

    events = []
    events_path = os.path.join(session_dir, "events.jsonl")
    events_text = ""
    if os.path.exists(events_path):
        with open(events_path, "r", encoding="utf-8") as fh:
            events_text = fh.read()
        events = [json.loads(line) for line in events_text.splitlines() if line.strip()]

    store = ArtifactStore(data_dir)
    artifacts = sorted(store.list_artifacts(session_id),
                       key=lambda a: (a.step_index, a.artifact_id))
    plan_doc = checkpoint.get("plan")

    manifest = {
        "session_id": session_id,
        "status": status,
        "plan": plan_doc,
        "event_count": len(events),
        "artifacts": [a.as_dict() for a in artifacts],
    }
    report = _run_report(plan_doc, events, artifacts, status)

    buf = io.BytesIO()
    with tarfile.open(fileobj=buf, mode="w", format=tarfile.USTAR_FORMAT) as tar:
        _tar_add(tar, "manifest.json", canonical_json(manifest).encode("utf-8"))
        if plan_doc is not None:
            _tar_add(tar, "plan.json", canonical_json(plan_doc).encode("utf-8"))
        _tar_add(tar, "events.jsonl", events_text.encode("utf-8"))
        _tar_add(tar, "run_report.md", report.encode("utf-8"))
        for art in artifacts:
            _tar_add(tar, f"artifacts/{art.artifact_id}_{art.label}",
                     store.read_blob(art.artifact_id))
    return buf.getvalue()
