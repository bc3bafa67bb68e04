"""Isolated execution of generated analysis scripts.

Inputs are marshalled into a fresh job directory (CSV for flat series
payloads, JSON otherwise), the script runs as a child process confined to
that directory, and declared outputs are read back and schema-validated.
Local and containerized backends share this one contract; only the launcher
command differs.
"""

from __future__ import annotations

import csv
import io
import json
import os
import shlex
import subprocess
import sys
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .canonical import canonical_json
from .context import ContextKey
from .errors import OutputSchemaViolation, ScriptCrash, ScriptTimeout
from .schema import parse_type, validation_error

TAIL_BYTES = 4096
TIMEOUT_GRACE = 1.0


@dataclass
class ScriptJob:
    job_id: str
    script_text: str
    input_manifest: List[Tuple[ContextKey, Dict[str, str], dict]]  # (key, schema, payload)
    expected_outputs: List[Tuple[str, Dict[str, str]]]  # (name, schema)
    backend: str = "local"  # local | container
    wall_clock: float = 60.0
    max_output_bytes: int = 10 * 1024 * 1024

    def __post_init__(self):
        assert self.backend in ("local", "container")
        assert self.wall_clock > 0 and self.max_output_bytes > 0
        if not self.expected_outputs:
            raise ValueError("expected_outputs must be non-empty")


@dataclass
class ScriptResult:
    job_id: str
    exit_status: int
    outputs: List[Tuple[str, object]]
    stdout_tail: str
    stderr_tail: str
    duration: float


def _flat_series_field(schema: Dict[str, str]) -> Optional[Tuple[str, Dict[str, str]]]:
    """If the schema is one field holding a series of scalar records, return
    (field_name, column types); such payloads marshal as CSV."""
    if len(schema) != 1:
        return None
    (name, expr), = schema.items()
    parsed = parse_type(expr)
    if parsed[0] != "series" or parsed[1][0] != "record":
        return None
    columns = {}
    for col, sub in parsed[1][1].items():
        if sub[0] != "scalar":
            return None
        columns[col] = sub[1]
    return name, columns


def _write_csv(path: str, rows: List[dict], columns: Dict[str, str]) -> None:
    names = list(columns)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in rows:
            out = []
            for col in names:
                v = row[col]
                # repr round-trips floats exactly through the CSV boundary
                out.append(repr(v) if isinstance(v, float) else str(v))
            writer.writerow(out)


def _read_csv(path: str, columns: Dict[str, str]) -> List[dict]:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for raw in reader:
            row = {}
            for col, typ in columns.items():
                if col not in raw or raw[col] is None:
                    raise OutputSchemaViolation(f"{path}: missing column {col!r}")
                text = raw[col]
                try:
                    if typ == "integer":
                        row[col] = int(text)
                    elif typ == "real":
                        row[col] = float(text)
                    else:
                        row[col] = text
                except ValueError as exc:
                    raise OutputSchemaViolation(f"{path}: bad {col!r}: {exc}") from exc
            rows.append(row)
    return rows


def _marshal_input(inputs_dir: str, key: ContextKey,
                   schema: Dict[str, str], payload: dict) -> str:
    base = f"{key.context_type}_{key.instance_key}"
    flat = _flat_series_field(schema)
    if flat is not None:
        name, columns = flat
        path = os.path.join(inputs_dir, base + ".csv")
        _write_csv(path, payload[name], columns)
    else:
        path = os.path.join(inputs_dir, base + ".json")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(canonical_json(payload))
    return path


def _read_output(outputs_dir: str, name: str, schema: Dict[str, str]):
    flat = _flat_series_field(schema)
    if flat is not None:
        field_name, columns = flat
        path = os.path.join(outputs_dir, name + ".csv")
        if not os.path.exists(path):
            raise OutputSchemaViolation(f"declared output missing: {name}.csv")
        value = {field_name: _read_csv(path, columns)}
    else:
        path = os.path.join(outputs_dir, name + ".json")
        if not os.path.exists(path):
            raise OutputSchemaViolation(f"declared output missing: {name}.json")
        with open(path, "r", encoding="utf-8") as fh:
            try:
                value = json.load(fh)
            except json.JSONDecodeError as exc:
                raise OutputSchemaViolation(f"{name}.json: {exc}") from exc
    err = validation_error(schema, value)
    if err:
        raise OutputSchemaViolation(f"output {name!r}: {err}")
    return path, value


def _tail(data: bytes) -> str:
    return data[-TAIL_BYTES:].decode("utf-8", errors="replace")


class ScriptRunner:
    """Runs ScriptJobs under <data_dir>/jobs/<job_id>/."""

    def __init__(self, data_dir: str, interpreter: Optional[str] = None,
                 container_cmd: Optional[str] = None):
        self.jobs_root = os.path.join(data_dir, "jobs")
        self.interpreter = (
            interpreter or os.environ.get("AB_SCRIPT_INTERPRETER") or sys.executable
        )
        self.container_cmd = container_cmd or os.environ.get("AB_SCRIPT_CONTAINER_CMD", "")

    def _command(self, job: ScriptJob, job_dir: str, script_path: str) -> List[str]:
        if job.backend == "local":
            return [self.interpreter, script_path]
        if not self.container_cmd:
            raise ValueError("container backend needs AB_SCRIPT_CONTAINER_CMD")
        rendered = self.container_cmd.format(dir=job_dir, script=script_path)
        return shlex.split(rendered)

    def run_script(self, job: ScriptJob) -> ScriptResult:
        job_dir = os.path.join(self.jobs_root, job.job_id)
        inputs_dir = os.path.join(job_dir, "inputs")
        outputs_dir = os.path.join(job_dir, "outputs")
        os.makedirs(inputs_dir, exist_ok=True)
        os.makedirs(outputs_dir, exist_ok=True)

        for key, schema, payload in job.input_manifest:
            _marshal_input(inputs_dir, key, schema, payload)
        script_path = os.path.join(job_dir, "script.py")
        with open(script_path, "w", encoding="utf-8") as fh:
            fh.write(job.script_text)

        # The child sees only the job directory: fresh env, cwd pinned there.
        env = {"PATH": os.environ.get("PATH", "/usr/bin:/bin"), "HOME": job_dir}
        started = time.monotonic()
        try:
            proc = subprocess.run(
                self._command(job, job_dir, script_path),
                cwd=job_dir, env=env, capture_output=True,
                timeout=job.wall_clock,
            )
        except subprocess.TimeoutExpired as exc:
            raise ScriptTimeout(
                f"job {job.job_id} exceeded {job.wall_clock}s"
            ) from exc
        duration = time.monotonic() - started

        stdout_tail = _tail(proc.stdout or b"")
        stderr_tail = _tail(proc.stderr or b"")
        if proc.returncode != 0:
            raise ScriptCrash(
                f"job {job.job_id} exited {proc.returncode}: {stderr_tail[-500:]}"
            )

        outputs = []
        for name, schema in job.expected_outputs:
            path, value = _read_output(outputs_dir, name, schema)
            if os.path.getsize(path) > job.max_output_bytes:
                raise OutputSchemaViolation(
                    f"output {name!r} exceeds {job.max_output_bytes} bytes"
                )
            outputs.append((name, value))

        result = ScriptResult(
            job_id=job.job_id, exit_status=proc.returncode, outputs=outputs,
            stdout_tail=stdout_tail, stderr_tail=stderr_tail, duration=duration,
        )
        with open(os.path.join(job_dir, "result.json"), "w", encoding="utf-8") as fh:
            fh.write(canonical_json({
                "job_id": result.job_id,
                "exit_status": result.exit_status,
                "outputs": [name for name, _ in outputs],
                "stdout_tail": stdout_tail,
                "stderr_tail": stderr_tail,
            }))
        return result
