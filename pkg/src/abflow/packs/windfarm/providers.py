"""Wind farm demonstration pack: six capabilities over seeded mock data.

Five turbines, hourly readings, a piecewise reference power curve, and a
deterministic engine-side efficiency oracle that cross-checks the generated
analysis script. Everything is a pure function of (seed, range), so demo runs
are byte-reproducible.
"""

from __future__ import annotations

import json
import math
import os
import random
import re
from datetime import datetime, timedelta, timezone
from typing import Dict, List, Optional, Tuple

from ...canonical import format_timestamp, parse_timestamp
from ...context import ContextKey, ContextObject
from ...errors import EmptyRange, OracleMismatch, UnparseableExpression
from ...gateway import PromptRequest
from ...scriptexec import ScriptJob

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")

DEFAULT_SEED = 20250809
DEMO_REFERENCE = "2025-08-09T00:00:00Z"

TURBINE_IDS = ("T-01", "T-02", "T-03", "T-04", "T-05")
# Per-turbine performance factors; T-04 is seeded to underperform.
PERFORMANCE_FACTORS = {
    "T-01": 0.97, "T-02": 0.92, "T-03": 0.88, "T-04": 0.55, "T-05": 0.82,
}

TIME_RANGE_SCHEMA = {"start": "timestamp", "end": "timestamp"}
TURBINE_SCHEMA = {
    "readings": (
        "series-of-<record-of-<turbine_id:text,timestamp:timestamp,"
        "power_output:real,availability:real>>"
    ),
}
WEATHER_SCHEMA = {
    "measurements": "series-of-<record-of-<timestamp:timestamp,wind_speed:real>>",
}
THRESHOLDS_SCHEMA = {"excellent_min": "real", "good_min": "real", "units": "text"}
RANKING_SCHEMA = {
    "ranking": "series-of-<record-of-<turbine_id:text,efficiency:real,band:text>>",
}
RESPONSE_SCHEMA = {"report": "text"}


def data_path(name: str) -> str:
    return os.path.join(DATA_DIR, name)


def registry_manifest_path() -> str:
    return data_path("registry.json")


def load_power_curve() -> dict:
    with open(data_path("power_curve.json"), "r", encoding="utf-8") as fh:
        return json.load(fh)


def expected_power(v: float, pc: dict) -> float:
    """Piecewise cut-in / cubic ramp / rated / cut-out curve, in kW."""
    ci, rs, co, rp = pc["cut_in"], pc["rated_speed"], pc["cut_out"], pc["rated_power_kw"]
    if v < ci or v >= co:
        return 0.0
    if v >= rs:
        return rp
    return rp * ((v ** 3 - ci ** 3) / (rs ** 3 - ci ** 3))


# --- time range parsing ------------------------------------------------------

_WORD_NUMBERS = {
    "one": 1, "two": 2, "three": 3, "four": 4, "five": 5, "six": 6,
    "seven": 7, "eight": 8, "nine": 9, "ten": 10, "eleven": 11, "twelve": 12,
}
_UNIT_HOURS = {"hour": 1, "day": 24, "week": 24 * 7, "month": 24 * 30}

_RELATIVE = re.compile(
    r"(?:past|last|previous)\s+(?:(\d+|[a-z]+)\s+)?(hour|day|week|month)s?",
    re.IGNORECASE,
)


def parse_time_range(expression: str, reference: datetime) -> Tuple[datetime, datetime]:
    """Resolve a relative time expression to a closed (start, end) interval."""
    text = expression.strip().lower()
    if reference.tzinfo is None:
        reference = reference.replace(tzinfo=timezone.utc)
    if text in ("today", "now"):
        day = reference.replace(hour=0, minute=0, second=0, microsecond=0)
        return day, day
    if text == "yesterday":
        day = reference.replace(hour=0, minute=0, second=0, microsecond=0)
        return day - timedelta(days=1), day - timedelta(days=1)
    m = _RELATIVE.search(text)
    if m:
        count_text = m.group(1) or "1"
        if count_text.isdigit():
            count = int(count_text)
        elif count_text in _WORD_NUMBERS:
            count = _WORD_NUMBERS[count_text]
        else:
            raise UnparseableExpression(expression)
        hours = count * _UNIT_HOURS[m.group(2)]
        return reference - timedelta(hours=hours), reference
    raise UnparseableExpression(expression)


def hours_in_range(start: datetime, end: datetime) -> int:
    return int((end - start).total_seconds() // 3600)


# --- seeded data generation --------------------------------------------------

def wind_series(start: datetime, end: datetime, seed: int) -> List[Tuple[str, float]]:
    hours = hours_in_range(start, end)
    if hours <= 0:
        raise EmptyRange(f"{start}..{end}")
    rng = random.Random(f"wind-{seed}")
    out = []
    for h in range(hours):
        ts = start + timedelta(hours=h)
        base = 8.0 + 4.0 * math.sin(2.0 * math.pi * (h % 24) / 24.0)
        v = min(24.0, max(0.5, base + rng.uniform(-2.0, 2.0)))
        out.append((format_timestamp(ts), v))
    return out


def turbine_readings(start: datetime, end: datetime, seed: int,
                     pc: Optional[dict] = None) -> List[dict]:
    pc = pc or load_power_curve()
    wind = wind_series(start, end, seed)
    rng = random.Random(f"turbine-{seed}")
    rows = []
    for ts, v in wind:
        exp = expected_power(v, pc)
        for tid in TURBINE_IDS:
            eps = rng.uniform(-0.02, 0.02)
            rows.append({
                "turbine_id": tid,
                "timestamp": ts,
                "power_output": exp * PERFORMANCE_FACTORS[tid] * (1.0 + eps),
                "availability": 1.0,
            })
    return rows


def weather_measurements(start: datetime, end: datetime, seed: int) -> List[dict]:
    return [{"timestamp": ts, "wind_speed": v} for ts, v in wind_series(start, end, seed)]


# --- deterministic analysis oracle ------------------------------------------

def band_of(efficiency: float, thresholds: dict) -> str:
    # Band lower bounds are closed: 0.85 is excellent, 0.75 is good.
    if efficiency >= thresholds["excellent_min"]:
        return "excellent"
    if efficiency >= thresholds["good_min"]:
        return "good"
    return "maintenance"


def efficiency_ranking(readings: List[dict], measurements: List[dict],
                       thresholds: dict, pc: Optional[dict] = None) -> List[dict]:
    """Engine-side oracle: mean actual power over mean expected power per
    turbine, ranked descending. Mirrors the generated analysis script
    operation for operation so results agree to the last bit."""
    pc = pc or load_power_curve()
    wind = {m["timestamp"]: m["wind_speed"] for m in measurements}
    actual: Dict[str, float] = {}
    expect: Dict[str, float] = {}
    count: Dict[str, int] = {}
    for row in readings:
        tid = row["turbine_id"]
        actual[tid] = actual.get(tid, 0.0) + row["power_output"]
        expect[tid] = expect.get(tid, 0.0) + expected_power(wind[row["timestamp"]], pc)
        count[tid] = count.get(tid, 0) + 1
    ranking = []
    for tid in sorted(actual):
        n = count[tid]
        eff = (actual[tid] / n) / (expect[tid] / n)
        ranking.append({"turbine_id": tid, "efficiency": eff,
                        "band": band_of(eff, thresholds)})
    ranking.sort(key=lambda r: (-r["efficiency"], r["turbine_id"]))
    return ranking


# The analysis script the codegen stage produces for the demo fixture. It
# mirrors efficiency_ranking over the marshalled job files.
ANALYSIS_SCRIPT = '''\
import csv
import json

with open("inputs/POWER_CURVE_REF.json") as fh:
    pc = json.load(fh)
with open("inputs/PERFORMANCE_THRESHOLDS_RAW.json") as fh:
    th = json.load(fh)


def expected_power(v):
    ci, rs, co, rp = pc["cut_in"], pc["rated_speed"], pc["cut_out"], pc["rated_power_kw"]
    if v < ci or v >= co:
        return 0.0
    if v >= rs:
        return rp
    return rp * ((v ** 3 - ci ** 3) / (rs ** 3 - ci ** 3))


wind = {}
with open("inputs/WEATHER_DATA_RAW.csv") as fh:
    for row in csv.DictReader(fh):
        wind[row["timestamp"]] = float(row["wind_speed"])

actual, expect, count = {}, {}, {}
with open("inputs/TURBINE_DATA_RAW.csv") as fh:
    for row in csv.DictReader(fh):
        tid = row["turbine_id"]
        actual[tid] = actual.get(tid, 0.0) + float(row["power_output"])
        expect[tid] = expect.get(tid, 0.0) + expected_power(wind[row["timestamp"]])
        count[tid] = count.get(tid, 0) + 1

rows = []
for tid in sorted(actual):
    n = count[tid]
    eff = (actual[tid] / n) / (expect[tid] / n)
    if eff >= th["excellent_min"]:
        band = "excellent"
    elif eff >= th["good_min"]:
        band = "good"
    else:
        band = "maintenance"
    rows.append((tid, eff, band))
rows.sort(key=lambda r: (-r[1], r[0]))

with open("outputs/ranking.csv", "w", newline="") as fh:
    w = csv.writer(fh)
    w.writerow(["turbine_id", "efficiency", "band"])
    for tid, eff, band in rows:
        w.writerow([tid, repr(eff), band])
'''


# --- capability providers ----------------------------------------------------

def _objective_expression(objective: str) -> str:
    m = re.search(r"'([^']+)'", objective)
    return m.group(1) if m else objective


def _by_type(inputs, context_type: str) -> ContextObject:
    for key, obj in inputs.items():
        if key.context_type == context_type:
            return obj
    raise KeyError(context_type)


class WindfarmProviders:
    """Provider hooks for the six demo capabilities."""

    def __init__(self, seed: int = DEFAULT_SEED, verify_oracle: bool = True):
        self.seed = seed
        self.verify_oracle = verify_oracle
        self.power_curve = load_power_curve()

    def as_dict(self) -> Dict[str, object]:
        return {
            "windfarm.time_range_parsing": self.time_range_parsing,
            "windfarm.turbine_data_archiver": self.turbine_data_archiver,
            "windfarm.weather_data_retrieval": self.weather_data_retrieval,
            "windfarm.knowledge_retrieval": self.knowledge_retrieval,
            "windfarm.turbine_analysis": self.turbine_analysis,
            "windfarm.respond": self.respond,
        }

    def time_range_parsing(self, ctx, inputs):
        expression = _objective_expression(ctx.step.objective)
        start, end = parse_time_range(expression, ctx.clock.now())
        return TIME_RANGE_SCHEMA, {
            "start": format_timestamp(start), "end": format_timestamp(end),
        }

    def _range(self, inputs) -> Tuple[datetime, datetime]:
        tr = _by_type(inputs, "TIME_RANGE").payload
        return parse_timestamp(tr["start"]), parse_timestamp(tr["end"])

    def turbine_data_archiver(self, ctx, inputs):
        start, end = self._range(inputs)
        rows = turbine_readings(start, end, self.seed, self.power_curve)
        return TURBINE_SCHEMA, {"readings": rows}

    def weather_data_retrieval(self, ctx, inputs):
        start, end = self._range(inputs)
        return WEATHER_SCHEMA, {"measurements": weather_measurements(start, end, self.seed)}

    def knowledge_retrieval(self, ctx, inputs):
        with open(data_path("performance_standards.txt"), "r", encoding="utf-8") as fh:
            document = fh.read()

        def check(value):
            if not 0 < value["good_min"] < value["excellent_min"] <= 1:
                return (
                    "thresholds must satisfy 0 < good_min < excellent_min <= 1, "
                    f"got {value}"
                )
            return None

        completion = ctx.gateway.complete_structured(
            PromptRequest(
                purpose="extraction",
                messages=[
                    ("system",
                     "Extract the performance threshold fractions from this "
                     "technical document."),
                    ("user",
                     f"Document:\n{document}\n\nExtract the performance "
                     "thresholds as fractions of expected output."),
                ],
                output_schema={"excellent_min": "real", "good_min": "real"},
            ),
            max_repair_attempts=1,
            check=check,
        )
        doc = completion.structured
        return THRESHOLDS_SCHEMA, {
            "excellent_min": doc["excellent_min"],
            "good_min": doc["good_min"],
            "units": "fraction of expected output",
        }

    def turbine_analysis(self, ctx, inputs):
        turbine = _by_type(inputs, "TURBINE_DATA")
        weather = _by_type(inputs, "WEATHER_DATA")
        thresholds = _by_type(inputs, "PERFORMANCE_THRESHOLDS")

        phase_completion = ctx.gateway.complete_structured(
            PromptRequest(
                purpose="planning",
                messages=[
                    ("system",
                     "Break the requested analysis down into discrete phases "
                     "before any code is written."),
                    ("user",
                     f"Objective: {ctx.step.objective}\n"
                     "List the discrete phases of this analysis "
                     "(for example: data preparation, performance metrics "
                     "calculation, industry benchmark comparison)."),
                ],
                output_schema={"phases": "series-of-<text>"},
            ),
            max_repair_attempts=1,
        )
        phases = phase_completion.structured["phases"]

        code_completion = ctx.gateway.complete(PromptRequest(
            purpose="codegen",
            messages=[
                ("system",
                 "Write a self-contained Python script implementing the "
                 "phases. It reads its inputs from the files under inputs/ "
                 "and writes outputs/ranking.csv with columns turbine_id, "
                 "efficiency, band."),
                ("user",
                 "Write the analysis script for these phases:\n"
                 + "\n".join(f"- {p}" for p in phases)
                 + "\nInput files: inputs/TURBINE_DATA_RAW.csv, "
                   "inputs/WEATHER_DATA_RAW.csv, "
                   "inputs/PERFORMANCE_THRESHOLDS_RAW.json, "
                   "inputs/POWER_CURVE_REF.json."),
            ],
        ))
        script_text = code_completion.text

        job = ScriptJob(
            job_id=f"{ctx.session_id}-step{ctx.step.index}",
            script_text=script_text,
            input_manifest=[
                (turbine.key, turbine.schema, turbine.payload),
                (weather.key, weather.schema, weather.payload),
                (thresholds.key, thresholds.schema, thresholds.payload),
                (ContextKey.of("POWER_CURVE", "REF"),
                 {"cut_in": "real", "rated_speed": "real", "cut_out": "real",
                  "rated_power_kw": "real"},
                 self.power_curve),
            ],
            expected_outputs=[("ranking", RANKING_SCHEMA)],
            wall_clock=60.0,
        )
        result = ctx.script_runner.run_script(job)
        ranking = dict(result.outputs)["ranking"]["ranking"]

        if self.verify_oracle:
            oracle = efficiency_ranking(
                turbine.payload["readings"], weather.payload["measurements"],
                thresholds.payload, self.power_curve,
            )
            if len(oracle) != len(ranking):
                raise OracleMismatch("ranking length differs from oracle")
            for got, want in zip(ranking, oracle):
                rel = abs(got["efficiency"] - want["efficiency"]) / max(
                    abs(want["efficiency"]), 1e-300)
                if (got["turbine_id"] != want["turbine_id"]
                        or got["band"] != want["band"] or rel > 1e-9):
                    raise OracleMismatch(f"script {got} vs oracle {want}")

        ctx.artifact_store.put_artifact(
            ctx.session_id, ctx.step.index, "script", "text/x-python",
            script_text.encode("utf-8"), "analysis_script.py",
        )
        table = "turbine_id,efficiency,band\n" + "".join(
            f"{r['turbine_id']},{r['efficiency']!r},{r['band']}\n" for r in ranking
        )
        ctx.artifact_store.put_artifact(
            ctx.session_id, ctx.step.index, "table", "text/csv",
            table.encode("utf-8"), "ranking.csv",
        )
        return RANKING_SCHEMA, {"ranking": ranking}

    def respond(self, ctx, inputs):
        try:
            ranking = _by_type(inputs, "ANALYSIS_RESULTS").payload["ranking"]
        except KeyError:
            ranking = None
        if ranking is not None and not ranking:
            report = "No turbines were analyzed in the requested period."
        else:
            summary = ""
            if ranking is not None:
                summary = "Ranked turbines (efficiency, band):\n" + "\n".join(
                    f"{i + 1}. {r['turbine_id']}: {r['efficiency']:.4f} ({r['band']})"
                    for i, r in enumerate(ranking)
                )
            completion = ctx.gateway.complete(PromptRequest(
                purpose="response",
                messages=[
                    ("system",
                     "Write the final user-facing report for this task."),
                    ("user",
                     f"Task: {ctx.task.statement if ctx.task else ''}\n"
                     f"{summary}\n"
                     "Write the maintenance report for the user."),
                ],
            ))
            report = completion.text
        ctx.artifact_store.put_artifact(
            ctx.session_id, ctx.step.index, "report", "text/markdown",
            report.encode("utf-8"), "report.md",
        )
        return RESPONSE_SCHEMA, {"report": report}
