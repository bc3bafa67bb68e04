"""Scripted-backend fixture for the wind farm demo.

The fixture pins every model interaction of the demo run, computed from the
same seeded data the providers generate, so the whole run is byte-
deterministic end to end.
"""

from __future__ import annotations

import json
from datetime import timedelta
from typing import List

from ...canonical import format_timestamp, parse_timestamp
from .providers import (
    ANALYSIS_SCRIPT,
    DEFAULT_SEED,
    DEMO_REFERENCE,
    TURBINE_IDS,
    efficiency_ranking,
    load_power_curve,
    turbine_readings,
    weather_measurements,
)

USER_REQUEST = (
    "Our wind farm has been underperforming lately. Can you analyze the "
    "turbine performance over the past 2 weeks, identify which turbines are "
    "operating below industry standards, and rank them by efficiency? I need "
    "to know which ones require immediate maintenance attention."
)

TASK_STATEMENT = (
    "Analyze turbine performance over the past 2 weeks, identify turbines "
    "operating below industry standards, and rank them by efficiency to flag "
    "maintenance attention."
)

DEMO_THRESHOLDS = {"excellent_min": 0.85, "good_min": 0.75,
                   "units": "fraction of expected output"}


def demo_plan_steps() -> List[dict]:
    def key(t, k="RAW"):
        return {"type": t, "key": k}

    return [
        {"index": 1, "capability": "time_range_parsing",
         "objective": "Resolve the relative time expression 'past 2 weeks' to absolute dates.",
         "inputs": [], "output": key("TIME_RANGE"),
         "success_criteria": "A closed start/end date interval is produced."},
        {"index": 2, "capability": "turbine_data_archiver",
         "objective": "Retrieve hourly turbine readings for the resolved time range.",
         "inputs": [key("TIME_RANGE")], "output": key("TURBINE_DATA"),
         "success_criteria": "One reading per turbine per hour in range."},
        {"index": 3, "capability": "weather_data_retrieval",
         "objective": "Retrieve hourly wind speed measurements for the resolved time range.",
         "inputs": [key("TIME_RANGE")], "output": key("WEATHER_DATA"),
         "success_criteria": "One wind speed measurement per hour in range."},
        {"index": 4, "capability": "knowledge_retrieval",
         "objective": "Extract industry performance thresholds from the knowledge base.",
         "inputs": [], "output": key("PERFORMANCE_THRESHOLDS"),
         "success_criteria": "Threshold fractions for excellent and good bands."},
        {"index": 5, "capability": "turbine_analysis",
         "objective": "Compute per-turbine efficiency against the power curve and rank turbines.",
         "inputs": [key("TURBINE_DATA"), key("WEATHER_DATA"),
                    key("PERFORMANCE_THRESHOLDS")],
         "output": key("ANALYSIS_RESULTS"),
         "success_criteria": "Turbines ranked by efficiency with a band each."},
        {"index": 6, "capability": "respond",
         "objective": "Write the maintenance report with rankings and recommendations.",
         "inputs": [key("ANALYSIS_RESULTS"), key("PERFORMANCE_THRESHOLDS")],
         "output": key("FINAL_RESPONSE"),
         "success_criteria": "Report names every turbine and flags maintenance ones."},
    ]


def demo_ranking(seed: int = DEFAULT_SEED, reference: str = DEMO_REFERENCE) -> List[dict]:
    end = parse_timestamp(reference)
    start = end - timedelta(days=14)
    pc = load_power_curve()
    readings = turbine_readings(start, end, seed, pc)
    measurements = weather_measurements(start, end, seed)
    return efficiency_ranking(readings, measurements, DEMO_THRESHOLDS, pc)


def render_demo_report(ranking: List[dict], start: str, end: str) -> str:
    lines = [
        "# Wind Farm Maintenance Report",
        "",
        f"Analysis period: {start[:10]} to {end[:10]}.",
        "",
        "## Turbine ranking by efficiency",
        "",
    ]
    for i, r in enumerate(ranking):
        lines.append(
            f"{i + 1}. {r['turbine_id']}: {r['efficiency'] * 100:.1f}% of "
            f"expected output ({r['band']})"
        )
    maintenance = [r["turbine_id"] for r in ranking if r["band"] == "maintenance"]
    lines += ["", "## Maintenance recommendations", ""]
    if maintenance:
        lines.append("Maintenance required: " + ", ".join(maintenance) + ".")
        lines.append(
            "These turbines are operating below 75% of expected output and "
            "need immediate attention."
        )
    else:
        lines.append("Maintenance required: none.")
    return "\n".join(lines)


def classification_entries(names, relevant: bool) -> List[dict]:
    return [
        {
            "purpose": "classification",
            "match": f"Is the tool {name} relevant",
            "responses": [json.dumps(
                {"relevant": 1 if relevant else 0,
                 "rationale": ("needed for this task" if relevant
                               else "unrelated to this task")}
            )],
        }
        for name in names
    ]


def build_demo_fixture(seed: int = DEFAULT_SEED,
                       reference: str = DEMO_REFERENCE,
                       plan_responses: int = 1) -> List[dict]:
    """Scripted responses covering every gateway call of the demo run."""
    end = parse_timestamp(reference)
    start = end - timedelta(days=14)
    ranking = demo_ranking(seed, reference)
    report = render_demo_report(
        ranking, format_timestamp(start), format_timestamp(end))

    entries: List[dict] = [
        # Task formalization must be matched before compression: both share
        # the extraction purpose and the raw request text.
        {
            "purpose": "extraction",
            "match": "Available sources:",
            "responses": [json.dumps({
                "actionable": 1,
                "statement": TASK_STATEMENT,
                "constraints": ["past 2 weeks", "rank by efficiency",
                                "compare against industry standards"],
                "dependencies": [{"fragment": "rank them by efficiency",
                                  "requires": "Analyze turbine performance"}],
                "source_refs": [],
            })],
        },
        {
            "purpose": "extraction",
            "match": "Extract the performance thresholds",
            "responses": [json.dumps({"excellent_min": 0.85, "good_min": 0.75})],
        },
        {
            "purpose": "extraction",
            "match": "Our wind farm has been underperforming",
            "responses": [json.dumps({"points": [
                "Wind farm underperforming; analyze turbine performance over the past 2 weeks",
                "Identify turbines operating below industry standards",
                "Rank turbines by efficiency and flag maintenance attention",
            ]})],
        },
        {
            "purpose": "planning",
            "match": "Capabilities:",
            "responses": [json.dumps({"steps": demo_plan_steps()})] * plan_responses,
        },
        {
            "purpose": "planning",
            "match": "List the discrete phases",
            "responses": [json.dumps({"phases": [
                "data preparation",
                "performance metrics calculation",
                "industry benchmark comparison",
            ]})] * plan_responses,
        },
        {
            "purpose": "codegen",
            "match": "Write the analysis script",
            "responses": [ANALYSIS_SCRIPT] * plan_responses,
        },
        {
            "purpose": "response",
            "match": "Write the maintenance report",
            "responses": [report] * plan_responses,
        },
    ]
    entries += classification_entries(
        ("time_range_parsing", "turbine_data_archiver", "weather_data_retrieval",
         "knowledge_retrieval", "turbine_analysis", "respond"),
        relevant=True,
    )
    return entries


def write_demo_fixture(path: str, **kwargs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(build_demo_fixture(**kwargs), fh, indent=2)


__all__ = [
    "USER_REQUEST", "TASK_STATEMENT", "DEMO_THRESHOLDS", "TURBINE_IDS",
    "demo_plan_steps", "demo_ranking", "render_demo_report",
    "classification_entries", "build_demo_fixture", "write_demo_fixture",
]
