"""Shared builders: demo engines over the scripted backend, a toy capability
registry for planner/executor tests, and a seeded plan corpus generator."""

from __future__ import annotations

import json
import random

import pytest

from abflow import Engine, FixedClock, Gateway, ScriptedBackend
from abflow.capabilities import (
    ActiveCapabilitySet,
    Capability,
    CapabilityRegistry,
    load_registry_manifest,
)
from abflow.context import ContextKey, ExtractedTask
from abflow.packs.windfarm import WindfarmProviders, build_demo_fixture
from abflow.packs.windfarm.providers import DEMO_REFERENCE, registry_manifest_path
from abflow.planner import build_plan_from_steps


def scripted_gateway(entries):
    backend = ScriptedBackend()
    for entry in entries:
        backend.register_script(entry["purpose"], entry["match"], entry["responses"])
    return Gateway(backend)


def demo_engine(data_dir, planning_mode=False, crash_after_step=None,
                fixture_entries=None, providers=None, budgets=None,
                registry=None, clock=None):
    kwargs = {}
    if budgets is not None:
        kwargs["budgets"] = budgets
    return Engine(
        data_dir=str(data_dir),
        registry=registry or load_registry_manifest(registry_manifest_path()),
        gateway=scripted_gateway(fixture_entries or build_demo_fixture()),
        providers=providers or WindfarmProviders().as_dict(),
        clock=clock or FixedClock(DEMO_REFERENCE),
        planning_mode=planning_mode,
        crash_after_step=crash_after_step,
        **kwargs,
    )


@pytest.fixture
def engine(tmp_path):
    return demo_engine(tmp_path / "data")


# --- toy registry for planner and executor tests ------------------------------

CHAIN_LEN = 6
CHAIN_TYPES = [f"T_{i}" for i in range(1, CHAIN_LEN + 1)]
EXTRA_TYPES = [f"EXTRA_{i}" for i in range(1, CHAIN_LEN + 1)]
_EXAMPLES = [
    ("fetch the readings", True, "matches"),
    ("summarize the archive", True, "matches"),
    ("order a pizza", False, "unrelated"),
    ("write a poem", False, "unrelated"),
]


def toy_registry() -> CapabilityRegistry:
    registry = CapabilityRegistry()
    accepted = CHAIN_TYPES + EXTRA_TYPES + ["FINAL_RESPONSE"]
    for i in range(1, CHAIN_LEN + 1):
        for name in (f"cap_{i}", f"dormant_{i}"):
            registry.register(Capability(
                name=name, summary=f"stage {i} of the toy pipeline",
                planner_guide=f"produces T_{i}",
                classifier_examples=list(_EXAMPLES),
                input_types=[], optional_inputs=list(accepted),
                output_type=f"T_{i}", provider=f"toy.{name}",
            ))
    registry.register(Capability(
        name="reply", summary="writes the final answer",
        planner_guide="always the last step",
        classifier_examples=list(_EXAMPLES),
        input_types=[], optional_inputs=list(accepted),
        output_type="FINAL_RESPONSE", provider="toy.reply",
    ))
    return registry


def toy_task() -> ExtractedTask:
    return ExtractedTask(statement="run the toy pipeline end to end")


def toy_active() -> ActiveCapabilitySet:
    members = [f"cap_{i}" for i in range(1, CHAIN_LEN + 1)] + ["reply"]
    return ActiveCapabilitySet(task_hash="0" * 64, members=sorted(members), results=[])


TOY_INVENTORY = [
    {"type": "FORBIDDEN", "key": "RAW", "schema": {"x": "text"}, "provenance": "user"},
]

_CLOCK = FixedClock("2025-08-09T00:00:00Z")

DEFECT_SEEDERS = ("unknown_capability", "missing_input", "cycle",
                  "output_collision", "type_mismatch", "inactive_capability")


def _chain_steps(rng: random.Random, length: int):
    steps = []
    for i in range(1, length + 1):
        inputs = [] if i == 1 else [{"type": f"T_{i - 1}", "key": "RAW"}]
        steps.append({
            "index": i, "capability": f"cap_{i}",
            "objective": f"produce stage {i}",
            "inputs": inputs, "output": {"type": f"T_{i}", "key": "RAW"},
            "success_criteria": f"T_{i} stored",
        })
    steps.append({
        "index": length + 1, "capability": "reply",
        "objective": "write the final answer",
        "inputs": [{"type": f"T_{length}", "key": "RAW"}],
        "output": {"type": "FINAL_RESPONSE", "key": "RAW"},
        "success_criteria": "answer written",
    })
    return steps


def clean_plan(rng: random.Random):
    length = rng.randint(3, CHAIN_LEN)
    steps = _chain_steps(rng, length)
    return build_plan_from_steps(steps, "0" * 64, _CLOCK)


def seeded_defect_plan(rng: random.Random):
    """A chain plan with 1-3 independent seeded defects; returns
    (plan, list of seeded defect kinds)."""
    length = rng.randint(4, CHAIN_LEN)
    steps = _chain_steps(rng, length)
    kinds = rng.sample(DEFECT_SEEDERS, rng.randint(1, 3))
    # Distinct chain positions, none on the first or final step so the
    # seedings cannot interact; cycle needs a later chain step to point at.
    positions = rng.sample(range(2, length), min(len(kinds), length - 2))
    while len(positions) < len(kinds):
        kinds.pop()
    inserted = []
    for kind, pos in zip(kinds, positions):
        step = steps[pos - 1]
        if kind == "unknown_capability":
            step["capability"] = "ghost_tool"
        elif kind == "inactive_capability":
            step["capability"] = f"dormant_{pos}"
        elif kind == "missing_input":
            step["inputs"].append({"type": f"EXTRA_{pos}", "key": "RAW"})
        elif kind == "cycle":
            step["inputs"].append({"type": f"T_{pos + 1}", "key": "RAW"})
        elif kind == "type_mismatch":
            step["inputs"].append({"type": "FORBIDDEN", "key": "RAW"})
        elif kind == "output_collision":
            inserted.append(dict(step, inputs=list(step["inputs"])))
    for dup in inserted:
        steps.insert(steps.index(next(
            s for s in steps if s["output"] == dup["output"])) + 1, dup)
    for i, step in enumerate(steps):
        step["index"] = i + 1
    return build_plan_from_steps(steps, "0" * 64, _CLOCK), sorted(kinds)


# --- fault injection for recovery tests ---------------------------------------

def flaky_archiver_providers(failures: int):
    """Windfarm providers whose archiver raises a transient error for the
    first `failures` calls; returns (providers, call counter dict)."""
    from abflow.errors import ProviderError

    providers = WindfarmProviders().as_dict()
    real = providers["windfarm.turbine_data_archiver"]
    calls = {"n": 0}

    def flaky(ctx, inputs):
        calls["n"] += 1
        if calls["n"] <= failures:
            raise ProviderError("transient", "simulated archiver outage")
        return real(ctx, inputs)

    providers["windfarm.turbine_data_archiver"] = flaky
    return providers, calls


def recovery_fixture_entries():
    """Demo fixture whose planning script answers twice: the 6-step golden
    plan, then a 5-step recovery plan reusing the stored time range."""
    from abflow.packs.windfarm.fixtures import demo_plan_steps

    entries = build_demo_fixture()
    recovery = demo_plan_steps()[1:]
    for i, step in enumerate(recovery):
        step["index"] = i + 1
    for entry in entries:
        if entry["purpose"] == "planning" and entry["match"] == "Capabilities:":
            entry["responses"] = entry["responses"] + [
                json.dumps({"steps": recovery})]
    return entries


def plan_corpus(seed: int, count: int, clean: bool):
    rng = random.Random(f"plan-corpus-{seed}-{clean}")
    out = []
    for _ in range(count):
        if clean:
            out.append((clean_plan(rng), []))
        else:
            out.append(seeded_defect_plan(rng))
    return out
