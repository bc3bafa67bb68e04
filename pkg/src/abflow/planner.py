"""Upfront execution planning with explicit context-key dependencies.

A plan is a linear sequence of steps whose input/output keys form a DAG;
validation returns every defect found (as data, never exceptions), and the
canonical plan document is the wire contract shared by the approval UI, the
CLI, and checkpoints.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

from .canonical import Clock, canonical_json, is_timestamp
from .capabilities import ActiveCapabilitySet, CapabilityRegistry
from .context import ContextKey, ExtractedTask
from .errors import InvalidPlan, MalformedPlanDocument
from .gateway import Gateway, PromptRequest

DEFECT_KINDS = (
    "unknown_capability",
    "missing_input",
    "cycle",
    "output_collision",
    "type_mismatch",
    "inactive_capability",
)

PLAN_SCHEMA = {
    "steps": (
        "series-of-<record-of-<"
        "index:integer,capability:text,objective:text,"
        "inputs:series-of-<record-of-<type:text,key:text>>,"
        "output:record-of-<type:text,key:text>,"
        "success_criteria:text>>"
    ),
}


@dataclass(frozen=True)
class PlanDefect:
    kind: str
    detail: str
    step_index: Optional[int] = None

    def __post_init__(self):
        assert self.kind in DEFECT_KINDS

    def as_dict(self) -> dict:
        return {"kind": self.kind, "detail": self.detail,
                "step_index": self.step_index}

    def __str__(self) -> str:
        where = f"step {self.step_index}: " if self.step_index is not None else ""
        return f"{where}{self.kind} ({self.detail})"


@dataclass(frozen=True)
class PlanStep:
    index: int  # 1-based
    capability: str
    objective: str
    inputs: tuple  # tuple[ContextKey, ...]
    output: ContextKey
    success_criteria: str = ""

    def as_dict(self) -> dict:
        return {
            "index": self.index,
            "capability": self.capability,
            "objective": self.objective,
            "inputs": [k.as_dict() for k in self.inputs],
            "output": self.output.as_dict(),
            "success_criteria": self.success_criteria,
        }


@dataclass(frozen=True)
class ExecutionPlan:
    plan_id: str
    task_hash: str
    steps: tuple  # tuple[PlanStep, ...]
    created_at: str
    approved: bool = False
    revision: int = 0

    def as_dict(self) -> dict:
        return {
            "plan_id": self.plan_id,
            "task_hash": self.task_hash,
            "revision": self.revision,
            "approved": self.approved,
            "created_at": self.created_at,
            "steps": [s.as_dict() for s in self.steps],
        }


def serialize_plan(plan: ExecutionPlan) -> str:
    return canonical_json(plan.as_dict())


def _require(doc, key, typ, where):
    if not isinstance(doc, dict) or key not in doc:
        raise MalformedPlanDocument(f"{where}: missing field {key!r}")
    value = doc[key]
    if typ is int and isinstance(value, bool):
        raise MalformedPlanDocument(f"{where}.{key}: expected {typ.__name__}")
    if not isinstance(value, typ):
        raise MalformedPlanDocument(f"{where}.{key}: expected {typ.__name__}")
    return value


def _parse_key(doc, where) -> ContextKey:
    t = _require(doc, "type", str, where)
    k = _require(doc, "key", str, where)
    try:
        return ContextKey.of(t, k)
    except Exception as exc:
        raise MalformedPlanDocument(f"{where}: {exc}") from exc


def deserialize_plan(document: str) -> ExecutionPlan:
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise MalformedPlanDocument(f"not valid JSON: {exc}") from exc
    plan_id = _require(doc, "plan_id", str, "plan")
    task_hash = _require(doc, "task_hash", str, "plan")
    revision = _require(doc, "revision", int, "plan")
    approved = _require(doc, "approved", bool, "plan")
    created_at = _require(doc, "created_at", str, "plan")
    if not is_timestamp(created_at):
        raise MalformedPlanDocument("plan.created_at: not an RFC 3339 timestamp")
    raw_steps = _require(doc, "steps", list, "plan")
    steps = []
    for i, s in enumerate(raw_steps):
        where = f"steps[{i}]"
        index = _require(s, "index", int, where)
        if index != i + 1:
            raise MalformedPlanDocument(
                f"{where}: index {index} breaks 1-based contiguity"
            )
        inputs = tuple(
            _parse_key(k, f"{where}.inputs[{j}]")
            for j, k in enumerate(_require(s, "inputs", list, where))
        )
        steps.append(PlanStep(
            index=index,
            capability=_require(s, "capability", str, where),
            objective=_require(s, "objective", str, where),
            inputs=inputs,
            output=_parse_key(_require(s, "output", dict, where), f"{where}.output"),
            success_criteria=_require(s, "success_criteria", str, where),
        ))
    return ExecutionPlan(
        plan_id=plan_id, task_hash=task_hash, steps=tuple(steps),
        created_at=created_at, approved=approved, revision=revision,
    )


def validate_plan(
    plan: ExecutionPlan,
    active: ActiveCapabilitySet,
    registry: CapabilityRegistry,
    inventory: List[dict],
) -> List[PlanDefect]:
    """Pure check of every plan invariant; returns all defects found."""
    defects: List[PlanDefect] = []
    preexisting = {ContextKey.of(e["type"], e["key"]) for e in inventory}
    produced_at: Dict[ContextKey, int] = {}

    for step in plan.steps:
        if step.output in produced_at:
            defects.append(PlanDefect(
                "output_collision",
                f"output {step.output} already produced by step "
                f"{produced_at[step.output]}",
                step.index,
            ))
        else:
            produced_at[step.output] = step.index

    for step in plan.steps:
        cap = registry.get(step.capability)
        if cap is None:
            defects.append(PlanDefect(
                "unknown_capability", f"capability {step.capability!r} not registered",
                step.index,
            ))
        elif step.capability not in active.members:
            defects.append(PlanDefect(
                "inactive_capability",
                f"capability {step.capability!r} was not classified relevant",
                step.index,
            ))

        for key in step.inputs:
            origin = produced_at.get(key)
            if origin is not None and origin >= step.index and key not in preexisting:
                defects.append(PlanDefect(
                    "cycle",
                    f"input {key} produced by step {origin}, not before step "
                    f"{step.index}",
                    step.index,
                ))
            elif origin is None and key not in preexisting:
                defects.append(PlanDefect(
                    "missing_input",
                    f"input {key} neither produced earlier nor in inventory",
                    step.index,
                ))
            if cap is not None:
                allowed = set(cap.input_types) | set(cap.optional_inputs)
                if key.context_type not in allowed:
                    defects.append(PlanDefect(
                        "type_mismatch",
                        f"capability {cap.name!r} does not accept input type "
                        f"{key.context_type}",
                        step.index,
                    ))
        if cap is not None and step.output.context_type != cap.output_type:
            defects.append(PlanDefect(
                "type_mismatch",
                f"capability {cap.name!r} outputs {cap.output_type}, step "
                f"declares {step.output.context_type}",
                step.index,
            ))

    if plan.steps:
        last = plan.steps[-1]
        cap = registry.get(last.capability)
        if cap is not None and not cap.is_responder():
            defects.append(PlanDefect(
                "type_mismatch",
                "final step must produce the user-facing response "
                f"(output type {last.output.context_type}, expected FINAL_RESPONSE)",
                last.index,
            ))
    return defects


def plan_identifier(task_hash: str) -> str:
    # Deterministic so demo runs are byte-reproducible.
    return f"plan-{task_hash[:12]}"


def build_plan_from_steps(raw_steps: List[dict], task_hash: str, clock: Clock,
                          revision: int = 0) -> ExecutionPlan:
    doc = {
        "plan_id": plan_identifier(task_hash),
        "task_hash": task_hash,
        "revision": revision,
        "approved": False,
        "created_at": clock.now_text(),
        "steps": raw_steps,
    }
    return deserialize_plan(json.dumps(doc))


def generate_plan(
    gateway: Gateway,
    task: ExtractedTask,
    material: str,
    inventory: List[dict],
    active: ActiveCapabilitySet,
    registry: CapabilityRegistry,
    clock: Clock,
    revision: int = 0,
    failure_detail: str = "",
) -> ExecutionPlan:
    """One structured gateway call, then full validation. Planning never
    invokes a capability provider. On replan, `failure_detail` carries what
    went wrong with the previous attempt."""
    if not material:
        raise ValueError("planner material must be non-empty")
    inv_lines = [
        f"- {e['type']}/{e['key']} (from {e['provenance']})" for e in inventory
    ] or ["(empty)"]
    user = (
        f"Task: {task.statement}\n"
        + "".join(f"Constraint: {c}\n" for c in task.constraints)
        + f"\nAvailable context:\n" + "\n".join(inv_lines)
        + f"\n\nCapabilities:\n{material}\n"
    )
    if failure_detail:
        user += f"\nThe previous plan failed: {failure_detail}\nProduce a corrected plan.\n"
    completion = gateway.complete_structured(
        PromptRequest(
            purpose="planning",
            messages=[
                ("system",
                 "Produce a complete execution plan: an ordered list of steps "
                 "with 1-based contiguous indices, each declaring its "
                 "capability, objective, input context keys, and one unique "
                 "output context key. Every input must come from an earlier "
                 "step's output or the available context. The final step must "
                 "produce the user-facing response."),
                ("user", user),
            ],
            output_schema=PLAN_SCHEMA,
        ),
        max_repair_attempts=1,
    )
    try:
        plan = build_plan_from_steps(
            completion.structured["steps"],
            active.task_hash, clock, revision=revision,
        )
    except MalformedPlanDocument as exc:
        raise InvalidPlan([PlanDefect("missing_input", f"unbuildable plan: {exc}")])
    defects = validate_plan(plan, active, registry, inventory)
    if defects:
        raise InvalidPlan(defects)
    return plan


def revise_plan(
    plan: ExecutionPlan,
    edited_document: str,
    active: ActiveCapabilitySet,
    registry: CapabilityRegistry,
    inventory: List[dict],
) -> ExecutionPlan:
    """Apply a user-edited plan document: re-validate, bump revision, clear
    approval. A no-op edit still bumps the revision (explicit user action)."""
    edited = deserialize_plan(edited_document)
    candidate = replace(
        edited,
        plan_id=plan.plan_id,
        task_hash=plan.task_hash,
        revision=plan.revision + 1,
        approved=False,
    )
    defects = validate_plan(candidate, active, registry, inventory)
    if defects:
        raise InvalidPlan(defects)
    return candidate
