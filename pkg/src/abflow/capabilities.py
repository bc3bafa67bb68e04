"""Capability registry and per-capability relevance classification.

Each registered capability carries its own few-shot examples; relevance is
decided one capability at a time with a prompt that mentions no other
capability, and only the guides of relevant capabilities reach the planner.
That keeps planner prompt size a function of the active set, not of the
registry size.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from .canonical import digest_value
from .context import ExtractedTask, normalize_identifier
from .errors import DuplicateName, InvalidCapability
from .gateway import Gateway, PromptRequest

CLASSIFY_SCHEMA = {"relevant": "integer", "rationale": "text"}

# Capabilities whose output type equals this produce the user-facing answer;
# a valid plan must end with one of them.
FINAL_RESPONSE_TYPE = "FINAL_RESPONSE"


@dataclass
class Capability:
    name: str
    summary: str
    planner_guide: str
    classifier_examples: List[Tuple[str, bool, str]]  # (task text, relevant, rationale)
    input_types: List[str]
    output_type: str
    requires_approval: bool = False
    provider: str = ""  # executable hook identifier, resolved by the engine
    optional_inputs: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.input_types = [normalize_identifier(t) for t in self.input_types]
        self.optional_inputs = [normalize_identifier(t) for t in self.optional_inputs]
        self.output_type = normalize_identifier(self.output_type)

    def is_responder(self) -> bool:
        return self.output_type == FINAL_RESPONSE_TYPE


@dataclass
class ClassificationResult:
    capability: str
    relevant: bool
    rationale: str

    def as_dict(self) -> dict:
        return {"capability": self.capability, "relevant": self.relevant,
                "rationale": self.rationale}


@dataclass
class ActiveCapabilitySet:
    task_hash: str
    members: List[str]
    results: List[ClassificationResult]

    def as_dict(self) -> dict:
        return {
            "task_hash": self.task_hash,
            "members": list(self.members),
            "results": [r.as_dict() for r in self.results],
        }


def task_digest(task: ExtractedTask) -> str:
    return digest_value(task.as_dict())


class CapabilityRegistry:
    def __init__(self):
        self._caps: Dict[str, Capability] = {}

    def register(self, capability: Capability) -> None:
        if capability.name in self._caps:
            raise DuplicateName(capability.name)
        positives = sum(1 for _, rel, _ in capability.classifier_examples if rel)
        negatives = sum(1 for _, rel, _ in capability.classifier_examples if not rel)
        if positives < 2 or negatives < 2:
            raise InvalidCapability(
                f"{capability.name}: needs >=2 positive and >=2 negative "
                f"classifier examples (got {positives}/{negatives})"
            )
        if not capability.output_type:
            raise InvalidCapability(f"{capability.name}: output_type required")
        self._caps[capability.name] = capability

    def get(self, name: str) -> Optional[Capability]:
        return self._caps.get(name)

    def names(self) -> List[str]:
        return sorted(self._caps)

    def all(self) -> List[Capability]:
        return [self._caps[n] for n in sorted(self._caps)]

    def __len__(self) -> int:
        return len(self._caps)

    def __contains__(self, name: str) -> bool:
        return name in self._caps


def _task_rendering(task: ExtractedTask) -> str:
    lines = [f"Task: {task.statement}"]
    for c in task.constraints:
        lines.append(f"Constraint: {c}")
    return "\n".join(lines)


def classify_one(gateway: Gateway, task: ExtractedTask,
                 capability: Capability) -> ClassificationResult:
    """One independent gateway call; the prompt names only this capability."""
    examples = []
    for text, relevant, rationale in capability.classifier_examples:
        examples.append(
            f"Task: {text}\nRelevant: {1 if relevant else 0} ({rationale})"
        )
    completion = gateway.complete_structured(
        PromptRequest(
            purpose="classification",
            messages=[
                ("system",
                 "Decide whether one tool is relevant to a task. Answer with "
                 "relevant 1 or 0 plus a one-line rationale."),
                ("user",
                 f"Tool: {capability.name}\n{capability.summary}\n\n"
                 f"Examples:\n" + "\n\n".join(examples) + "\n\n"
                 f"{_task_rendering(task)}\n\n"
                 f"Is the tool {capability.name} relevant to this task?"),
            ],
            output_schema=CLASSIFY_SCHEMA,
        ),
        max_repair_attempts=1,
    )
    doc = completion.structured
    return ClassificationResult(
        capability=capability.name,
        relevant=bool(doc["relevant"]),
        rationale=doc["rationale"],
    )


def classify_all(gateway: Gateway, task: ExtractedTask,
                 registry: CapabilityRegistry) -> ActiveCapabilitySet:
    """One result per capability, merged in name order so the outcome is
    independent of registry iteration order."""
    if len(registry) == 0:
        raise InvalidCapability("registry is empty")
    results = [classify_one(gateway, task, cap) for cap in registry.all()]
    results.sort(key=lambda r: r.capability)
    members = [r.capability for r in results if r.relevant]
    return ActiveCapabilitySet(
        task_hash=task_digest(task), members=members, results=results
    )


def assemble_planner_material(active: ActiveCapabilitySet,
                              registry: CapabilityRegistry) -> str:
    """Planner-facing docs for the active members only; byte-identical however
    many irrelevant capabilities the registry holds."""
    if not active.members:
        raise InvalidCapability("active capability set is empty")
    sections = []
    for name in sorted(active.members):
        cap = registry.get(name)
        if cap is None:
            raise InvalidCapability(f"active member {name!r} not in registry")
        io_line = (
            f"inputs: {', '.join(cap.input_types) if cap.input_types else '(none)'}"
            f" -> output: {cap.output_type}"
        )
        approval = "requires human approval" if cap.requires_approval else ""
        sections.append(
            "\n".join(x for x in
                      [f"## {cap.name}", cap.summary, io_line, approval,
                       cap.planner_guide] if x)
        )
    return "\n\n".join(sections)


def load_registry_manifest(path: str) -> CapabilityRegistry:
    """Registry manifest: a JSON list of capability declarations."""
    with open(path, "r", encoding="utf-8") as fh:
        entries = json.load(fh)
    registry = CapabilityRegistry()
    for doc in entries:
        registry.register(Capability(
            name=doc["name"],
            summary=doc["summary"],
            planner_guide=doc["planner_guide"],
            classifier_examples=[
                (e["task"], bool(e["relevant"]), e.get("rationale", ""))
                for e in doc["classifier_examples"]
            ],
            input_types=doc.get("input_types", []),
            output_type=doc["output_type"],
            requires_approval=bool(doc.get("requires_approval", False)),
            provider=doc.get("provider", doc["name"]),
            optional_inputs=doc.get("optional_inputs", []),
        ))
    return registry
