"""abflow: a plan-first agent orchestration engine.

Turns conversations into structured tasks, selects relevant capabilities per
turn, compiles a complete dependency-explicit execution plan for optional
human approval, and executes it with durable checkpointing, bounded recovery,
and artifact capture.
"""

from .canonical import Clock, FixedClock
from .capabilities import (
    ActiveCapabilitySet,
    Capability,
    CapabilityRegistry,
    ClassificationResult,
    assemble_planner_material,
    classify_all,
    classify_one,
    load_registry_manifest,
)
from .context import (
    ContextKey,
    ContextObject,
    ContextService,
    ContextStore,
    ConversationHistory,
    ExtractedTask,
)
from .engine import Engine
from .executor import (
    Budgets,
    CheckpointStore,
    EventLog,
    Executor,
    RecoveryAction,
    SessionState,
    classify_error,
)
from .gateway import Completion, Gateway, HttpBackend, PromptRequest, ScriptedBackend
from .interrupts import ApprovalDecision, AuditLog
from .planner import (
    ExecutionPlan,
    PlanDefect,
    PlanStep,
    deserialize_plan,
    generate_plan,
    revise_plan,
    serialize_plan,
    validate_plan,
)
from .artifacts import Artifact, ArtifactStore, export_bundle
from .scriptexec import ScriptJob, ScriptResult, ScriptRunner

__version__ = "0.1.0"
