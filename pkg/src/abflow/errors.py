"""Exception taxonomy shared across the engine.

Errors are grouped by which subsystem raises them; the executor's recovery
logic cares only about the coarse class (transient / contract / fatal), which
is derived in abflow.executor.classify_error.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine-raised errors."""


# --- context store -----------------------------------------------------------

class DuplicateKey(EngineError):
    """A context object with the same (type, instance) key already exists."""


class SchemaViolation(EngineError):
    """A payload does not conform to its declared schema."""


class NotFound(EngineError):
    """No context object stored under the requested key."""


class UnknownSession(EngineError):
    """The session id does not correspond to any known session."""


# --- LM gateway --------------------------------------------------------------

class BackendUnavailable(EngineError):
    """Transport-level failure talking to the model backend (transient)."""


class BackendRejected(EngineError):
    """The backend rejected the request outright (auth/quota; fatal)."""


class StructuredOutputFailure(EngineError):
    """No valid structured value obtained within the repair budget."""


class DuplicateFingerprint(EngineError):
    """A scripted fixture with the same fingerprint is already registered."""


# --- task extraction ---------------------------------------------------------

class EmptyTask(EngineError):
    """The conversation contains no actionable request.

    Surfaces as a clarification response upstream, not as a failure.
    """


# --- capability registry -----------------------------------------------------

class DuplicateName(EngineError):
    """A capability with this name is already registered."""


class InvalidCapability(EngineError):
    """Capability declaration violates registration rules."""


# --- planner -----------------------------------------------------------------

class InvalidPlan(EngineError):
    """A generated or edited plan failed validation.

    Carries the full defect list so recovery and the approval UI can show
    every problem at once.
    """

    def __init__(self, defects):
        self.defects = list(defects)
        detail = "; ".join(str(d) for d in self.defects)
        super().__init__(f"invalid plan: {detail}")


class MalformedPlanDocument(EngineError):
    """A plan document could not be parsed at all."""


# --- executor / providers ----------------------------------------------------

TRANSIENT = "transient"
PERMANENT = "permanent"
CONTRACT = "contract"


class ProviderError(EngineError):
    """A capability provider failed.

    kind is one of {transient, permanent, contract}; contract means the
    provider's output (or its preconditions) violated the declared schema.
    """

    def __init__(self, kind: str, message: str):
        assert kind in (TRANSIENT, PERMANENT, CONTRACT)
        self.kind = kind
        super().__init__(message)


class CorruptCheckpoint(EngineError):
    """Checkpoint content does not match its digest sidecar."""


# --- interrupts --------------------------------------------------------------

class InterruptAlreadyPending(EngineError):
    """A session may hold at most one unresolved interrupt."""


class UnknownInterrupt(EngineError):
    """No unresolved interrupt with that id."""


class InvalidEdit(EngineError):
    """An edit verdict produced a plan that failed re-validation."""

    def __init__(self, defects):
        self.defects = list(defects)
        super().__init__(f"invalid edit: {'; '.join(str(d) for d in defects)}")


# --- artifacts ---------------------------------------------------------------

class SessionNotTerminal(EngineError):
    """Bundles can only be exported from completed or aborted sessions."""


# --- script execution --------------------------------------------------------

class ScriptTimeout(EngineError):
    """The script exceeded its wall-clock limit."""


class ScriptCrash(EngineError):
    """The script exited with a nonzero status."""


class OutputSchemaViolation(EngineError):
    """A declared script output is missing or fails schema validation."""


# --- windfarm pack -----------------------------------------------------------

class EmptyRange(EngineError):
    """A data retrieval range spans zero hours."""


class UnparseableExpression(EngineError):
    """A relative time expression could not be resolved."""


class OracleMismatch(EngineError):
    """Script-computed analysis disagrees with the engine-side oracle."""
