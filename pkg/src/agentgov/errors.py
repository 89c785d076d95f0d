"""Exception hierarchy shared by every kernel module.

All recoverable failures raised by the runtime derive from
:class:`GovernanceError` so callers (API layer, harness) can map them to
wire responses or exit codes in one place.
"""

from __future__ import annotations

from typing import Any, Optional


class GovernanceError(Exception):
    """Base class for every error the runtime raises on purpose."""


class Unauthorized(GovernanceError):
    """Actor is unknown, token invalid, or role lacks the required right."""


class UnknownAgentKind(GovernanceError):
    pass


class UnknownInstance(GovernanceError):
    pass


class UnknownCheckpoint(GovernanceError):
    pass


class UnknownArtifact(GovernanceError):
    pass


class UnknownChart(GovernanceError):
    pass


class InvalidConfig(GovernanceError):
    """Agent configuration violates a creation invariant.

    ``violations`` lists every failed invariant, not just the first.
    """

    def __init__(self, violations: list[str]):
        super().__init__("invalid config: " + "; ".join(violations))
        self.violations = violations


class IllegalTransition(GovernanceError):
    pass


class IllegalState(GovernanceError):
    pass


class DuplicateCheckpoint(GovernanceError):
    pass


class AlreadyResolved(GovernanceError):
    """Checkpoint already settled; carries the winning outcome."""

    def __init__(self, message: str, status: str, resolution: Optional[Any] = None):
        super().__init__(message)
        self.status = status
        self.resolution = resolution


class SchemaViolation(GovernanceError):
    pass


class StorageFailure(GovernanceError):
    """Append not acknowledged; caller must retry with its dedup key."""


class CorruptChain(GovernanceError):
    def __init__(self, instance_id: str, first_bad_seq: int):
        super().__init__(f"journal chain for {instance_id!r} invalid at seq {first_bad_seq}")
        self.instance_id = instance_id
        self.first_bad_seq = first_bad_seq


class MalformedFilter(GovernanceError):
    pass


class MalformedRange(GovernanceError):
    pass


class NotEligible(GovernanceError):
    def __init__(self, message: str, report: Optional[Any] = None):
        super().__init__(message)
        self.report = report


class SkippedLevel(GovernanceError):
    pass


class InsufficientBaseline(GovernanceError):
    pass


class AlreadyHandled(GovernanceError):
    pass


class UnknownSignal(GovernanceError):
    pass


class KindQuarantined(GovernanceError):
    """Launch refused while the agent kind has an unresolved anomaly signal."""


class ScenarioStuck(GovernanceError):
    pass


class InapplicableFault(GovernanceError):
    pass


class ConfigError(GovernanceError):
    """Service configuration file is missing or malformed."""
