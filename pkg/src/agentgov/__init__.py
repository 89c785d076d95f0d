"""agentgov: a governed runtime for AI-agent work sessions.

Agent sessions run under a lifecycle state machine, write to tamper-evident
hash-chained journals, stop at risk-gated human checkpoints, and earn
autonomy increases only through journal evidence plus explicit human
approval. A sentinel watches journal-derived metrics and suspends misbehaving
agent kinds before harm spreads.
"""

from .actors import Actor, ActorRegistry, Role
from .autonomy import (
    AutonomyLevel,
    AutonomyPolicy,
    EligibilityReport,
    GateKind,
    KindPolicy,
    PromotionCriteria,
    RiskClass,
    gate_matrix,
    select_spot_checks,
)
from .clock import ManualClock, SystemClock
from .gateway import ActionDescriptor, Checkpoint, GateDecision, evaluate_gate
from .journal import (
    JournalRecord,
    JournalStore,
    RecordKind,
    canonical_json,
    replay_records,
    verify_export_lines,
    verify_records,
)
from .kernel import GovernanceKernel
from .lifecycle import (
    AgentConfig,
    AgentInstance,
    EventKind,
    LifecycleEvent,
    LifecycleState,
    validate_transition,
)
from .sentinel import AnomalySignal, Metric, Sentinel, SentinelConfig

__version__ = "0.1.0"

__all__ = [
    "Actor",
    "ActorRegistry",
    "Role",
    "AutonomyLevel",
    "AutonomyPolicy",
    "EligibilityReport",
    "GateKind",
    "KindPolicy",
    "PromotionCriteria",
    "RiskClass",
    "gate_matrix",
    "select_spot_checks",
    "ManualClock",
    "SystemClock",
    "ActionDescriptor",
    "Checkpoint",
    "GateDecision",
    "evaluate_gate",
    "JournalRecord",
    "JournalStore",
    "RecordKind",
    "canonical_json",
    "replay_records",
    "verify_export_lines",
    "verify_records",
    "GovernanceKernel",
    "AgentConfig",
    "AgentInstance",
    "EventKind",
    "LifecycleEvent",
    "LifecycleState",
    "validate_transition",
    "AnomalySignal",
    "Metric",
    "Sentinel",
    "SentinelConfig",
    "__version__",
]
