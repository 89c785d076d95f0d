"""Agent instances and the normative lifecycle state machine.

Six states, nine event kinds. ``aborted`` and ``finished`` are terminal.
``validate_transition`` is a pure total function over the transition table;
``apply_event`` is the only way an instance's state changes and every applied
event lands in the journal as a state-transition record.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, List, Optional

from .actors import Actor, Role
from .autonomy import AutonomyLevel, AutonomyPolicy, RiskClass
from .clock import Clock
from .errors import (
    IllegalTransition,
    InvalidConfig,
    Unauthorized,
    UnknownInstance,
)
from .journal import JournalStore, RecordKind


class LifecycleState(str, Enum):
    INITIATED = "initiated"
    ACTIVE = "active"
    AWAITING_HUMAN = "awaiting_human"
    SUSPENDED = "suspended"
    ABORTED = "aborted"
    FINISHED = "finished"


class EventKind(str, Enum):
    LAUNCH = "launch"
    OPEN_CHECKPOINT = "open_checkpoint"
    RESOLVE_PROCEED = "resolve_proceed"
    RESOLVE_DENY = "resolve_deny"
    CHECKPOINT_TIMEOUT = "checkpoint_timeout"
    SUSPEND = "suspend"
    RESUME = "resume"
    ABORT = "abort"
    FINISH = "finish"


TERMINAL_STATES = frozenset({LifecycleState.ABORTED, LifecycleState.FINISHED})

# The normative transition table; anything absent is denied.
TRANSITIONS: Dict[LifecycleState, Dict[EventKind, LifecycleState]] = {
    LifecycleState.INITIATED: {
        EventKind.LAUNCH: LifecycleState.ACTIVE,
        EventKind.ABORT: LifecycleState.ABORTED,
    },
    LifecycleState.ACTIVE: {
        EventKind.OPEN_CHECKPOINT: LifecycleState.AWAITING_HUMAN,
        EventKind.SUSPEND: LifecycleState.SUSPENDED,
        EventKind.ABORT: LifecycleState.ABORTED,
        EventKind.FINISH: LifecycleState.FINISHED,
    },
    LifecycleState.AWAITING_HUMAN: {
        EventKind.RESOLVE_PROCEED: LifecycleState.ACTIVE,
        EventKind.RESOLVE_DENY: LifecycleState.ACTIVE,
        EventKind.CHECKPOINT_TIMEOUT: LifecycleState.SUSPENDED,
        EventKind.ABORT: LifecycleState.ABORTED,
        EventKind.SUSPEND: LifecycleState.SUSPENDED,
    },
    LifecycleState.SUSPENDED: {
        EventKind.RESUME: LifecycleState.ACTIVE,
        EventKind.ABORT: LifecycleState.ABORTED,
    },
    LifecycleState.ABORTED: {},
    LifecycleState.FINISHED: {},
}

# Which roles may raise which event. Automated actors may launch, consult,
# and finish; destructive or trust-restoring moves are reserved for humans,
# with the sentinel allowed to contain (suspend/abort/timeout) but never to
# resume.
EVENT_AUTHORITY: Dict[EventKind, FrozenSet[Role]] = {
    EventKind.LAUNCH: frozenset({Role.AGENT, Role.OPERATOR, Role.ADMIN}),
    EventKind.OPEN_CHECKPOINT: frozenset({Role.AGENT}),
    EventKind.RESOLVE_PROCEED: frozenset({Role.OPERATOR, Role.APPROVER, Role.ADMIN}),
    EventKind.RESOLVE_DENY: frozenset({Role.OPERATOR, Role.APPROVER, Role.ADMIN}),
    EventKind.CHECKPOINT_TIMEOUT: frozenset({Role.SENTINEL}),
    EventKind.SUSPEND: frozenset({Role.OPERATOR, Role.ADMIN, Role.SENTINEL}),
    EventKind.RESUME: frozenset({Role.OPERATOR, Role.ADMIN}),
    EventKind.ABORT: frozenset({Role.OPERATOR, Role.ADMIN, Role.SENTINEL}),
    EventKind.FINISH: frozenset({Role.AGENT}),
}

_REASON_REQUIRED = frozenset({EventKind.ABORT, EventKind.SUSPEND, EventKind.FINISH})


@dataclass(frozen=True)
class TransitionCheck:
    allowed: bool
    target: Optional[LifecycleState] = None
    reason: Optional[str] = None


def validate_transition(state: LifecycleState, event_kind: EventKind) -> TransitionCheck:
    """Pure, total check of (state, event) against the normative table."""
    if state in TERMINAL_STATES:
        return TransitionCheck(False, reason="terminal state")
    target = TRANSITIONS[state].get(event_kind)
    if target is None:
        return TransitionCheck(
            False, reason=f"event {event_kind.value!r} not permitted in state {state.value!r}"
        )
    return TransitionCheck(True, target=target)


@dataclass(frozen=True)
class LifecycleEvent:
    kind: EventKind
    actor: Actor
    reason: str = ""


@dataclass(frozen=True)
class AgentConfig:
    """What a human pins down before an agent session may exist."""
    agent_kind: str
    scope: str
    objectives: List[str]
    owner: str
    context: Dict[str, str] = field(default_factory=dict)
    data_sources: List[str] = field(default_factory=list)
    risk_class_default: RiskClass = RiskClass.MEDIUM

    def violations(self) -> List[str]:
        out = []
        if not self.scope.strip():
            out.append("scope must be non-empty")
        if not self.objectives or not all(o.strip() for o in self.objectives):
            out.append("objectives must be a non-empty list of non-empty strings")
        if not self.owner:
            out.append("owner is required")
        return out


@dataclass
class AgentInstance:
    instance_id: str
    config: AgentConfig
    state: LifecycleState
    autonomy_level: AutonomyLevel  # snapshot at creation; kind-level changes do not retrofit
    created_at: int
    updated_at: int
    output_summary: Optional[str] = None
    agent_actor: Optional[str] = None  # automated identity bound to this session

    def to_dict(self) -> Dict:
        return {
            "instance_id": self.instance_id,
            "agent_kind": self.config.agent_kind,
            "scope": self.config.scope,
            "objectives": list(self.config.objectives),
            "context": dict(self.config.context),
            "data_sources": list(self.config.data_sources),
            "risk_class_default": self.config.risk_class_default.value,
            "owner": self.config.owner,
            "agent_actor": self.agent_actor,
            "state": self.state.value,
            "autonomy_level": int(self.autonomy_level),
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "output_summary": self.output_summary,
        }


class LifecycleManager:
    """Owns instances; serializes events per instance (one writer each)."""

    def __init__(self, store: JournalStore, policy: AutonomyPolicy, clock: Clock, id_factory):
        self._store = store
        self._policy = policy
        self._clock = clock
        self._ids = id_factory
        self._instances: Dict[str, AgentInstance] = {}
        self._locks: Dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def create_instance(
        self,
        config: AgentConfig,
        actor: Actor,
        agent_actor: Optional[str] = None,
    ) -> AgentInstance:
        if actor.role not in (Role.OPERATOR, Role.ADMIN):
            raise Unauthorized("only operators or admins may create instances")
        violations = config.violations()
        if violations:
            raise InvalidConfig(violations)
        level = self._policy.level(config.agent_kind)  # raises UnknownAgentKind

        now = self._clock.now_ms()
        instance = AgentInstance(
            instance_id=self._ids.new("agent"),
            config=config,
            state=LifecycleState.INITIATED,
            autonomy_level=level,
            created_at=now,
            updated_at=now,
            agent_actor=agent_actor,
        )
        with self._registry_lock:
            self._instances[instance.instance_id] = instance
            self._locks[instance.instance_id] = threading.Lock()
        self._store.create_stream(instance.instance_id)
        self._store.append(
            instance.instance_id,
            RecordKind.STATE_TRANSITION,
            actor.actor_id,
            {
                "from_state": None,
                "to_state": LifecycleState.INITIATED.value,
                "event": "create",
                "reason": "",
                "agent_kind": config.agent_kind,
                "autonomy_level": int(level),
                "owner": config.owner,
            },
        )
        return instance

    def get(self, instance_id: str) -> AgentInstance:
        with self._registry_lock:
            instance = self._instances.get(instance_id)
        if instance is None:
            raise UnknownInstance(f"unknown instance {instance_id!r}")
        return instance

    def instances(
        self,
        query: Optional[str] = None,
        agent_kind: Optional[str] = None,
        state: Optional[LifecycleState] = None,
    ) -> List[AgentInstance]:
        with self._registry_lock:
            pool = list(self._instances.values())
        out = []
        for inst in pool:
            if agent_kind is not None and inst.config.agent_kind != agent_kind:
                continue
            if state is not None and inst.state is not state:
                continue
            if query:
                hay = " ".join(
                    [inst.instance_id, inst.config.agent_kind, inst.config.scope]
                ).lower()
                if query.lower() not in hay:
                    continue
            out.append(inst)
        out.sort(key=lambda i: i.instance_id)
        return out

    def live_instances_of_kind(self, agent_kind: str) -> List[AgentInstance]:
        return [
            inst
            for inst in self.instances(agent_kind=agent_kind)
            if inst.state in (LifecycleState.ACTIVE, LifecycleState.AWAITING_HUMAN)
        ]

    def apply_event(self, instance_id: str, event: LifecycleEvent):
        """Validate, authorize, mutate, journal; atomic per instance.

        Returns (new state, the appended state-transition record).
        """
        if event.kind in _REASON_REQUIRED and not event.reason.strip():
            raise InvalidConfig([f"{event.kind.value} requires a non-empty reason"])
        if event.actor.role not in EVENT_AUTHORITY[event.kind]:
            raise Unauthorized(
                f"role {event.actor.role.value!r} may not raise {event.kind.value!r}"
            )
        instance = self.get(instance_id)
        with self._locks[instance_id]:
            check = validate_transition(instance.state, event.kind)
            if not check.allowed:
                raise IllegalTransition(
                    f"{event.kind.value} from {instance.state.value}: {check.reason}"
                )
            from_state = instance.state
            instance.state = check.target
            instance.updated_at = self._clock.now_ms()
            if event.kind is EventKind.FINISH:
                instance.output_summary = event.reason
            record = self._store.append(
                instance_id,
                RecordKind.STATE_TRANSITION,
                event.actor.actor_id,
                {
                    "from_state": from_state.value,
                    "to_state": check.target.value,
                    "event": event.kind.value,
                    "reason": event.reason,
                },
            )
        return check.target, record
