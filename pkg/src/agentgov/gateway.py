"""Risk gate and human checkpoint lifecycle.

Every planned agent action passes the gate: proceed silently, proceed with a
console notification, stop at a human checkpoint, or be blocked outright.
Checkpoints block the instance (awaiting_human) until a human resolves them
or they time out, which suspends the instance rather than killing it.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

from .actors import Actor, Role
from .autonomy import AutonomyLevel, GateKind, KindPolicy, RiskClass, gate_matrix
from .clock import Clock
from .errors import (
    AlreadyResolved,
    DuplicateCheckpoint,
    IllegalState,
    IllegalTransition,
    InvalidConfig,
    Unauthorized,
    UnknownCheckpoint,
)
from .journal import JournalStore, RecordKind
from .lifecycle import EventKind, LifecycleEvent, LifecycleManager, LifecycleState

DIRECTIVES = ("proceed", "proceed_with_modification", "deny_and_replan", "abort")

DEFAULT_OPTIONS = [
    {"directive": "proceed", "label": "Approve and proceed"},
    {"directive": "proceed_with_modification", "label": "Approve with changes"},
    {"directive": "deny_and_replan", "label": "Deny; agent must re-plan"},
    {"directive": "abort", "label": "Abort the agent"},
]


@dataclass(frozen=True)
class ActionDescriptor:
    instance_id: str
    action_kind: str
    description: str
    risk_class: RiskClass
    confidence: float
    payload_preview: Dict[str, Any] = field(default_factory=dict)
    action_id: Optional[str] = None

    def validate(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidConfig([f"confidence {self.confidence} outside [0, 1]"])
        if not self.action_kind:
            raise InvalidConfig(["action_kind is required"])


@dataclass(frozen=True)
class GateDecision:
    kind: GateKind
    reason: str
    escalated_by_confidence: bool = False


_ESCALATION = {
    GateKind.AUTO_PROCEED: GateKind.AUTO_PROCEED_NOTIFY,
    GateKind.AUTO_PROCEED_NOTIFY: GateKind.REQUIRE_APPROVAL,
    GateKind.REQUIRE_APPROVAL: GateKind.REQUIRE_APPROVAL,
    GateKind.BLOCK: GateKind.BLOCK,
}


def evaluate_gate(
    action: ActionDescriptor,
    level: AutonomyLevel,
    policy: KindPolicy,
) -> GateDecision:
    """Pure gate decision for one planned action.

    Matrix lookup on (level, risk); low confidence escalates severity one
    step; unregistered action kinds are blocked when the kind restricts them.
    """
    if policy.allowed_action_kinds is not None and action.action_kind not in policy.allowed_action_kinds:
        return GateDecision(
            GateKind.BLOCK,
            f"action kind {action.action_kind!r} not registered for {policy.agent_kind!r}",
        )
    base = gate_matrix(level, action.risk_class)
    reason = f"matrix[{level.name.lower()}][{action.risk_class.value}] = {base.value}"
    if action.confidence < policy.confidence_floor:
        escalated = _ESCALATION[base]
        if escalated is not base:
            return GateDecision(
                escalated,
                reason
                + f"; confidence {action.confidence:.2f} < {policy.confidence_floor:.2f}"
                + " escalated one step",
                escalated_by_confidence=True,
            )
        reason += f"; confidence {action.confidence:.2f} below floor (already at approval)"
    return GateDecision(base, reason)


@dataclass(frozen=True)
class Resolution:
    directive: str
    note: str
    resolver: str
    resolved_at: int
    modification: Optional[Dict[str, Any]] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "directive": self.directive,
            "modification": self.modification,
            "note": self.note,
            "resolver": self.resolver,
            "resolved_at": self.resolved_at,
        }


@dataclass
class Checkpoint:
    checkpoint_id: str
    instance_id: str
    action: ActionDescriptor
    question: str
    options: List[Dict[str, str]]
    opened_at: int
    timeout_ms: int
    status: str = "pending"  # pending | resolved | expired
    resolution: Optional[Resolution] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "checkpoint_id": self.checkpoint_id,
            "instance_id": self.instance_id,
            "action_id": self.action.action_id,
            "action_kind": self.action.action_kind,
            "description": self.action.description,
            "risk_class": self.action.risk_class.value,
            "confidence": self.action.confidence,
            "payload_preview": dict(self.action.payload_preview),
            "question": self.question,
            "options": list(self.options),
            "opened_at": self.opened_at,
            "timeout_ms": self.timeout_ms,
            "status": self.status,
            "resolution": self.resolution.to_dict() if self.resolution else None,
        }


class HitlGateway:
    """Owns checkpoints. Status moves are compare-and-set under one lock;
    racers get the winning outcome back instead of a second mutation."""

    def __init__(
        self,
        store: JournalStore,
        lifecycle: LifecycleManager,
        policy,
        clock: Clock,
        id_factory,
        sentinel_actor: Actor,
        escalation_sink: Optional[Callable[[Dict[str, Any]], None]] = None,
    ):
        self._store = store
        self._lifecycle = lifecycle
        self._policy = policy
        self._clock = clock
        self._ids = id_factory
        self._sentinel = sentinel_actor
        self._escalate = escalation_sink or (lambda notice: None)
        self._checkpoints: Dict[str, Checkpoint] = {}
        self._pending_by_instance: Dict[str, str] = {}
        self._lock = threading.RLock()

    # -- queries --

    def get(self, checkpoint_id: str) -> Checkpoint:
        with self._lock:
            cp = self._checkpoints.get(checkpoint_id)
        if cp is None:
            raise UnknownCheckpoint(f"unknown checkpoint {checkpoint_id!r}")
        return cp

    def list(self, status: Optional[str] = None, instance_id: Optional[str] = None) -> List[Checkpoint]:
        with self._lock:
            pool = list(self._checkpoints.values())
        out = [
            cp
            for cp in pool
            if (status is None or cp.status == status)
            and (instance_id is None or cp.instance_id == instance_id)
        ]
        out.sort(key=lambda c: (c.opened_at, c.checkpoint_id))
        return out

    def pending_for_instance(self, instance_id: str) -> Optional[Checkpoint]:
        with self._lock:
            cp_id = self._pending_by_instance.get(instance_id)
            return self._checkpoints.get(cp_id) if cp_id else None

    # -- open --

    def open_checkpoint(
        self,
        action: ActionDescriptor,
        gate: GateDecision,
        agent: Actor,
        question: Optional[str] = None,
        timeout_ms: Optional[int] = None,
    ) -> Checkpoint:
        if gate.kind is not GateKind.REQUIRE_APPROVAL:
            raise IllegalState("checkpoints only open for require_approval decisions")
        instance = self._lifecycle.get(action.instance_id)
        if instance.state is not LifecycleState.ACTIVE:
            if instance.state is LifecycleState.AWAITING_HUMAN:
                raise DuplicateCheckpoint(
                    f"instance {instance.instance_id} already awaiting a human"
                )
            raise IllegalState(
                f"cannot open checkpoint while instance is {instance.state.value}"
            )
        kind_policy_timeout = timeout_ms
        if kind_policy_timeout is None:
            kind_policy_timeout = self._default_timeout(instance.config.agent_kind)

        with self._lock:
            if action.instance_id in self._pending_by_instance:
                raise DuplicateCheckpoint(
                    f"instance {action.instance_id} already has a pending checkpoint"
                )
            try:
                # Moves the instance to awaiting_human.
                self._lifecycle.apply_event(
                    action.instance_id,
                    LifecycleEvent(EventKind.OPEN_CHECKPOINT, agent, gate.reason),
                )
            except IllegalTransition as exc:
                # A suspend/abort won the race after the caller's state check.
                raise IllegalState(
                    f"instance {action.instance_id} left the active state "
                    f"while opening a checkpoint"
                ) from exc
            cp = Checkpoint(
                checkpoint_id=self._ids.new("cp"),
                instance_id=action.instance_id,
                action=action,
                question=question
                or f"Approve {action.action_kind} ({action.risk_class.value} risk)?",
                options=list(DEFAULT_OPTIONS),
                opened_at=self._clock.now_ms(),
                timeout_ms=kind_policy_timeout,
            )
            self._checkpoints[cp.checkpoint_id] = cp
            self._pending_by_instance[action.instance_id] = cp.checkpoint_id
            self._store.append(
                action.instance_id,
                RecordKind.HITL,
                agent.actor_id,
                {
                    "phase": "open",
                    "checkpoint_id": cp.checkpoint_id,
                    "action_id": action.action_id,
                    "question": cp.question,
                    "options": cp.options,
                    "risk_class": action.risk_class.value,
                    "confidence": action.confidence,
                    "timeout_ms": cp.timeout_ms,
                    "opened_at": cp.opened_at,
                },
            )
        return cp

    def _default_timeout(self, agent_kind: str) -> int:
        if self._policy.is_registered(agent_kind):
            return self._policy.kind_policy(agent_kind).checkpoint_timeout_ms
        return 15 * 60 * 1000

    # -- resolve --

    def resolve_checkpoint(
        self,
        checkpoint_id: str,
        directive: str,
        resolver: Actor,
        note: str = "",
        modification: Optional[Dict[str, Any]] = None,
    ) -> Tuple[Checkpoint, LifecycleState]:
        if directive not in DIRECTIVES:
            raise InvalidConfig([f"unknown directive {directive!r}"])
        if resolver.role not in (Role.OPERATOR, Role.APPROVER, Role.ADMIN):
            raise Unauthorized("checkpoint resolution requires a human reviewer role")
        if directive == "abort" and resolver.role is Role.APPROVER:
            # Abort authority stays with operator/admin; approvers may only
            # settle the consultation itself.
            raise Unauthorized("approvers may not abort via checkpoint resolution")
        if modification is not None and directive != "proceed_with_modification":
            raise InvalidConfig(["modification only allowed with proceed_with_modification"])

        with self._lock:
            cp = self.get(checkpoint_id)
            if cp.status == "resolved":
                assert cp.resolution is not None
                if (
                    cp.resolution.resolver == resolver.actor_id
                    and cp.resolution.directive == directive
                ):
                    # Idempotent retry of the same decision.
                    return cp, self._lifecycle.get(cp.instance_id).state
                raise AlreadyResolved(
                    f"checkpoint {checkpoint_id} already resolved "
                    f"({cp.resolution.directive} by {cp.resolution.resolver})",
                    status="resolved",
                    resolution=cp.resolution.to_dict(),
                )
            if cp.status == "expired":
                raise AlreadyResolved(
                    f"checkpoint {checkpoint_id} expired before resolution",
                    status="expired",
                )

            resolution = Resolution(
                directive=directive,
                note=note,
                resolver=resolver.actor_id,
                resolved_at=self._clock.now_ms(),
                modification=modification if directive == "proceed_with_modification" else None,
            )
            if directive in ("proceed", "proceed_with_modification"):
                event = LifecycleEvent(EventKind.RESOLVE_PROCEED, resolver, note)
            elif directive == "deny_and_replan":
                event = LifecycleEvent(EventKind.RESOLVE_DENY, resolver, note)
            else:
                event = LifecycleEvent(
                    EventKind.ABORT, resolver, note or "aborted at checkpoint"
                )
            new_state, _ = self._lifecycle.apply_event(cp.instance_id, event)

            cp.status = "resolved"
            cp.resolution = resolution
            self._pending_by_instance.pop(cp.instance_id, None)
            self._store.append(
                cp.instance_id,
                RecordKind.HITL,
                resolver.actor_id,
                {
                    "phase": "resolve",
                    "checkpoint_id": cp.checkpoint_id,
                    "action_id": cp.action.action_id,
                    "resolution": resolution.to_dict(),
                    "opened_at": cp.opened_at,
                },
            )
        return cp, new_state

    # -- expiry --

    def expire_due_checkpoints(self, now_ms: int) -> List[Tuple[str, Dict[str, Any]]]:
        """Expire every pending checkpoint past its deadline; suspend the
        blocked instance and emit an escalation notice per expiry."""
        expired: List[Tuple[str, Dict[str, Any]]] = []
        with self._lock:
            due = [
                cp
                for cp in self._checkpoints.values()
                if cp.status == "pending" and cp.opened_at + cp.timeout_ms <= now_ms
            ]
            for cp in due:
                expired.append((cp.checkpoint_id, self._expire(cp, "timeout")))
        return expired

    def void_pending_for_instance(self, instance_id: str, reason: str) -> Optional[str]:
        """Expire the pending checkpoint of an instance suspended or aborted
        from outside the consultation (sentinel fallback, direct abort)."""
        with self._lock:
            cp = self.pending_for_instance(instance_id)
            if cp is None:
                return None
            self._expire(cp, reason, apply_timeout_event=False)
            return cp.checkpoint_id

    def apply_with_void(self, instance_id: str, event: "LifecycleEvent"):
        """Suspend or abort an instance and void its pending checkpoint as one
        atomic move with respect to checkpoint resolution: a racing resolver
        either wins first or sees the checkpoint already expired, never a
        pending checkpoint on a dead instance."""
        with self._lock:
            new_state, record = self._lifecycle.apply_event(instance_id, event)
            self.void_pending_for_instance(instance_id, f"instance {new_state.value}")
            return new_state, record

    def _expire(self, cp: Checkpoint, reason: str, apply_timeout_event: bool = True) -> Dict[str, Any]:
        cp.status = "expired"
        self._pending_by_instance.pop(cp.instance_id, None)
        instance = self._lifecycle.get(cp.instance_id)
        if apply_timeout_event and instance.state is LifecycleState.AWAITING_HUMAN:
            self._lifecycle.apply_event(
                cp.instance_id,
                LifecycleEvent(
                    EventKind.CHECKPOINT_TIMEOUT,
                    self._sentinel,
                    f"checkpoint {cp.checkpoint_id} timed out",
                ),
            )
        expired_at = self._clock.now_ms()
        self._store.append(
            cp.instance_id,
            RecordKind.HITL,
            self._sentinel.actor_id,
            {
                "phase": "expire",
                "checkpoint_id": cp.checkpoint_id,
                "action_id": cp.action.action_id,
                "reason": reason,
                "expired_at": expired_at,
                "opened_at": cp.opened_at,
            },
        )
        notice = {
            "type": "checkpoint_expired",
            "checkpoint_id": cp.checkpoint_id,
            "instance_id": cp.instance_id,
            "reason": reason,
            "expired_at": expired_at,
        }
        self._escalate(notice)
        return notice
