"""The governance kernel: one object wiring journal, lifecycle, gate,
autonomy policy, sentinel, analytics, and the event stream.

Agents and humans (via the HTTP layer or the harness) only ever talk to the
methods here; module internals stay private to the kernel. Every mutating
call lands at least one journal record before it returns.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Set

from . import analytics
from .actors import Actor, ActorRegistry, Role
from .autonomy import (
    AutonomyLevel,
    AutonomyPolicy,
    EligibilityReport,
    GateKind,
    KindPolicy,
    PromotionCriteria,
    select_spot_checks,
)
from .clock import Clock, SystemClock
from .errors import (
    IllegalState,
    IllegalTransition,
    KindQuarantined,
    NotEligible,
    Unauthorized,
    UnknownInstance,
)
from .eventbus import EventBus, Subscription
from .gateway import ActionDescriptor, HitlGateway, evaluate_gate
from .ids import SequentialIdFactory
from .journal import JournalRecord, JournalStore, RecordKind, ReplayState, VerifyResult
from .lifecycle import (
    AgentConfig,
    AgentInstance,
    EventKind,
    LifecycleEvent,
    LifecycleManager,
    LifecycleState,
)
from .sentinel import AnomalySignal, Sentinel, SentinelConfig


@dataclass
class SpotCheckTask:
    task_id: str
    action_id: str
    instance_id: str
    agent_kind: str
    created_at: int
    status: str = "open"  # open | done

    def to_dict(self) -> Dict[str, Any]:
        return {
            "task_id": self.task_id,
            "action_id": self.action_id,
            "instance_id": self.instance_id,
            "agent_kind": self.agent_kind,
            "created_at": self.created_at,
            "status": self.status,
        }


@dataclass
class PendingAutonomyChange:
    change_id: str
    agent_kind: str
    to_level: AutonomyLevel
    requested_by: str
    note: str
    evidence: EligibilityReport
    created_at: int
    status: str = "pending"  # pending | approved | rejected

    def to_dict(self) -> Dict[str, Any]:
        return {
            "change_id": self.change_id,
            "agent_kind": self.agent_kind,
            "to_level": int(self.to_level),
            "requested_by": self.requested_by,
            "note": self.note,
            "evidence": self.evidence.to_dict(),
            "created_at": self.created_at,
            "status": self.status,
        }


class GovernanceKernel:
    def __init__(
        self,
        clock: Optional[Clock] = None,
        id_factory=None,
        sentinel_config: Optional[SentinelConfig] = None,
        journal_sink: Optional[str] = None,
        quarantine_on_anomaly: bool = True,
    ):
        self.clock = clock or SystemClock()
        self.ids = id_factory or SequentialIdFactory()
        self.actors = ActorRegistry()
        self.store = JournalStore(self.clock, sink_path=journal_sink)
        self.bus = EventBus(self.clock)
        self.policy = AutonomyPolicy(self.store, self.clock, self.ids)
        self.lifecycle = LifecycleManager(self.store, self.policy, self.clock, self.ids)
        self.gateway = HitlGateway(
            self.store,
            self.lifecycle,
            self.policy,
            self.clock,
            self.ids,
            self.actors.sentinel,
            escalation_sink=self._escalate,
        )
        self.sentinel = Sentinel(
            self.store,
            self.clock,
            self.ids,
            self.actors.sentinel,
            config=sentinel_config,
            suspend_kind=self._suspend_kind,
            demote_kind=self._demote_kind,
            escalation_sink=self._escalate,
        )
        self._quarantine = quarantine_on_anomaly
        self._spot_tasks: List[SpotCheckTask] = []
        self._pending_changes: Dict[str, PendingAutonomyChange] = {}
        self._pending_lock = threading.Lock()

        self.store.add_observer(self._on_record)

    # -- plumbing --

    def _on_record(self, record: JournalRecord) -> None:
        self.sentinel.ingest(record)
        self.bus.publish("record", record.to_obj())

    def _escalate(self, notice: Dict[str, Any]) -> None:
        self.bus.publish("escalation", notice)

    def _drain(self) -> None:
        """Run any due sentinel detection outside instance locks."""
        self.sentinel.run_detection(self.clock.now_ms())

    def _suspend_kind(self, agent_kind: str, reason: str) -> List[str]:
        suspended = []
        for inst in self.lifecycle.live_instances_of_kind(agent_kind):
            try:
                self.gateway.apply_with_void(
                    inst.instance_id,
                    LifecycleEvent(EventKind.SUSPEND, self.actors.sentinel, reason),
                )
            except IllegalTransition:
                # Finished, aborted, or already suspended since the live-set
                # snapshot; nothing left to contain for this instance.
                continue
            suspended.append(inst.instance_id)
        return suspended

    def _demote_kind(self, agent_kind: str, reason: str) -> bool:
        level = self.policy.level(agent_kind)
        if level is AutonomyLevel.ASSISTED:
            return False
        self.policy.apply_change(
            agent_kind,
            AutonomyLevel(int(level) - 1),
            requested_by=self.actors.sentinel,
            note=reason,
        )
        return True

    # -- registration --

    def register_actor(self, actor_id: str, role: Role | str, token: Optional[str] = None) -> Actor:
        return self.actors.register(Actor(actor_id, Role(role), token))

    def register_kind(
        self,
        agent_kind: str,
        level: AutonomyLevel | int = AutonomyLevel.ASSISTED,
        criteria: Optional[PromotionCriteria] = None,
        confidence_floor: float = 0.7,
        checkpoint_timeout_ms: int = 15 * 60 * 1000,
        spot_check_rate: float = 0.05,
        allowed_action_kinds: Optional[Set[str]] = None,
        registered_by: str = "admin",
    ) -> KindPolicy:
        policy = KindPolicy(
            agent_kind=agent_kind,
            level=AutonomyLevel(int(level)),
            criteria=criteria or PromotionCriteria(),
            confidence_floor=confidence_floor,
            checkpoint_timeout_ms=checkpoint_timeout_ms,
            spot_check_rate=spot_check_rate,
            allowed_action_kinds=allowed_action_kinds,
        )
        return self.policy.register_kind(policy, registered_by)

    # -- lifecycle surface --

    def create_instance(
        self, actor: Actor, config: AgentConfig, agent_actor: Optional[str] = None
    ) -> AgentInstance:
        return self.lifecycle.create_instance(config, actor, agent_actor)

    def launch(self, actor: Actor, instance_id: str, reason: str = "launch") -> LifecycleState:
        instance = self.lifecycle.get(instance_id)
        if self._quarantine and self.sentinel.has_containment_signal(instance.config.agent_kind):
            raise KindQuarantined(
                f"kind {instance.config.agent_kind!r} has an unresolved anomaly signal"
            )
        state, _ = self.lifecycle.apply_event(
            instance_id, LifecycleEvent(EventKind.LAUNCH, actor, reason)
        )
        self._drain()
        return state

    def finish(self, actor: Actor, instance_id: str, summary: str) -> LifecycleState:
        state, _ = self.lifecycle.apply_event(
            instance_id, LifecycleEvent(EventKind.FINISH, actor, summary)
        )
        self._drain()
        return state

    def abort(self, actor: Actor, instance_id: str, reason: str) -> LifecycleState:
        state, _ = self.gateway.apply_with_void(
            instance_id, LifecycleEvent(EventKind.ABORT, actor, reason)
        )
        self._drain()
        return state

    def suspend(self, actor: Actor, instance_id: str, reason: str) -> LifecycleState:
        state, _ = self.gateway.apply_with_void(
            instance_id, LifecycleEvent(EventKind.SUSPEND, actor, reason)
        )
        self._drain()
        return state

    def resume(self, actor: Actor, instance_id: str, reason: str = "resumed") -> LifecycleState:
        state, _ = self.lifecycle.apply_event(
            instance_id, LifecycleEvent(EventKind.RESUME, actor, reason)
        )
        self._drain()
        return state

    def instance(self, instance_id: str) -> AgentInstance:
        return self.lifecycle.get(instance_id)

    def instances(self, query: Optional[str] = None, agent_kind: Optional[str] = None,
                  state: Optional[LifecycleState] = None) -> List[AgentInstance]:
        return self.lifecycle.instances(query, agent_kind, state)

    # -- agent work surface --

    def _owning_agent(self, actor: Actor, instance: AgentInstance) -> None:
        if actor.role is not Role.AGENT:
            raise Unauthorized("only agent actors may report work")
        if instance.agent_actor is not None and instance.agent_actor != actor.actor_id:
            raise Unauthorized(
                f"instance {instance.instance_id} is bound to {instance.agent_actor!r}"
            )

    def report_action(self, actor: Actor, action: ActionDescriptor) -> Dict[str, Any]:
        """Gate one planned action; journal it; open a checkpoint when the
        gate demands approval. The response names the agent's obligation."""
        action.validate()
        instance = self.lifecycle.get(action.instance_id)
        self._owning_agent(actor, instance)
        if instance.state is not LifecycleState.ACTIVE:
            raise IllegalState(
                f"actions may only be reported while active, not {instance.state.value}"
            )
        if action.action_id is None:
            action = ActionDescriptor(
                instance_id=action.instance_id,
                action_kind=action.action_kind,
                description=action.description,
                risk_class=action.risk_class,
                confidence=action.confidence,
                payload_preview=action.payload_preview,
                action_id=self.ids.new("act"),
            )
        kind_policy = self.policy.kind_policy(instance.config.agent_kind)
        gate = evaluate_gate(action, instance.autonomy_level, kind_policy)

        obligation = {
            GateKind.AUTO_PROCEED: "proceed",
            GateKind.AUTO_PROCEED_NOTIFY: "proceed_with_notify",
            GateKind.REQUIRE_APPROVAL: "await_approval",
            GateKind.BLOCK: "blocked",
        }[gate.kind]

        self.store.append(
            instance.instance_id,
            RecordKind.WORK_PROGRESS,
            actor.actor_id,
            {
                "entry": "action",
                "action_id": action.action_id,
                "action_kind": action.action_kind,
                "description": action.description,
                "risk_class": action.risk_class.value,
                "confidence": action.confidence,
                "payload_preview": action.payload_preview,
                "gate": {
                    "decision": gate.kind.value,
                    "reason": gate.reason,
                    "escalated_by_confidence": gate.escalated_by_confidence,
                },
                "obligation": obligation,
            },
        )

        result: Dict[str, Any] = {
            "obligation": obligation,
            "action_id": action.action_id,
            "gate": {
                "decision": gate.kind.value,
                "reason": gate.reason,
                "escalated_by_confidence": gate.escalated_by_confidence,
            },
        }
        if gate.kind is GateKind.REQUIRE_APPROVAL:
            cp = self.gateway.open_checkpoint(action, gate, actor)
            result["checkpoint_id"] = cp.checkpoint_id
        elif gate.kind is GateKind.AUTO_PROCEED_NOTIFY:
            self.bus.publish(
                "notify",
                {
                    "type": "auto_proceed_notify",
                    "instance_id": instance.instance_id,
                    "action_id": action.action_id,
                    "action_kind": action.action_kind,
                    "risk_class": action.risk_class.value,
                },
            )
        self._drain()
        return result

    def report_outcome(
        self, actor: Actor, instance_id: str, action_id: str, status: str, note: str = ""
    ) -> JournalRecord:
        instance = self.lifecycle.get(instance_id)
        self._owning_agent(actor, instance)
        if instance.state is not LifecycleState.ACTIVE:
            raise IllegalState("outcomes may only be reported while active")
        record = self.store.append(
            instance_id,
            RecordKind.WORK_PROGRESS,
            actor.actor_id,
            {"entry": "outcome", "action_id": action_id, "status": status, "note": note},
        )
        self._drain()
        return record

    def report_progress(
        self, actor: Actor, instance_id: str, note: str, data: Optional[Dict[str, Any]] = None
    ) -> JournalRecord:
        instance = self.lifecycle.get(instance_id)
        self._owning_agent(actor, instance)
        if instance.state is not LifecycleState.ACTIVE:
            raise IllegalState("progress may only be reported while active")
        payload = {"entry": "progress", "note": note}
        if data:
            payload["data"] = data
        return self.store.append(instance_id, RecordKind.WORK_PROGRESS, actor.actor_id, payload)

    def record_decision(self, actor: Actor, instance_id: str, decision: Dict[str, Any]) -> JournalRecord:
        """Journal one explainable decision (sources, constraints, confidence,
        provenance edges)."""
        instance = self.lifecycle.get(instance_id)
        self._owning_agent(actor, instance)
        if instance.state is not LifecycleState.ACTIVE:
            raise IllegalState("decisions may only be journaled while active")
        payload = dict(decision)
        payload.setdefault("decision_id", self.ids.new("dec"))
        payload.setdefault("data_sources_consulted", [])
        payload.setdefault("constraints_considered", [])
        payload.setdefault("alternatives", [])
        payload.setdefault("rationale", "")
        payload.setdefault("produced_artifacts", [])
        payload.setdefault("consumed_artifacts", [])
        return self.store.append(instance_id, RecordKind.DECISION, actor.actor_id, payload)

    # -- checkpoints --

    def resolve_checkpoint(
        self,
        actor: Actor,
        checkpoint_id: str,
        directive: str,
        note: str = "",
        modification: Optional[Dict[str, Any]] = None,
    ):
        cp, state = self.gateway.resolve_checkpoint(
            checkpoint_id, directive, actor, note, modification
        )
        self._drain()
        return cp, state

    def checkpoints(self, status: Optional[str] = None, instance_id: Optional[str] = None):
        return self.gateway.list(status, instance_id)

    def checkpoint(self, checkpoint_id: str):
        return self.gateway.get(checkpoint_id)

    def tick(self, now_ms: Optional[int] = None) -> Dict[str, Any]:
        """Clock-driven work: checkpoint expiry plus pending detection."""
        now = now_ms if now_ms is not None else self.clock.now_ms()
        expired = self.gateway.expire_due_checkpoints(now)
        signals = self.sentinel.run_detection(now)
        return {
            "expired_checkpoints": [cp_id for cp_id, _ in expired],
            "signals": [s.signal_id for s in signals],
        }

    # -- autonomy --

    def evaluate_promotion(self, agent_kind: str) -> EligibilityReport:
        return self.policy.evaluate_promotion(agent_kind)

    def request_autonomy_change(
        self, actor: Actor, agent_kind: str, to_level: AutonomyLevel | int, note: str = ""
    ) -> Dict[str, Any]:
        """Decreases apply immediately; increases become a pending request
        that an approver/admin must approve."""
        if actor.role not in (Role.OPERATOR, Role.APPROVER, Role.ADMIN):
            raise Unauthorized("autonomy changes are requested by humans")
        to_level = AutonomyLevel(int(to_level))
        current = self.policy.level(agent_kind)
        if to_level < current:
            change = self.policy.apply_change(agent_kind, to_level, actor, note=note)
            return {"status": "applied", "change_id": change.change_id,
                    "from_level": int(change.from_level), "to_level": int(change.to_level)}
        report = self.policy.evaluate_promotion(agent_kind)
        if not report.eligible:
            raise NotEligible(
                f"{agent_kind} not eligible: " + "; ".join(report.shortfalls), report=report
            )
        pending = PendingAutonomyChange(
            change_id=self.ids.new("chg"),
            agent_kind=agent_kind,
            to_level=to_level,
            requested_by=actor.actor_id,
            note=note,
            evidence=report,
            created_at=self.clock.now_ms(),
        )
        with self._pending_lock:
            self._pending_changes[pending.change_id] = pending
        return {"status": "pending", "change_id": pending.change_id,
                "evidence": report.to_dict()}

    def approve_autonomy_change(self, actor: Actor, change_id: str) -> Dict[str, Any]:
        with self._pending_lock:
            pending = self._pending_changes.get(change_id)
        if pending is None or pending.status != "pending":
            raise UnknownInstance(f"no pending autonomy change {change_id!r}")
        requester = self.actors.get(pending.requested_by)
        change = self.policy.apply_change(
            pending.agent_kind,
            pending.to_level,
            requested_by=requester,
            approved_by=actor,
            note=pending.note,
        )
        pending.status = "approved"
        return {"status": "applied", "change_id": change.change_id,
                "from_level": int(change.from_level), "to_level": int(change.to_level),
                "approved_by": actor.actor_id}

    def pending_autonomy_changes(self) -> List[PendingAutonomyChange]:
        with self._pending_lock:
            return [p for p in self._pending_changes.values() if p.status == "pending"]

    def autonomy_levels(self) -> Dict[str, int]:
        return {kp.agent_kind: int(kp.level) for kp in self.policy.kinds()}

    # -- spot checks --

    def run_spot_checks(
        self,
        actor: Actor,
        seed: int,
        rate: Optional[float] = None,
        agent_kind: Optional[str] = None,
    ) -> List[SpotCheckTask]:
        """Select auto-proceeded, executed actions for post-hoc review."""
        if actor.role not in (Role.OPERATOR, Role.APPROVER, Role.ADMIN):
            raise Unauthorized("spot checks are a human review tool")
        kind_of: Dict[str, str] = {}
        candidates: List[tuple] = []
        executed: Set[str] = set()
        for rec in self.store.all_records():
            if rec.kind is RecordKind.STATE_TRANSITION and rec.payload.get("event") == "create":
                kind_of[rec.instance_id] = rec.payload.get("agent_kind", "")
            elif rec.kind is RecordKind.WORK_PROGRESS:
                if rec.payload.get("entry") == "action":
                    gate = rec.payload.get("gate", {}).get("decision")
                    if gate in ("auto_proceed", "auto_proceed_notify"):
                        candidates.append(
                            (rec.payload["action_id"], rec.instance_id,
                             kind_of.get(rec.instance_id, ""))
                        )
                elif rec.payload.get("entry") == "outcome":
                    if rec.payload.get("status") == "executed":
                        executed.add(rec.payload["action_id"])
        pool = [
            c for c in candidates
            if c[0] in executed and (agent_kind is None or c[2] == agent_kind)
        ]
        if rate is None:
            rate = 0.05
        selected = set(select_spot_checks([c[0] for c in pool], rate, seed))
        tasks = []
        for action_id, instance_id, kind in pool:
            if action_id in selected:
                task = SpotCheckTask(
                    task_id=self.ids.new("review"),
                    action_id=action_id,
                    instance_id=instance_id,
                    agent_kind=kind,
                    created_at=self.clock.now_ms(),
                )
                tasks.append(task)
        with self._pending_lock:
            self._spot_tasks.extend(tasks)
        return tasks

    def spot_check_tasks(self, status: Optional[str] = None) -> List[SpotCheckTask]:
        with self._pending_lock:
            pool = list(self._spot_tasks)
        return [t for t in pool if status is None or t.status == status]

    # -- anomalies --

    def anomaly_signals(self, agent_kind: Optional[str] = None, open_only: bool = False) -> List[AnomalySignal]:
        return self.sentinel.signals(agent_kind, open_only)

    def clear_anomaly(self, actor: Actor, signal_id: str) -> AnomalySignal:
        if actor.role not in (Role.OPERATOR, Role.ADMIN):
            raise Unauthorized("clearing anomaly signals requires operator/admin")
        return self.sentinel.clear_signal(signal_id, actor)

    # -- analytics --

    def metrics_snapshot(self, as_of: Optional[int] = None) -> analytics.MetricsSnapshot:
        return analytics.snapshot(
            self.store.all_records(),
            as_of if as_of is not None else self.clock.now_ms(),
        )

    def metrics_timeseries(self, metric: str, bucket_ms: int, start: int, end: int):
        return analytics.timeseries(self.store.all_records(), metric, bucket_ms, start, end)

    def report(
        self,
        chart_id: str,
        as_of: Optional[int] = None,
        prior_as_of: Optional[int] = None,
        question: Optional[str] = None,
    ) -> analytics.AnalysisReport:
        snap = self.metrics_snapshot(as_of)
        prior = self.metrics_snapshot(prior_as_of) if prior_as_of is not None else None
        return analytics.generate_report(chart_id, snap, prior, question)

    def trace(self, artifact_id: str) -> analytics.ResponsibilityTrace:
        return analytics.trace_responsibility(self.store.all_records(), artifact_id)

    # -- journal passthrough --

    def journal(self, **query) -> List[JournalRecord]:
        return self.store.query(**query)

    def verify_chain(self, instance_id: str) -> VerifyResult:
        return self.store.verify_chain(instance_id)

    def replay(self, instance_id: str) -> ReplayState:
        return self.store.replay_state(instance_id)

    def export_journal(self, instance_id: Optional[str] = None) -> bytes:
        if instance_id is not None:
            return self.store.export_stream(instance_id)
        return self.store.export_all()

    def subscribe(self, from_seq: int = 0) -> Subscription:
        return self.bus.subscribe(from_seq)
