"""Per-kind autonomy levels, the oversight gate matrix, promotion evidence,
and spot-check selection.

Levels follow the four-stage ladder: assisted, collaborative, supervised,
full-with-governance. A kind's level only ever moves one step at a time;
increases require journal evidence plus explicit human approval, decreases
may also be triggered by the sentinel.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Dict, Iterable, List, Optional, Sequence, Set

from .actors import Actor, Role
from .clock import Clock
from .errors import (
    InvalidConfig,
    NotEligible,
    SkippedLevel,
    Unauthorized,
    UnknownAgentKind,
)
from .journal import JournalRecord, JournalStore, RecordKind, kind_stream_id


class AutonomyLevel(IntEnum):
    ASSISTED = 1
    COLLABORATIVE = 2
    SUPERVISED = 3
    FULL_WITH_GOVERNANCE = 4


class RiskClass(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    CRITICAL = "critical"

    @property
    def rank(self) -> int:
        return _RISK_RANK[self]


_RISK_RANK = {
    RiskClass.LOW: 0,
    RiskClass.MEDIUM: 1,
    RiskClass.HIGH: 2,
    RiskClass.CRITICAL: 3,
}


class GateKind(str, Enum):
    AUTO_PROCEED = "auto_proceed"
    AUTO_PROCEED_NOTIFY = "auto_proceed_notify"
    REQUIRE_APPROVAL = "require_approval"
    BLOCK = "block"

    @property
    def severity(self) -> int:
        return _GATE_SEVERITY[self]


_GATE_SEVERITY = {
    GateKind.AUTO_PROCEED: 0,
    GateKind.AUTO_PROCEED_NOTIFY: 1,
    GateKind.REQUIRE_APPROVAL: 2,
    GateKind.BLOCK: 3,
}

# Normative oversight matrix. Rows: autonomy level; columns: risk class.
# Critical risk always lands on human approval, at every level.
GATE_MATRIX: Dict[AutonomyLevel, Dict[RiskClass, GateKind]] = {
    AutonomyLevel.ASSISTED: {
        RiskClass.LOW: GateKind.REQUIRE_APPROVAL,
        RiskClass.MEDIUM: GateKind.REQUIRE_APPROVAL,
        RiskClass.HIGH: GateKind.REQUIRE_APPROVAL,
        RiskClass.CRITICAL: GateKind.REQUIRE_APPROVAL,
    },
    AutonomyLevel.COLLABORATIVE: {
        RiskClass.LOW: GateKind.AUTO_PROCEED_NOTIFY,
        RiskClass.MEDIUM: GateKind.REQUIRE_APPROVAL,
        RiskClass.HIGH: GateKind.REQUIRE_APPROVAL,
        RiskClass.CRITICAL: GateKind.REQUIRE_APPROVAL,
    },
    AutonomyLevel.SUPERVISED: {
        RiskClass.LOW: GateKind.AUTO_PROCEED,
        RiskClass.MEDIUM: GateKind.AUTO_PROCEED_NOTIFY,
        RiskClass.HIGH: GateKind.REQUIRE_APPROVAL,
        RiskClass.CRITICAL: GateKind.REQUIRE_APPROVAL,
    },
    AutonomyLevel.FULL_WITH_GOVERNANCE: {
        RiskClass.LOW: GateKind.AUTO_PROCEED,
        RiskClass.MEDIUM: GateKind.AUTO_PROCEED,
        RiskClass.HIGH: GateKind.AUTO_PROCEED_NOTIFY,
        RiskClass.CRITICAL: GateKind.REQUIRE_APPROVAL,
    },
}


def gate_matrix(level: AutonomyLevel, risk: RiskClass) -> GateKind:
    """Pure lookup of the normative oversight matrix."""
    return GATE_MATRIX[level][risk]


@dataclass(frozen=True)
class PromotionCriteria:
    window_n: int = 50
    min_success_rate: float = 0.98
    max_rejection_rate: float = 0.02
    require_zero_open_anomalies: bool = True

    def validate(self) -> None:
        if self.window_n < 1:
            raise InvalidConfig(["window_n must be >= 1"])
        for name, rate in (("min_success_rate", self.min_success_rate),
                           ("max_rejection_rate", self.max_rejection_rate)):
            if not 0.0 <= rate <= 1.0:
                raise InvalidConfig([f"{name} must be within [0, 1]"])


@dataclass(frozen=True)
class EligibilityReport:
    agent_kind: str
    eligible: bool
    success_rate: float
    rejection_rate: float
    open_anomalies: int
    completed_in_window: int
    window_n: int
    shortfalls: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "agent_kind": self.agent_kind,
            "eligible": self.eligible,
            "success_rate": self.success_rate,
            "rejection_rate": self.rejection_rate,
            "open_anomalies": self.open_anomalies,
            "completed_in_window": self.completed_in_window,
            "window_n": self.window_n,
            "shortfalls": list(self.shortfalls),
        }


@dataclass(frozen=True)
class AutonomyChangeRecord:
    change_id: str
    agent_kind: str
    from_level: AutonomyLevel
    to_level: AutonomyLevel
    evidence: Optional[EligibilityReport]
    requested_by: str
    approved_by: Optional[str]
    approver_role: Optional[str]
    timestamp: int


@dataclass
class KindPolicy:
    """Per-agent-kind configuration: current level plus gate tuning."""
    agent_kind: str
    level: AutonomyLevel = AutonomyLevel.ASSISTED
    criteria: PromotionCriteria = field(default_factory=PromotionCriteria)
    confidence_floor: float = 0.7           # below this, gate severity escalates one step
    checkpoint_timeout_ms: int = 15 * 60 * 1000
    spot_check_rate: float = 0.05
    allowed_action_kinds: Optional[Set[str]] = None  # None = unrestricted


def select_spot_checks(action_ids: Iterable[str], rate: float, seed: int) -> List[str]:
    """Deterministic pseudo-random subset of roughly ``rate`` of the actions.

    Selection hashes (seed, action id); the same inputs always flag the same
    actions, so audits are replayable.
    """
    if not 0.0 <= rate <= 1.0:
        raise InvalidConfig(["spot check rate must be within [0, 1]"])
    threshold = int(rate * 2**64)
    selected = []
    for action_id in action_ids:
        digest = hashlib.sha256(f"{seed}:{action_id}".encode("utf-8")).digest()
        if int.from_bytes(digest[:8], "big") < threshold:
            selected.append(action_id)
    return selected


# --- journal evidence scans --------------------------------------------------

def completed_instances_of_kind(records: Sequence[JournalRecord], agent_kind: str) -> List[str]:
    """Instance ids that reached a terminal state, in completion order."""
    kind_of: Dict[str, str] = {}
    completed: List[str] = []
    for rec in records:
        if rec.kind is not RecordKind.STATE_TRANSITION:
            continue
        if rec.payload.get("event") == "create":
            kind_of[rec.instance_id] = rec.payload.get("agent_kind", "")
        if rec.payload.get("to_state") in ("aborted", "finished"):
            if kind_of.get(rec.instance_id) == agent_kind:
                completed.append(rec.instance_id)
    return completed


def open_anomaly_count(records: Sequence[JournalRecord], agent_kind: str) -> int:
    open_ids: Set[str] = set()
    for rec in records:
        if rec.kind is not RecordKind.ANOMALY or rec.payload.get("agent_kind") != agent_kind:
            continue
        phase = rec.payload.get("phase")
        if phase == "raised":
            open_ids.add(rec.payload["signal_id"])
        elif phase == "cleared":
            open_ids.discard(rec.payload["signal_id"])
    return len(open_ids)


class AutonomyPolicy:
    """Registry of agent kinds and the sole writer of level changes."""

    def __init__(self, store: JournalStore, clock: Clock, id_factory):
        self._store = store
        self._clock = clock
        self._ids = id_factory
        self._kinds: Dict[str, KindPolicy] = {}
        self._lock = threading.RLock()

    def register_kind(self, policy: KindPolicy, registered_by: str = "admin") -> KindPolicy:
        policy.criteria.validate()
        if not 0.0 <= policy.confidence_floor <= 1.0:
            raise InvalidConfig(["confidence_floor must be within [0, 1]"])
        with self._lock:
            if policy.agent_kind in self._kinds:
                raise InvalidConfig([f"kind {policy.agent_kind!r} already registered"])
            self._kinds[policy.agent_kind] = policy
            stream = kind_stream_id(policy.agent_kind)
            self._store.create_stream(stream)
            # Baseline record makes the kind's level derivable from the journal alone.
            self._store.append(
                stream,
                RecordKind.AUTONOMY,
                registered_by,
                {
                    "change_id": self._ids.new("chg"),
                    "agent_kind": policy.agent_kind,
                    "from_level": int(policy.level),
                    "to_level": int(policy.level),
                    "requested_by": registered_by,
                    "approved_by": registered_by,
                    "approver_role": "admin",
                    "evidence": None,
                    "note": "kind registered",
                },
            )
        return policy

    def is_registered(self, agent_kind: str) -> bool:
        with self._lock:
            return agent_kind in self._kinds

    def kind_policy(self, agent_kind: str) -> KindPolicy:
        with self._lock:
            policy = self._kinds.get(agent_kind)
        if policy is None:
            raise UnknownAgentKind(f"agent kind {agent_kind!r} is not registered")
        return policy

    def kinds(self) -> List[KindPolicy]:
        with self._lock:
            return list(self._kinds.values())

    def level(self, agent_kind: str) -> AutonomyLevel:
        return self.kind_policy(agent_kind).level

    # -- promotion evidence --

    def evaluate_promotion(self, agent_kind: str) -> EligibilityReport:
        """Rates over the last window_n completed instances, journal records only."""
        policy = self.kind_policy(agent_kind)
        crit = policy.criteria
        records = self._store.all_records()
        completed = completed_instances_of_kind(records, agent_kind)
        window = completed[-crit.window_n:]
        shortfalls: List[str] = []

        if len(window) < crit.window_n:
            shortfalls.append(
                f"insufficient history: {len(window)} completed of {crit.window_n} required"
            )

        finished = 0
        window_set = set(window)
        resolved = 0
        rejections = 0
        for rec in records:
            if rec.kind is RecordKind.STATE_TRANSITION and rec.instance_id in window_set:
                if rec.payload.get("to_state") == "finished":
                    finished += 1
            elif rec.kind is RecordKind.HITL and rec.instance_id in window_set:
                if rec.payload.get("phase") == "resolve":
                    resolved += 1
                    directive = rec.payload["resolution"]["directive"]
                    if directive in ("deny_and_replan", "abort"):
                        rejections += 1

        success_rate = finished / len(window) if window else 0.0
        rejection_rate = rejections / resolved if resolved else 0.0
        open_anoms = open_anomaly_count(records, agent_kind)

        if window and success_rate < crit.min_success_rate:
            shortfalls.append(
                f"success rate {success_rate:.4f} below {crit.min_success_rate}"
            )
        if rejection_rate > crit.max_rejection_rate:
            shortfalls.append(
                f"rejection rate {rejection_rate:.4f} above {crit.max_rejection_rate}"
            )
        if crit.require_zero_open_anomalies and open_anoms > 0:
            shortfalls.append(f"{open_anoms} open anomaly signal(s)")

        return EligibilityReport(
            agent_kind=agent_kind,
            eligible=not shortfalls,
            success_rate=success_rate,
            rejection_rate=rejection_rate,
            open_anomalies=open_anoms,
            completed_in_window=len(window),
            window_n=crit.window_n,
            shortfalls=shortfalls,
        )

    # -- level changes --

    def apply_change(
        self,
        agent_kind: str,
        to_level: AutonomyLevel,
        requested_by: Actor,
        approved_by: Optional[Actor] = None,
        note: str = "",
    ) -> AutonomyChangeRecord:
        """Apply a one-step level change.

        Increases demand a current eligibility report plus an approver/admin
        approval; decreases are open to any human request or the sentinel.
        """
        with self._lock:
            policy = self.kind_policy(agent_kind)
            from_level = policy.level
            if abs(int(to_level) - int(from_level)) != 1:
                raise SkippedLevel(
                    f"level change {int(from_level)}→{int(to_level)} is not a single step"
                )

            evidence: Optional[EligibilityReport] = None
            if to_level > from_level:
                evidence = self.evaluate_promotion(agent_kind)
                if not evidence.eligible:
                    raise NotEligible(
                        f"{agent_kind} not eligible: " + "; ".join(evidence.shortfalls),
                        report=evidence,
                    )
                if approved_by is None or approved_by.role not in (Role.APPROVER, Role.ADMIN):
                    raise Unauthorized("autonomy increases require approver/admin approval")
            else:
                if requested_by.role == Role.AGENT:
                    raise Unauthorized("agents cannot request autonomy changes")
                if approved_by is None:
                    approved_by = requested_by

            change = AutonomyChangeRecord(
                change_id=self._ids.new("chg"),
                agent_kind=agent_kind,
                from_level=from_level,
                to_level=to_level,
                evidence=evidence,
                requested_by=requested_by.actor_id,
                approved_by=approved_by.actor_id,
                approver_role=approved_by.role.value,
                timestamp=self._clock.now_ms(),
            )
            policy.level = to_level
            self._store.append(
                kind_stream_id(agent_kind),
                RecordKind.AUTONOMY,
                requested_by.actor_id,
                {
                    "change_id": change.change_id,
                    "agent_kind": agent_kind,
                    "from_level": int(from_level),
                    "to_level": int(to_level),
                    "requested_by": change.requested_by,
                    "approved_by": change.approved_by,
                    "approver_role": change.approver_role,
                    "evidence": evidence.to_dict() if evidence else None,
                    "note": note,
                },
            )
        return change
