"""Dashboard metrics, deterministic narrative reports, and provenance traces.

Everything here is a pure function of the journal records at or before the
requested time; nothing reads live instance state, so every number shown to
a human can be recomputed from the audit trail alone.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import MalformedRange, UnknownArtifact, UnknownChart
from .journal import JournalRecord, RecordKind, canonical_json, is_kind_stream

CHART_IDS = (
    "state_distribution",
    "intervention_frequency",
    "engagement",
    "adoption_trend",
)

TIMESERIES_METRICS = (
    "instances_created",
    "actions_reported",
    "checkpoints_opened",
    "checkpoints_resolved",
    "errors",
    "anomalies",
)

MS_PER_DAY = 86_400_000


@dataclass(frozen=True)
class MetricsSnapshot:
    as_of: int
    state_distribution: Dict[str, int]
    intervention_frequency: Dict[str, float]  # checkpoints per 100 actions, per kind
    engagement: Dict[str, float]
    resolution_latency: Dict[str, float]      # seconds, nearest-rank median/p90
    autonomy_distribution: Dict[str, int]     # level -> number of kinds
    anomaly_count: int
    adoption_series: List[Tuple[int, int]]    # (day start ms, instances created)

    def to_dict(self) -> Dict:
        return {
            "as_of": self.as_of,
            "state_distribution": dict(self.state_distribution),
            "intervention_frequency": dict(self.intervention_frequency),
            "engagement": dict(self.engagement),
            "resolution_latency": dict(self.resolution_latency),
            "autonomy_distribution": dict(self.autonomy_distribution),
            "anomaly_count": self.anomaly_count,
            "adoption_series": [list(p) for p in self.adoption_series],
        }

    def digest(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict())).hexdigest()


def _nearest_rank(sorted_values: Sequence[float], percentile: float) -> float:
    if not sorted_values:
        return 0.0
    rank = math.ceil(percentile / 100.0 * len(sorted_values))
    rank = min(max(rank, 1), len(sorted_values))
    return sorted_values[rank - 1]


def snapshot(records: Sequence[JournalRecord], as_of: int) -> MetricsSnapshot:
    """Single pass over records with timestamp <= as_of."""
    last_state: Dict[str, str] = {}
    actions_by_kind: Dict[str, int] = {}
    checkpoints_by_kind: Dict[str, int] = {}
    kind_of: Dict[str, str] = {}
    opens = approvals = modifications = denials = aborts = timeouts = 0
    latencies: List[float] = []
    level_of_kind: Dict[str, int] = {}
    anomaly_count = 0
    adoption: Dict[int, int] = {}

    for rec in records:
        if rec.timestamp > as_of:
            continue
        p = rec.payload
        if rec.kind is RecordKind.STATE_TRANSITION:
            if p.get("event") == "create":
                kind_of[rec.instance_id] = p.get("agent_kind", "")
                day = (rec.timestamp // MS_PER_DAY) * MS_PER_DAY
                adoption[day] = adoption.get(day, 0) + 1
            if not is_kind_stream(rec.instance_id):
                last_state[rec.instance_id] = p["to_state"]
        elif rec.kind is RecordKind.WORK_PROGRESS:
            if p.get("entry") == "action":
                kind = kind_of.get(rec.instance_id, "")
                actions_by_kind[kind] = actions_by_kind.get(kind, 0) + 1
        elif rec.kind is RecordKind.HITL:
            phase = p.get("phase")
            if phase == "open":
                opens += 1
                kind = kind_of.get(rec.instance_id, "")
                checkpoints_by_kind[kind] = checkpoints_by_kind.get(kind, 0) + 1
            elif phase == "resolve":
                directive = p["resolution"]["directive"]
                if directive == "proceed":
                    approvals += 1
                elif directive == "proceed_with_modification":
                    modifications += 1
                elif directive == "deny_and_replan":
                    denials += 1
                elif directive == "abort":
                    aborts += 1
                latencies.append(
                    (p["resolution"]["resolved_at"] - p["opened_at"]) / 1000.0
                )
            elif phase == "expire" and p.get("reason") == "timeout":
                timeouts += 1
        elif rec.kind is RecordKind.AUTONOMY:
            level_of_kind[p["agent_kind"]] = p["to_level"]
        elif rec.kind is RecordKind.ANOMALY:
            if p.get("phase") == "raised":
                anomaly_count += 1

    states = {}
    for state in ("initiated", "active", "awaiting_human", "suspended", "aborted", "finished"):
        states[state] = 0
    for state in last_state.values():
        states[state] = states.get(state, 0) + 1

    total_actions = sum(actions_by_kind.values())
    resolved = approvals + modifications + denials + aborts
    engagement = {
        "approvals": approvals,
        "modifications": modifications,
        "denials": denials,
        "aborts": aborts,
        "timeouts": timeouts,
        "checkpoints_opened": opens,
        "actions_reported": total_actions,
        "engagement_rate": opens / total_actions if total_actions else 0.0,
        "rejection_rate": (denials + aborts) / resolved if resolved else 0.0,
    }

    intervention = {}
    for kind in set(actions_by_kind) | set(checkpoints_by_kind):
        acts = actions_by_kind.get(kind, 0)
        cps = checkpoints_by_kind.get(kind, 0)
        intervention[kind] = (cps / acts * 100.0) if acts else 0.0

    latencies.sort()
    latency = {
        "median": _nearest_rank(latencies, 50.0),
        "p90": _nearest_rank(latencies, 90.0),
        "count": float(len(latencies)),
    }

    autonomy_dist: Dict[str, int] = {}
    for level in level_of_kind.values():
        key = str(level)
        autonomy_dist[key] = autonomy_dist.get(key, 0) + 1

    return MetricsSnapshot(
        as_of=as_of,
        state_distribution=states,
        intervention_frequency=intervention,
        engagement=engagement,
        resolution_latency=latency,
        autonomy_distribution=autonomy_dist,
        anomaly_count=anomaly_count,
        adoption_series=sorted(adoption.items()),
    )


# --- time series -------------------------------------------------------------

def _series_predicate(metric: str):
    if metric == "instances_created":
        return lambda r: r.kind is RecordKind.STATE_TRANSITION and r.payload.get("event") == "create"
    if metric == "actions_reported":
        return lambda r: r.kind is RecordKind.WORK_PROGRESS and r.payload.get("entry") == "action"
    if metric == "checkpoints_opened":
        return lambda r: r.kind is RecordKind.HITL and r.payload.get("phase") == "open"
    if metric == "checkpoints_resolved":
        return lambda r: r.kind is RecordKind.HITL and r.payload.get("phase") == "resolve"
    if metric == "errors":
        return lambda r: (
            r.kind is RecordKind.WORK_PROGRESS
            and r.payload.get("entry") == "outcome"
            and r.payload.get("status") == "error"
        )
    if metric == "anomalies":
        return lambda r: r.kind is RecordKind.ANOMALY and r.payload.get("phase") == "raised"
    raise MalformedRange(f"unknown timeseries metric {metric!r}")


def timeseries(
    records: Sequence[JournalRecord],
    metric: str,
    bucket_ms: int,
    start: int,
    end: int,
) -> List[Tuple[int, int]]:
    """Counts per bucket over [start, end); buckets partition the range."""
    if bucket_ms <= 0:
        raise MalformedRange("bucket width must be positive")
    if end < start:
        raise MalformedRange("range end precedes start")
    pred = _series_predicate(metric)
    if end == start:
        return []
    n_buckets = -(-(end - start) // bucket_ms)
    counts = [0] * n_buckets
    for rec in records:
        if not (start <= rec.timestamp < end):
            continue
        if pred(rec):
            counts[(rec.timestamp - start) // bucket_ms] += 1
    return [(start + i * bucket_ms, counts[i]) for i in range(n_buckets)]


# --- responsibility tracing --------------------------------------------------

@dataclass(frozen=True)
class TraceStep:
    record: JournalRecord
    actor: str
    decision_id: str
    consumed: Tuple[str, ...]
    produced: Tuple[str, ...]

    def to_dict(self) -> Dict:
        return {
            "record_id": self.record.record_id,
            "actor": self.actor,
            "decision_id": self.decision_id,
            "chosen": self.record.payload.get("chosen"),
            "constraints_considered": list(self.record.payload.get("constraints_considered", [])),
            "consumed": list(self.consumed),
            "produced": list(self.produced),
            "timestamp": self.record.timestamp,
        }


@dataclass(frozen=True)
class ResponsibilityTrace:
    artifact_id: str
    steps: List[TraceStep]                  # incident decision back toward initiation
    hitl_resolutions: List[JournalRecord]   # resolutions on the traversed instances

    def to_dict(self) -> Dict:
        return {
            "artifact_id": self.artifact_id,
            "steps": [s.to_dict() for s in self.steps],
            "hitl_resolutions": [r.to_obj() for r in self.hitl_resolutions],
        }


def trace_responsibility(records: Sequence[JournalRecord], artifact_id: str) -> ResponsibilityTrace:
    """Backward breadth-first walk over consumed->produced provenance edges."""
    produced_by: Dict[str, List[JournalRecord]] = {}
    for rec in records:
        if rec.kind is not RecordKind.DECISION:
            continue
        for artifact in rec.payload.get("produced_artifacts", []):
            produced_by.setdefault(artifact, []).append(rec)

    if artifact_id not in produced_by:
        raise UnknownArtifact(f"artifact {artifact_id!r} was never produced by a decision")

    steps: List[TraceStep] = []
    seen_records = set()
    seen_artifacts = set()
    queue = [artifact_id]
    while queue:
        artifact = queue.pop(0)
        if artifact in seen_artifacts:
            continue
        seen_artifacts.add(artifact)
        for rec in produced_by.get(artifact, []):
            key = (rec.instance_id, rec.seq)
            if key in seen_records:
                continue
            seen_records.add(key)
            consumed = tuple(rec.payload.get("consumed_artifacts", []))
            steps.append(
                TraceStep(
                    record=rec,
                    actor=rec.actor,
                    decision_id=rec.payload["decision_id"],
                    consumed=consumed,
                    produced=tuple(rec.payload.get("produced_artifacts", [])),
                )
            )
            queue.extend(consumed)

    instances = {s.record.instance_id for s in steps}
    resolutions = [
        rec
        for rec in records
        if rec.kind is RecordKind.HITL
        and rec.payload.get("phase") == "resolve"
        and rec.instance_id in instances
    ]
    return ResponsibilityTrace(artifact_id=artifact_id, steps=steps, hitl_resolutions=resolutions)


# --- deterministic reports ---------------------------------------------------

@dataclass(frozen=True)
class AnalysisReport:
    chart_id: str
    narrative: str
    findings: List[Dict]
    generated_from: str

    def to_dict(self) -> Dict:
        return {
            "chart_id": self.chart_id,
            "narrative": self.narrative,
            "findings": [dict(f) for f in self.findings],
            "generated_from": self.generated_from,
        }


def least_squares_slope(values: Sequence[float]) -> float:
    n = len(values)
    if n < 2:
        return 0.0
    xs = range(n)
    mean_x = (n - 1) / 2.0
    mean_y = sum(values) / n
    cov = sum((x - mean_x) * (y - mean_y) for x, y in zip(xs, values))
    var = sum((x - mean_x) ** 2 for x in xs)
    return cov / var


def _direction(slope: float, tol: float = 1e-9) -> str:
    if slope > tol:
        return "increasing"
    if slope < -tol:
        return "decreasing"
    return "stable"


def _chart_values(chart_id: str, snap: MetricsSnapshot) -> Dict[str, float]:
    if chart_id == "state_distribution":
        return {f"state.{k}": float(v) for k, v in snap.state_distribution.items()}
    if chart_id == "intervention_frequency":
        return {f"interventions_per_100.{k}": v for k, v in snap.intervention_frequency.items()}
    if chart_id == "engagement":
        return {f"engagement.{k}": float(v) for k, v in snap.engagement.items()}
    if chart_id == "adoption_trend":
        total = sum(c for _, c in snap.adoption_series)
        days = len(snap.adoption_series)
        return {
            "adoption.total_instances": float(total),
            "adoption.active_days": float(days),
            "adoption.mean_per_day": float(total) / days if days else 0.0,
        }
    raise UnknownChart(f"unknown chart {chart_id!r}")


def generate_report(
    chart_id: str,
    snap: MetricsSnapshot,
    prior: Optional[MetricsSnapshot] = None,
    question: Optional[str] = None,
) -> AnalysisReport:
    """Template narrative over a snapshot: top-3 deltas vs the prior snapshot
    plus the chart's trend direction. Identical inputs give identical bytes."""
    values = _chart_values(chart_id, snap)
    prior_values = _chart_values(chart_id, prior) if prior else {}

    deltas = []
    for name in sorted(values):
        before = prior_values.get(name, 0.0)
        deltas.append((name, values[name], values[name] - before))
    deltas.sort(key=lambda item: (-abs(item[2]), item[0]))
    top = deltas[:3]

    if chart_id == "adoption_trend":
        series = [float(c) for _, c in snap.adoption_series]
    else:
        series = [sum(prior_values.values()), sum(values.values())] if prior else [sum(values.values())]
    trend = _direction(least_squares_slope(series))

    findings = [
        {
            "metric": name,
            "direction": _direction(delta) if prior else trend,
            "magnitude": abs(delta) if prior else value,
        }
        for name, value, delta in top
    ]

    lines = [
        f"Analysis for chart '{chart_id}' as of {snap.as_of}.",
        f"Overall trend: {trend}.",
    ]
    for f in top:
        name, value, delta = f
        if prior:
            lines.append(
                f"- {name}: {value:.6g} ({_direction(delta)} by {abs(delta):.6g} vs prior)"
            )
        else:
            lines.append(f"- {name}: {value:.6g} (no prior snapshot)")
    if question is not None:
        lines.append(f"Question: {question}")
        lines.append(
            f"Answer: based on the '{chart_id}' figures above, the overall trend is "
            f"{trend}; the largest contributor is "
            + (top[0][0] if top else "n/a")
            + "."
        )
    return AnalysisReport(
        chart_id=chart_id,
        narrative="\n".join(lines),
        findings=findings,
        generated_from=snap.digest(),
    )
