"""Journal-fed anomaly detection and automatic fallback.

Per agent kind, four metrics roll over the ingested record stream. The
baseline is the trailing history excluding the newest detection window;
its mean/std come from window-sized chunks so observed and baseline live
in the same units. A metric whose detection-window value sits ``k`` sigmas
above baseline raises a signal; fallback suspends every live instance of
the kind, demotes it one autonomy level, and escalates to the console.
"""

from __future__ import annotations

import math
import threading
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Set, Tuple

from .actors import Actor
from .clock import Clock
from .errors import AlreadyHandled, InsufficientBaseline, UnknownSignal
from .journal import JournalRecord, JournalStore, RecordKind, kind_stream_id


class Metric(str, Enum):
    ERROR_RATE = "error_rate"
    ABORT_RATE = "abort_rate"
    REJECTION_RATE = "rejection_rate"
    ACTIONS_PER_MINUTE = "actions_per_minute"


RATE_METRICS = frozenset(
    {Metric.ERROR_RATE, Metric.ABORT_RATE, Metric.REJECTION_RATE}
)

# Misbehavior metrics warrant automatic containment; a throughput shift is
# advisory only (escalated to humans, never auto-suspends a healthy kind).
FALLBACK_METRICS = RATE_METRICS


@dataclass(frozen=True)
class SentinelConfig:
    baseline_events: int = 500      # trailing history per metric
    detect_window: int = 50         # newest events compared against baseline
    min_baseline: int = 200         # detection stays off below this
    z_threshold: float = 3.0
    zero_std_rate_delta: float = 0.02   # flat-baseline rule for rate metrics
    zero_std_apm_factor: float = 0.5    # flat-baseline rule for throughput
    detect_every: int = 25          # cadence, in ingested events per kind


@dataclass(frozen=True)
class BaselineStats:
    agent_kind: str
    metric: Metric
    mean: float
    std: float
    sample_count: int
    window_events: int


@dataclass
class AnomalySignal:
    signal_id: str
    agent_kind: str
    metric: Metric
    observed: float
    baseline_mean: float
    baseline_std: float
    z_score: Optional[float]
    affected_instances: List[str]
    detected_at: int
    handled: bool = False
    cleared: bool = False

    def to_dict(self) -> Dict:
        return {
            "signal_id": self.signal_id,
            "agent_kind": self.agent_kind,
            "metric": self.metric.value,
            "observed": self.observed,
            "baseline_mean": self.baseline_mean,
            "baseline_std": self.baseline_std,
            "z_score": self.z_score,
            "affected_instances": list(self.affected_instances),
            "detected_at": self.detected_at,
            "handled": self.handled,
            "cleared": self.cleared,
        }


@dataclass(frozen=True)
class FallbackAction:
    signal_id: str
    suspended_instances: Tuple[str, ...]
    escalation_record_id: str
    demotion_applied: bool


def z_score(observed: float, mean: float, std: float) -> float:
    if std <= 0:
        raise ValueError("z_score undefined for std <= 0")
    return (observed - mean) / std


def _mean(values) -> float:
    values = list(values)
    return sum(values) / len(values) if values else 0.0


def _sample_std(values) -> float:
    values = list(values)
    if len(values) < 2:
        return 0.0
    m = _mean(values)
    return math.sqrt(sum((v - m) ** 2 for v in values) / (len(values) - 1))


def _rate_per_minute(timestamps: List[int]) -> float:
    if len(timestamps) < 2:
        return 0.0
    span_min = (timestamps[-1] - timestamps[0]) / 60_000
    if span_min <= 0:
        return 0.0
    return (len(timestamps) - 1) / span_min


# sqrt(dof / chi2_ppf(0.2, dof)) for dof 1..19: the factor that turns a noisy
# few-sample std estimate into an 80% upper-confidence bound, so "3 sigma"
# keeps roughly its intended tail mass with a handful of baseline chunks.
_STD_UCB_FACTOR = {
    1: 3.947, 2: 2.117, 3: 1.728, 4: 1.558, 5: 1.461, 6: 1.398, 7: 1.353,
    8: 1.320, 9: 1.293, 10: 1.272, 11: 1.255, 12: 1.240, 13: 1.227,
    14: 1.216, 15: 1.206, 16: 1.198, 17: 1.190, 18: 1.183, 19: 1.177,
}


def _std_ucb(std: float, n_samples: int) -> float:
    dof = max(1, n_samples - 1)
    return std * _STD_UCB_FACTOR.get(dof, 1.15)


class _MetricWindow:
    """Trailing samples for one (kind, metric)."""

    def __init__(self, cfg: SentinelConfig, is_timestamps: bool):
        self.samples: deque = deque(maxlen=cfg.baseline_events + cfg.detect_window)
        self.is_timestamps = is_timestamps
        self.total_pushed = 0

    def push(self, value) -> None:
        self.samples.append(value)
        self.total_pushed += 1

    def split(self, window: int) -> Tuple[List, List]:
        items = list(self.samples)
        return items[:-window], items[-window:]


class Sentinel:
    """Consumes journal records, maintains per-kind windows, raises signals.

    ``ingest`` is cheap and safe to call from journal append hooks; the
    actual detection pass runs later via :meth:`run_detection` so no
    instance lock is ever held while fallback suspends other instances.
    """

    def __init__(
        self,
        store: JournalStore,
        clock: Clock,
        id_factory,
        sentinel_actor: Actor,
        config: Optional[SentinelConfig] = None,
        suspend_kind: Optional[Callable[[str, str], List[str]]] = None,
        demote_kind: Optional[Callable[[str, str], bool]] = None,
        escalation_sink: Optional[Callable[[Dict], None]] = None,
    ):
        self._store = store
        self._clock = clock
        self._ids = id_factory
        self._actor = sentinel_actor
        self.config = config or SentinelConfig()
        self._suspend_kind = suspend_kind or (lambda kind, reason: [])
        self._demote_kind = demote_kind or (lambda kind, reason: False)
        self._escalate = escalation_sink or (lambda notice: None)

        self._windows: Dict[str, Dict[Metric, _MetricWindow]] = {}
        self._kind_of_instance: Dict[str, str] = {}
        self._seen: Set[Tuple[str, int]] = set()
        self._ingest_count: Dict[str, int] = {}
        self._dirty: Set[str] = set()
        self._signals: Dict[str, AnomalySignal] = {}
        # One signal per anomalous episode: after a raise, the (kind, metric)
        # pair stays quiet until its detection window has fully turned over.
        self._rearm_at: Dict[Tuple[str, Metric], int] = {}
        self._lock = threading.RLock()

    # -- ingestion --

    def _windows_for(self, kind: str) -> Dict[Metric, _MetricWindow]:
        wins = self._windows.get(kind)
        if wins is None:
            wins = {
                m: _MetricWindow(self.config, is_timestamps=(m is Metric.ACTIONS_PER_MINUTE))
                for m in Metric
            }
            self._windows[kind] = wins
        return wins

    def ingest(self, record: JournalRecord) -> None:
        """Update rolling windows; idempotent per (instance_id, seq)."""
        with self._lock:
            key = (record.instance_id, record.seq)
            if key in self._seen:
                return
            self._seen.add(key)

            if (
                record.kind is RecordKind.STATE_TRANSITION
                and record.payload.get("event") == "create"
            ):
                self._kind_of_instance[record.instance_id] = record.payload.get(
                    "agent_kind", ""
                )

            kind = record.payload.get("agent_kind") or self._kind_of_instance.get(
                record.instance_id
            )
            if not kind:
                return
            wins = self._windows_for(kind)
            counted = False

            if record.kind is RecordKind.WORK_PROGRESS:
                entry = record.payload.get("entry")
                if entry == "outcome":
                    value = 1.0 if record.payload.get("status") == "error" else 0.0
                    wins[Metric.ERROR_RATE].push(value)
                    counted = True
                elif entry == "action":
                    wins[Metric.ACTIONS_PER_MINUTE].push(record.timestamp)
                    counted = True
            elif record.kind is RecordKind.STATE_TRANSITION:
                to_state = record.payload.get("to_state")
                if to_state in ("aborted", "finished"):
                    wins[Metric.ABORT_RATE].push(1.0 if to_state == "aborted" else 0.0)
                    counted = True
            elif record.kind is RecordKind.HITL:
                if record.payload.get("phase") == "resolve":
                    directive = record.payload["resolution"]["directive"]
                    value = 1.0 if directive in ("deny_and_replan", "abort") else 0.0
                    wins[Metric.REJECTION_RATE].push(value)
                    counted = True

            if counted:
                n = self._ingest_count.get(kind, 0) + 1
                self._ingest_count[kind] = n
                if n % self.config.detect_every == 0:
                    self._dirty.add(kind)

    def event_count(self, agent_kind: str) -> int:
        """Ingested metric-bearing events for the kind (idempotence witness)."""
        with self._lock:
            return self._ingest_count.get(agent_kind, 0)

    # -- detection --

    def baseline(self, agent_kind: str, metric: Metric) -> Optional[BaselineStats]:
        """Chunked baseline stats, or None while the metric is below the
        activation floor."""
        cfg = self.config
        with self._lock:
            wins = self._windows.get(agent_kind)
            if wins is None:
                return None
            base, _ = wins[metric].split(cfg.detect_window)
        if len(base) < cfg.min_baseline:
            return None
        chunks = []
        # Align chunks to the newest baseline events.
        for end in range(len(base), cfg.detect_window - 1, -cfg.detect_window):
            chunk = base[end - cfg.detect_window : end]
            if len(chunk) == cfg.detect_window:
                chunks.append(chunk)
        if len(chunks) < 2:
            return None
        if metric is Metric.ACTIONS_PER_MINUTE:
            values = [_rate_per_minute(c) for c in chunks]
        else:
            values = [_mean(c) for c in chunks]
        mean = _mean(values)
        std = _sample_std(values)
        if metric in RATE_METRICS:
            # A proportion over W events can never fluctuate less than its
            # binomial sampling noise; flooring the estimate there stops a
            # lucky-flat baseline from flagging routine variation.
            std = max(std, math.sqrt(mean * (1.0 - mean) / cfg.detect_window))
        std = _std_ucb(std, len(values))
        return BaselineStats(
            agent_kind=agent_kind,
            metric=metric,
            mean=mean,
            std=std,
            sample_count=len(base),
            window_events=cfg.detect_window,
        )

    def _observed(self, agent_kind: str, metric: Metric) -> Optional[float]:
        cfg = self.config
        with self._lock:
            wins = self._windows.get(agent_kind)
            if wins is None:
                return None
            _, window = wins[metric].split(cfg.detect_window)
        if len(window) < cfg.detect_window:
            return None
        if metric is Metric.ACTIONS_PER_MINUTE:
            return _rate_per_minute(window)
        return _mean(window)

    def _fires(self, metric: Metric, observed: float,
               stats: BaselineStats) -> Tuple[bool, Optional[float]]:
        """(fired, z). z is None when the flat-baseline rule decided."""
        cfg = self.config
        if stats.std > 0:
            z = z_score(observed, stats.mean, stats.std)
            return z >= cfg.z_threshold, z
        if metric in RATE_METRICS:
            return abs(observed - stats.mean) > cfg.zero_std_rate_delta, None
        limit = max(1.0, cfg.zero_std_apm_factor * stats.mean)
        return abs(observed - stats.mean) > limit, None

    def detect(self, agent_kind: str, now_ms: Optional[int] = None,
               require_baseline: bool = True) -> List[AnomalySignal]:
        """Compare each metric's detection window against baseline; raise and
        journal a signal per newly anomalous metric."""
        now = now_ms if now_ms is not None else self._clock.now_ms()
        active = 0
        signals: List[AnomalySignal] = []
        for metric in Metric:
            stats = self.baseline(agent_kind, metric)
            if stats is None:
                continue
            active += 1
            observed = self._observed(agent_kind, metric)
            if observed is None:
                continue
            fired, z = self._fires(metric, observed, stats)
            if not fired:
                continue
            with self._lock:
                pushed = self._windows_for(agent_kind)[metric].total_pushed
                if pushed < self._rearm_at.get((agent_kind, metric), 0):
                    continue  # same episode still inside the window
                if any(
                    s.agent_kind == agent_kind and s.metric is metric and not s.cleared
                    for s in self._signals.values()
                ):
                    continue  # already raised and still open
                self._rearm_at[(agent_kind, metric)] = (
                    pushed + self.config.detect_window
                )
                signal = AnomalySignal(
                    signal_id=self._ids.new("sig"),
                    agent_kind=agent_kind,
                    metric=metric,
                    observed=observed,
                    baseline_mean=stats.mean,
                    baseline_std=stats.std,
                    z_score=z,
                    affected_instances=[],
                    detected_at=now,
                )
                self._signals[signal.signal_id] = signal
            self._store.append(
                kind_stream_id(agent_kind),
                RecordKind.ANOMALY,
                self._actor.actor_id,
                {
                    "phase": "raised",
                    "signal_id": signal.signal_id,
                    "agent_kind": agent_kind,
                    "metric": metric.value,
                    "observed": observed,
                    "baseline_mean": stats.mean,
                    "baseline_std": stats.std,
                    "z_score": z,
                    "detected_at": now,
                },
            )
            signals.append(signal)
        if require_baseline and active == 0:
            raise InsufficientBaseline(
                f"no metric for kind {agent_kind!r} has reached "
                f"{self.config.min_baseline} baseline events"
            )
        return signals

    def run_detection(self, now_ms: Optional[int] = None,
                      auto_fallback: bool = True) -> List[AnomalySignal]:
        """Detect on every kind whose cadence counter ticked since last run.
        Called outside any instance lock."""
        with self._lock:
            dirty = list(self._dirty)
            self._dirty.clear()
        raised: List[AnomalySignal] = []
        for kind in dirty:
            raised.extend(self.detect(kind, now_ms, require_baseline=False))
        if auto_fallback:
            for signal in raised:
                if signal.metric in FALLBACK_METRICS:
                    self.trigger_fallback(signal)
                else:
                    self._escalate(
                        {
                            "type": "anomaly_advisory",
                            "signal_id": signal.signal_id,
                            "agent_kind": signal.agent_kind,
                            "metric": signal.metric.value,
                            "observed": signal.observed,
                        }
                    )
        return raised

    # -- fallback --

    def trigger_fallback(self, signal: AnomalySignal) -> FallbackAction:
        with self._lock:
            if signal.handled:
                raise AlreadyHandled(f"signal {signal.signal_id} already handled")
            signal.handled = True
        suspended = self._suspend_kind(
            signal.agent_kind, f"anomaly {signal.signal_id} ({signal.metric.value})"
        )
        demoted = self._demote_kind(
            signal.agent_kind, f"anomaly {signal.signal_id} ({signal.metric.value})"
        )
        with self._lock:
            signal.affected_instances = list(suspended)
        record = self._store.append(
            kind_stream_id(signal.agent_kind),
            RecordKind.ANOMALY,
            self._actor.actor_id,
            {
                "phase": "fallback",
                "signal_id": signal.signal_id,
                "agent_kind": signal.agent_kind,
                "metric": signal.metric.value,
                "suspended_instances": list(suspended),
                "demotion_applied": demoted,
            },
        )
        self._escalate(
            {
                "type": "anomaly_fallback",
                "signal_id": signal.signal_id,
                "agent_kind": signal.agent_kind,
                "metric": signal.metric.value,
                "suspended_instances": list(suspended),
                "demotion_applied": demoted,
            }
        )
        return FallbackAction(
            signal_id=signal.signal_id,
            suspended_instances=tuple(suspended),
            escalation_record_id=record.record_id,
            demotion_applied=demoted,
        )

    # -- signal registry --

    def get_signal(self, signal_id: str) -> AnomalySignal:
        with self._lock:
            signal = self._signals.get(signal_id)
        if signal is None:
            raise UnknownSignal(f"unknown signal {signal_id!r}")
        return signal

    def signals(self, agent_kind: Optional[str] = None, open_only: bool = False) -> List[AnomalySignal]:
        with self._lock:
            pool = list(self._signals.values())
        return [
            s
            for s in pool
            if (agent_kind is None or s.agent_kind == agent_kind)
            and (not open_only or not s.cleared)
        ]

    def has_open_signal(self, agent_kind: str) -> bool:
        return bool(self.signals(agent_kind, open_only=True))

    def has_containment_signal(self, agent_kind: str) -> bool:
        """Open signals severe enough to hold back new launches."""
        return any(
            s.metric in FALLBACK_METRICS
            for s in self.signals(agent_kind, open_only=True)
        )

    def clear_signal(self, signal_id: str, actor: Actor) -> AnomalySignal:
        signal = self.get_signal(signal_id)
        with self._lock:
            if signal.cleared:
                raise AlreadyHandled(f"signal {signal_id} already cleared")
            signal.cleared = True
        self._store.append(
            kind_stream_id(signal.agent_kind),
            RecordKind.ANOMALY,
            actor.actor_id,
            {
                "phase": "cleared",
                "signal_id": signal_id,
                "agent_kind": signal.agent_kind,
                "cleared_by": actor.actor_id,
            },
        )
        return signal
