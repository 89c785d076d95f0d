"""Append-only, hash-chained journal store.

One chain per stream. Instance streams are keyed by instance id; per-kind
records (autonomy changes, anomaly signals) live on reserved streams named
``kind::<agent_kind>``. Every record's hash covers the previous hash plus the
canonical serialization of all remaining fields, so any mutation of history
is detectable by recomputation.

Canonical serialization: UTF-8 JSON, lexicographically sorted keys, no
insignificant whitespace, integer timestamps, ``allow_nan`` off. The JSONL
interchange format is one canonical record per line with hashes hex-encoded
lowercase; it is the contract for export/import endpoints and audit tooling.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from .clock import Clock, SystemClock
from .errors import (
    CorruptChain,
    MalformedFilter,
    SchemaViolation,
    StorageFailure,
    UnknownInstance,
)

GENESIS_HASH = b"\x00" * 32

KIND_STREAM_PREFIX = "kind::"


def kind_stream_id(agent_kind: str) -> str:
    return KIND_STREAM_PREFIX + agent_kind


def is_kind_stream(stream_id: str) -> bool:
    return stream_id.startswith(KIND_STREAM_PREFIX)


class RecordKind(str, Enum):
    STATE_TRANSITION = "state_transition"
    WORK_PROGRESS = "work_progress"
    HITL = "hitl"
    DECISION = "decision"
    AUTONOMY = "autonomy"
    ANOMALY = "anomaly"


def canonical_json(obj: Any) -> bytes:
    """Bit-exact serialization used for hashing and the JSONL interchange."""
    try:
        return json.dumps(
            obj,
            sort_keys=True,
            separators=(",", ":"),
            ensure_ascii=False,
            allow_nan=False,
        ).encode("utf-8")
    except (TypeError, ValueError) as exc:
        raise SchemaViolation(f"payload not canonically serializable: {exc}") from exc


def _hash_body(prev_hash: bytes, body: Dict[str, Any]) -> bytes:
    return hashlib.sha256(prev_hash + canonical_json(body)).digest()


@dataclass(frozen=True)
class JournalRecord:
    seq: int
    instance_id: str
    kind: RecordKind
    actor: str
    timestamp: int
    payload: Dict[str, Any]
    prev_hash: bytes
    record_hash: bytes

    def body(self) -> Dict[str, Any]:
        """The hashed fields: everything except the two chain hashes."""
        return {
            "seq": self.seq,
            "instance_id": self.instance_id,
            "kind": self.kind.value,
            "actor": self.actor,
            "timestamp": self.timestamp,
            "payload": self.payload,
        }

    def to_obj(self) -> Dict[str, Any]:
        obj = self.body()
        obj["prev_hash"] = self.prev_hash.hex()
        obj["record_hash"] = self.record_hash.hex()
        return obj

    def to_line(self) -> bytes:
        return canonical_json(self.to_obj())

    @property
    def record_id(self) -> str:
        return f"{self.instance_id}:{self.seq}"

    @staticmethod
    def from_obj(obj: Dict[str, Any]) -> "JournalRecord":
        try:
            return JournalRecord(
                seq=int(obj["seq"]),
                instance_id=obj["instance_id"],
                kind=RecordKind(obj["kind"]),
                actor=obj["actor"],
                timestamp=int(obj["timestamp"]),
                payload=obj["payload"],
                prev_hash=bytes.fromhex(obj["prev_hash"]),
                record_hash=bytes.fromhex(obj["record_hash"]),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise SchemaViolation(f"malformed record object: {exc}") from exc


# --- payload schemas ---------------------------------------------------------

_HITL_PHASES = {"open", "resolve", "expire"}
_DIRECTIVES = {"proceed", "proceed_with_modification", "deny_and_replan", "abort"}


def _require(payload: Dict[str, Any], *keys: str) -> None:
    missing = [k for k in keys if k not in payload]
    if missing:
        raise SchemaViolation(f"payload missing required fields: {missing}")


def _check_confidence(value: Any, where: str) -> None:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise SchemaViolation(f"{where}: confidence must be a number")
    if not 0.0 <= float(value) <= 1.0:
        raise SchemaViolation(f"{where}: confidence {value} outside [0, 1]")


def validate_payload(kind: RecordKind, payload: Dict[str, Any]) -> None:
    """Check the kind-specific invariants. Extra keys are tolerated."""
    if not isinstance(payload, dict):
        raise SchemaViolation("payload must be a map")

    if kind is RecordKind.STATE_TRANSITION:
        _require(payload, "to_state", "event")
        if "from_state" not in payload:
            raise SchemaViolation("payload missing required fields: ['from_state']")

    elif kind is RecordKind.WORK_PROGRESS:
        _require(payload, "entry")
        if payload["entry"] not in {"action", "outcome", "progress"}:
            raise SchemaViolation(f"unknown work_progress entry {payload['entry']!r}")
        if payload["entry"] == "action":
            _require(payload, "action_id", "action_kind", "risk_class", "confidence")
            _check_confidence(payload["confidence"], "work_progress action")
        elif payload["entry"] == "outcome":
            _require(payload, "action_id", "status")

    elif kind is RecordKind.HITL:
        _require(payload, "checkpoint_id", "phase")
        if payload["phase"] not in _HITL_PHASES:
            raise SchemaViolation(f"unknown hitl phase {payload['phase']!r}")
        if payload["phase"] == "open":
            _require(payload, "question", "options")
        if payload["phase"] == "resolve":
            _require(payload, "resolution")
            res = payload["resolution"]
            if not isinstance(res, dict) or res.get("directive") not in _DIRECTIVES:
                raise SchemaViolation("hitl resolution must carry a known directive")

    elif kind is RecordKind.DECISION:
        _require(
            payload,
            "decision_id",
            "data_sources_consulted",
            "constraints_considered",
            "alternatives",
            "chosen",
            "rationale",
            "confidence",
            "produced_artifacts",
            "consumed_artifacts",
        )
        _check_confidence(payload["confidence"], "decision")
        if not isinstance(payload["chosen"], str) or not payload["chosen"]:
            raise SchemaViolation("decision: chosen must be a non-empty string")
        for key in ("data_sources_consulted", "constraints_considered", "alternatives",
                    "produced_artifacts", "consumed_artifacts"):
            if not isinstance(payload[key], list):
                raise SchemaViolation(f"decision: {key} must be a list")

    elif kind is RecordKind.AUTONOMY:
        _require(payload, "change_id", "agent_kind", "from_level", "to_level")

    elif kind is RecordKind.ANOMALY:
        _require(payload, "phase", "agent_kind")
        if payload["phase"] not in {"raised", "fallback", "cleared"}:
            raise SchemaViolation(f"unknown anomaly phase {payload['phase']!r}")
        if payload["phase"] != "cleared":
            _require(payload, "signal_id")


# --- chain verification ------------------------------------------------------

@dataclass(frozen=True)
class VerifyResult:
    valid: bool
    first_bad_seq: Optional[int] = None

    def __bool__(self) -> bool:
        return self.valid


def verify_records(records: Sequence[JournalRecord]) -> VerifyResult:
    """Recompute every hash and linkage; report the first mismatching seq."""
    prev = GENESIS_HASH
    for i, rec in enumerate(records):
        if rec.seq != i:
            return VerifyResult(False, i)
        if rec.prev_hash != prev:
            return VerifyResult(False, i)
        if _hash_body(rec.prev_hash, rec.body()) != rec.record_hash:
            return VerifyResult(False, i)
        prev = rec.record_hash
    return VerifyResult(True)


def verify_export_lines(lines: Iterable[bytes]) -> VerifyResult:
    """Byte-level audit of a JSONL export: parse, canonical form, chain.

    Any single-bit mutation of a line is flagged at that line's index,
    whether it breaks the JSON, the canonical form, or the hash chain.
    """
    prev = GENESIS_HASH
    for i, raw in enumerate(lines):
        line = raw.rstrip(b"\n")
        try:
            obj = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            return VerifyResult(False, i)
        if not isinstance(obj, dict):
            return VerifyResult(False, i)
        try:
            rec = JournalRecord.from_obj(obj)
        except SchemaViolation:
            return VerifyResult(False, i)
        if rec.to_line() != line:  # non-canonical bytes
            return VerifyResult(False, i)
        if rec.seq != i or rec.prev_hash != prev:
            return VerifyResult(False, i)
        if _hash_body(rec.prev_hash, rec.body()) != rec.record_hash:
            return VerifyResult(False, i)
        prev = rec.record_hash
    return VerifyResult(True)


@dataclass(frozen=True)
class ReplayState:
    """Snapshot reconstructed purely from a stream's records."""
    state: Optional[str]
    autonomy_level: Optional[int]
    open_checkpoints: Tuple[str, ...] = field(default_factory=tuple)


def replay_records(records: Sequence[JournalRecord]) -> ReplayState:
    state: Optional[str] = None
    level: Optional[int] = None
    open_cps: List[str] = []
    for rec in records:
        if rec.kind is RecordKind.STATE_TRANSITION:
            state = rec.payload["to_state"]
            if "autonomy_level" in rec.payload:
                level = rec.payload["autonomy_level"]
        elif rec.kind is RecordKind.HITL:
            cp = rec.payload["checkpoint_id"]
            if rec.payload["phase"] == "open":
                open_cps.append(cp)
            elif cp in open_cps:
                open_cps.remove(cp)
    return ReplayState(state=state, autonomy_level=level, open_checkpoints=tuple(open_cps))


# --- the store ---------------------------------------------------------------

class JournalStore:
    """In-memory store with optional write-through JSONL durability.

    Append is the only mutation; there is no update or delete. A single
    re-entrant lock serializes mutations; readers take snapshots under it and
    therefore always see a consistent prefix of every stream.
    """

    def __init__(self, clock: Optional[Clock] = None, sink_path: Optional[str] = None):
        self._clock = clock or SystemClock()
        self._streams: Dict[str, List[JournalRecord]] = {}
        self._arrival: List[JournalRecord] = []
        self._dedup: Dict[str, JournalRecord] = {}
        self._observers: List[Callable[[JournalRecord], None]] = []
        self._lock = threading.RLock()
        self._sink = open(sink_path, "ab") if sink_path else None

    # -- stream management --

    def create_stream(self, stream_id: str) -> None:
        with self._lock:
            self._streams.setdefault(stream_id, [])

    def has_stream(self, stream_id: str) -> bool:
        with self._lock:
            return stream_id in self._streams

    def stream_ids(self) -> List[str]:
        with self._lock:
            return list(self._streams)

    def add_observer(self, fn: Callable[[JournalRecord], None]) -> None:
        self._observers.append(fn)

    # -- writes --

    def append(
        self,
        instance_id: str,
        kind: RecordKind,
        actor: str,
        payload: Dict[str, Any],
        dedup_key: Optional[str] = None,
    ) -> JournalRecord:
        validate_payload(kind, payload)
        with self._lock:
            if dedup_key is not None and dedup_key in self._dedup:
                return self._dedup[dedup_key]
            stream = self._streams.get(instance_id)
            if stream is None:
                raise UnknownInstance(f"no journal stream for {instance_id!r}")
            prev = stream[-1].record_hash if stream else GENESIS_HASH
            body = {
                "seq": len(stream),
                "instance_id": instance_id,
                "kind": kind.value,
                "actor": actor,
                "timestamp": self._clock.now_ms(),
                "payload": payload,
            }
            record = JournalRecord(
                seq=body["seq"],
                instance_id=instance_id,
                kind=kind,
                actor=actor,
                timestamp=body["timestamp"],
                payload=payload,
                prev_hash=prev,
                record_hash=_hash_body(prev, body),
            )
            if self._sink is not None:
                try:
                    self._sink.write(record.to_line() + b"\n")
                    self._sink.flush()
                except OSError as exc:  # nothing committed; caller retries
                    raise StorageFailure(f"append not acknowledged: {exc}") from exc
            stream.append(record)
            self._arrival.append(record)
            if dedup_key is not None:
                self._dedup[dedup_key] = record
        for fn in self._observers:
            fn(record)
        return record

    # -- reads --

    def records(self, instance_id: str) -> List[JournalRecord]:
        with self._lock:
            stream = self._streams.get(instance_id)
            if stream is None:
                raise UnknownInstance(f"no journal stream for {instance_id!r}")
            return list(stream)

    def all_records(self) -> List[JournalRecord]:
        """Every record in global arrival order."""
        with self._lock:
            return list(self._arrival)

    def query(
        self,
        instance_id: Optional[str] = None,
        kind: Optional[RecordKind | str] = None,
        actor: Optional[str] = None,
        since: Optional[int] = None,
        until: Optional[int] = None,
        predicate: Optional[Callable[[Dict[str, Any]], bool]] = None,
    ) -> List[JournalRecord]:
        """Filtered records ordered by (instance_id, seq)."""
        if kind is not None and not isinstance(kind, RecordKind):
            try:
                kind = RecordKind(kind)
            except ValueError:
                raise MalformedFilter(f"unknown record kind {kind!r}")
        if since is not None and until is not None and since > until:
            raise MalformedFilter("time range inverted")
        with self._lock:
            pool = list(self._arrival)
        out = []
        for rec in pool:
            if instance_id is not None and rec.instance_id != instance_id:
                continue
            if kind is not None and rec.kind is not kind:
                continue
            if actor is not None and rec.actor != actor:
                continue
            if since is not None and rec.timestamp < since:
                continue
            if until is not None and rec.timestamp > until:
                continue
            if predicate is not None and not predicate(rec.payload):
                continue
            out.append(rec)
        out.sort(key=lambda r: (r.instance_id, r.seq))
        return out

    def verify_chain(self, instance_id: str) -> VerifyResult:
        return verify_records(self.records(instance_id))

    def replay_state(self, instance_id: str) -> ReplayState:
        records = self.records(instance_id)
        check = verify_records(records)
        if not check:
            raise CorruptChain(instance_id, check.first_bad_seq or 0)
        return replay_records(records)

    # -- interchange --

    def export_stream(self, instance_id: str) -> bytes:
        return b"".join(rec.to_line() + b"\n" for rec in self.records(instance_id))

    def export_all(self) -> bytes:
        """All streams, grouped per stream in seq order, streams sorted by id."""
        out = []
        for sid in sorted(self.stream_ids()):
            out.append(self.export_stream(sid))
        return b"".join(out)

    def import_stream(self, lines: Iterable[bytes], verify: bool = True) -> List[str]:
        """Load exported lines into this store. Streams must not already exist.

        With ``verify`` the chain is checked per stream and a bad line raises
        :class:`CorruptChain`; without it, records load as-is (audit tooling
        uses that to inspect tampered exports).
        """
        per_stream: Dict[str, List[JournalRecord]] = {}
        for raw in lines:
            line = raw.rstrip(b"\n")
            if not line:
                continue
            try:
                obj = json.loads(line.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise SchemaViolation(f"unparseable journal line: {exc}") from exc
            rec = JournalRecord.from_obj(obj)
            per_stream.setdefault(rec.instance_id, []).append(rec)
        for sid, recs in per_stream.items():
            recs.sort(key=lambda r: r.seq)
            if verify:
                check = verify_records(recs)
                if not check:
                    raise CorruptChain(sid, check.first_bad_seq or 0)
        with self._lock:
            for sid, recs in per_stream.items():
                if self._streams.get(sid):
                    raise MalformedFilter(f"stream {sid!r} already populated")
                self._streams[sid] = recs
                self._arrival.extend(recs)
        return sorted(per_stream)

    def close(self) -> None:
        if self._sink is not None:
            self._sink.close()
            self._sink = None
