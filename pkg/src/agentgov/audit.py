"""Post-hoc journal scans backing the safety claims.

These operate on raw records only, independent of live kernel state, so they
audit what actually happened rather than what the modules believe happened.
"""

from __future__ import annotations

from typing import Dict, List, Sequence, Set

from .journal import JournalRecord, RecordKind


def scan_gate_soundness(records: Sequence[JournalRecord]) -> List[Dict]:
    """Find executed actions that required approval but never got a
    proceed-resolution. An empty list is the safety property."""
    gate_of: Dict[str, str] = {}            # action_id -> gate decision
    checkpoint_of: Dict[str, str] = {}      # action_id -> checkpoint_id
    approved: Set[str] = set()              # checkpoint ids resolved proceed/modify
    executed: List[JournalRecord] = []

    for rec in records:
        if rec.kind is RecordKind.WORK_PROGRESS:
            entry = rec.payload.get("entry")
            if entry == "action":
                gate_of[rec.payload["action_id"]] = rec.payload.get("gate", {}).get(
                    "decision", ""
                )
            elif entry == "outcome" and rec.payload.get("status") == "executed":
                executed.append(rec)
        elif rec.kind is RecordKind.HITL:
            phase = rec.payload.get("phase")
            action_id = rec.payload.get("action_id")
            if phase == "open" and action_id:
                checkpoint_of[action_id] = rec.payload["checkpoint_id"]
            elif phase == "resolve":
                directive = rec.payload["resolution"]["directive"]
                if directive in ("proceed", "proceed_with_modification"):
                    approved.add(rec.payload["checkpoint_id"])

    violations = []
    for rec in executed:
        action_id = rec.payload["action_id"]
        if gate_of.get(action_id) != "require_approval":
            continue
        cp = checkpoint_of.get(action_id)
        if cp is None or cp not in approved:
            violations.append(
                {
                    "action_id": action_id,
                    "instance_id": rec.instance_id,
                    "seq": rec.seq,
                    "reason": "executed without a proceed-resolution",
                }
            )
    return violations


def scan_autonomy_increases(records: Sequence[JournalRecord]) -> List[Dict]:
    """Find autonomy increases lacking a human approver. Registration
    baselines (from == to) are not increases."""
    violations = []
    for rec in records:
        if rec.kind is not RecordKind.AUTONOMY:
            continue
        p = rec.payload
        if p["to_level"] <= p["from_level"]:
            continue
        approved_by = p.get("approved_by")
        role = p.get("approver_role")
        if not approved_by or role not in ("approver", "admin"):
            violations.append(
                {
                    "change_id": p.get("change_id"),
                    "agent_kind": p.get("agent_kind"),
                    "from_level": p["from_level"],
                    "to_level": p["to_level"],
                    "reason": "increase without approver/admin approval",
                }
            )
    return violations
