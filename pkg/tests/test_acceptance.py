"""Acceptance suite: one test per release criterion, one printed line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the criterion lines.
Every expected value is either enumerated from an independent table written
in this file or recomputed by a brute-force oracle that never calls the code
path it checks.
"""

import math
import random
import time

import pytest

from agentgov import (
    AutonomyLevel,
    EventKind,
    LifecycleState,
    ManualClock,
    RecordKind,
    RiskClass,
    Role,
    canonical_json,
    select_spot_checks,
    validate_transition,
    verify_export_lines,
)
from agentgov.analytics import snapshot
from agentgov.audit import scan_autonomy_increases, scan_gate_soundness
from agentgov.gateway import ActionDescriptor
from agentgov.harness import (
    SCRIPTS,
    AutoResolver,
    default_environment,
    random_script,
    run_fleet,
    run_scenario,
    inject_fault,
)
from agentgov.harness.cli import main as harness_main
from agentgov.journal import JournalStore, is_kind_stream
from agentgov.sentinel import SentinelConfig

from conftest import START_MS, make_action, make_config


def _report(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    line = f"[{status}] {name}"
    if detail:
        line += f" ({detail})"
    print(line)


# ---------------------------------------------------------------------------
# Criterion 1: transition-table totality, < 1 s
# ---------------------------------------------------------------------------

S, E = LifecycleState, EventKind
NORMATIVE = {
    (S.INITIATED, E.LAUNCH): S.ACTIVE,
    (S.INITIATED, E.ABORT): S.ABORTED,
    (S.ACTIVE, E.OPEN_CHECKPOINT): S.AWAITING_HUMAN,
    (S.ACTIVE, E.SUSPEND): S.SUSPENDED,
    (S.ACTIVE, E.ABORT): S.ABORTED,
    (S.ACTIVE, E.FINISH): S.FINISHED,
    (S.AWAITING_HUMAN, E.RESOLVE_PROCEED): S.ACTIVE,
    (S.AWAITING_HUMAN, E.RESOLVE_DENY): S.ACTIVE,
    (S.AWAITING_HUMAN, E.CHECKPOINT_TIMEOUT): S.SUSPENDED,
    (S.AWAITING_HUMAN, E.ABORT): S.ABORTED,
    (S.AWAITING_HUMAN, E.SUSPEND): S.SUSPENDED,
    (S.SUSPENDED, E.RESUME): S.ACTIVE,
    (S.SUSPENDED, E.ABORT): S.ABORTED,
}


def test_criterion_transition_totality():
    started = time.monotonic()
    mismatches = []
    for state in S:
        for event in E:
            check = validate_transition(state, event)
            expected = NORMATIVE.get((state, event))
            if expected is None and (check.allowed or not check.reason):
                mismatches.append((state, event))
            if expected is not None and check.target is not expected:
                mismatches.append((state, event))
    terminal_leaks = [
        (state, event)
        for state in (S.ABORTED, S.FINISHED)
        for event in E
        if validate_transition(state, event).allowed
    ]
    elapsed = time.monotonic() - started
    ok = not mismatches and not terminal_leaks and elapsed < 1.0
    _report(
        "transition-table totality (54 pairs, terminals absorbing)",
        ok,
        f"{elapsed * 1000:.0f} ms",
    )
    assert mismatches == []
    assert terminal_leaks == []
    assert elapsed < 1.0


# ---------------------------------------------------------------------------
# Criterion 2: journal replay equivalence over 1,000 seeded random scenarios
# ---------------------------------------------------------------------------

def test_criterion_replay_equivalence():
    started = time.monotonic()
    env = default_environment()
    ops = env.actors.get("ops")
    master = random.Random("replay-acceptance")
    kinds = sorted(SCRIPTS)

    for i in range(1_000):
        rng = random.Random(f"replay:{i}")
        script = random_script(rng, master.choice(kinds))
        if rng.random() < 0.05:
            resolver = None  # timeout path
        else:
            policy = {
                risk: rng.choice(
                    ["proceed", "proceed", "proceed_with_modification",
                     "deny_and_replan", "abort"]
                )
                for risk in RiskClass
            }
            resolver = AutoResolver(actor=ops, policy=policy)
        run_scenario(env, script, seed=i, resolver=resolver)

    instances = env.instances()
    mismatches = 0
    for inst in instances:
        replayed = env.replay(inst.instance_id)
        pending = [
            cp.checkpoint_id
            for cp in env.checkpoints(status="pending", instance_id=inst.instance_id)
        ]
        if (
            replayed.state != inst.state.value
            or replayed.autonomy_level != int(inst.autonomy_level)
            or sorted(replayed.open_checkpoints) != sorted(pending)
        ):
            mismatches += 1
    elapsed = time.monotonic() - started
    ok = len(instances) >= 1_000 and mismatches == 0 and elapsed < 60.0
    _report(
        "journal replay equivalence",
        ok,
        f"{len(instances)} scenarios, {mismatches} mismatches, {elapsed:.1f} s",
    )
    assert len(instances) >= 1_000
    assert mismatches == 0
    assert elapsed < 60.0


# ---------------------------------------------------------------------------
# Criterion 3: tamper evidence, >= 1,000 sampled single-bit flips, 0 misses
# ---------------------------------------------------------------------------

def test_criterion_tamper_evidence():
    store = JournalStore(ManualClock(START_MS))
    store.create_stream("agent-tamper")
    for i in range(100):
        store.append(
            "agent-tamper",
            RecordKind.WORK_PROGRESS,
            "bot",
            {"entry": "progress", "note": f"step {i}", "data": {"i": i}},
        )
    lines = store.export_stream("agent-tamper").splitlines()
    records = store.records("agent-tamper")

    rng = random.Random(1_000_003)
    misses = []
    samples = 1_000
    for _ in range(samples):
        idx = rng.randrange(100)
        line = lines[idx]
        payload_bytes = canonical_json(records[idx].payload)
        span_start = line.index(payload_bytes)
        bit = rng.randrange(len(payload_bytes) * 8)
        flipped = bytearray(line)
        flipped[span_start + bit // 8] ^= 1 << (bit % 8)
        tampered = list(lines)
        tampered[idx] = bytes(flipped)
        result = verify_export_lines(tampered)
        if result.valid or result.first_bad_seq != idx:
            misses.append((idx, bit, result))

    ok = not misses
    _report("tamper evidence (single-bit flips in payloads)", ok,
            f"{samples} samples, {len(misses)} misses")
    assert misses == []


# ---------------------------------------------------------------------------
# Criterion 4: gate soundness + no unapproved autonomy increases (fleet 200)
# ---------------------------------------------------------------------------

def test_criterion_gate_soundness_fleet_200():
    env = default_environment()
    result = run_fleet(n=200, seed=42, kernel=env, workers=16)

    # Exercise a real promotion so the increase scan is not vacuous.
    ops = env.actors.get("ops")
    approver = env.actors.get("ann-approver")
    bot = env.register_actor("fleet-extra-bot", Role.AGENT)
    while not env.evaluate_promotion("group_email").eligible:
        inst = env.create_instance(
            ops, make_config("group_email"), agent_actor=bot.actor_id
        )
        env.launch(bot, inst.instance_id)
        env.finish(bot, inst.instance_id, "filler run complete")
    env.policy.apply_change(
        "group_email", AutonomyLevel.SUPERVISED, requested_by=ops, approved_by=approver
    )

    records = env.store.all_records()
    gate_violations = scan_gate_soundness(records)
    unapproved = scan_autonomy_increases(records)
    increases = [
        r for r in records
        if r.kind is RecordKind.AUTONOMY and r.payload["to_level"] > r.payload["from_level"]
    ]
    ok = not gate_violations and not unapproved and result.n == 200 and increases
    _report(
        "gate soundness + approved-only autonomy increases (fleet 200, seed 42)",
        ok,
        f"{result.total_records} records, {len(increases)} increase(s)",
    )
    assert result.n == 200
    assert gate_violations == []
    assert unapproved == []
    assert increases, "scan must have seen at least one real increase"


# ---------------------------------------------------------------------------
# Criterion 5: spot-check rate, rho = 0.05 over 10,000 auto-proceeded actions
# ---------------------------------------------------------------------------

def test_criterion_spot_check_rate():
    env = default_environment()
    ops = env.actors.get("ops")
    bot = env.register_actor("bulk-bot", Role.AGENT)
    inst = env.create_instance(ops, make_config("payment"), agent_actor=bot.actor_id)
    env.launch(bot, inst.instance_id)
    action_ids = []
    for i in range(10_000):
        report = env.report_action(
            bot,
            ActionDescriptor(
                instance_id=inst.instance_id,
                action_kind=f"bulk_{i}",
                description="",
                risk_class=RiskClass.LOW,
                confidence=0.95,
            ),
        )
        assert report["obligation"] == "proceed"  # supervised x low
        env.report_outcome(bot, inst.instance_id, report["action_id"], "executed")
        action_ids.append(report["action_id"])

    tasks = env.run_spot_checks(ops, seed=42, rate=0.05)
    fraction = len(tasks) / 10_000
    again = select_spot_checks(action_ids, 0.05, seed=42)
    deterministic = sorted(t.action_id for t in tasks) == sorted(again)
    ok = 0.03 <= fraction <= 0.07 and deterministic
    _report("spot-check rate within binomial band", ok,
            f"fraction {fraction:.4f}, deterministic={deterministic}")
    assert 0.03 <= fraction <= 0.07
    assert deterministic


# ---------------------------------------------------------------------------
# Criterion 6: sentinel containment and null stability (production defaults)
# ---------------------------------------------------------------------------

def _sentinel_env():
    env = default_environment(sentinel_config=SentinelConfig())
    env.register_kind("mailer", level=AutonomyLevel.SUPERVISED)
    env.register_actor("mail-bot", Role.AGENT)
    return env


def _feed(env, inst, bot, n, error_at):
    """Report n (action, outcome) pairs; error_at(i) marks errors."""
    from agentgov.errors import IllegalState

    fed = 0
    for i in range(n):
        env.clock.advance(500)
        try:
            report = env.report_action(
                bot, make_action(inst.instance_id, RiskClass.LOW, kind=f"m{i}")
            )
            env.report_outcome(
                bot, inst.instance_id, report["action_id"],
                "error" if error_at(i) else "executed",
            )
        except IllegalState:
            break
        fed += 1
    return fed


def test_criterion_sentinel_containment():
    env = _sentinel_env()
    ops = env.actors.get("ops")
    bot = env.actors.get("mail-bot")
    workers = []
    for _ in range(3):
        inst = env.create_instance(ops, make_config("mailer"), agent_actor=bot.actor_id)
        env.launch(bot, inst.instance_id)
        workers.append(inst)
    primary = workers[0]

    _feed(env, primary, bot, 500, lambda i: i % 20 == 19)  # steady 5% errors
    assert env.anomaly_signals("mailer") == []
    onset_ms = env.clock.now_ms()

    _feed(env, primary, bot, 100, lambda i: i % 4 == 3)  # 5x burst: 25% errors

    # Containment budget: 50 events of the faulted metric stream after onset.
    events_to_containment = sum(
        1
        for r in env.store.all_records()
        if r.timestamp > onset_ms
        and r.kind is RecordKind.WORK_PROGRESS
        and r.payload.get("entry") == "outcome"
    )
    suspended = [
        env.instance(w.instance_id).state is LifecycleState.SUSPENDED for w in workers
    ]
    contained = all(suspended) and events_to_containment <= 50
    _report(
        "sentinel containment within 50 ingested events",
        contained,
        f"{events_to_containment} events, suspended={sum(suspended)}/3",
    )
    assert all(suspended)
    assert events_to_containment <= 50


def test_criterion_sentinel_null_stability():
    env = _sentinel_env()
    ops = env.actors.get("ops")
    bot = env.actors.get("mail-bot")
    inst = env.create_instance(ops, make_config("mailer"), agent_actor=bot.actor_id)
    env.launch(bot, inst.instance_id)

    from agentgov.errors import IllegalState

    rng = random.Random(4242)
    total_pairs = 5_000  # 10,000 ingested events: one action + one outcome each
    false_positives = 0
    fed = 0
    while fed < total_pairs:
        env.clock.advance(500)
        try:
            report = env.report_action(
                bot, make_action(inst.instance_id, RiskClass.LOW, kind=f"n{fed}")
            )
            env.report_outcome(
                bot, inst.instance_id, report["action_id"],
                "error" if rng.random() < 0.05 else "executed",
            )
            fed += 1
        except IllegalState:
            # Operator clears the false alarm and resumes the fault-free run.
            for signal in env.anomaly_signals("mailer", open_only=True):
                false_positives += 1
                env.clear_anomaly(ops, signal.signal_id)
            env.resume(ops, inst.instance_id)

    ingested = env.sentinel.event_count("mailer")
    ok = ingested >= 10_000 and false_positives <= 1
    _report(
        "sentinel null stability (<= 1 false positive / 10k events)",
        ok,
        f"{ingested} events, {false_positives} signal(s)",
    )
    assert ingested >= 10_000
    assert false_positives <= 1


# ---------------------------------------------------------------------------
# Criterion 7: analytics oracle on 20 fixture journals
# ---------------------------------------------------------------------------

def _brute_force_snapshot(records, as_of):
    """Full single-pass recount, written independently of analytics.snapshot."""
    last_state, kind_of = {}, {}
    actions, checkpoints = {}, {}
    counts = dict(approvals=0, modifications=0, denials=0, aborts=0, timeouts=0)
    opens = 0
    latencies = []
    levels = {}
    anomalies = 0
    adoption = {}
    day_ms = 86_400_000

    for rec in records:
        if rec.timestamp > as_of:
            continue
        p = rec.payload
        if rec.kind is RecordKind.STATE_TRANSITION:
            if p.get("event") == "create":
                kind_of[rec.instance_id] = p.get("agent_kind", "")
                day = (rec.timestamp // day_ms) * day_ms
                adoption[day] = adoption.get(day, 0) + 1
            if not is_kind_stream(rec.instance_id):
                last_state[rec.instance_id] = p["to_state"]
        elif rec.kind is RecordKind.WORK_PROGRESS and p.get("entry") == "action":
            k = kind_of.get(rec.instance_id, "")
            actions[k] = actions.get(k, 0) + 1
        elif rec.kind is RecordKind.HITL:
            if p.get("phase") == "open":
                opens += 1
                k = kind_of.get(rec.instance_id, "")
                checkpoints[k] = checkpoints.get(k, 0) + 1
            elif p.get("phase") == "resolve":
                d = p["resolution"]["directive"]
                key = {
                    "proceed": "approvals",
                    "proceed_with_modification": "modifications",
                    "deny_and_replan": "denials",
                    "abort": "aborts",
                }[d]
                counts[key] += 1
                latencies.append((p["resolution"]["resolved_at"] - p["opened_at"]) / 1000)
            elif p.get("phase") == "expire" and p.get("reason") == "timeout":
                counts["timeouts"] += 1
        elif rec.kind is RecordKind.AUTONOMY:
            levels[p["agent_kind"]] = p["to_level"]
        elif rec.kind is RecordKind.ANOMALY and p.get("phase") == "raised":
            anomalies += 1

    states = {s: 0 for s in
              ("initiated", "active", "awaiting_human", "suspended", "aborted", "finished")}
    for s in last_state.values():
        states[s] += 1
    total_actions = sum(actions.values())
    resolved = sum(counts[k] for k in ("approvals", "modifications", "denials", "aborts"))
    latencies.sort()

    def nearest_rank(p):
        if not latencies:
            return 0.0
        return latencies[min(max(math.ceil(p / 100 * len(latencies)), 1), len(latencies)) - 1]

    autonomy_dist = {}
    for lvl in levels.values():
        autonomy_dist[str(lvl)] = autonomy_dist.get(str(lvl), 0) + 1

    return {
        "state_distribution": states,
        "intervention_frequency": {
            k: (checkpoints.get(k, 0) / actions[k] * 100.0) if actions.get(k) else 0.0
            for k in set(actions) | set(checkpoints)
        },
        "engagement": {
            **counts,
            "checkpoints_opened": opens,
            "actions_reported": total_actions,
            "engagement_rate": opens / total_actions if total_actions else 0.0,
            "rejection_rate": (counts["denials"] + counts["aborts"]) / resolved
            if resolved else 0.0,
        },
        "resolution_latency": {
            "median": nearest_rank(50.0), "p90": nearest_rank(90.0),
            "count": float(len(latencies)),
        },
        "autonomy_distribution": autonomy_dist,
        "anomaly_count": anomalies,
        "adoption_series": sorted(adoption.items()),
    }


def test_criterion_analytics_oracle():
    failures = []
    for fixture in range(20):
        env = default_environment()
        ops = env.actors.get("ops")
        rng = random.Random(f"fixture:{fixture}")
        n_runs = rng.randint(3, 7)
        for i in range(n_runs):
            policy = {r: rng.choice(["proceed", "deny_and_replan", "abort"])
                      for r in RiskClass}
            resolver = AutoResolver(actor=ops, policy=policy)
            script = (
                SCRIPTS["group_email"]()
                if i == 0
                else random_script(rng, rng.choice(sorted(SCRIPTS)))
            )
            run_scenario(env, script, seed=fixture * 100 + i, resolver=resolver)
        as_of = env.clock.now_ms()
        got = snapshot(env.store.all_records(), as_of).to_dict()
        want = _brute_force_snapshot(env.store.all_records(), as_of)

        for field_name, expected in want.items():
            actual = got[field_name]
            if field_name == "adoption_series":
                expected = [list(p) for p in expected]
            if isinstance(expected, dict):
                for key, val in expected.items():
                    a = actual.get(key)
                    if isinstance(val, float):
                        if a is None or abs(a - val) > 1e-12:
                            failures.append((fixture, field_name, key, val, a))
                    elif a != val:
                        failures.append((fixture, field_name, key, val, a))
                extra = set(actual) - set(expected)
                if extra:
                    failures.append((fixture, field_name, "extra-keys", extra, None))
            elif actual != expected:
                failures.append((fixture, field_name, None, expected, actual))

    ok = not failures
    _report("analytics oracle on 20 fixture journals", ok,
            f"{len(failures)} field mismatches")
    assert failures == []


# ---------------------------------------------------------------------------
# Criterion 8: group email end-to-end + food-order accountability trace
# ---------------------------------------------------------------------------

def test_criterion_group_email_end_to_end():
    env = default_environment()
    resolver = AutoResolver.approve_all(env.actors.get("ops"))
    result = run_scenario(env, SCRIPTS["group_email"](), seed=42, resolver=resolver)
    records = env.store.records(result.instance_id)
    kinds = {r.kind for r in records}
    has_all_classes = {
        RecordKind.STATE_TRANSITION, RecordKind.WORK_PROGRESS, RecordKind.HITL
    } <= kinds

    incident = run_scenario(
        env, inject_fault(SCRIPTS["food_order"](), "drop_constraint"),
        seed=43, resolver=resolver,
    )
    trace = env.trace(f"order:{incident.instance_id}:delivered")
    dropping = [
        s for s in trace.steps
        if s.record.payload["chosen"] == "summary for kitchen"
        and not any(c.startswith("allergy")
                    for c in s.record.payload["constraints_considered"])
    ]
    ok = (
        result.final_state is LifecycleState.FINISHED
        and has_all_classes
        and incident.final_state is LifecycleState.FINISHED
        and len(dropping) == 1
    )
    _report("group email E2E + food-order responsibility trace", ok,
            f"records={len(records)}, trace steps={len(trace.steps)}")
    assert result.final_state is LifecycleState.FINISHED
    assert has_all_classes
    assert len(dropping) == 1


# ---------------------------------------------------------------------------
# Criterion 9: fleet scale sanity, 2,000 agents < 5 minutes, exit code 0
# ---------------------------------------------------------------------------

def test_criterion_fleet_scale():
    started = time.monotonic()
    exit_code = harness_main(["run", "--fleet", "2000", "--seed", "7"])
    elapsed = time.monotonic() - started
    ok = exit_code == 0 and elapsed < 300.0
    _report("fleet scale sanity (2000 agents)", ok,
            f"exit={exit_code}, {elapsed:.1f} s")
    assert exit_code == 0
    assert elapsed < 300.0
