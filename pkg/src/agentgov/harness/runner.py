"""Scenario and fleet execution against the kernel's public surface.

The runner only calls kernel methods an HTTP client could reach; it never
touches module internals, so removing the harness leaves the kernel intact.
Time is a manual clock advanced deterministic amounts per step, which makes
timeout paths run in milliseconds and exported journals byte-reproducible.
"""

from __future__ import annotations

import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from ..actors import Actor, Role
from ..audit import scan_autonomy_increases, scan_gate_soundness
from ..autonomy import AutonomyLevel, PromotionCriteria
from ..clock import ManualClock
from ..errors import (
    AlreadyResolved,
    IllegalState,
    IllegalTransition,
    KindQuarantined,
    ScenarioStuck,
)
from ..gateway import ActionDescriptor
from ..kernel import GovernanceKernel
from ..lifecycle import AgentConfig, LifecycleState
from .resolver import AutoResolver
from .scripts import (
    SCRIPTS,
    ActionStep,
    DecisionStep,
    FailStep,
    FinishStep,
    ProgressStep,
    ScenarioScript,
    inject_fault,
    random_script,
)

STEP_MS = 1_000
DEFAULT_KIND_LEVELS = {
    "group_email": AutonomyLevel.COLLABORATIVE,
    "payment": AutonomyLevel.SUPERVISED,
    "collection_letter": AutonomyLevel.SUPERVISED,
    "food_order": AutonomyLevel.COLLABORATIVE,
}


def default_environment(
    clock: Optional[ManualClock] = None,
    kind_levels: Optional[Dict[str, AutonomyLevel]] = None,
    sentinel_config=None,
) -> GovernanceKernel:
    """A kernel with the standard scripted kinds and a human staff registered."""
    kernel = GovernanceKernel(
        clock=clock or ManualClock(1_760_000_000_000), sentinel_config=sentinel_config
    )
    kernel.register_actor("ops", Role.OPERATOR, "tok-ops")
    kernel.register_actor("ann-approver", Role.APPROVER, "tok-approver")
    kernel.register_actor("root", Role.ADMIN, "tok-admin")
    for kind, level in (kind_levels or DEFAULT_KIND_LEVELS).items():
        kernel.register_kind(kind, level=level, criteria=PromotionCriteria())
    return kernel


@dataclass
class ScenarioResult:
    instance_id: str
    agent_kind: str
    final_state: LifecycleState
    checkpoints_opened: int = 0
    checkpoints_resolved: int = 0
    actions_reported: int = 0
    errors: int = 0
    aborted_at_checkpoint: bool = False
    halted: bool = False  # a terminal step or timeout ended the run


@dataclass
class FleetResult:
    n: int
    per_kind: Dict[str, Dict[str, int]]
    gate_violations: List[Dict] = field(default_factory=list)
    unapproved_increases: List[Dict] = field(default_factory=list)
    wall_time_s: float = 0.0
    total_records: int = 0

    @property
    def violation_count(self) -> int:
        return len(self.gate_violations) + len(self.unapproved_increases)


def _expand(artifacts: Sequence[str], run_token: str) -> List[str]:
    return [a.replace("{run}", run_token) for a in artifacts]


def run_scenario(
    kernel: GovernanceKernel,
    script: ScenarioScript,
    seed: int,
    resolver: Optional[AutoResolver] = None,
    operator: Optional[Actor] = None,
    auto_expire: bool = True,
) -> ScenarioResult:
    """Execute one scripted session through the kernel's public surface."""
    rng = random.Random(f"{script.name}:{seed}")
    operator = operator or kernel.actors.get("ops")
    agent = kernel.register_actor(kernel.ids.new("wrk"), Role.AGENT)
    clock: ManualClock = kernel.clock  # type: ignore[assignment]

    config = AgentConfig(
        agent_kind=script.agent_kind,
        scope=f"{script.name} scripted run (seed {seed})",
        objectives=[f"complete the {script.name} workflow"],
        owner=operator.actor_id,
        data_sources=["harness"],
    )
    instance = kernel.create_instance(operator, config, agent_actor=agent.actor_id)
    result = ScenarioResult(
        instance_id=instance.instance_id,
        agent_kind=script.agent_kind,
        final_state=instance.state,
    )
    run_token = instance.instance_id
    try:
        kernel.launch(agent, instance.instance_id)
    except KindQuarantined:
        # The kind is held back by an open anomaly; the session never starts.
        result.final_state = kernel.instance(instance.instance_id).state
        return result

    for step in script.steps:
        clock.advance(STEP_MS)
        state = kernel.instance(instance.instance_id).state
        if state is not LifecycleState.ACTIVE:
            break

        try:
            _run_step(kernel, script, step, instance, agent, operator,
                      resolver, rng, run_token, result, auto_expire)
        except (IllegalState, IllegalTransition):
            # The sentinel suspended the instance between two reports; a real
            # agent sees the same refusal either way and stops working.
            break
        if result.halted:
            break

    result.final_state = kernel.instance(instance.instance_id).state
    return result


def _run_step(kernel, script, step, instance, agent, operator, resolver, rng,
              run_token, result, auto_expire) -> None:
    clock: ManualClock = kernel.clock  # type: ignore[assignment]

    if isinstance(step, ProgressStep):
        kernel.report_progress(agent, instance.instance_id, step.note)

    elif isinstance(step, DecisionStep):
        constraints = list(step.constraints)
        if script.drop_constraint_prefix and step.droppable:
            constraints = [
                c for c in constraints
                if not c.startswith(script.drop_constraint_prefix)
            ]
        kernel.record_decision(
            agent,
            instance.instance_id,
            {
                "chosen": step.chosen,
                "rationale": step.rationale,
                "confidence": step.confidence,
                "data_sources_consulted": list(step.data_sources),
                "constraints_considered": constraints,
                "alternatives": list(step.alternatives),
                "produced_artifacts": _expand(step.produces, run_token),
                "consumed_artifacts": _expand(step.consumes, run_token),
            },
        )

    elif isinstance(step, ActionStep):
        report = kernel.report_action(
            agent,
            ActionDescriptor(
                instance_id=instance.instance_id,
                action_kind=step.action_kind,
                description=step.description,
                risk_class=step.risk,
                confidence=step.confidence,
                payload_preview=dict(step.preview),
            ),
        )
        result.actions_reported += 1
        obligation = report["obligation"]

        if obligation == "await_approval":
            result.checkpoints_opened += 1
            if script.stall or resolver is None:
                if not auto_expire:
                    raise ScenarioStuck(
                        f"checkpoint {report['checkpoint_id']} has no resolver"
                    )
                cp = kernel.checkpoint(report["checkpoint_id"])
                clock.advance(cp.timeout_ms + 1)
                kernel.tick()
                result.halted = True  # instance is suspended now
                return
            clock.advance(resolver.delay_ms(rng))
            directive = resolver.directive_for(step.risk)
            modification = (
                {"note": "trimmed by reviewer"}
                if directive == "proceed_with_modification"
                else None
            )
            try:
                kernel.resolve_checkpoint(
                    resolver.actor,
                    report["checkpoint_id"],
                    directive,
                    note=f"auto-resolved ({directive})",
                    modification=modification,
                )
            except AlreadyResolved:
                # Sentinel fallback voided the checkpoint while the reviewer
                # was deliberating; the instance is suspended or aborted.
                result.halted = True
                return
            result.checkpoints_resolved += 1
            if directive == "abort":
                result.aborted_at_checkpoint = True
                result.halted = True
                return
            if directive == "deny_and_replan":
                kernel.report_outcome(
                    agent, instance.instance_id, report["action_id"],
                    "skipped", "denied; replanned",
                )
                return
            # approved: fall through to execution

        if obligation == "blocked":
            kernel.report_outcome(
                agent, instance.instance_id, report["action_id"],
                "skipped", "blocked by gate",
            )
            return

        status = "error" if rng.random() < script.error_burst else "executed"
        if status == "error":
            result.errors += 1
        kernel.report_outcome(
            agent, instance.instance_id, report["action_id"], status
        )

    elif isinstance(step, FailStep):
        kernel.report_progress(
            agent, instance.instance_id, f"failure: {step.reason}"
        )
        kernel.abort(operator, instance.instance_id, step.reason)
        result.halted = True

    elif isinstance(step, FinishStep):
        kernel.finish(agent, instance.instance_id, step.summary)
        result.halted = True


def _fleet_script(rng: random.Random, kind: str) -> ScenarioScript:
    if kind == "payment":
        return SCRIPTS["payment"](amount=rng.choice([250, 800, 2500, 12000]))
    if kind in SCRIPTS:
        return SCRIPTS[kind]()
    return random_script(rng, kind)


def run_fleet(
    n: int,
    seed: int,
    kind_mix: Optional[Dict[str, float]] = None,
    resolver_policy: Optional[Dict] = None,
    kernel: Optional[GovernanceKernel] = None,
    workers: int = 16,
    fault_kind: Optional[str] = None,
    fault: str = "error_burst",
    fault_rate: float = 0.5,
    fault_after_fraction: float = 0.5,
) -> FleetResult:
    """Run n concurrent scripted sessions and audit the combined journal.

    With ``fault_kind`` set, sessions of that kind scheduled after the given
    fraction of the fleet run with the fault injected, so the kind first
    builds a clean baseline and then degrades mid-fleet.
    """
    if n < 1:
        raise ValueError("fleet size must be >= 1")
    kernel = kernel or default_environment()
    mix = kind_mix or {k: 1.0 / len(DEFAULT_KIND_LEVELS) for k in DEFAULT_KIND_LEVELS}
    kinds, weights = zip(*sorted(mix.items()))
    operator = kernel.actors.get("ops")
    resolver = AutoResolver(actor=operator, policy=resolver_policy or {})

    assign_rng = random.Random(f"fleet:{seed}")
    assignments = [
        assign_rng.choices(kinds, weights=weights)[0] for _ in range(n)
    ]

    def one(i: int) -> ScenarioResult:
        rng = random.Random(f"fleet:{seed}:{i}")
        script = _fleet_script(rng, assignments[i])
        if (
            fault_kind is not None
            and assignments[i] == fault_kind
            and i >= n * fault_after_fraction
        ):
            script = inject_fault(script, fault, rate=fault_rate)
        return run_scenario(kernel, script, seed=seed * 1_000_003 + i, resolver=resolver)

    start = time.monotonic()
    if n == 1:
        results = [one(0)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(n)))
    kernel.tick()
    wall = time.monotonic() - start

    per_kind: Dict[str, Dict[str, int]] = {}
    for res in results:
        bucket = per_kind.setdefault(
            res.agent_kind,
            {"count": 0, "finished": 0, "aborted": 0, "suspended": 0,
             "checkpoints": 0, "errors": 0},
        )
        bucket["count"] += 1
        bucket["checkpoints"] += res.checkpoints_opened
        bucket["errors"] += res.errors
        if res.final_state is LifecycleState.FINISHED:
            bucket["finished"] += 1
        elif res.final_state is LifecycleState.ABORTED:
            bucket["aborted"] += 1
        elif res.final_state is LifecycleState.SUSPENDED:
            bucket["suspended"] += 1

    records = kernel.store.all_records()
    return FleetResult(
        n=n,
        per_kind=per_kind,
        gate_violations=scan_gate_soundness(records),
        unapproved_increases=scan_autonomy_increases(records),
        wall_time_s=wall,
        total_records=len(records),
    )
