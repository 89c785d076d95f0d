"""Scenario scripts: ordered agent steps plus fault injection.

Artifact ids may contain a ``{run}`` placeholder; the runner substitutes the
instance id so provenance chains from separate runs never intersect.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple, Union

from ..autonomy import RiskClass
from ..errors import InapplicableFault


@dataclass(frozen=True)
class ProgressStep:
    note: str


@dataclass(frozen=True)
class DecisionStep:
    chosen: str
    rationale: str = ""
    confidence: float = 0.9
    data_sources: Tuple[str, ...] = ()
    constraints: Tuple[str, ...] = ()
    alternatives: Tuple[str, ...] = ()
    produces: Tuple[str, ...] = ()
    consumes: Tuple[str, ...] = ()
    droppable: bool = False  # drop_constraint fault applies only here


@dataclass(frozen=True)
class ActionStep:
    action_kind: str
    description: str
    risk: RiskClass
    confidence: float
    preview: Dict[str, object] = field(default_factory=dict)


@dataclass(frozen=True)
class FinishStep:
    summary: str


@dataclass(frozen=True)
class FailStep:
    reason: str


Step = Union[ProgressStep, DecisionStep, ActionStep, FinishStep, FailStep]


@dataclass(frozen=True)
class ScenarioScript:
    name: str
    agent_kind: str
    steps: Tuple[Step, ...]
    error_burst: float = 0.0          # probability an executed action journals an error
    stall: bool = False               # nobody answers checkpoints; timeout path
    drop_constraint_prefix: Optional[str] = None


def inject_fault(script: ScenarioScript, fault: str, rate: float = 0.25,
                 prefix: str = "allergy") -> ScenarioScript:
    """Return a faulty copy of the script; the original is untouched."""
    has_actions = any(isinstance(s, ActionStep) for s in script.steps)
    if fault == "error_burst":
        if not has_actions:
            raise InapplicableFault(f"{script.name}: no action steps to corrupt")
        if not 0.0 <= rate <= 1.0:
            raise InapplicableFault("error_burst rate must be within [0, 1]")
        return replace(script, error_burst=rate)
    if fault == "stall":
        if not has_actions:
            raise InapplicableFault(f"{script.name}: no action steps, nothing can stall")
        return replace(script, stall=True)
    if fault == "drop_constraint":
        droppable = any(
            isinstance(s, DecisionStep)
            and s.droppable
            and any(c.startswith(prefix) for c in s.constraints)
            for s in script.steps
        )
        if not droppable:
            raise InapplicableFault(
                f"{script.name}: no droppable decision carries a {prefix!r} constraint"
            )
        return replace(script, drop_constraint_prefix=prefix)
    raise InapplicableFault(f"unknown fault {fault!r}")


# --- built-in scripts ---------------------------------------------------------

def group_email_script() -> ScenarioScript:
    """Compose, review, and distribute a company-wide email."""
    return ScenarioScript(
        name="group_email",
        agent_kind="group_email",
        steps=(
            ProgressStep("collected stakeholder requirements"),
            DecisionStep(
                chosen="draft v1 approved for review",
                rationale="tone and scope match the announcement brief",
                confidence=0.9,
                data_sources=("crm", "hr-directory", "brand-guide"),
                constraints=("tone:formal", "audience:all-staff"),
                alternatives=("draft v0 (too casual)",),
                produces=("email:{run}:draft",),
            ),
            ActionStep(
                "legal_review",
                "submit draft for legal and compliance review",
                RiskClass.HIGH,
                0.92,
            ),
            ActionStep(
                "recipient_verification",
                "verify recipient list of 12000 addresses",
                RiskClass.MEDIUM,
                0.88,
                preview={"recipients": 12000},
            ),
            ActionStep(
                "send_bulk_email",
                "send to verified recipients",
                RiskClass.LOW,
                0.97,
            ),
            FinishStep("email sent to all verified recipients"),
        ),
    )


def payment_script(amount: int = 2500) -> ScenarioScript:
    # Above 1000 currency units a payment counts as high risk; above 10000,
    # critical. Thresholds are harness configuration, not policy.
    if amount > 10_000:
        risk = RiskClass.CRITICAL
    elif amount > 1_000:
        risk = RiskClass.HIGH
    else:
        risk = RiskClass.MEDIUM
    return ScenarioScript(
        name="payment",
        agent_kind="payment",
        steps=(
            DecisionStep(
                chosen=f"pay invoice of {amount}",
                rationale="invoice matched to approved purchase order",
                confidence=0.85,
                data_sources=("erp", "invoice-inbox"),
                constraints=("four-eyes-above-1000",),
                produces=("payment:{run}:order",),
            ),
            ActionStep(
                "initiate_payment",
                f"transfer {amount} currency units",
                risk,
                0.9,
                preview={"amount": amount},
            ),
            FinishStep("payment settled"),
        ),
    )


def collection_letter_script() -> ScenarioScript:
    return ScenarioScript(
        name="collection_letter",
        agent_kind="collection_letter",
        steps=(
            ProgressStep("reviewed debtor file and credit conditions"),
            DecisionStep(
                chosen="firm reminder tone",
                rationale="second notice; account 45 days past due",
                confidence=0.86,
                data_sources=("ledger", "prior-correspondence"),
                constraints=("regulation:fair-collection",),
                produces=("letter:{run}:draft",),
            ),
            ActionStep("send_letter", "mail the collection letter", RiskClass.LOW, 0.9),
            FinishStep("letter dispatched"),
        ),
    )


def food_order_script() -> ScenarioScript:
    """Accountability fixture: an order flows intake -> summary -> delivery.

    The drop_constraint fault makes the summarization decision lose the
    allergy constraints, which a responsibility trace must pinpoint.
    """
    return ScenarioScript(
        name="food_order",
        agent_kind="food_order",
        steps=(
            DecisionStep(
                chosen="order accepted",
                rationale="customer request parsed from chat transcript",
                confidence=0.93,
                data_sources=("chat-transcript",),
                constraints=("allergy:wheat", "allergy:soy", "budget:30"),
                produces=("order:{run}:request",),
            ),
            DecisionStep(
                chosen="summary for kitchen",
                rationale="condensed order for restaurant handoff",
                confidence=0.9,
                data_sources=("order-intake",),
                constraints=("allergy:wheat", "allergy:soy"),
                consumes=("order:{run}:request",),
                produces=("order:{run}:summary",),
                droppable=True,
            ),
            ActionStep("place_order", "send order to restaurant", RiskClass.MEDIUM, 0.9),
            DecisionStep(
                chosen="dispatch order",
                rationale="restaurant confirmed preparation",
                confidence=0.95,
                data_sources=("restaurant-api",),
                consumes=("order:{run}:summary",),
                produces=("order:{run}:delivered",),
            ),
            FinishStep("order delivered"),
        ),
    )


SCRIPTS = {
    "group_email": group_email_script,
    "payment": payment_script,
    "collection_letter": collection_letter_script,
    "food_order": food_order_script,
}


def random_script(rng: random.Random, agent_kind: str) -> ScenarioScript:
    """Seeded random scenario: mixed risks and confidences, occasional
    failure endings. Used for fleet variety and replay-equivalence sweeps."""
    steps: List[Step] = []
    n_actions = rng.randint(1, 5)
    for i in range(n_actions):
        roll = rng.random()
        if roll < 0.25:
            steps.append(ProgressStep(f"worked on subtask {i}"))
        if roll < 0.15:
            steps.append(
                DecisionStep(
                    chosen=f"choice {i}",
                    rationale="seeded random decision",
                    confidence=round(rng.uniform(0.5, 1.0), 3),
                    produces=(f"artifact:{{run}}:{i}",),
                )
            )
        risk = rng.choice(list(RiskClass))
        steps.append(
            ActionStep(
                f"task_{i}",
                f"randomized action {i}",
                risk,
                round(rng.uniform(0.4, 1.0), 3),
            )
        )
    if rng.random() < 0.05:
        steps.append(FailStep("randomized failure"))
    else:
        steps.append(FinishStep("randomized run complete"))
    return ScenarioScript(name="random", agent_kind=agent_kind, steps=tuple(steps))
