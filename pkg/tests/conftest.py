import pytest

from agentgov import (
    ActionDescriptor,
    AgentConfig,
    AutonomyLevel,
    GovernanceKernel,
    ManualClock,
    PromotionCriteria,
    RiskClass,
    Role,
)

START_MS = 1_760_000_000_000


@pytest.fixture
def clock():
    return ManualClock(START_MS)


@pytest.fixture
def kernel(clock):
    k = GovernanceKernel(clock=clock)
    k.register_actor("ops", Role.OPERATOR, "tok-ops")
    k.register_actor("ann", Role.APPROVER, "tok-ann")
    k.register_actor("root", Role.ADMIN, "tok-root")
    k.register_actor("mailer-1", Role.AGENT, "tok-mailer")
    k.register_kind(
        "group_email",
        level=AutonomyLevel.COLLABORATIVE,
        criteria=PromotionCriteria(window_n=50),
    )
    k.register_kind("payment", level=AutonomyLevel.SUPERVISED)
    return k


@pytest.fixture
def ops(kernel):
    return kernel.actors.get("ops")


@pytest.fixture
def approver(kernel):
    return kernel.actors.get("ann")


@pytest.fixture
def admin(kernel):
    return kernel.actors.get("root")


@pytest.fixture
def agent(kernel):
    return kernel.actors.get("mailer-1")


def make_config(kind="group_email", owner="ops"):
    return AgentConfig(
        agent_kind=kind,
        scope="coordinate the quarterly all-hands email",
        objectives=["inform every employee", "stay legally compliant"],
        owner=owner,
        context={"quarter": "Q3"},
        data_sources=["crm", "hr-directory"],
    )


@pytest.fixture
def active_instance(kernel, ops, agent):
    inst = kernel.create_instance(ops, make_config(), agent_actor=agent.actor_id)
    kernel.launch(agent, inst.instance_id)
    return inst


def make_action(instance_id, risk=RiskClass.HIGH, confidence=0.9, kind="legal_review"):
    return ActionDescriptor(
        instance_id=instance_id,
        action_kind=kind,
        description=f"{kind} step",
        risk_class=risk,
        confidence=confidence,
    )
