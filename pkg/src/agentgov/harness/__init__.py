"""Deterministic scripted agents and fleets driving the kernel end to end."""

from .resolver import AutoResolver
from .runner import FleetResult, ScenarioResult, default_environment, run_fleet, run_scenario
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

__all__ = [
    "AutoResolver",
    "FleetResult",
    "ScenarioResult",
    "default_environment",
    "run_fleet",
    "run_scenario",
    "SCRIPTS",
    "ActionStep",
    "DecisionStep",
    "FailStep",
    "FinishStep",
    "ProgressStep",
    "ScenarioScript",
    "inject_fault",
    "random_script",
]
