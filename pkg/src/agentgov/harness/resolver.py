"""Scripted stand-in for human checkpoint reviewers."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Dict, Tuple

from ..actors import Actor
from ..autonomy import RiskClass


@dataclass
class AutoResolver:
    """Resolves checkpoints by risk-class policy after a seeded delay."""

    actor: Actor
    policy: Dict[RiskClass, str] = field(default_factory=dict)
    delay_ms_range: Tuple[int, int] = (500, 3000)

    def directive_for(self, risk: RiskClass) -> str:
        return self.policy.get(risk, "proceed")

    def delay_ms(self, rng: random.Random) -> int:
        lo, hi = self.delay_ms_range
        if hi <= lo:
            return lo
        return rng.randint(lo, hi)

    @staticmethod
    def approve_all(actor: Actor) -> "AutoResolver":
        return AutoResolver(actor=actor)

    @staticmethod
    def abort_on(actor: Actor, risk: RiskClass) -> "AutoResolver":
        return AutoResolver(actor=actor, policy={risk: "abort"})
