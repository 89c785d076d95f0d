"""Actor identities and roles.

Every journal record and lifecycle event names a registered actor. Roles are
coarse: ``agent`` for automated workers, three human tiers, and ``sentinel``
for the internal monitoring subsystem (which never authenticates by token).
"""

from __future__ import annotations

import hmac
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, Optional

from .errors import Unauthorized


class Role(str, Enum):
    AGENT = "agent"
    OPERATOR = "operator"
    APPROVER = "approver"
    ADMIN = "admin"
    SENTINEL = "sentinel"


HUMAN_ROLES = frozenset({Role.OPERATOR, Role.APPROVER, Role.ADMIN})

SENTINEL_ACTOR_ID = "sentinel"


@dataclass(frozen=True)
class Actor:
    actor_id: str
    role: Role
    token: Optional[str] = None  # sentinel and other internal actors carry none

    def is_human(self) -> bool:
        return self.role in HUMAN_ROLES


class ActorRegistry:
    """Registered participants; token lookup is constant-time per candidate."""

    def __init__(self) -> None:
        self._by_id: Dict[str, Actor] = {}
        self._lock = threading.Lock()
        self.register(Actor(SENTINEL_ACTOR_ID, Role.SENTINEL))

    def register(self, actor: Actor) -> Actor:
        with self._lock:
            self._by_id[actor.actor_id] = actor
        return actor

    def get(self, actor_id: str) -> Actor:
        with self._lock:
            actor = self._by_id.get(actor_id)
        if actor is None:
            raise Unauthorized(f"unknown actor {actor_id!r}")
        return actor

    def maybe_get(self, actor_id: str) -> Optional[Actor]:
        with self._lock:
            return self._by_id.get(actor_id)

    def all(self) -> Iterable[Actor]:
        with self._lock:
            return list(self._by_id.values())

    @property
    def sentinel(self) -> Actor:
        return self.get(SENTINEL_ACTOR_ID)

    def authenticate(self, token: str) -> Actor:
        """Resolve a bearer token. Scans every candidate so timing does not
        reveal which prefix matched."""
        if not token:
            raise Unauthorized("empty token")
        matched: Optional[Actor] = None
        for actor in self.all():
            if actor.token is None:
                continue
            if hmac.compare_digest(actor.token, token):
                matched = actor
        if matched is None:
            raise Unauthorized("unknown token")
        return matched
