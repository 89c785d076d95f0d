"""Service configuration: one INI file maps tokens to roles and pins the
oversight thresholds.

    [server]
    host = 127.0.0.1
    port = 8420
    journal_path = ./journal.jsonl     ; optional write-through durability
    heartbeat_s = 15
    tick_s = 1.0

    [thresholds]
    confidence_floor = 0.7
    anomaly_z = 3.0
    spot_check_rate = 0.05
    checkpoint_timeout_ms = 900000

    [actors]
    ops = operator:tok-ops
    ann = approver:tok-ann
    root = admin:tok-root
    mailer = agent:tok-mailer

    [kinds]
    group_email = 2
    payment = 3
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .actors import Role
from .errors import ConfigError


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8420
    journal_path: Optional[str] = None
    frontend_dir: Optional[str] = None
    heartbeat_s: float = 15.0
    tick_s: float = 1.0
    confidence_floor: float = 0.7
    anomaly_z: float = 3.0
    spot_check_rate: float = 0.05
    checkpoint_timeout_ms: int = 15 * 60 * 1000
    actors: List[Tuple[str, Role, str]] = field(default_factory=list)
    kinds: Dict[str, int] = field(default_factory=dict)


def load_config(path: str) -> ServiceConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    cfg = ServiceConfig()
    try:
        if parser.has_section("server"):
            s = parser["server"]
            cfg.host = s.get("host", cfg.host)
            cfg.port = s.getint("port", cfg.port)
            cfg.journal_path = s.get("journal_path", cfg.journal_path)
            cfg.frontend_dir = s.get("frontend_dir", cfg.frontend_dir)
            cfg.heartbeat_s = s.getfloat("heartbeat_s", cfg.heartbeat_s)
            cfg.tick_s = s.getfloat("tick_s", cfg.tick_s)
        if parser.has_section("thresholds"):
            t = parser["thresholds"]
            cfg.confidence_floor = t.getfloat("confidence_floor", cfg.confidence_floor)
            cfg.anomaly_z = t.getfloat("anomaly_z", cfg.anomaly_z)
            cfg.spot_check_rate = t.getfloat("spot_check_rate", cfg.spot_check_rate)
            cfg.checkpoint_timeout_ms = t.getint(
                "checkpoint_timeout_ms", cfg.checkpoint_timeout_ms
            )
        if parser.has_section("actors"):
            for actor_id, value in parser["actors"].items():
                role_name, sep, token = value.partition(":")
                if not sep or not token:
                    raise ConfigError(
                        f"actor {actor_id!r} must be '<role>:<token>', got {value!r}"
                    )
                try:
                    role = Role(role_name.strip())
                except ValueError:
                    raise ConfigError(f"unknown role {role_name!r} for actor {actor_id!r}")
                if role is Role.SENTINEL:
                    raise ConfigError("the sentinel role cannot carry a token")
                cfg.actors.append((actor_id, role, token.strip()))
        if parser.has_section("kinds"):
            for kind, value in parser["kinds"].items():
                level = int(value)
                if not 1 <= level <= 4:
                    raise ConfigError(f"kind {kind!r}: level must be 1..4, got {level}")
                cfg.kinds[kind] = level
    except (ValueError, configparser.Error) as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    if not 0.0 <= cfg.confidence_floor <= 1.0:
        raise ConfigError("confidence_floor must be within [0, 1]")
    if not 0.0 <= cfg.spot_check_rate <= 1.0:
        raise ConfigError("spot_check_rate must be within [0, 1]")
    return cfg
