"""Harness command line.

``run`` drives scripted scenarios or whole fleets and optionally exports the
combined journal as JSONL; ``verify`` audits an exported journal byte by
byte. Exit codes: 0 success, 2 usage/storage problems, 3 invariant violation.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Dict, Optional

from ..audit import scan_autonomy_increases, scan_gate_soundness
from ..journal import verify_export_lines
from .resolver import AutoResolver
from .runner import default_environment, run_fleet, run_scenario
from .scripts import SCRIPTS, inject_fault


def _parse_fault(value: Optional[str]):
    if value is None:
        return None
    name, _, arg = value.partition(":")
    if name not in ("error_burst", "drop_constraint", "stall"):
        raise SystemExit(f"unknown fault {name!r}")
    rate = float(arg) if arg else 0.25
    return name, rate


def _parse_mix(value: Optional[str]) -> Optional[Dict[str, float]]:
    if value is None:
        return None
    mix = {}
    for part in value.split(","):
        kind, _, weight = part.partition("=")
        mix[kind.strip()] = float(weight) if weight else 1.0
    return mix


def cmd_run(args: argparse.Namespace) -> int:
    kernel = default_environment()
    operator = kernel.actors.get("ops")
    resolver = AutoResolver.approve_all(operator)

    if args.fleet:
        result = run_fleet(
            n=args.fleet,
            seed=args.seed,
            kind_mix=_parse_mix(args.mix),
            kernel=kernel,
            workers=args.workers,
        )
        print(f"fleet: {result.n} instances in {result.wall_time_s:.1f}s, "
              f"{result.total_records} journal records")
        for kind, stats in sorted(result.per_kind.items()):
            print(f"  {kind}: {stats}")
        print(f"gate violations: {len(result.gate_violations)}")
        print(f"unapproved autonomy increases: {len(result.unapproved_increases)}")
        violations = result.violation_count
    else:
        if args.script not in SCRIPTS:
            raise SystemExit(f"unknown script {args.script!r}; have {sorted(SCRIPTS)}")
        script = SCRIPTS[args.script]()
        fault = _parse_fault(args.fault)
        if fault:
            script = inject_fault(script, fault[0], rate=fault[1])
        res = run_scenario(kernel, script, seed=args.seed, resolver=resolver)
        print(f"{res.instance_id}: {res.final_state.value} "
              f"(actions={res.actions_reported}, checkpoints={res.checkpoints_opened})")
        records = kernel.store.all_records()
        violations = len(scan_gate_soundness(records)) + len(
            scan_autonomy_increases(records)
        )
        print(f"gate violations: {violations}")

    bad_chain = [
        sid for sid in kernel.store.stream_ids()
        if not kernel.store.verify_chain(sid)
    ]
    if bad_chain:
        print(f"CORRUPT journal chains: {bad_chain}")
        violations += len(bad_chain)

    if args.export:
        path = Path(args.export)
        path.write_bytes(kernel.export_journal())
        print(f"journal exported to {path}")

    return 3 if violations else 0


def cmd_verify(args: argparse.Namespace) -> int:
    path = Path(args.path)
    if not path.exists():
        print(f"no such file: {path}", file=sys.stderr)
        return 2
    # One chain per stream: group lines by instance id while keeping bytes.
    import json

    streams: Dict[str, list] = {}
    for raw in path.read_bytes().splitlines():
        if not raw.strip():
            continue
        try:
            sid = json.loads(raw.decode("utf-8"))["instance_id"]
        except Exception:
            print("unparseable line; running whole-file audit")
            result = verify_export_lines(path.read_bytes().splitlines())
            print(f"invalid at line {result.first_bad_seq}")
            return 3
        streams.setdefault(sid, []).append(raw)

    bad = 0
    for sid, lines in sorted(streams.items()):
        result = verify_export_lines(lines)
        if result.valid:
            print(f"{sid}: valid ({len(lines)} records)")
        else:
            print(f"{sid}: INVALID at seq {result.first_bad_seq}")
            bad += 1
    return 3 if bad else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="agentgov-harness")
    sub = parser.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="run a scripted scenario or fleet")
    runp.add_argument("--script", default="group_email",
                      help=f"one of {sorted(SCRIPTS)}")
    runp.add_argument("--seed", type=int, default=42)
    runp.add_argument("--fleet", type=int, default=0,
                      help="run N concurrent instances instead of one scenario")
    runp.add_argument("--fault", default=None,
                      help="error_burst[:rate] | drop_constraint | stall")
    runp.add_argument("--mix", default=None,
                      help="fleet kind mix, e.g. group_email=0.5,payment=0.5")
    runp.add_argument("--workers", type=int, default=16)
    runp.add_argument("--export", default=None, help="write combined JSONL journal")
    runp.set_defaults(func=cmd_run)

    verp = sub.add_parser("verify", help="audit an exported JSONL journal")
    verp.add_argument("path")
    verp.set_defaults(func=cmd_verify)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
