"""HTTP/JSON boundary plus the server-sent event stream.

Agents report actions and progress; humans resolve checkpoints, steer
lifecycles, approve autonomy changes, and read analytics. Bearer tokens map
to registered actors; role checks happen per endpoint. State-changing POSTs
accept an ``X-Dedup-Key`` header and replay the original response on retry.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
import threading
from contextlib import asynccontextmanager
from typing import Any, Dict, List, Optional

from fastapi import Depends, FastAPI, Query, Request, Response
from fastapi.responses import JSONResponse, PlainTextResponse, StreamingResponse
from fastapi.security import HTTPAuthorizationCredentials, HTTPBearer
from pydantic import BaseModel, Field

from . import errors
from .actors import Actor, Role
from .autonomy import RiskClass
from .config import ServiceConfig, load_config
from .gateway import ActionDescriptor
from .kernel import GovernanceKernel
from .lifecycle import AgentConfig, LifecycleState
from .sentinel import SentinelConfig

_STATUS_BY_ERROR = [
    ((errors.UnknownInstance, errors.UnknownCheckpoint, errors.UnknownArtifact,
      errors.UnknownChart, errors.UnknownAgentKind, errors.UnknownSignal), 404),
    ((errors.InvalidConfig, errors.SchemaViolation, errors.MalformedFilter,
      errors.MalformedRange, errors.SkippedLevel, errors.InsufficientBaseline), 422),
    ((errors.IllegalTransition, errors.IllegalState, errors.DuplicateCheckpoint,
      errors.AlreadyHandled, errors.NotEligible, errors.KindQuarantined,
      errors.AlreadyResolved), 409),
    ((errors.Unauthorized,), 403),
    ((errors.StorageFailure,), 503),
    ((errors.CorruptChain,), 500),
]


def _status_for(exc: errors.GovernanceError) -> int:
    for classes, status in _STATUS_BY_ERROR:
        if isinstance(exc, classes):
            return status
    return 500


# --- request bodies -----------------------------------------------------------

class CreateAgentBody(BaseModel):
    agent_kind: str
    scope: str
    objectives: List[str]
    owner: Optional[str] = None
    context: Dict[str, str] = Field(default_factory=dict)
    data_sources: List[str] = Field(default_factory=list)
    risk_class_default: str = "medium"
    agent_actor: Optional[str] = None


class ActionBody(BaseModel):
    action_kind: str
    description: str = ""
    risk_class: Optional[str] = None
    confidence: float = 1.0
    payload_preview: Dict[str, Any] = Field(default_factory=dict)
    action_id: Optional[str] = None


class ProgressBody(BaseModel):
    entry: str = "progress"  # progress | outcome
    note: str = ""
    data: Optional[Dict[str, Any]] = None
    action_id: Optional[str] = None
    status: Optional[str] = None


class DecisionBody(BaseModel):
    chosen: str
    rationale: str = ""
    confidence: float = 1.0
    data_sources_consulted: List[str] = Field(default_factory=list)
    constraints_considered: List[str] = Field(default_factory=list)
    alternatives: List[str] = Field(default_factory=list)
    produced_artifacts: List[str] = Field(default_factory=list)
    consumed_artifacts: List[str] = Field(default_factory=list)
    decision_id: Optional[str] = None


class ReasonBody(BaseModel):
    reason: str


class FinishBody(BaseModel):
    summary: str


class ResolveBody(BaseModel):
    directive: str
    note: str = ""
    modification: Optional[Dict[str, Any]] = None


class AutonomyChangeBody(BaseModel):
    agent_kind: str
    to_level: int
    note: str = ""


class ReportBody(BaseModel):
    question: Optional[str] = None
    as_of: Optional[int] = None
    prior_as_of: Optional[int] = None


class SpotCheckBody(BaseModel):
    seed: int
    rate: Optional[float] = None
    agent_kind: Optional[str] = None


# --- app factory ---------------------------------------------------------------

def create_app(
    kernel: GovernanceKernel,
    heartbeat_s: float = 15.0,
    tick_s: Optional[float] = None,
    frontend_dir: Optional[str] = None,
) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        task = None
        if tick_s:
            async def ticker():
                while True:
                    await asyncio.sleep(tick_s)
                    kernel.tick()
            task = asyncio.create_task(ticker())
        yield
        if task:
            task.cancel()

    app = FastAPI(title="agentgov", lifespan=lifespan)
    app.state.kernel = kernel
    dedup_cache: Dict[str, tuple] = {}
    dedup_lock = threading.Lock()

    security = HTTPBearer(auto_error=False)

    def current_actor(
        credentials: Optional[HTTPAuthorizationCredentials] = Depends(security),
    ) -> Actor:
        if credentials is None:
            raise errors.Unauthorized("missing bearer token")
        try:
            return kernel.actors.authenticate(credentials.credentials)
        except errors.Unauthorized:
            raise errors.Unauthorized("unknown token")

    def require(actor: Actor, *roles: Role) -> Actor:
        if actor.role not in roles:
            raise errors.Unauthorized(
                f"role {actor.role.value!r} not permitted on this endpoint"
            )
        return actor

    def require_human(actor: Actor) -> Actor:
        return require(actor, Role.OPERATOR, Role.APPROVER, Role.ADMIN)

    @app.exception_handler(errors.Unauthorized)
    async def _unauthorized(request: Request, exc: errors.Unauthorized):
        # Missing/unknown token is 401; an authenticated actor with the wrong
        # role is 403.
        detail = str(exc)
        status = 401 if "token" in detail else 403
        return JSONResponse(
            {"error": "Unauthorized", "detail": detail}, status_code=status
        )

    @app.exception_handler(errors.GovernanceError)
    async def _governance_error(request: Request, exc: errors.GovernanceError):
        body = {"error": type(exc).__name__, "detail": str(exc)}
        if isinstance(exc, errors.AlreadyResolved):
            body["status"] = exc.status
            body["resolution"] = exc.resolution
        if isinstance(exc, errors.NotEligible) and exc.report is not None:
            body["report"] = exc.report.to_dict()
        return JSONResponse(body, status_code=_status_for(exc))

    @app.middleware("http")
    async def dedup_middleware(request: Request, call_next):
        key = request.headers.get("X-Dedup-Key")
        if not key or request.method != "POST":
            return await call_next(request)
        cache_key = f"{request.url.path}:{key}"
        with dedup_lock:
            hit = dedup_cache.get(cache_key)
        if hit is not None:
            status, body = hit
            return Response(
                content=body,
                status_code=status,
                media_type="application/json",
                headers={"X-Dedup-Replay": "1"},
            )
        response = await call_next(request)
        chunks = [chunk async for chunk in response.body_iterator]
        body = b"".join(chunks)
        if response.status_code < 500:
            with dedup_lock:
                dedup_cache[cache_key] = (response.status_code, body)
        return Response(
            content=body,
            status_code=response.status_code,
            media_type=response.media_type,
            headers=dict(response.headers),
        )

    # -- health --

    @app.get("/healthz")
    async def healthz():
        return {"ok": True, "now_ms": kernel.clock.now_ms()}

    # -- agents --

    @app.post("/agents", status_code=201)
    async def create_agent(body: CreateAgentBody, actor: Actor = Depends(current_actor)):
        require(actor, Role.OPERATOR, Role.ADMIN)
        config = AgentConfig(
            agent_kind=body.agent_kind,
            scope=body.scope,
            objectives=body.objectives,
            owner=body.owner or actor.actor_id,
            context=body.context,
            data_sources=body.data_sources,
            risk_class_default=RiskClass(body.risk_class_default),
        )
        instance = kernel.create_instance(actor, config, agent_actor=body.agent_actor)
        return instance.to_dict()

    @app.get("/agents")
    async def list_agents(
        actor: Actor = Depends(current_actor),
        query: Optional[str] = None,
        agent_kind: Optional[str] = None,
        state: Optional[str] = None,
    ):
        parsed_state = LifecycleState(state) if state else None
        return {
            "agents": [
                inst.to_dict()
                for inst in kernel.instances(query, agent_kind, parsed_state)
            ]
        }

    @app.get("/agents/{instance_id}")
    async def get_agent(instance_id: str, actor: Actor = Depends(current_actor)):
        return kernel.instance(instance_id).to_dict()

    @app.get("/agents/{instance_id}/journal")
    async def agent_journal(
        instance_id: str,
        actor: Actor = Depends(current_actor),
        kind: Optional[str] = None,
        record_actor: Optional[str] = None,
        since: Optional[int] = None,
        until: Optional[int] = None,
    ):
        kernel.instance(instance_id)  # 404 on unknown
        records = kernel.journal(
            instance_id=instance_id, kind=kind, actor=record_actor,
            since=since, until=until,
        )
        return {"records": [r.to_obj() for r in records]}

    @app.get("/agents/{instance_id}/journal/export")
    async def agent_journal_export(instance_id: str, actor: Actor = Depends(current_actor)):
        require_human(actor)
        kernel.instance(instance_id)
        return PlainTextResponse(
            kernel.export_journal(instance_id).decode("utf-8"),
            media_type="application/jsonl",
        )

    @app.get("/agents/{instance_id}/journal/verify")
    async def agent_journal_verify(instance_id: str, actor: Actor = Depends(current_actor)):
        require_human(actor)
        kernel.instance(instance_id)
        result = kernel.verify_chain(instance_id)
        return {"valid": result.valid, "first_bad_seq": result.first_bad_seq}

    @app.post("/agents/{instance_id}/launch")
    async def launch_agent(instance_id: str, actor: Actor = Depends(current_actor)):
        require(actor, Role.AGENT, Role.OPERATOR, Role.ADMIN)
        state = kernel.launch(actor, instance_id)
        return {"state": state.value}

    @app.post("/agents/{instance_id}/actions")
    async def report_action(
        instance_id: str, body: ActionBody, actor: Actor = Depends(current_actor)
    ):
        require(actor, Role.AGENT)
        instance = kernel.instance(instance_id)
        risk = (
            RiskClass(body.risk_class)
            if body.risk_class
            else instance.config.risk_class_default
        )
        action = ActionDescriptor(
            instance_id=instance_id,
            action_kind=body.action_kind,
            description=body.description,
            risk_class=risk,
            confidence=body.confidence,
            payload_preview=body.payload_preview,
            action_id=body.action_id,
        )
        return kernel.report_action(actor, action)

    @app.post("/agents/{instance_id}/progress")
    async def report_progress(
        instance_id: str, body: ProgressBody, actor: Actor = Depends(current_actor)
    ):
        require(actor, Role.AGENT)
        if body.entry == "outcome":
            if not body.action_id or not body.status:
                raise errors.SchemaViolation("outcome entries need action_id and status")
            record = kernel.report_outcome(
                actor, instance_id, body.action_id, body.status, body.note
            )
        else:
            record = kernel.report_progress(actor, instance_id, body.note, body.data)
        return {"recorded": True, "seq": record.seq}

    @app.post("/agents/{instance_id}/decisions")
    async def record_decision(
        instance_id: str, body: DecisionBody, actor: Actor = Depends(current_actor)
    ):
        require(actor, Role.AGENT)
        payload = body.model_dump()
        if payload.get("decision_id") is None:
            payload.pop("decision_id")
        record = kernel.record_decision(actor, instance_id, payload)
        return {
            "recorded": True,
            "seq": record.seq,
            "decision_id": record.payload["decision_id"],
        }

    @app.post("/agents/{instance_id}/finish")
    async def finish_agent(
        instance_id: str, body: FinishBody, actor: Actor = Depends(current_actor)
    ):
        require(actor, Role.AGENT)
        state = kernel.finish(actor, instance_id, body.summary)
        return {"state": state.value}

    @app.post("/agents/{instance_id}/abort")
    async def abort_agent(
        instance_id: str, body: ReasonBody, actor: Actor = Depends(current_actor)
    ):
        require(actor, Role.OPERATOR, Role.ADMIN)
        state = kernel.abort(actor, instance_id, body.reason)
        return {"state": state.value}

    @app.post("/agents/{instance_id}/suspend")
    async def suspend_agent(
        instance_id: str, body: ReasonBody, actor: Actor = Depends(current_actor)
    ):
        require(actor, Role.OPERATOR, Role.ADMIN)
        state = kernel.suspend(actor, instance_id, body.reason)
        return {"state": state.value}

    @app.post("/agents/{instance_id}/resume")
    async def resume_agent(instance_id: str, actor: Actor = Depends(current_actor)):
        require(actor, Role.OPERATOR, Role.ADMIN)
        state = kernel.resume(actor, instance_id)
        return {"state": state.value}

    # -- checkpoints --

    @app.get("/checkpoints")
    async def list_checkpoints(
        actor: Actor = Depends(current_actor),
        status: Optional[str] = None,
        instance_id: Optional[str] = None,
    ):
        require_human(actor)
        return {"checkpoints": [cp.to_dict() for cp in kernel.checkpoints(status, instance_id)]}

    @app.get("/checkpoints/{checkpoint_id}")
    async def get_checkpoint(checkpoint_id: str, actor: Actor = Depends(current_actor)):
        require_human(actor)
        return kernel.checkpoint(checkpoint_id).to_dict()

    @app.post("/checkpoints/{checkpoint_id}/resolve")
    async def resolve_checkpoint(
        checkpoint_id: str, body: ResolveBody, actor: Actor = Depends(current_actor)
    ):
        require_human(actor)
        cp, state = kernel.resolve_checkpoint(
            actor, checkpoint_id, body.directive, body.note, body.modification
        )
        return {"checkpoint": cp.to_dict(), "instance_state": state.value}

    # -- metrics and reports --

    @app.get("/metrics/snapshot")
    async def metrics_snapshot(
        actor: Actor = Depends(current_actor), as_of: Optional[int] = None
    ):
        require_human(actor)
        return kernel.metrics_snapshot(as_of).to_dict()

    @app.get("/metrics/timeseries")
    async def metrics_timeseries(
        actor: Actor = Depends(current_actor),
        metric: str = Query(...),
        bucket_ms: int = Query(...),
        start: int = Query(...),
        end: int = Query(...),
    ):
        require_human(actor)
        series = kernel.metrics_timeseries(metric, bucket_ms, start, end)
        return {"metric": metric, "series": [list(p) for p in series]}

    @app.post("/reports/{chart_id}")
    async def chart_report(
        chart_id: str, body: ReportBody, actor: Actor = Depends(current_actor)
    ):
        require_human(actor)
        report = kernel.report(chart_id, body.as_of, body.prior_as_of, body.question)
        return report.to_dict()

    @app.get("/trace/{artifact_id:path}")
    async def responsibility_trace(
        artifact_id: str, actor: Actor = Depends(current_actor)
    ):
        require_human(actor)
        return kernel.trace(artifact_id).to_dict()

    # -- autonomy --

    @app.get("/autonomy/levels")
    async def autonomy_levels(actor: Actor = Depends(current_actor)):
        require_human(actor)
        return {"levels": kernel.autonomy_levels()}

    @app.get("/autonomy/eligibility/{agent_kind}")
    async def autonomy_eligibility(
        agent_kind: str, actor: Actor = Depends(current_actor)
    ):
        require_human(actor)
        return kernel.evaluate_promotion(agent_kind).to_dict()

    @app.get("/autonomy/changes")
    async def pending_changes(actor: Actor = Depends(current_actor)):
        require_human(actor)
        return {"pending": [p.to_dict() for p in kernel.pending_autonomy_changes()]}

    @app.post("/autonomy/changes")
    async def request_change(
        body: AutonomyChangeBody, actor: Actor = Depends(current_actor)
    ):
        require_human(actor)
        return kernel.request_autonomy_change(
            actor, body.agent_kind, body.to_level, body.note
        )

    @app.post("/autonomy/changes/{change_id}/approve")
    async def approve_change(change_id: str, actor: Actor = Depends(current_actor)):
        require(actor, Role.APPROVER, Role.ADMIN)
        return kernel.approve_autonomy_change(actor, change_id)

    # -- spot checks and anomalies --

    @app.post("/spotchecks")
    async def run_spot_checks(
        body: SpotCheckBody, actor: Actor = Depends(current_actor)
    ):
        require_human(actor)
        tasks = kernel.run_spot_checks(actor, body.seed, body.rate, body.agent_kind)
        return {"tasks": [t.to_dict() for t in tasks]}

    @app.get("/spotchecks")
    async def list_spot_checks(
        actor: Actor = Depends(current_actor), status: Optional[str] = None
    ):
        require_human(actor)
        return {"tasks": [t.to_dict() for t in kernel.spot_check_tasks(status)]}

    @app.get("/anomalies")
    async def list_anomalies(
        actor: Actor = Depends(current_actor),
        agent_kind: Optional[str] = None,
        open_only: bool = False,
    ):
        require_human(actor)
        return {
            "signals": [s.to_dict() for s in kernel.anomaly_signals(agent_kind, open_only)]
        }

    @app.post("/anomalies/{signal_id}/clear")
    async def clear_anomaly(signal_id: str, actor: Actor = Depends(current_actor)):
        require(actor, Role.OPERATOR, Role.ADMIN)
        return kernel.clear_anomaly(actor, signal_id).to_dict()

    # -- event stream --

    @app.get("/events")
    async def event_stream(
        request: Request,
        actor: Actor = Depends(current_actor),
        from_seq: int = 0,
        limit: Optional[int] = None,
    ):
        require_human(actor)
        # Last-Event-ID (set by reconnecting EventSource clients) wins.
        last_id = request.headers.get("Last-Event-ID")
        if last_id is not None and last_id.lstrip("-").isdigit():
            from_seq = int(last_id) + 1

        def frames():
            sub = kernel.subscribe(from_seq)
            sent = 0
            try:
                while limit is None or sent < limit:
                    frame = sub.next(timeout=heartbeat_s)
                    if frame is None:
                        yield ": keepalive\n\n"
                        continue
                    payload = json.dumps(frame.to_dict(), sort_keys=True)
                    yield f"id: {frame.seq}\nevent: {frame.kind}\ndata: {payload}\n\n"
                    sent += 1
            finally:
                sub.close()

        return StreamingResponse(
            frames(),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache", "X-Accel-Buffering": "no"},
        )

    if frontend_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=frontend_dir, html=True), name="console")

    return app


# --- server entrypoint ----------------------------------------------------------

def build_kernel(cfg: ServiceConfig) -> GovernanceKernel:
    kernel = GovernanceKernel(
        sentinel_config=SentinelConfig(z_threshold=cfg.anomaly_z),
        journal_sink=cfg.journal_path,
    )
    for actor_id, role, token in cfg.actors:
        kernel.register_actor(actor_id, role, token)
    for kind, level in cfg.kinds.items():
        kernel.register_kind(
            kind,
            level=level,
            confidence_floor=cfg.confidence_floor,
            checkpoint_timeout_ms=cfg.checkpoint_timeout_ms,
            spot_check_rate=cfg.spot_check_rate,
        )
    return kernel


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="agentgov-serve")
    parser.add_argument("--config", required=True, help="path to the INI config file")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except errors.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        kernel = build_kernel(cfg)
    except (OSError, errors.StorageFailure) as exc:
        print(f"storage failure: {exc}", file=sys.stderr)
        return 2
    except errors.GovernanceError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    import uvicorn

    app = create_app(
        kernel,
        heartbeat_s=cfg.heartbeat_s,
        tick_s=cfg.tick_s,
        frontend_dir=cfg.frontend_dir,
    )
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="info")
    return 0


if __name__ == "__main__":
    sys.exit(main())
