"""HTTP boundary: auth, role safety, endpoint/journal parity, SSE stream."""

import json

import pytest
from fastapi.testclient import TestClient

from agentgov import AutonomyLevel, GovernanceKernel, ManualClock, Role
from agentgov.api import create_app

from conftest import START_MS

OPS = {"Authorization": "Bearer tok-ops"}
ANN = {"Authorization": "Bearer tok-ann"}
ROOT = {"Authorization": "Bearer tok-root"}
BOT = {"Authorization": "Bearer tok-bot"}


@pytest.fixture
def kernel():
    k = GovernanceKernel(clock=ManualClock(START_MS))
    k.register_actor("ops", Role.OPERATOR, "tok-ops")
    k.register_actor("ann", Role.APPROVER, "tok-ann")
    k.register_actor("root", Role.ADMIN, "tok-root")
    k.register_actor("bot", Role.AGENT, "tok-bot")
    k.register_kind("group_email", level=AutonomyLevel.COLLABORATIVE)
    k.register_kind("payment", level=AutonomyLevel.SUPERVISED)
    return k


@pytest.fixture
def client(kernel):
    with TestClient(create_app(kernel, heartbeat_s=0.2)) as c:
        yield c


def _create_agent(client, agent_actor="bot", kind="group_email"):
    body = {
        "agent_kind": kind,
        "scope": "coordinate the quarterly all-hands email",
        "objectives": ["inform every employee"],
        "agent_actor": agent_actor,
    }
    resp = client.post("/agents", json=body, headers=OPS)
    assert resp.status_code == 201, resp.text
    return resp.json()["instance_id"]


def _launched_agent(client):
    instance_id = _create_agent(client)
    assert client.post(f"/agents/{instance_id}/launch", headers=BOT).status_code == 200
    return instance_id


def _report_action(client, instance_id, risk="high", confidence=0.9, kind="legal_review"):
    return client.post(
        f"/agents/{instance_id}/actions",
        json={"action_kind": kind, "risk_class": risk, "confidence": confidence},
        headers=BOT,
    )


class TestAuth:
    def test_missing_token(self, client):
        assert client.get("/agents").status_code == 401

    def test_unknown_token(self, client):
        resp = client.get("/agents", headers={"Authorization": "Bearer nope"})
        assert resp.status_code == 401

    def test_valid_token(self, client):
        assert client.get("/agents", headers=OPS).status_code == 200

    def test_agent_token_on_human_endpoint(self, client):
        assert client.get("/checkpoints", headers=BOT).status_code == 403

    def test_healthz_is_open(self, client):
        assert client.get("/healthz").status_code == 200


class TestRoleSafety:
    """Agents can never resolve checkpoints, approve autonomy, or steer
    lifecycles; humans can never report agent work."""

    def test_agent_forbidden_everywhere_human(self, client):
        instance_id = _launched_agent(client)
        cases = [
            ("POST", "/checkpoints/cp-1/resolve", {"directive": "proceed"}),
            ("POST", "/autonomy/changes", {"agent_kind": "payment", "to_level": 4}),
            ("POST", "/autonomy/changes/chg-1/approve", None),
            ("POST", f"/agents/{instance_id}/resume", None),
            ("POST", f"/agents/{instance_id}/abort", {"reason": "x"}),
            ("POST", f"/agents/{instance_id}/suspend", {"reason": "x"}),
            ("POST", "/agents", {"agent_kind": "payment", "scope": "s", "objectives": ["o"]}),
            ("GET", "/metrics/snapshot", None),
            ("POST", "/reports/engagement", {}),
            ("GET", "/events", None),
            ("POST", "/spotchecks", {"seed": 1}),
            ("POST", "/anomalies/sig-1/clear", None),
        ]
        for method, path, body in cases:
            resp = client.request(method, path, json=body, headers=BOT)
            assert resp.status_code == 403, (method, path, resp.status_code)

    def test_humans_cannot_report_agent_work(self, client):
        instance_id = _launched_agent(client)
        for headers in (OPS, ANN, ROOT):
            resp = client.post(
                f"/agents/{instance_id}/actions",
                json={"action_kind": "x", "risk_class": "low", "confidence": 0.9},
                headers=headers,
            )
            assert resp.status_code == 403

    def test_approver_cannot_abort_via_resolution(self, client):
        instance_id = _launched_agent(client)
        cp = _report_action(client, instance_id).json()["checkpoint_id"]
        resp = client.post(
            f"/checkpoints/{cp}/resolve",
            json={"directive": "abort", "note": "no"},
            headers=ANN,
        )
        assert resp.status_code == 403


class TestEndpointJournalParity:
    def test_every_successful_mutation_journals(self, client, kernel):
        def record_count():
            return len(kernel.store.all_records())

        before = record_count()
        instance_id = _create_agent(client)
        assert record_count() == before + 1

        before = record_count()
        client.post(f"/agents/{instance_id}/launch", headers=BOT)
        assert record_count() == before + 1

        before = record_count()
        resp = _report_action(client, instance_id)  # opens a checkpoint
        assert resp.status_code == 200
        assert record_count() >= before + 2  # action + transition + hitl open

        cp = resp.json()["checkpoint_id"]
        before = record_count()
        resp = client.post(
            f"/checkpoints/{cp}/resolve", json={"directive": "proceed"}, headers=OPS
        )
        assert resp.status_code == 200
        assert record_count() >= before + 2  # transition + hitl resolve

        before = record_count()
        client.post(
            f"/agents/{instance_id}/progress",
            json={"entry": "outcome", "action_id": "act-000001", "status": "executed"},
            headers=BOT,
        )
        assert record_count() == before + 1

        before = record_count()
        client.post(
            f"/agents/{instance_id}/finish", json={"summary": "done"}, headers=BOT
        )
        assert record_count() == before + 1


class TestAgentFlow:
    def test_full_flow_over_http(self, client):
        instance_id = _launched_agent(client)

        low = _report_action(client, instance_id, risk="low", kind="draft").json()
        assert low["obligation"] == "proceed_with_notify"  # collaborative x low

        high = _report_action(client, instance_id).json()
        assert high["obligation"] == "await_approval"
        cp_id = high["checkpoint_id"]

        inbox = client.get("/checkpoints", params={"status": "pending"}, headers=OPS)
        assert [c["checkpoint_id"] for c in inbox.json()["checkpoints"]] == [cp_id]

        resolve = client.post(
            f"/checkpoints/{cp_id}/resolve",
            json={"directive": "proceed", "note": "fine"},
            headers=ANN,
        )
        assert resolve.status_code == 200
        assert resolve.json()["instance_state"] == "active"

        outcome = client.post(
            f"/agents/{instance_id}/progress",
            json={"entry": "outcome", "action_id": high["action_id"], "status": "executed"},
            headers=BOT,
        )
        assert outcome.status_code == 200

        finish = client.post(
            f"/agents/{instance_id}/finish", json={"summary": "sent"}, headers=BOT
        )
        assert finish.json()["state"] == "finished"

        journal = client.get(f"/agents/{instance_id}/journal", headers=OPS).json()
        kinds = [r["kind"] for r in journal["records"]]
        assert "state_transition" in kinds and "work_progress" in kinds and "hitl" in kinds

        verify = client.get(f"/agents/{instance_id}/journal/verify", headers=OPS)
        assert verify.json() == {"valid": True, "first_bad_seq": None}

    def test_action_on_suspended_instance_conflicts(self, client):
        instance_id = _launched_agent(client)
        client.post(
            f"/agents/{instance_id}/suspend", json={"reason": "drill"}, headers=OPS
        )
        resp = _report_action(client, instance_id, risk="low")
        assert resp.status_code == 409

    def test_suspend_resume_round_trip(self, client):
        instance_id = _launched_agent(client)
        assert client.post(
            f"/agents/{instance_id}/suspend", json={"reason": "drill"}, headers=OPS
        ).json()["state"] == "suspended"
        assert client.post(
            f"/agents/{instance_id}/resume", headers=OPS
        ).json()["state"] == "active"

    def test_unknown_instance_404(self, client):
        assert client.get("/agents/ghost", headers=OPS).status_code == 404

    def test_decision_endpoint(self, client):
        instance_id = _launched_agent(client)
        resp = client.post(
            f"/agents/{instance_id}/decisions",
            json={
                "chosen": "draft v1",
                "confidence": 0.9,
                "produced_artifacts": ["draft:1"],
            },
            headers=BOT,
        )
        assert resp.status_code == 200
        trace = client.get("/trace/draft:1", headers=OPS)
        assert trace.status_code == 200
        assert trace.json()["steps"][0]["chosen"] == "draft v1"

    def test_agent_query_filter(self, client):
        _launched_agent(client)
        _create_agent(client, kind="payment")
        hits = client.get("/agents", params={"query": "payment"}, headers=OPS).json()
        assert len(hits["agents"]) == 1
        empty = client.get("/agents", params={"query": "zebra"}, headers=OPS).json()
        assert empty["agents"] == []


class TestDedup:
    def test_replayed_post_returns_original(self, client, kernel):
        body = {
            "agent_kind": "group_email",
            "scope": "s",
            "objectives": ["o"],
        }
        headers = {**OPS, "X-Dedup-Key": "create-1"}
        first = client.post("/agents", json=body, headers=headers)
        second = client.post("/agents", json=body, headers=headers)
        assert first.status_code == second.status_code == 201
        assert first.json()["instance_id"] == second.json()["instance_id"]
        assert second.headers.get("X-Dedup-Replay") == "1"
        assert len(kernel.instances()) == 1


class TestMetricsEndpoints:
    def test_snapshot_matches_kernel_bytes(self, client, kernel):
        _launched_agent(client)
        as_of = kernel.clock.now_ms()
        http = client.get("/metrics/snapshot", params={"as_of": as_of}, headers=OPS)
        assert http.json() == kernel.metrics_snapshot(as_of).to_dict()

    def test_timeseries_endpoint(self, client, kernel):
        _launched_agent(client)
        start = kernel.store.all_records()[0].timestamp
        end = kernel.clock.now_ms() + 1
        resp = client.get(
            "/metrics/timeseries",
            params={"metric": "instances_created", "bucket_ms": end - start,
                    "start": start, "end": end},
            headers=OPS,
        )
        assert resp.json()["series"][0][1] == 1

    def test_report_endpoint_deterministic(self, client, kernel):
        _launched_agent(client)
        as_of = kernel.clock.now_ms()
        a = client.post("/reports/engagement", json={"as_of": as_of}, headers=OPS)
        b = client.post("/reports/engagement", json={"as_of": as_of}, headers=OPS)
        assert a.content == b.content
        assert a.json()["chart_id"] == "engagement"

    def test_unknown_chart_404(self, client):
        assert client.post("/reports/nope", json={}, headers=OPS).status_code == 404


class TestAutonomyEndpoints:
    def _make_eligible(self, client, kernel):
        for _ in range(50):
            iid = _create_agent(client, kind="payment")
            client.post(f"/agents/{iid}/launch", headers=BOT)
            client.post(f"/agents/{iid}/finish", json={"summary": "ok"}, headers=BOT)

    def test_request_requires_eligibility(self, client):
        resp = client.post(
            "/autonomy/changes",
            json={"agent_kind": "payment", "to_level": 4},
            headers=OPS,
        )
        assert resp.status_code == 409
        assert resp.json()["error"] == "NotEligible"

    def test_full_promotion_flow(self, client, kernel):
        self._make_eligible(client, kernel)
        request = client.post(
            "/autonomy/changes",
            json={"agent_kind": "payment", "to_level": 4, "note": "earned"},
            headers=OPS,
        ).json()
        assert request["status"] == "pending"
        pending = client.get("/autonomy/changes", headers=OPS).json()["pending"]
        assert len(pending) == 1
        approve = client.post(
            f"/autonomy/changes/{request['change_id']}/approve", headers=ANN
        )
        assert approve.status_code == 200
        levels = client.get("/autonomy/levels", headers=OPS).json()["levels"]
        assert levels["payment"] == 4

    def test_operator_cannot_approve(self, client, kernel):
        self._make_eligible(client, kernel)
        request = client.post(
            "/autonomy/changes",
            json={"agent_kind": "payment", "to_level": 4},
            headers=OPS,
        ).json()
        resp = client.post(
            f"/autonomy/changes/{request['change_id']}/approve", headers=OPS
        )
        assert resp.status_code == 403

    def test_eligibility_endpoint(self, client):
        resp = client.get("/autonomy/eligibility/payment", headers=OPS)
        assert resp.status_code == 200
        assert resp.json()["eligible"] is False


def _parse_sse(text):
    frames = []
    for block in text.split("\n\n"):
        lines = [l for l in block.strip().splitlines() if l and not l.startswith(":")]
        if not lines:
            continue
        frame = {}
        for line in lines:
            key, _, value = line.partition(": ")
            frame[key] = value
        if "data" in frame:
            frame["data"] = json.loads(frame["data"])
            frames.append(frame)
    return frames


class TestEventStream:
    def test_replay_then_live_frames(self, client, kernel):
        instance_id = _launched_agent(client)  # two records already published
        expected = len(kernel.bus.frames())
        with client.stream(
            "GET", "/events", params={"from_seq": 0, "limit": expected}, headers=OPS
        ) as resp:
            assert resp.status_code == 200
            body = "".join(resp.iter_text())
        frames = _parse_sse(body)
        assert len(frames) == expected
        seqs = [f["data"]["seq"] for f in frames]
        assert seqs == sorted(seqs)
        assert int(frames[0]["id"]) == frames[0]["data"]["seq"]

    def test_event_completeness_record_ids(self, client, kernel):
        instance_id = _launched_agent(client)
        _report_action(client, instance_id, risk="low")
        record_ids = {
            f"{r['instance_id']}:{r['seq']}"
            for r in (rec.to_obj() for rec in kernel.store.all_records())
        }
        frames = kernel.bus.frames()
        streamed = {
            f"{f.payload['instance_id']}:{f.payload['seq']}"
            for f in frames
            if f.kind == "record"
        }
        assert streamed == record_ids

    def test_from_seq_resume_skips_seen(self, client, kernel):
        _launched_agent(client)
        total = len(kernel.bus.frames())
        with client.stream(
            "GET", "/events", params={"from_seq": total - 1, "limit": 1}, headers=OPS
        ) as resp:
            body = "".join(resp.iter_text())
        frames = _parse_sse(body)
        assert len(frames) == 1
        assert frames[0]["data"]["seq"] == total - 1

    def test_agent_token_rejected(self, client):
        assert client.get("/events", headers=BOT).status_code == 403


class TestStaticConsoleMount:
    def test_frontend_served_when_configured(self, kernel, tmp_path):
        (tmp_path / "index.html").write_text("<!doctype html><title>console</title>")
        with TestClient(
            create_app(kernel, heartbeat_s=0.2, frontend_dir=str(tmp_path))
        ) as c:
            resp = c.get("/ui/")
            assert resp.status_code == 200
            assert "console" in resp.text
