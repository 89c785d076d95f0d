/**
 * Round-trip against the real backend: spawns `agentgov-serve`, drives an
 * agent session as an external client, then exercises the console's own
 * API client and store exactly as the views do.
 */

import { ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, ApiRequestError } from "../src/api.js";
import { ConsoleStore } from "../src/store.js";
import type { EventFrame } from "../src/types.js";

const PORT = 8500 + (process.pid % 400);
const BASE = `http://127.0.0.1:${PORT}`;
const OPS_TOKEN = "tok-ops";
const BOT_TOKEN = "tok-bot";

const CONFIG = `
[server]
host = 127.0.0.1
port = ${PORT}
tick_s = 0.2

[actors]
ops = operator:${OPS_TOKEN}
ann = approver:tok-ann
bot = agent:${BOT_TOKEN}

[kinds]
group_email = 2
`;

let server: ChildProcess;

async function botFetch(path: string, body: unknown, token = BOT_TOKEN): Promise<any> {
  const resp = await fetch(BASE + path, {
    method: "POST",
    headers: { Authorization: `Bearer ${token}`, "Content-Type": "application/json" },
    body: JSON.stringify(body),
  });
  if (!resp.ok) throw new Error(`${path} -> ${resp.status}: ${await resp.text()}`);
  return resp.json();
}

async function waitForHealth(): Promise<void> {
  for (let i = 0; i < 100; i++) {
    try {
      const resp = await fetch(`${BASE}/healthz`);
      if (resp.ok) return;
    } catch {
      /* not up yet */
    }
    await new Promise((r) => setTimeout(r, 150));
  }
  throw new Error("backend did not come up");
}

beforeAll(async () => {
  const dir = mkdtempSync(join(tmpdir(), "agentgov-console-"));
  const cfgPath = join(dir, "service.ini");
  writeFileSync(cfgPath, CONFIG);
  server = spawn("agentgov-serve", ["--config", cfgPath], { stdio: "ignore" });
  await waitForHealth();
}, 30_000);

afterAll(() => {
  server?.kill();
});

describe("console round-trip against the live backend", () => {
  it("resolving through the inbox flips the agent within one event frame, and dashboard bytes match /metrics", async () => {
    // Sign-in lifecycle exactly as the app does it: load, then stream live.
    const console_ = new ConsoleStore(new ApiClient(BASE, OPS_TOKEN));
    await console_.refresh();
    const frames: EventFrame[] = [];
    const stream = console_.api.streamEvents(console_.cursor + 1, (frame) => {
      frames.push(frame);
      console_.applyFrame(frame);
    });
    const untilStore = async (cond: () => boolean) => {
      for (let i = 0; i < 100 && !cond(); i++) {
        await new Promise((r) => setTimeout(r, 50));
      }
      expect(cond()).toBe(true);
    };

    // An external agent session reaches a high-risk checkpoint.
    const created = await botFetch(
      "/agents",
      {
        agent_kind: "group_email",
        scope: "release announcement",
        objectives: ["notify staff"],
        agent_actor: "bot",
      },
      OPS_TOKEN,
    );
    const instanceId: string = created.instance_id;
    await botFetch(`/agents/${instanceId}/launch`, {});
    const action = await botFetch(`/agents/${instanceId}/actions`, {
      action_kind: "legal_review",
      risk_class: "high",
      confidence: 0.92,
    });
    expect(action.obligation).toBe("await_approval");

    // The live inbox projection shows exactly this pending item.
    await untilStore(() => console_.pending.has(action.checkpoint_id));
    expect(console_.pendingSorted().map((c) => c.checkpoint_id)).toEqual([
      action.checkpoint_id,
    ]);
    expect(console_.agents.get(instanceId)!.state).toBe("awaiting_human");

    // Resolve through the console API (what the inbox button calls).
    const cursorAtResolve = console_.cursor;
    await console_.api.resolveCheckpoint(action.checkpoint_id, "proceed", "looks fine");

    const transitionsAfter = () =>
      frames.filter(
        (f) =>
          f.seq > cursorAtResolve &&
          f.kind === "record" &&
          f.payload.instance_id === instanceId &&
          f.payload.kind === "state_transition",
      );
    await untilStore(() => transitionsAfter().length > 0);
    stream.stop();

    // Within one frame: the first state-transition frame after resolving IS
    // the awaiting_human -> active move, and the chip follows it.
    const first = transitionsAfter()[0];
    expect(first.payload.payload.event).toBe("resolve_proceed");
    expect(first.payload.payload.from_state).toBe("awaiting_human");
    expect(first.payload.payload.to_state).toBe("active");
    expect(console_.agents.get(instanceId)!.state).toBe("active");
    expect(console_.pending.has(action.checkpoint_id)).toBe(false);

    // Finish the session, then check dashboard render parity byte for byte.
    await botFetch(`/agents/${instanceId}/progress`, {
      entry: "outcome",
      action_id: action.action_id,
      status: "executed",
    });
    await botFetch(`/agents/${instanceId}/finish`, { summary: "sent" });

    const asOf = Date.now() + 60_000;
    const viaConsole = await console_.api.metricsSnapshotRaw(asOf);
    const independent = await (
      await fetch(`${BASE}/metrics/snapshot?as_of=${asOf}`, {
        headers: { Authorization: `Bearer ${OPS_TOKEN}` },
      })
    ).text();
    expect(viaConsole.raw).toBe(independent); // byte-identical JSON
    expect(viaConsole.snapshot.engagement.checkpoints_opened).toBeGreaterThan(0);
  }, 30_000);

  it("a losing resolver sees the winning resolution as AlreadyResolved", async () => {
    const api = new ApiClient(BASE, OPS_TOKEN);
    const created = await botFetch(
      "/agents",
      { agent_kind: "group_email", scope: "s", objectives: ["o"], agent_actor: "bot" },
      OPS_TOKEN,
    );
    await botFetch(`/agents/${created.instance_id}/launch`, {});
    const action = await botFetch(`/agents/${created.instance_id}/actions`, {
      action_kind: "legal_review",
      risk_class: "high",
      confidence: 0.9,
    });
    await api.resolveCheckpoint(action.checkpoint_id, "proceed", "first");
    try {
      await api.resolveCheckpoint(action.checkpoint_id, "deny_and_replan", "late");
      expect.unreachable("second conflicting resolve must fail");
    } catch (err) {
      expect(err).toBeInstanceOf(ApiRequestError);
      const apiErr = err as ApiRequestError;
      expect(apiErr.body.error).toBe("AlreadyResolved");
      expect(apiErr.body.resolution?.directive).toBe("proceed");
    }
  }, 30_000);

  it("agent tokens cannot open the console event stream", async () => {
    const agentApi = new ApiClient(BASE, BOT_TOKEN);
    const failure = new Promise<unknown>((resolve) => {
      agentApi.streamEvents(0, () => {}, (err) => resolve(err));
    });
    const err = await failure;
    expect(err).toBeInstanceOf(ApiRequestError);
    expect((err as ApiRequestError).status).toBe(403);
  }, 15_000);

  it("reconnecting from the cursor replays no duplicates", async () => {
    const api = new ApiClient(BASE, OPS_TOKEN);
    const first: EventFrame[] = [];
    const h1 = api.streamEvents(0, (f) => first.push(f), undefined, 3);
    await h1.done;
    expect(first).toHaveLength(3);
    const next: EventFrame[] = [];
    const h2 = api.streamEvents(first.at(-1)!.seq + 1, (f) => next.push(f), undefined, 2);
    await h2.done;
    const seen = new Set(first.map((f) => f.seq));
    expect(next.every((f) => !seen.has(f.seq))).toBe(true);
  }, 15_000);
});
