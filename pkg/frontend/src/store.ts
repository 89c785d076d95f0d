/** Console session state, rebuilt from the API at any time.
 *
 * The store caches what the views show (agents, pending checkpoints) and
 * keeps it current by applying event-stream frames; closing and reopening
 * the console reproduces identical views from the API alone.
 */

import { ApiClient } from "./api.js";
import type { AgentInstance, Checkpoint, EventFrame, JournalRecord } from "./types.js";

export type StoreListener = (store: ConsoleStore) => void;

export interface Notice {
  kind: "info" | "warn";
  text: string;
  at: number;
}

export class ConsoleStore {
  agents = new Map<string, AgentInstance>();
  pending = new Map<string, Checkpoint>();
  cursor = -1; // highest event seq applied
  connected = false;
  notices: Notice[] = [];
  /** journal seqs seen per instance, so timeline views can append live */
  private listeners: StoreListener[] = [];

  constructor(readonly api: ApiClient) {}

  onChange(fn: StoreListener): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  private emit(): void {
    for (const fn of this.listeners) fn(this);
  }

  notify(kind: Notice["kind"], text: string): void {
    this.notices.push({ kind, text, at: Date.now() });
    if (this.notices.length > 50) this.notices.shift();
    this.emit();
  }

  async refresh(): Promise<void> {
    const [agents, checkpoints] = await Promise.all([
      this.api.listAgents(),
      this.api.listCheckpoints("pending"),
    ]);
    this.agents = new Map(agents.agents.map((a) => [a.instance_id, a]));
    this.pending = new Map(
      checkpoints.checkpoints.map((c) => [c.checkpoint_id, c]),
    );
    this.emit();
  }

  /** Apply one event frame; returns true when the frame changed state the
   * views care about. */
  applyFrame(frame: EventFrame): boolean {
    if (frame.seq >= 0 && frame.seq <= this.cursor) return false;
    if (frame.seq >= 0) this.cursor = frame.seq;

    let dirty = false;
    if (frame.kind === "record") {
      dirty = this.applyRecord(frame.payload as unknown as JournalRecord);
    } else if (frame.kind === "escalation") {
      const p = frame.payload;
      if (p.type === "checkpoint_expired" && this.pending.delete(p.checkpoint_id)) {
        dirty = true;
      }
      this.notify("warn", describeEscalation(p));
      dirty = true;
    } else if (frame.kind === "notify") {
      this.notify(
        "info",
        `auto-proceeded with notice: ${frame.payload.action_kind} on ${frame.payload.instance_id}`,
      );
      dirty = true;
    } else if (frame.kind === "gap") {
      this.notify("warn", "event stream gap: refreshing from the API");
      dirty = true;
    }
    if (dirty) this.emit();
    return dirty;
  }

  private applyRecord(record: JournalRecord): boolean {
    const agent = this.agents.get(record.instance_id);
    if (record.kind === "state_transition") {
      if (agent) {
        agent.state = record.payload.to_state;
        agent.updated_at = record.timestamp;
        return true;
      }
      // A brand-new instance: remember enough for list views until refresh.
      if (record.payload.event === "create") {
        this.agents.set(record.instance_id, {
          instance_id: record.instance_id,
          agent_kind: record.payload.agent_kind ?? "",
          scope: "",
          objectives: [],
          owner: record.payload.owner ?? "",
          agent_actor: null,
          state: record.payload.to_state,
          autonomy_level: record.payload.autonomy_level ?? 0,
          created_at: record.timestamp,
          updated_at: record.timestamp,
          output_summary: null,
        });
        return true;
      }
      return false;
    }
    if (record.kind === "hitl") {
      const cpId = record.payload.checkpoint_id as string;
      if (record.payload.phase === "open") {
        // Minimal checkpoint until refresh() fills in full detail.
        this.pending.set(cpId, {
          checkpoint_id: cpId,
          instance_id: record.instance_id,
          action_id: record.payload.action_id ?? null,
          action_kind: record.payload.question ?? "",
          description: record.payload.question ?? "",
          risk_class: record.payload.risk_class ?? "medium",
          confidence: record.payload.confidence ?? 1,
          payload_preview: {},
          question: record.payload.question ?? "",
          options: record.payload.options ?? [],
          opened_at: record.payload.opened_at ?? record.timestamp,
          timeout_ms: record.payload.timeout_ms ?? 0,
          status: "pending",
          resolution: null,
        });
        return true;
      }
      return this.pending.delete(cpId);
    }
    return record.kind === "anomaly";
  }

  agentsMatching(query: string): AgentInstance[] {
    const q = query.trim().toLowerCase();
    const all = [...this.agents.values()];
    const hits = q
      ? all.filter((a) =>
          `${a.instance_id} ${a.agent_kind} ${a.scope}`.toLowerCase().includes(q),
        )
      : all;
    return hits.sort((a, b) => a.instance_id.localeCompare(b.instance_id));
  }

  pendingSorted(): Checkpoint[] {
    return [...this.pending.values()].sort(
      (a, b) => a.opened_at - b.opened_at || a.checkpoint_id.localeCompare(b.checkpoint_id),
    );
  }
}

export function describeEscalation(p: Record<string, any>): string {
  if (p.type === "checkpoint_expired") {
    return `checkpoint ${p.checkpoint_id} expired (${p.reason}); agent suspended`;
  }
  if (p.type === "anomaly_fallback") {
    return `anomaly on ${p.agent_kind} (${p.metric}): ${p.suspended_instances.length} instance(s) suspended`;
  }
  return `escalation: ${JSON.stringify(p)}`;
}
