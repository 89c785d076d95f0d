/** Typed client for the kernel's HTTP surface. The console holds no
 * authoritative state: every mutation goes through these calls. */

import { SseFeed } from "./sse.js";
import type {
  AgentInstance,
  AnalysisReport,
  ApiError,
  Checkpoint,
  Directive,
  EventFrame,
  JournalRecord,
  MetricsSnapshot,
} from "./types.js";

export class ApiRequestError extends Error {
  constructor(
    public status: number,
    public body: ApiError,
  ) {
    super(`${body.error}: ${body.detail}`);
  }
}

export interface EventStreamHandle {
  stop: () => void;
  done: Promise<void>;
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private token: string,
  ) {}

  private headers(): Record<string, string> {
    return {
      Authorization: `Bearer ${this.token}`,
      "Content-Type": "application/json",
    };
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const resp = await fetch(this.baseUrl + path, {
      method,
      headers: this.headers(),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await resp.text();
    if (!resp.ok) {
      let parsed: ApiError;
      try {
        parsed = JSON.parse(text) as ApiError;
      } catch {
        parsed = { error: "HttpError", detail: text || resp.statusText };
      }
      throw new ApiRequestError(resp.status, parsed);
    }
    return JSON.parse(text) as T;
  }

  listAgents(query = ""): Promise<{ agents: AgentInstance[] }> {
    const qs = query ? `?query=${encodeURIComponent(query)}` : "";
    return this.request("GET", `/agents${qs}`);
  }

  getAgent(id: string): Promise<AgentInstance> {
    return this.request("GET", `/agents/${id}`);
  }

  getJournal(id: string): Promise<{ records: JournalRecord[] }> {
    return this.request("GET", `/agents/${id}/journal`);
  }

  listCheckpoints(status?: string): Promise<{ checkpoints: Checkpoint[] }> {
    const qs = status ? `?status=${status}` : "";
    return this.request("GET", `/checkpoints${qs}`);
  }

  resolveCheckpoint(
    id: string,
    directive: Directive,
    note = "",
    modification?: Record<string, unknown>,
  ): Promise<{ checkpoint: Checkpoint; instance_state: string }> {
    return this.request("POST", `/checkpoints/${id}/resolve`, {
      directive,
      note,
      modification,
    });
  }

  abortAgent(id: string, reason: string): Promise<{ state: string }> {
    return this.request("POST", `/agents/${id}/abort`, { reason });
  }

  suspendAgent(id: string, reason: string): Promise<{ state: string }> {
    return this.request("POST", `/agents/${id}/suspend`, { reason });
  }

  resumeAgent(id: string): Promise<{ state: string }> {
    return this.request("POST", `/agents/${id}/resume`, {});
  }

  /** Raw body text is kept so the dashboard can prove render parity:
   * the numbers shown are exactly the bytes the API returned. */
  async metricsSnapshotRaw(asOf?: number): Promise<{ raw: string; snapshot: MetricsSnapshot }> {
    const qs = asOf !== undefined ? `?as_of=${asOf}` : "";
    const resp = await fetch(`${this.baseUrl}/metrics/snapshot${qs}`, {
      headers: this.headers(),
    });
    const raw = await resp.text();
    if (!resp.ok) throw new ApiRequestError(resp.status, JSON.parse(raw));
    return { raw, snapshot: JSON.parse(raw) as MetricsSnapshot };
  }

  chartReport(chartId: string, question?: string, asOf?: number): Promise<AnalysisReport> {
    return this.request("POST", `/reports/${chartId}`, {
      question: question ?? null,
      as_of: asOf ?? null,
    });
  }

  /** Subscribe to the server-sent event stream from a cursor. Frames arrive
   * strictly ordered by seq; the caller tracks the cursor for reconnects. */
  streamEvents(
    fromSeq: number,
    onFrame: (frame: EventFrame) => void,
    onDisconnect?: (error?: unknown) => void,
    limit?: number,
  ): EventStreamHandle {
    const controller = new AbortController();
    const feed = new SseFeed();
    const url = new URL(`${this.baseUrl}/events`);
    url.searchParams.set("from_seq", String(fromSeq));
    if (limit !== undefined) url.searchParams.set("limit", String(limit));

    const done = (async () => {
      try {
        const resp = await fetch(url, {
          headers: this.headers(),
          signal: controller.signal,
        });
        if (!resp.ok || !resp.body) {
          throw new ApiRequestError(resp.status, JSON.parse(await resp.text()));
        }
        const reader = resp.body.getReader();
        const decoder = new TextDecoder();
        for (;;) {
          const { done: eof, value } = await reader.read();
          if (eof) break;
          for (const sse of feed.feed(decoder.decode(value, { stream: true }))) {
            onFrame(JSON.parse(sse.data) as EventFrame);
          }
        }
        onDisconnect?.();
      } catch (err) {
        if (!controller.signal.aborted) onDisconnect?.(err);
      }
    })();

    return { stop: () => controller.abort(), done };
  }
}
