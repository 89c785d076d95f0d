/** Wire types mirroring the kernel's JSON bodies. */

export type LifecycleState =
  | "initiated"
  | "active"
  | "awaiting_human"
  | "suspended"
  | "aborted"
  | "finished";

export type Directive =
  | "proceed"
  | "proceed_with_modification"
  | "deny_and_replan"
  | "abort";

export interface AgentInstance {
  instance_id: string;
  agent_kind: string;
  scope: string;
  objectives: string[];
  owner: string;
  agent_actor: string | null;
  state: LifecycleState;
  autonomy_level: number;
  created_at: number;
  updated_at: number;
  output_summary: string | null;
}

export interface Resolution {
  directive: Directive;
  modification: Record<string, unknown> | null;
  note: string;
  resolver: string;
  resolved_at: number;
}

export interface Checkpoint {
  checkpoint_id: string;
  instance_id: string;
  action_id: string | null;
  action_kind: string;
  description: string;
  risk_class: "low" | "medium" | "high" | "critical";
  confidence: number;
  payload_preview: Record<string, unknown>;
  question: string;
  options: { directive: Directive; label: string }[];
  opened_at: number;
  timeout_ms: number;
  status: "pending" | "resolved" | "expired";
  resolution: Resolution | null;
}

export interface JournalRecord {
  seq: number;
  instance_id: string;
  kind:
    | "state_transition"
    | "work_progress"
    | "hitl"
    | "decision"
    | "autonomy"
    | "anomaly";
  actor: string;
  timestamp: number;
  payload: Record<string, any>;
  prev_hash: string;
  record_hash: string;
}

export interface MetricsSnapshot {
  as_of: number;
  state_distribution: Record<string, number>;
  intervention_frequency: Record<string, number>;
  engagement: Record<string, number>;
  resolution_latency: Record<string, number>;
  autonomy_distribution: Record<string, number>;
  anomaly_count: number;
  adoption_series: [number, number][];
}

export interface AnalysisReport {
  chart_id: string;
  narrative: string;
  findings: { metric: string; direction: string; magnitude: number }[];
  generated_from: string;
}

export interface EventFrame {
  seq: number;
  kind: "record" | "escalation" | "notify" | "gap";
  emitted_at: number;
  payload: Record<string, any>;
}

export interface ApiError {
  error: string;
  detail: string;
  status?: string;
  resolution?: Resolution;
}
