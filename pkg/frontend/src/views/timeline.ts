/** Activity timeline: every journal record of one instance in seq order,
 * with a state-chip ribbon. Content mirrors GET /agents/{id}/journal; new
 * records appear live via the event stream (the app re-renders on frames
 * for the selected instance). */

import { ConsoleStore } from "../store.js";
import type { JournalRecord } from "../types.js";

export function describeRecord(record: JournalRecord): string {
  const p = record.payload;
  switch (record.kind) {
    case "state_transition":
      return p.event === "create"
        ? `created (${p.agent_kind}, autonomy ${p.autonomy_level})`
        : `${p.event}: ${p.from_state} -> ${p.to_state}${p.reason ? ` (${p.reason})` : ""}`;
    case "work_progress":
      if (p.entry === "action") {
        return `action ${p.action_kind} [${p.risk_class}] -> ${p.gate?.decision ?? "?"}`;
      }
      if (p.entry === "outcome") return `outcome ${p.action_id}: ${p.status}`;
      return `progress: ${p.note}`;
    case "hitl":
      if (p.phase === "open") return `checkpoint ${p.checkpoint_id} opened: ${p.question}`;
      if (p.phase === "resolve")
        return `checkpoint ${p.checkpoint_id} resolved: ${p.resolution.directive} by ${p.resolution.resolver}`;
      return `checkpoint ${p.checkpoint_id} expired (${p.reason})`;
    case "decision":
      return `decision ${p.decision_id}: ${p.chosen} (confidence ${p.confidence})`;
    case "autonomy":
      return `autonomy ${p.from_level} -> ${p.to_level} approved by ${p.approved_by ?? "-"}`;
    case "anomaly":
      return p.phase === "raised"
        ? `anomaly ${p.signal_id}: ${p.metric} observed ${p.observed}`
        : `anomaly ${p.signal_id}: ${p.phase}`;
  }
}

export function stateRibbon(records: JournalRecord[]): string[] {
  return records
    .filter((r) => r.kind === "state_transition")
    .map((r) => r.payload.to_state as string);
}

export async function renderTimeline(
  root: HTMLElement,
  store: ConsoleStore,
  instanceId: string,
): Promise<void> {
  root.innerHTML = `<h2>Timeline · ${instanceId}</h2>`;
  let records: JournalRecord[];
  try {
    records = (await store.api.getJournal(instanceId)).records;
  } catch {
    root.innerHTML += `<p class="muted">No such instance: ${instanceId}</p>`;
    return;
  }

  const ribbon = document.createElement("div");
  ribbon.className = "ribbon";
  ribbon.innerHTML = stateRibbon(records)
    .map((state) => `<span class="chip state-${state}">${state}</span>`)
    .join("<span class='muted'> → </span>");
  root.appendChild(ribbon);

  const list = document.createElement("ol");
  list.className = "timeline";
  for (const record of records) {
    const item = document.createElement("li");
    item.className = `rec rec-${record.kind}`;
    const when = new Date(record.timestamp).toISOString().replace("T", " ").slice(0, 19);
    item.innerHTML =
      `<span class="seq">#${record.seq}</span>` +
      `<span class="when">${when}</span>` +
      `<span class="actor">${record.actor}</span>` +
      `<span class="what"></span>`;
    (item.querySelector(".what") as HTMLElement).textContent = describeRecord(record);
    list.appendChild(item);
  }
  root.appendChild(list);
}
