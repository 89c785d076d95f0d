/** Checkpoint inbox: pending consultations with approve / modify / deny /
 * abort controls. Submitting calls the resolve endpoint; losing a race shows
 * the winning resolution as a notice instead of blocking the operator. */

import { ApiRequestError } from "../api.js";
import { ConsoleStore } from "../store.js";
import type { Checkpoint, Directive } from "../types.js";

const CONTROLS: { directive: Directive; label: string; cls: string }[] = [
  { directive: "proceed", label: "Approve", cls: "ok" },
  { directive: "proceed_with_modification", label: "Approve w/ changes", cls: "ok" },
  { directive: "deny_and_replan", label: "Deny", cls: "warn" },
  { directive: "abort", label: "Abort agent", cls: "danger" },
];

export function renderInbox(root: HTMLElement, store: ConsoleStore): void {
  const pending = store.pendingSorted();
  root.innerHTML = "";
  const heading = document.createElement("h2");
  heading.textContent = `Checkpoint inbox (${pending.length})`;
  root.appendChild(heading);

  if (pending.length === 0) {
    const empty = document.createElement("p");
    empty.className = "muted";
    empty.textContent = "No pending checkpoints. Agents are proceeding within policy.";
    root.appendChild(empty);
    return;
  }
  for (const cp of pending) {
    root.appendChild(checkpointCard(cp, store));
  }
}

function checkpointCard(cp: Checkpoint, store: ConsoleStore): HTMLElement {
  const card = document.createElement("article");
  card.className = `card risk-${cp.risk_class}`;
  card.dataset.checkpointId = cp.checkpoint_id;

  const head = document.createElement("header");
  head.innerHTML =
    `<span class="chip risk">${cp.risk_class}</span>` +
    `<strong>${cp.question}</strong>` +
    `<span class="muted">${cp.instance_id} · confidence ${cp.confidence}</span>`;
  card.appendChild(head);

  const note = document.createElement("input");
  note.placeholder = "note for the journal";
  note.className = "note";
  card.appendChild(note);

  const controls = document.createElement("div");
  controls.className = "controls";
  for (const control of CONTROLS) {
    const button = document.createElement("button");
    button.textContent = control.label;
    button.className = control.cls;
    button.addEventListener("click", async () => {
      button.disabled = true;
      try {
        const modification =
          control.directive === "proceed_with_modification"
            ? { note: note.value || "modified by operator" }
            : undefined;
        await store.api.resolveCheckpoint(
          cp.checkpoint_id,
          control.directive,
          note.value,
          modification,
        );
        // No optimistic removal: the event stream confirms and re-renders.
      } catch (err) {
        if (err instanceof ApiRequestError && err.body.error === "AlreadyResolved") {
          const winner = err.body.resolution;
          store.notify(
            "info",
            winner
              ? `checkpoint ${cp.checkpoint_id} already settled: ${winner.directive} by ${winner.resolver}`
              : `checkpoint ${cp.checkpoint_id} expired before your decision`,
          );
          store.pending.delete(cp.checkpoint_id);
          await store.refresh();
        } else {
          store.notify("warn", `resolve failed: ${(err as Error).message}`);
          button.disabled = false;
        }
      }
    });
    controls.appendChild(button);
  }
  card.appendChild(controls);
  return card;
}
