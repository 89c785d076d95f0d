/** Console shell: token sign-in, tab navigation, event-stream lifecycle
 * with cursor-resumed reconnects, and a stale-data banner while offline. */

import { ApiClient } from "./api.js";
import { ConsoleStore } from "./store.js";
import { DashboardState, loadDashboard, renderDashboard } from "./views/dashboard.js";
import { renderInbox } from "./views/inbox.js";
import { renderTimeline } from "./views/timeline.js";
import { renderQueryPanel } from "./views/query.js";

type Tab = "inbox" | "agents" | "dashboard" | "timeline";

interface AppState {
  store: ConsoleStore | null;
  tab: Tab;
  timelineInstance: string | null;
  dashboard: DashboardState | null;
  stale: boolean;
  stop: (() => void) | null;
}

const state: AppState = {
  store: null,
  tab: "inbox",
  timelineInstance: null,
  dashboard: null,
  stale: false,
  stop: null,
};

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

async function signIn(baseUrl: string, token: string): Promise<void> {
  const api = new ApiClient(baseUrl, token);
  const store = new ConsoleStore(api);
  await store.refresh(); // also validates the token
  state.store = store;
  store.onChange(() => render());
  connectStream();
  el("login").hidden = true;
  el("shell").hidden = false;
  render();
}

function connectStream(): void {
  const store = state.store;
  if (!store) return;
  state.stop?.();
  const handle = store.api.streamEvents(
    store.cursor + 1,
    (frame) => {
      state.stale = false;
      const changed = store.applyFrame(frame);
      if (changed && state.tab === "dashboard") void refreshDashboard();
      if (
        changed &&
        state.tab === "timeline" &&
        state.timelineInstance &&
        frame.kind === "record" &&
        frame.payload.instance_id === state.timelineInstance
      ) {
        render();
      }
    },
    () => {
      state.stale = true;
      render();
      setTimeout(connectStream, 2000); // resume from store.cursor + 1
    },
  );
  state.stop = handle.stop;
}

async function refreshDashboard(): Promise<void> {
  if (!state.store) return;
  state.dashboard = await loadDashboard(state.store);
  if (state.tab === "dashboard") render();
}

function render(): void {
  const store = state.store;
  if (!store) return;
  const main = el("view");
  for (const tab of ["inbox", "agents", "dashboard"] as const) {
    el(`tab-${tab}`).classList.toggle("active", state.tab === tab);
  }
  el("notices").innerHTML = store.notices
    .slice(-3)
    .map((n) => `<div class="banner ${n.kind}">${n.text}</div>`)
    .join("");

  if (state.tab === "inbox") {
    renderInbox(main, store);
  } else if (state.tab === "agents") {
    renderQueryPanel(main, store, "", (instanceId) => {
      state.tab = "timeline";
      state.timelineInstance = instanceId;
      render();
    });
  } else if (state.tab === "dashboard") {
    if (state.dashboard) {
      renderDashboard(main, store, state.dashboard, state.stale);
    } else {
      void refreshDashboard();
    }
  } else if (state.tab === "timeline" && state.timelineInstance) {
    void renderTimeline(main, store, state.timelineInstance);
  }
}

export function boot(): void {
  el("login-form").addEventListener("submit", async (ev) => {
    ev.preventDefault();
    const base = (el("base-url") as HTMLInputElement).value.replace(/\/$/, "");
    const token = (el("token") as HTMLInputElement).value;
    try {
      await signIn(base, token);
    } catch (err) {
      el("login-error").textContent = `sign-in failed: ${(err as Error).message}`;
    }
  });
  for (const tab of ["inbox", "agents", "dashboard"] as const) {
    el(`tab-${tab}`).addEventListener("click", () => {
      state.tab = tab;
      render();
    });
  }
}

if (typeof document !== "undefined" && document.getElementById("login-form")) {
  boot();
}
