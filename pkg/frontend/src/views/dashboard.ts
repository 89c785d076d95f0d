/** Dashboard: four charts straight from one /metrics/snapshot response.
 * Clicking a chart opens its analysis-report panel with a follow-up
 * question box that round-trips to the same report endpoint. */

import { allChartModels, barChartSvg } from "../charts.js";
import { ConsoleStore } from "../store.js";
import type { MetricsSnapshot } from "../types.js";

export interface DashboardState {
  raw: string;            // exact bytes from /metrics/snapshot (parity witness)
  snapshot: MetricsSnapshot;
}

export async function loadDashboard(store: ConsoleStore): Promise<DashboardState> {
  const { raw, snapshot } = await store.api.metricsSnapshotRaw();
  return { raw, snapshot };
}

export function renderDashboard(
  root: HTMLElement,
  store: ConsoleStore,
  state: DashboardState,
  stale: boolean,
): void {
  root.innerHTML = `<h2>Dashboard · as of ${new Date(state.snapshot.as_of).toISOString()}</h2>`;
  if (stale) {
    const banner = document.createElement("div");
    banner.className = "banner warn";
    banner.textContent = "Event stream disconnected: figures may be stale. Reconnecting…";
    root.appendChild(banner);
  }

  const grid = document.createElement("div");
  grid.className = "chart-grid";
  for (const model of allChartModels(state.snapshot)) {
    const panel = document.createElement("section");
    panel.className = "chart card";
    panel.dataset.chartId = model.chartId;
    panel.innerHTML = `<h3>${model.title}</h3>${barChartSvg(model)}`;
    panel.addEventListener("click", () => openReportPanel(root, store, model.chartId));
    grid.appendChild(panel);
  }
  root.appendChild(grid);

  const anomaly = document.createElement("p");
  anomaly.className = "muted";
  anomaly.textContent = `anomaly signals recorded: ${state.snapshot.anomaly_count}`;
  root.appendChild(anomaly);
}

async function openReportPanel(
  root: HTMLElement,
  store: ConsoleStore,
  chartId: string,
): Promise<void> {
  let panel = root.querySelector(".report-panel") as HTMLElement | null;
  if (!panel) {
    panel = document.createElement("aside");
    panel.className = "report-panel card";
    root.appendChild(panel);
  }
  const report = await store.api.chartReport(chartId);
  panel.innerHTML =
    `<h3>Analysis · ${chartId}</h3>` +
    `<pre class="narrative"></pre>` +
    `<form class="followup"><input name="q" placeholder="ask a follow-up question" />` +
    `<button type="submit">Ask</button></form>`;
  (panel.querySelector(".narrative") as HTMLElement).textContent = report.narrative;

  const form = panel.querySelector("form") as HTMLFormElement;
  form.addEventListener("submit", async (ev) => {
    ev.preventDefault();
    const q = (form.elements.namedItem("q") as HTMLInputElement).value;
    if (!q) return;
    const answered = await store.api.chartReport(chartId, q);
    (panel!.querySelector(".narrative") as HTMLElement).textContent = answered.narrative;
  });
}
