/** Pure chart view-models plus a tiny SVG bar renderer.
 *
 * Render parity rule: every number shown comes straight out of the metrics
 * JSON; nothing is recomputed client-side. Rates are displayed with the
 * exact value the API returned, formatted only for the label.
 */

import type { MetricsSnapshot } from "./types.js";

export interface Bar {
  label: string;
  value: number;
  display: string;
}

export interface ChartModel {
  chartId: string;
  title: string;
  bars: Bar[];
}

const STATE_ORDER = [
  "initiated",
  "active",
  "awaiting_human",
  "suspended",
  "aborted",
  "finished",
];

export function stateDistributionModel(snap: MetricsSnapshot): ChartModel {
  return {
    chartId: "state_distribution",
    title: "Lifecycle states",
    bars: STATE_ORDER.map((state) => ({
      label: state,
      value: snap.state_distribution[state] ?? 0,
      display: String(snap.state_distribution[state] ?? 0),
    })),
  };
}

export function interventionModel(snap: MetricsSnapshot): ChartModel {
  const bars = Object.keys(snap.intervention_frequency)
    .sort()
    .map((kind) => ({
      label: kind,
      value: snap.intervention_frequency[kind],
      display: `${formatNumber(snap.intervention_frequency[kind])} / 100 actions`,
    }));
  return { chartId: "intervention_frequency", title: "Intervention frequency", bars };
}

export function engagementModel(snap: MetricsSnapshot): ChartModel {
  const keys = ["approvals", "modifications", "denials", "aborts", "timeouts"];
  const bars = keys.map((key) => ({
    label: key,
    value: snap.engagement[key] ?? 0,
    display: String(snap.engagement[key] ?? 0),
  }));
  bars.push({
    label: "engagement_rate",
    value: snap.engagement.engagement_rate,
    display: formatRate(snap.engagement.engagement_rate),
  });
  bars.push({
    label: "rejection_rate",
    value: snap.engagement.rejection_rate,
    display: formatRate(snap.engagement.rejection_rate),
  });
  return { chartId: "engagement", title: "Human engagement", bars };
}

export function adoptionModel(snap: MetricsSnapshot): ChartModel {
  const bars = snap.adoption_series.map(([day, count]) => ({
    label: new Date(day).toISOString().slice(0, 10),
    value: count,
    display: String(count),
  }));
  return { chartId: "adoption_trend", title: "Adoption (instances per day)", bars };
}

export function allChartModels(snap: MetricsSnapshot): ChartModel[] {
  return [
    stateDistributionModel(snap),
    interventionModel(snap),
    engagementModel(snap),
    adoptionModel(snap),
  ];
}

export function formatNumber(value: number): string {
  return Number.isInteger(value) ? String(value) : value.toPrecision(6).replace(/\.?0+$/, "");
}

export function formatRate(value: number): string {
  return `${(value * 100).toFixed(1)}% (${value})`;
}

/** Minimal dependency-free SVG horizontal bar chart. */
export function barChartSvg(model: ChartModel, width = 420): string {
  const rowH = 22;
  const labelW = 130;
  const max = Math.max(1e-9, ...model.bars.map((b) => b.value));
  const height = model.bars.length * rowH + 6;
  const rows = model.bars
    .map((bar, i) => {
      const y = i * rowH + 4;
      const w = Math.max(1, Math.round(((width - labelW - 150) * bar.value) / max));
      return (
        `<text x="4" y="${y + 13}" class="bar-label">${escapeXml(bar.label)}</text>` +
        `<rect x="${labelW}" y="${y}" width="${w}" height="${rowH - 8}" rx="2"></rect>` +
        `<text x="${labelW + w + 6}" y="${y + 13}" class="bar-value">${escapeXml(bar.display)}</text>`
      );
    })
    .join("");
  return `<svg viewBox="0 0 ${width} ${height}" width="${width}" height="${height}" role="img">${rows}</svg>`;
}

export function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}
