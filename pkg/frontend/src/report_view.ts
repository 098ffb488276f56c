import type { ReportPayload } from "./types.js";

export const ABSENT = "-";

// Display rounding only; every number shown comes from the payload.
export function formatScore(value: number): string {
  return value.toFixed(2);
}

export function isReportPayload(value: unknown): value is ReportPayload {
  if (typeof value !== "object" || value === null) return false;
  const candidate = value as Record<string, unknown>;
  return (
    Array.isArray(candidate.models) &&
    Array.isArray(candidate.criteria) &&
    typeof candidate.cells === "object" &&
    candidate.cells !== null &&
    typeof candidate.overall_rank === "object" &&
    candidate.overall_rank !== null &&
    typeof candidate.figure === "object" &&
    candidate.figure !== null &&
    Array.isArray((candidate.figure as Record<string, unknown>).series)
  );
}

export function rowOrder(report: ReportPayload): string[] {
  const unranked = report.models.length + 1;
  return [...report.models].sort((a, b) => {
    const ra = report.overall_rank[a] ?? unranked;
    const rb = report.overall_rank[b] ?? unranked;
    if (ra !== rb) return ra - rb;
    return a < b ? -1 : a > b ? 1 : 0;
  });
}

export function renderReportTable(report: ReportPayload): HTMLTableElement {
  const table = document.createElement("table");
  table.className = "report-table";

  const head = table.createTHead().insertRow();
  for (const title of ["Model", ...report.criteria, "Rank"]) {
    const th = document.createElement("th");
    th.textContent = title;
    head.appendChild(th);
  }

  const body = table.createTBody();
  for (const model of rowOrder(report)) {
    const row = body.insertRow();
    row.dataset.model = model;
    row.insertCell().textContent = model;
    for (const criterion of report.criteria) {
      const value = report.cells[model]?.[criterion];
      const cell = row.insertCell();
      cell.dataset.criterion = criterion;
      cell.textContent = value === undefined ? ABSENT : formatScore(value);
    }
    const rank = report.overall_rank[model];
    const rankCell = row.insertCell();
    rankCell.className = "rank";
    rankCell.textContent = rank === undefined ? ABSENT : String(rank);
  }
  return table;
}

export function renderReportChart(report: ReportPayload): HTMLElement {
  const chart = document.createElement("div");
  chart.className = "report-chart";
  for (const series of report.figure.series) {
    const group = document.createElement("div");
    group.className = "chart-group";
    group.dataset.criterion = series.criterion;

    const label = document.createElement("div");
    label.className = "chart-label";
    label.textContent = series.criterion;
    group.appendChild(label);

    const bars = document.createElement("div");
    bars.className = "chart-bars";
    for (const point of series.points) {
      const bar = document.createElement("div");
      bar.className = "chart-bar";
      bar.dataset.model = point.model;
      // payload values are already normalized; no client renormalization
      bar.style.height = `${point.value * 100}%`;
      bar.title = `${point.model}: ${formatScore(point.raw)}`;
      bars.appendChild(bar);
    }
    group.appendChild(bars);
    chart.appendChild(group);
  }
  return chart;
}

export function renderReportView(payload: unknown): HTMLElement {
  const view = document.createElement("div");
  view.className = "report-view";
  if (!isReportPayload(payload)) {
    const panel = document.createElement("div");
    panel.className = "malformed-report";
    panel.textContent = "Malformed report payload.";
    view.appendChild(panel);
    return view;
  }
  view.appendChild(renderReportTable(payload));
  view.appendChild(renderReportChart(payload));
  return view;
}
