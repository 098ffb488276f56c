import { describe, expect, it } from "vitest";

import {
  formatScore,
  renderReportChart,
  renderReportTable,
  renderReportView,
  rowOrder,
} from "../src/report_view.js";
import type { ReportPayload } from "../src/types.js";
import { MT_BENCH_RANKING, mtBenchReport, singleCellReport } from "./fixtures.js";

describe("rowOrder", () => {
  it("orders by overall rank regardless of selection order", () => {
    expect(rowOrder(mtBenchReport())).toEqual(MT_BENCH_RANKING.map(([m]) => m));
  });

  it("puts rankless models last", () => {
    const report = mtBenchReport();
    report.models = [...report.models, "Unranked Base"];
    expect(rowOrder(report).at(-1)).toBe("Unranked Base");
  });
});

describe("renderReportTable", () => {
  it("renders six rows with Qwen ranked first", () => {
    const table = renderReportTable(mtBenchReport());
    const rows = [...table.querySelectorAll("tbody tr")];
    expect(rows).toHaveLength(6);
    expect(rows[0].getAttribute("data-model")).toBe("Qwen 1.5 72B Chat");
    expect(rows[0].querySelector(".rank")?.textContent).toBe("1");
    expect(rows.at(-1)?.getAttribute("data-model")).toBe("Llama 2 70B Chat");
  });

  it("shows payload values rounded to two decimals", () => {
    const report = mtBenchReport();
    const table = renderReportTable(report);
    for (const row of table.querySelectorAll("tbody tr")) {
      const model = row.getAttribute("data-model")!;
      const cell = row.querySelector('[data-criterion="mt_bench"]')!;
      expect(cell.textContent).toBe(formatScore(report.cells[model].mt_bench));
    }
    const qwen = table.querySelector('[data-model="Qwen 1.5 72B Chat"]')!;
    expect(qwen.querySelector('[data-criterion="mt_bench"]')?.textContent).toBe("8.35");
  });

  it("renders '-' for absent cells and ranks", () => {
    const report = mtBenchReport();
    report.models = [...report.models, "Solar 10.7B"];
    const table = renderReportTable(report);
    const row = table.querySelector('[data-model="Solar 10.7B"]')!;
    expect(row.querySelector('[data-criterion="mt_bench"]')?.textContent).toBe("-");
    expect(row.querySelector(".rank")?.textContent).toBe("-");
  });
});

describe("renderReportChart", () => {
  it("uses payload values verbatim as bar heights", () => {
    const report = mtBenchReport();
    const chart = renderReportChart(report);
    const bars = [...chart.querySelectorAll<HTMLElement>(".chart-bar")];
    expect(bars).toHaveLength(6);
    const points = report.figure.series[0].points;
    bars.forEach((bar, i) => {
      expect(bar.style.height).toBe(`${points[i].value * 100}%`);
    });
  });

  it("renders the single-cell report as one full-height bar", () => {
    const chart = renderReportChart(singleCellReport());
    const bars = [...chart.querySelectorAll<HTMLElement>(".chart-bar")];
    expect(bars).toHaveLength(1);
    expect(bars[0].style.height).toBe("100%");
  });
});

describe("renderReportView", () => {
  it("renders table plus chart for a valid payload", () => {
    const view = renderReportView(mtBenchReport());
    expect(view.querySelector(".report-table")).not.toBeNull();
    expect(view.querySelector(".report-chart")).not.toBeNull();
    expect(view.querySelector(".malformed-report")).toBeNull();
  });

  it("shows a malformed panel for schema violations", () => {
    const view = renderReportView({ nonsense: true } as unknown as ReportPayload);
    expect(view.querySelector(".malformed-report")).not.toBeNull();
    expect(view.querySelector(".report-table")).toBeNull();
  });
});
