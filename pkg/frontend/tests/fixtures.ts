import type { ReportPayload } from "../src/types.js";

// MT-Bench scores of six published chat models, in rank order.
export const MT_BENCH_RANKING: Array<[string, number]> = [
  ["Qwen 1.5 72B Chat", 8.347],
  ["Mixtral 8x7B Instruct", 8.2],
  ["Yi 34B Chat", 7.641],
  ["Mistral 7B Instruct", 7.6],
  ["Solar 10.7B Instruct", 7.58],
  ["Llama 2 70B Chat", 7.142],
];

export function mtBenchReport(): ReportPayload {
  const top = MT_BENCH_RANKING[0][1];
  const models = MT_BENCH_RANKING.map(([m]) => m);
  const cells: Record<string, Record<string, number>> = {};
  const perRank: Record<string, Record<string, number>> = {};
  const overall: Record<string, number> = {};
  MT_BENCH_RANKING.forEach(([model, score], i) => {
    cells[model] = { mt_bench: score };
    perRank[model] = { mt_bench: i + 1 };
    overall[model] = i + 1;
  });
  return {
    // selection order deliberately differs from rank order
    models: [...models].sort(),
    criteria: ["mt_bench"],
    cells,
    per_criterion_rank: perRank,
    overall_rank: overall,
    figure: {
      kind: "grouped_bar",
      normalization: "per_criterion_max",
      series: [
        {
          criterion: "mt_bench",
          points: MT_BENCH_RANKING.map(([model, score]) => ({
            model,
            value: score / top,
            raw: score,
          })),
        },
      ],
    },
  };
}

export function singleCellReport(): ReportPayload {
  return {
    models: ["Yi 34B Chat"],
    criteria: ["mt_bench"],
    cells: { "Yi 34B Chat": { mt_bench: 7.641 } },
    per_criterion_rank: { "Yi 34B Chat": { mt_bench: 1 } },
    overall_rank: { "Yi 34B Chat": 1 },
    figure: {
      kind: "grouped_bar",
      normalization: "per_criterion_max",
      series: [
        {
          criterion: "mt_bench",
          points: [{ model: "Yi 34B Chat", value: 1.0, raw: 7.641 }],
        },
      ],
    },
  };
}
