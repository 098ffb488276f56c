"""Score aggregation and report generation.

Builds a table of (model, criterion) cells from the latest stored records,
assigns tie-aware competition ranks per criterion, derives an overall
ranking from mean-of-ranks, and emits the grouped-bar figure payload drawn
by the console.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from typing import Mapping, Sequence

from .database import ResultQuery, ResultStore
from .model import BenchmarkId, EvaldeckError, H6_MEMBERS


class MissingComponentError(EvaldeckError):
    pass


class NoDataError(EvaldeckError):
    pass


class Criterion(str, Enum):
    H6_AVG = "h6_avg"
    ARC = "arc"
    HELLASWAG = "hellaswag"
    MMLU = "mmlu"
    TRUTHFULQA = "truthfulqa"
    WINOGRANDE = "winogrande"
    GSM8K = "gsm8k"
    MT_BENCH = "mt_bench"
    EQ_BENCH = "eq_bench"
    IFEVAL = "ifeval"

    @property
    def benchmark(self) -> BenchmarkId | None:
        """The stored benchmark backing this criterion; None for derived ones."""
        if self is Criterion.H6_AVG:
            return None
        return BenchmarkId(self.value)


# Fixed member order keeps the sum (and thus the float mean) reproducible.
_H6_ORDER = (
    BenchmarkId.ARC,
    BenchmarkId.HELLASWAG,
    BenchmarkId.MMLU,
    BenchmarkId.TRUTHFULQA,
    BenchmarkId.WINOGRANDE,
    BenchmarkId.GSM8K,
)


def h6_average(scores: Mapping[BenchmarkId, float]) -> float:
    """Arithmetic mean of the six component scores, full precision."""
    missing = sorted(b.value for b in H6_MEMBERS if b not in scores)
    if missing:
        raise MissingComponentError("missing components: " + ", ".join(missing))
    return sum(scores[b] for b in _H6_ORDER) / 6.0


def round_half_up(value: float, digits: int = 2) -> float:
    quantum = Decimal(1).scaleb(-digits)
    return float(Decimal(repr(value)).quantize(quantum, rounding=ROUND_HALF_UP))


def format_score(value: float, digits: int = 2) -> str:
    quantum = Decimal(1).scaleb(-digits)
    return str(Decimal(repr(value)).quantize(quantum, rounding=ROUND_HALF_UP))


def competition_rank(values: Mapping[str, float], *, higher_is_better: bool = True) -> dict[str, int]:
    """Tie-aware "1224" ranking: tied entries share the smaller rank."""
    sign = -1.0 if higher_is_better else 1.0
    ordered = sorted(values.items(), key=lambda kv: (sign * kv[1], kv[0]))
    ranks: dict[str, int] = {}
    prev_value: float | None = None
    prev_rank = 1
    for position, (name, value) in enumerate(ordered, start=1):
        if prev_value is not None and value == prev_value:
            ranks[name] = prev_rank
        else:
            ranks[name] = position
            prev_rank = position
            prev_value = value
    return ranks


@dataclass(frozen=True)
class FigurePoint:
    model: str
    value: float  # normalized to [0, 1] by the per-criterion max
    raw: float


@dataclass(frozen=True)
class FigureSeries:
    criterion: Criterion
    points: tuple[FigurePoint, ...]


@dataclass(frozen=True)
class FigurePayload:
    series: tuple[FigureSeries, ...]
    kind: str = "grouped_bar"
    normalization: str = "per_criterion_max"

    def to_payload(self) -> dict:
        return {
            "kind": self.kind,
            "normalization": self.normalization,
            "series": [
                {
                    "criterion": s.criterion.value,
                    "points": [
                        {"model": p.model, "value": p.value, "raw": p.raw} for p in s.points
                    ],
                }
                for s in self.series
            ],
        }


@dataclass(frozen=True)
class Report:
    models: tuple[str, ...]
    criteria: tuple[Criterion, ...]
    cells: Mapping[tuple[str, Criterion], float]
    per_criterion_rank: Mapping[tuple[str, Criterion], int]
    overall_rank: Mapping[str, int]
    figure: FigurePayload

    def row_order(self) -> list[str]:
        """Models ordered by overall rank, lexicographic among ties; rankless last."""
        return sorted(
            self.models, key=lambda m: (self.overall_rank.get(m, len(self.models) + 1), m)
        )

    def to_payload(self) -> dict:
        cells: dict[str, dict[str, float]] = {}
        ranks: dict[str, dict[str, int]] = {}
        for (model, criterion), value in self.cells.items():
            cells.setdefault(model, {})[criterion.value] = value
        for (model, criterion), rank in self.per_criterion_rank.items():
            ranks.setdefault(model, {})[criterion.value] = rank
        return {
            "models": list(self.models),
            "criteria": [c.value for c in self.criteria],
            "cells": cells,
            "per_criterion_rank": ranks,
            "overall_rank": dict(self.overall_rank),
            "figure": self.figure.to_payload(),
        }


def _dedupe(items: Sequence[str]) -> list[str]:
    seen: set[str] = set()
    out = []
    for item in items:
        if item not in seen:
            seen.add(item)
            out.append(item)
    return out


def build_report(
    models: Sequence[str], criteria: Sequence[Criterion], store: ResultStore
) -> Report:
    """Assemble cells, ranks and figure for the selected models and criteria.

    Cells come from the latest record per (model, benchmark). The h6_avg
    cell exists only when all six components do. Overall rank is the
    competition ranking of each model's mean per-criterion rank.
    """
    if not models:
        raise ValueError("models must be non-empty")
    if not criteria:
        raise ValueError("criteria must be non-empty")
    model_order = _dedupe(list(models))
    criteria_order = list(dict.fromkeys(criteria))

    records = store.get_results(ResultQuery(models=frozenset(model_order), latest_only=True))
    scores: dict[str, dict[BenchmarkId, float]] = {}
    for record in records:
        scores.setdefault(record.model.render(), {})[record.benchmark] = record.score

    cells: dict[tuple[str, Criterion], float] = {}
    for model in model_order:
        model_scores = scores.get(model, {})
        for criterion in criteria_order:
            if criterion is Criterion.H6_AVG:
                if all(b in model_scores for b in H6_MEMBERS):
                    cells[(model, criterion)] = h6_average(model_scores)
            else:
                benchmark = criterion.benchmark
                assert benchmark is not None
                if benchmark in model_scores:
                    cells[(model, criterion)] = model_scores[benchmark]
    if not cells:
        raise NoDataError(
            "no stored results for the selected models and criteria"
        )

    per_criterion_rank: dict[tuple[str, Criterion], int] = {}
    for criterion in criteria_order:
        column = {m: cells[(m, criterion)] for m in model_order if (m, criterion) in cells}
        for model, rank in competition_rank(column).items():
            per_criterion_rank[(model, criterion)] = rank

    mean_ranks: dict[str, float] = {}
    for model in model_order:
        ranks = [
            per_criterion_rank[(model, c)]
            for c in criteria_order
            if (model, c) in per_criterion_rank
        ]
        if ranks:
            mean_ranks[model] = sum(ranks) / len(ranks)
    overall_rank = competition_rank(mean_ranks, higher_is_better=False)

    series = []
    for criterion in criteria_order:
        column = {m: cells[(m, criterion)] for m in model_order if (m, criterion) in cells}
        top = max(column.values(), default=0.0)
        points = tuple(
            FigurePoint(model=m, value=(column[m] / top if top > 0 else 0.0), raw=column[m])
            for m in model_order
            if m in column
        )
        series.append(FigureSeries(criterion=criterion, points=points))

    return Report(
        models=tuple(model_order),
        criteria=tuple(criteria_order),
        cells=cells,
        per_criterion_rank=per_criterion_rank,
        overall_rank=overall_rank,
        figure=FigurePayload(series=tuple(series)),
    )


ABSENT_CELL = "-"


def render_table(report: Report) -> str:
    """Plain-text score table: one row per model, criteria columns plus Rank."""
    headers = ["Model", *(c.value for c in report.criteria), "Rank"]
    rows = []
    for model in report.row_order():
        row = [model]
        for criterion in report.criteria:
            value = report.cells.get((model, criterion))
            row.append(ABSENT_CELL if value is None else format_score(value))
        rank = report.overall_rank.get(model)
        row.append(ABSENT_CELL if rank is None else str(rank))
        rows.append(row)
    widths = [max(len(headers[i]), *(len(r[i]) for r in rows)) for i in range(len(headers))]
    lines = []
    lines.append(" | ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip())
    lines.append("-+-".join("-" * w for w in widths))
    for row in rows:
        cells = [row[0].ljust(widths[0])]
        cells += [row[i].rjust(widths[i]) for i in range(1, len(row))]
        lines.append(" | ".join(cells).rstrip())
    return "\n".join(lines) + "\n"


def render_figure(report: Report) -> FigurePayload:
    return report.figure
