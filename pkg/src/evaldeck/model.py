"""Shared domain types: model references, benchmark ids, settings, jobs, scores.

Everything here is an immutable value; instances are safe to share across
threads. Parsing and validation helpers are pure functions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from datetime import datetime
from enum import Enum
from typing import Iterable, Mapping


class EvaldeckError(Exception):
    """Base class for all errors raised by this package."""


class EmptyInputError(EvaldeckError):
    """Model reference input was empty or whitespace-only."""


class MalformedRefError(EvaldeckError):
    """Model reference input contains whitespace or is otherwise unparsable."""


class InvalidSettingsError(EvaldeckError):
    """Evaluation settings are not valid for the requested benchmark."""


class InvalidFewshotError(InvalidSettingsError):
    """num_fewshot is outside the supported range."""


class ScaleViolationError(EvaldeckError):
    """A score lies outside its benchmark's scale range."""


class ModelKind(str, Enum):
    HUB_ID = "hub_id"
    LOCAL_PATH = "local_path"


_HUB_ID_RE = re.compile(r"^[^/\s]+/[^/\s]+$")


@dataclass(frozen=True)
class ModelRef:
    """A model identified either by a `<org>/<name>` hub id or a filesystem path."""

    kind: ModelKind
    value: str

    def __post_init__(self) -> None:
        if not self.value:
            raise ValueError("ModelRef value must be non-empty")
        if self.kind is ModelKind.HUB_ID and not _HUB_ID_RE.match(self.value):
            raise ValueError(f"not a valid hub id: {self.value!r}")
        if self.kind is ModelKind.LOCAL_PATH and "\n" in self.value:
            raise ValueError("local path must not contain a newline")

    def render(self) -> str:
        """The original string form; `parse_model_ref(render())` round-trips."""
        return self.value

    def __str__(self) -> str:
        return self.value


# Segments that mark a single-slash string as a path rather than a hub id.
_PATHLIKE_SEGMENTS = {".", ".."}


def parse_model_ref(raw: str) -> ModelRef:
    """Classify a raw string as a hub id or a local path.

    Exactly one `/` with two plain segments means a hub id; a leading `/`,
    `./`, `../`, `~`, or two or more slashes means a local path. Any other
    slash-free string is treated as a relative path.
    """
    if not raw.strip():
        raise EmptyInputError("model reference is empty")
    if any(ch.isspace() for ch in raw):
        raise MalformedRefError(f"model reference contains whitespace: {raw!r}")
    if raw.startswith(("/", "./", "../", "~")):
        return ModelRef(ModelKind.LOCAL_PATH, raw)
    if raw.count("/") == 1:
        org, name = raw.split("/")
        if org and name and org not in _PATHLIKE_SEGMENTS and name not in _PATHLIKE_SEGMENTS:
            return ModelRef(ModelKind.HUB_ID, raw)
    return ModelRef(ModelKind.LOCAL_PATH, raw)


class BenchmarkId(str, Enum):
    ARC = "arc"
    HELLASWAG = "hellaswag"
    MMLU = "mmlu"
    TRUTHFULQA = "truthfulqa"
    WINOGRANDE = "winogrande"
    GSM8K = "gsm8k"
    H6_EN = "h6_en"
    MT_BENCH = "mt_bench"
    EQ_BENCH = "eq_bench"
    IFEVAL = "ifeval"

    @property
    def is_composite(self) -> bool:
        return self is BenchmarkId.H6_EN


H6_MEMBERS: frozenset[BenchmarkId] = frozenset(
    {
        BenchmarkId.ARC,
        BenchmarkId.HELLASWAG,
        BenchmarkId.MMLU,
        BenchmarkId.TRUTHFULQA,
        BenchmarkId.WINOGRANDE,
        BenchmarkId.GSM8K,
    }
)

# Inclusive score bounds per benchmark.
SCORE_RANGES: dict[BenchmarkId, tuple[float, float]] = {
    BenchmarkId.ARC: (0.0, 100.0),
    BenchmarkId.HELLASWAG: (0.0, 100.0),
    BenchmarkId.MMLU: (0.0, 100.0),
    BenchmarkId.TRUTHFULQA: (0.0, 100.0),
    BenchmarkId.WINOGRANDE: (0.0, 100.0),
    BenchmarkId.GSM8K: (0.0, 100.0),
    BenchmarkId.MT_BENCH: (0.0, 10.0),
    BenchmarkId.EQ_BENCH: (0.0, 100.0),
    BenchmarkId.IFEVAL: (0.0, 1.0),
}


def check_score_range(benchmark: BenchmarkId, score: float) -> None:
    if benchmark.is_composite:
        raise ValueError(f"composite benchmark {benchmark.value} carries no score")
    low, high = SCORE_RANGES[benchmark]
    if not (low <= score <= high):
        raise ScaleViolationError(
            f"{benchmark.value} score {score} outside [{low}, {high}]"
        )


def expand_benchmarks(requested: Iterable[BenchmarkId]) -> frozenset[BenchmarkId]:
    """Replace composite ids by their members; idempotent, duplicate-free."""
    out: set[BenchmarkId] = set()
    empty = True
    for benchmark in requested:
        empty = False
        if benchmark.is_composite:
            out |= H6_MEMBERS
        else:
            out.add(benchmark)
    if empty:
        raise ValueError("requested benchmark set must be non-empty")
    return frozenset(out)


class Engine(str, Enum):
    HF = "hf"
    VLLM = "vllm"


class Dtype(str, Enum):
    FLOAT16 = "float16"
    INT8 = "int8"


# Few-shot counts per the Open LLM Leaderboard convention; generation-style
# benchmarks default to zero-shot.
DEFAULT_NUM_FEWSHOT: dict[BenchmarkId, int] = {
    BenchmarkId.ARC: 25,
    BenchmarkId.HELLASWAG: 10,
    BenchmarkId.MMLU: 5,
    BenchmarkId.TRUTHFULQA: 0,
    BenchmarkId.WINOGRANDE: 5,
    BenchmarkId.GSM8K: 5,
    BenchmarkId.MT_BENCH: 0,
    BenchmarkId.EQ_BENCH: 0,
    BenchmarkId.IFEVAL: 0,
}

MAX_NUM_FEWSHOT = 64


@dataclass(frozen=True)
class EvalSettings:
    """Inference options for a run. num_fewshot=None selects the per-benchmark default."""

    engine: Engine = Engine.HF
    dtype: Dtype = Dtype.FLOAT16
    num_fewshot: int | None = None

    def for_benchmark(self, benchmark: BenchmarkId) -> "EvalSettings":
        """Concrete settings for one benchmark, with num_fewshot resolved."""
        if benchmark.is_composite:
            raise ValueError("settings resolve against non-composite benchmarks")
        if self.num_fewshot is not None:
            return self
        return replace(self, num_fewshot=DEFAULT_NUM_FEWSHOT[benchmark])


def validate_settings(settings: EvalSettings, benchmark: BenchmarkId) -> None:
    """Raise InvalidFewshotError unless the resolved settings are usable for `benchmark`."""
    if benchmark.is_composite:
        raise ValueError("validate_settings takes a non-composite benchmark")
    resolved = settings.for_benchmark(benchmark)
    n = resolved.num_fewshot
    assert n is not None
    if not 0 <= n <= MAX_NUM_FEWSHOT:
        raise InvalidFewshotError(
            f"num_fewshot {n} outside [0, {MAX_NUM_FEWSHOT}] for {benchmark.value}"
        )


class JobState(str, Enum):
    PENDING = "pending"
    SCHEDULED = "scheduled"
    FETCHING = "fetching"
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"

    @property
    def is_terminal(self) -> bool:
        return self in (JobState.COMPLETED, JobState.FAILED)


# Forward order of the lifecycle; both terminal states share the last slot.
LIFECYCLE_ORDER: dict[JobState, int] = {
    JobState.PENDING: 0,
    JobState.SCHEDULED: 1,
    JobState.FETCHING: 2,
    JobState.RUNNING: 3,
    JobState.COMPLETED: 4,
    JobState.FAILED: 4,
}

_CHAIN_NEXT: dict[JobState, JobState] = {
    JobState.PENDING: JobState.SCHEDULED,
    JobState.SCHEDULED: JobState.FETCHING,
    JobState.FETCHING: JobState.RUNNING,
    JobState.RUNNING: JobState.COMPLETED,
}


def can_transition(current: JobState, target: JobState) -> bool:
    """Allowed edges: the forward chain plus failure from any non-terminal state.

    Terminal states are absorbing. Failure is reachable from every
    non-terminal state because cancellation and fetch errors can strike
    before a shard ever runs.
    """
    if current.is_terminal:
        return False
    if target is JobState.FAILED:
        return True
    return _CHAIN_NEXT.get(current) is target


@dataclass(frozen=True)
class EvalJob:
    """Immutable snapshot of one requested evaluation."""

    job_id: str
    model: ModelRef
    benchmarks: frozenset[BenchmarkId]
    settings: EvalSettings
    data_parallel: int
    state: JobState
    submitted_at: datetime
    finished_at: datetime | None = None
    failure_reason: str | None = None

    def __post_init__(self) -> None:
        if not self.benchmarks:
            raise ValueError("job must request at least one benchmark")
        if self.data_parallel < 1:
            raise ValueError("data_parallel must be >= 1")
        if self.state is JobState.FAILED and not self.failure_reason:
            raise ValueError("failed job needs a non-empty reason")
        if self.state is not JobState.FAILED and self.failure_reason is not None:
            raise ValueError("only failed jobs carry a failure reason")
        if (self.finished_at is not None) != self.state.is_terminal:
            raise ValueError("finished_at is set exactly for terminal states")


@dataclass(frozen=True)
class ScoreRecord:
    """Persisted outcome of one (model, benchmark) evaluation."""

    model: ModelRef
    benchmark: BenchmarkId
    score: float
    sample_count: int
    subscores: Mapping[str, float]
    settings: EvalSettings
    job_id: str
    created_at: datetime

    def validate(self) -> None:
        """Boundary check used by the store and the fixture loader."""
        if self.benchmark.is_composite:
            raise ValueError("score records hold non-composite benchmarks only")
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")
        if self.settings.num_fewshot is None:
            raise ValueError("persisted settings must carry a concrete num_fewshot")
        if not self.job_id:
            raise ValueError("job_id must be non-empty")
        check_score_range(self.benchmark, self.score)
