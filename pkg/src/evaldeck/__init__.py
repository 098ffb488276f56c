"""Benchmark evaluation orchestration.

Pluggable benchmark runners behind a process protocol, a sharded job
scheduler over an in-process worker pool, a file-backed score store, a
reporter computing averages and rankings, and a chat-style gateway with an
HTTP/WebSocket wire API.
"""

from .connector import (
    FixtureManifest,
    PartialScore,
    RunnerRegistry,
    RunnerSpec,
    RunRequest,
    build_invocation,
    fixture_run,
    fixture_spec,
    merge_partials,
    spawn_process_runner,
)
from .database import ResultQuery, ResultStore, seed_from_manifest
from .evaluator import Evaluator, WorkerPool
from .gateway import ChatGateway, GatewayEvent, GatewayReply
from .model import (
    BenchmarkId,
    Dtype,
    Engine,
    EvalJob,
    EvalSettings,
    EvaldeckError,
    JobState,
    ModelKind,
    ModelRef,
    ScoreRecord,
    expand_benchmarks,
    parse_model_ref,
    validate_settings,
)
from .reporter import Criterion, Report, build_report, h6_average, render_figure, render_table

__all__ = [
    "BenchmarkId",
    "ChatGateway",
    "Criterion",
    "Dtype",
    "Engine",
    "EvalJob",
    "EvalSettings",
    "EvaldeckError",
    "Evaluator",
    "FixtureManifest",
    "GatewayEvent",
    "GatewayReply",
    "JobState",
    "ModelKind",
    "ModelRef",
    "PartialScore",
    "Report",
    "ResultQuery",
    "ResultStore",
    "RunRequest",
    "RunnerRegistry",
    "RunnerSpec",
    "ScoreRecord",
    "WorkerPool",
    "build_invocation",
    "build_report",
    "expand_benchmarks",
    "fixture_run",
    "fixture_spec",
    "h6_average",
    "merge_partials",
    "parse_model_ref",
    "render_figure",
    "render_table",
    "seed_from_manifest",
    "spawn_process_runner",
    "validate_settings",
]

__version__ = "0.1.0"
