"""Benchmark runner registry and execution adapters.

A runner is an external executable invoked with templated arguments; it
writes a small JSON result file at the path given by {output_path}. The
builtin "fixture" runner replays a score manifest instead, which makes the
whole pipeline testable without GPUs.
"""

from __future__ import annotations

import json
import os
import re
import subprocess
import tempfile
import threading
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .model import (
    BenchmarkId,
    EvalSettings,
    EvaldeckError,
    ModelRef,
    ScaleViolationError,
    check_score_range,
)


class ConnectorError(EvaldeckError):
    pass


class InvalidTemplateError(ConnectorError):
    pass


class UnknownBenchmarkError(ConnectorError):
    pass


class BenchmarkMismatchError(ConnectorError):
    pass


class FixtureMissError(ConnectorError):
    pass


class EmptyMergeError(ConnectorError):
    pass


class MixedBenchmarksError(ConnectorError):
    pass


class DuplicateShardError(ConnectorError):
    pass


class SpawnFailedError(ConnectorError):
    pass


class NonZeroExitError(ConnectorError):
    def __init__(self, code: int, stderr_tail: str) -> None:
        super().__init__(f"runner exited with code {code}: {stderr_tail}")
        self.code = code
        self.stderr_tail = stderr_tail


class MalformedOutputError(ConnectorError):
    pass


class RunnerTimeoutError(ConnectorError):
    pass


FIXTURE_EXECUTABLE = "fixture"

PLACEHOLDERS = frozenset(
    {"model", "num_fewshot", "engine", "dtype", "shard_index", "shard_count", "output_path"}
)

DEFAULT_ARG_TEMPLATE: tuple[str, ...] = (
    "--model",
    "{model}",
    "--num_fewshot",
    "{num_fewshot}",
    "--engine",
    "{engine}",
    "--dtype",
    "{dtype}",
    "--shard_index",
    "{shard_index}",
    "--shard_count",
    "{shard_count}",
    "--output_path",
    "{output_path}",
)

DEFAULT_RUNNER_TIMEOUT = 3600.0

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]*)\}")


def _template_counts(template: Sequence[str]) -> Counter:
    counts: Counter = Counter()
    for token in template:
        names = _PLACEHOLDER_RE.findall(token)
        if "{" in _PLACEHOLDER_RE.sub("", token) or "}" in _PLACEHOLDER_RE.sub("", token):
            raise InvalidTemplateError(f"unbalanced braces in token {token!r}")
        for name in names:
            if name not in PLACEHOLDERS:
                raise InvalidTemplateError(f"unknown placeholder {{{name}}} in {token!r}")
            counts[name] += 1
    return counts


def validate_template(template: Sequence[str]) -> None:
    counts = _template_counts(template)
    for required in ("model", "output_path"):
        if counts[required] != 1:
            raise InvalidTemplateError(
                f"{{{required}}} must appear exactly once, found {counts[required]}"
            )


@dataclass(frozen=True)
class RunnerSpec:
    """How to invoke the runner for one benchmark."""

    benchmark: BenchmarkId
    executable: str
    arg_template: tuple[str, ...] = DEFAULT_ARG_TEMPLATE

    def __post_init__(self) -> None:
        if self.benchmark.is_composite:
            raise ValueError("runners are registered per non-composite benchmark")
        if not self.executable:
            raise ValueError("executable must be non-empty")

    @property
    def is_fixture(self) -> bool:
        return self.executable == FIXTURE_EXECUTABLE


def fixture_spec(benchmark: BenchmarkId) -> RunnerSpec:
    return RunnerSpec(benchmark, FIXTURE_EXECUTABLE)


class RunnerRegistry:
    """Maps each benchmark to its runner; re-registration replaces."""

    def __init__(self) -> None:
        self._specs: dict[BenchmarkId, RunnerSpec] = {}
        self._lock = threading.Lock()

    def register(self, spec: RunnerSpec) -> None:
        validate_template(spec.arg_template)
        with self._lock:
            self._specs[spec.benchmark] = spec

    def resolve(self, benchmark: BenchmarkId) -> RunnerSpec:
        if benchmark.is_composite:
            raise ValueError("resolve takes a non-composite benchmark")
        try:
            return self._specs[benchmark]
        except KeyError:
            raise UnknownBenchmarkError(f"no runner registered for {benchmark.value}") from None

    def registered(self) -> list[BenchmarkId]:
        with self._lock:
            return sorted(self._specs, key=lambda b: b.value)

    def __contains__(self, benchmark: BenchmarkId) -> bool:
        return benchmark in self._specs


@dataclass(frozen=True)
class RunRequest:
    """One shard of one benchmark evaluation."""

    job_id: str
    model: ModelRef
    benchmark: BenchmarkId
    settings: EvalSettings
    shard_index: int = 0
    shard_count: int = 1

    def __post_init__(self) -> None:
        if self.benchmark.is_composite:
            raise ValueError("run requests carry non-composite benchmarks only")
        if self.shard_count < 1:
            raise ValueError("shard_count must be >= 1")
        if not 0 <= self.shard_index < self.shard_count:
            raise ValueError("shard_index must lie in [0, shard_count)")


@dataclass(frozen=True)
class PartialScore:
    """Result of one shard. sample_count may be 0 when samples < shards."""

    benchmark: BenchmarkId
    shard_index: int
    score: float
    sample_count: int
    subscores: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.sample_count < 0:
            raise ValueError("sample_count must be >= 0")
        check_score_range(self.benchmark, self.score)


def build_invocation(req: RunRequest, spec: RunnerSpec, output_path: str | Path) -> list[str]:
    """Substitute every placeholder in the runner's argument template."""
    if req.benchmark is not spec.benchmark:
        raise BenchmarkMismatchError(
            f"request is for {req.benchmark.value}, spec is for {spec.benchmark.value}"
        )
    resolved = req.settings.for_benchmark(req.benchmark)
    values = {
        "model": req.model.render(),
        "num_fewshot": str(resolved.num_fewshot),
        "engine": resolved.engine.value,
        "dtype": resolved.dtype.value,
        "shard_index": str(req.shard_index),
        "shard_count": str(req.shard_count),
        "output_path": str(output_path),
    }
    return [_PLACEHOLDER_RE.sub(lambda m: values[m.group(1)], token) for token in spec.arg_template]


def shard_slice_size(total: int, shard_index: int, shard_count: int) -> int:
    """Samples assigned to one shard: n*(i+1)//k - n*i//k. Slices partition `total`."""
    return total * (shard_index + 1) // shard_count - total * shard_index // shard_count


@dataclass(frozen=True)
class FixtureEntry:
    model: str
    benchmark: BenchmarkId
    score: float
    sample_count: int
    subscores: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class FixtureManifest:
    """Deterministic (model, benchmark) -> score table used by the fixture runner."""

    entries: Mapping[tuple[str, BenchmarkId], FixtureEntry]

    @classmethod
    def from_entries(cls, entries: Iterable[FixtureEntry]) -> "FixtureManifest":
        table: dict[tuple[str, BenchmarkId], FixtureEntry] = {}
        for entry in entries:
            if entry.sample_count < 1:
                raise ValueError(
                    f"fixture entry ({entry.model}, {entry.benchmark.value}) needs sample_count >= 1"
                )
            check_score_range(entry.benchmark, entry.score)
            table[(entry.model, entry.benchmark)] = entry
        return cls(entries=table)

    @classmethod
    def load(cls, path: str | Path) -> "FixtureManifest":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, list):
            raise ValueError(f"fixture manifest must be a JSON array: {path}")
        entries = []
        for i, item in enumerate(raw):
            if not isinstance(item, dict):
                raise ValueError(f"fixture entry {i} is not an object")
            try:
                entries.append(
                    FixtureEntry(
                        model=str(item["model"]),
                        benchmark=BenchmarkId(item["benchmark"]),
                        score=float(item["score"]),
                        sample_count=int(item["sample_count"]),
                        subscores={str(k): float(v) for k, v in item.get("subscores", {}).items()},
                    )
                )
            except (KeyError, ValueError, TypeError) as exc:
                if isinstance(exc, ScaleViolationError):
                    raise
                raise ValueError(f"fixture entry {i} is malformed: {exc}") from exc
        return cls.from_entries(entries)

    def lookup(self, model: str, benchmark: BenchmarkId) -> FixtureEntry | None:
        return self.entries.get((model, benchmark))

    def models(self) -> list[str]:
        return sorted({model for model, _ in self.entries})


def fixture_run(req: RunRequest, manifest: FixtureManifest) -> PartialScore:
    """Replay the manifest entry for this shard; merging all shards is exact."""
    entry = manifest.lookup(req.model.render(), req.benchmark)
    if entry is None:
        raise FixtureMissError(
            f"no fixture entry for model {req.model.render()!r} benchmark {req.benchmark.value!r}"
        )
    count = shard_slice_size(entry.sample_count, req.shard_index, req.shard_count)
    return PartialScore(
        benchmark=req.benchmark,
        shard_index=req.shard_index,
        score=entry.score,
        sample_count=count,
        subscores=dict(entry.subscores),
    )


@dataclass(frozen=True)
class MergedScore:
    score: float
    sample_count: int
    subscores: dict[str, float]


def merge_partials(parts: Sequence[PartialScore]) -> MergedScore:
    """Sample-count-weighted mean across shards; order-independent."""
    if not parts:
        raise EmptyMergeError("nothing to merge")
    benchmarks = {p.benchmark for p in parts}
    if len(benchmarks) > 1:
        raise MixedBenchmarksError(
            "cannot merge across benchmarks: " + ", ".join(sorted(b.value for b in benchmarks))
        )
    indices = [p.shard_index for p in parts]
    if len(set(indices)) != len(indices):
        dupes = sorted(i for i, n in Counter(indices).items() if n > 1)
        raise DuplicateShardError(f"duplicate shard indices: {dupes}")
    # Accumulate in shard order so the result is identical for any input permutation.
    ordered = sorted(parts, key=lambda p: p.shard_index)
    total = sum(p.sample_count for p in ordered)
    if total == 0:
        raise EmptyMergeError("merged shards carry zero samples")
    score = sum(p.score * p.sample_count for p in ordered) / total
    subscores: dict[str, float] = {}
    keys = sorted({k for p in ordered for k in p.subscores})
    for key in keys:
        present = [p for p in ordered if key in p.subscores]
        weight = sum(p.sample_count for p in present)
        if weight == 0:
            continue
        subscores[key] = sum(p.subscores[key] * p.sample_count for p in present) / weight
    return MergedScore(score=score, sample_count=total, subscores=subscores)


def _stderr_tail(data: bytes, limit: int = 400) -> str:
    text = data.decode("utf-8", errors="replace").strip()
    return text[-limit:]


def spawn_process_runner(
    req: RunRequest,
    spec: RunnerSpec,
    *,
    timeout: float = DEFAULT_RUNNER_TIMEOUT,
    extra_env: Mapping[str, str] | None = None,
) -> PartialScore:
    """Run the external executable and read the JSON result file it writes.

    Result file contract: UTF-8 JSON object with "score" (number),
    "sample_count" (integer) and optional "subscores" (string -> number).
    """
    if spec.is_fixture:
        raise ValueError("fixture specs are executed by fixture_run, not a process")
    with tempfile.TemporaryDirectory(prefix="evaldeck-run-") as tmp:
        output_path = Path(tmp) / "result.json"
        argv = [spec.executable, *build_invocation(req, spec, output_path)]
        env = None
        if extra_env:
            env = {**os.environ, **extra_env}
        try:
            proc = subprocess.run(argv, capture_output=True, timeout=timeout, env=env)
        except subprocess.TimeoutExpired:
            raise RunnerTimeoutError(
                f"{spec.executable} exceeded {timeout:g}s for {req.benchmark.value} "
                f"shard {req.shard_index}/{req.shard_count}"
            ) from None
        except OSError as exc:
            raise SpawnFailedError(f"could not launch {spec.executable}: {exc}") from exc
        if proc.returncode != 0:
            raise NonZeroExitError(proc.returncode, _stderr_tail(proc.stderr))
        if not output_path.exists():
            raise MalformedOutputError(f"{spec.executable} wrote no result file")
        try:
            payload = json.loads(output_path.read_text(encoding="utf-8"))
        except (ValueError, OSError) as exc:
            raise MalformedOutputError(f"unreadable result file: {exc}") from exc
    if not isinstance(payload, dict):
        raise MalformedOutputError("result file must hold a JSON object")
    score = payload.get("score")
    sample_count = payload.get("sample_count")
    if not isinstance(score, (int, float)) or isinstance(score, bool):
        raise MalformedOutputError(f"result 'score' must be a number, got {score!r}")
    if not isinstance(sample_count, int) or isinstance(sample_count, bool) or sample_count < 0:
        raise MalformedOutputError(
            f"result 'sample_count' must be a non-negative integer, got {sample_count!r}"
        )
    raw_subscores = payload.get("subscores", {})
    if not isinstance(raw_subscores, dict):
        raise MalformedOutputError("result 'subscores' must be an object")
    subscores: dict[str, float] = {}
    for key, value in raw_subscores.items():
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise MalformedOutputError(f"subscore {key!r} must be a number, got {value!r}")
        subscores[str(key)] = float(value)
    try:
        check_score_range(req.benchmark, float(score))
    except ScaleViolationError as exc:
        raise MalformedOutputError(str(exc)) from exc
    return PartialScore(
        benchmark=req.benchmark,
        shard_index=req.shard_index,
        score=float(score),
        sample_count=sample_count,
        subscores=subscores,
    )
