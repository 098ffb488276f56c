"""Job intake, scheduling, and sharded dispatch to an in-process worker pool.

The pool of worker threads simulates the compute cluster: each worker takes
one (job, benchmark, shard) work item at a time, fetches artifacts when the
runner needs them, executes the shard, and reports back. Shard results for
a benchmark are merged and persisted before the owning job can complete.

Locking: one lock guards the queue, the pool status board and all job
records. Critical sections are short; shard execution happens outside the
lock, so shards genuinely run in parallel up to worker_count.
"""

from __future__ import annotations

import threading
import uuid
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .connector import (
    ConnectorError,
    FixtureManifest,
    PartialScore,
    RunRequest,
    RunnerRegistry,
    RunnerTimeoutError,
    SpawnFailedError,
    fixture_run,
    merge_partials,
    spawn_process_runner,
)
from .database import ResultStore
from .model import (
    LIFECYCLE_ORDER,
    BenchmarkId,
    EvalJob,
    EvalSettings,
    EvaldeckError,
    JobState,
    ModelKind,
    ModelRef,
    ScoreRecord,
    expand_benchmarks,
    validate_settings,
)

DEFAULT_RETRY_LIMIT = 1


class UnknownJobError(EvaldeckError):
    pass


class ModelNotFoundError(EvaldeckError):
    pass


def model_artifact_key(model: ModelRef) -> str:
    return f"models/{model.render()}"


def benchmark_data_key(benchmark: BenchmarkId) -> str:
    return f"benchmark-data/{benchmark.value}"


@dataclass(frozen=True)
class FetchedArtifacts:
    model_path: Path
    data_path: Path | None


@dataclass(frozen=True)
class WorkerStatus:
    worker_id: int
    job_id: str | None = None
    benchmark: BenchmarkId | None = None
    shard_index: int | None = None

    @property
    def busy(self) -> bool:
        return self.job_id is not None


class WorkerPool:
    """Status board for the worker threads; mutated only under the evaluator lock."""

    def __init__(self, worker_count: int) -> None:
        if worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        self.worker_count = worker_count
        self._statuses = [WorkerStatus(i) for i in range(worker_count)]

    def mark_busy(self, worker_id: int, item: "_WorkItem") -> None:
        self._statuses[worker_id] = WorkerStatus(
            worker_id, item.job_id, item.benchmark, item.shard_index
        )

    def mark_idle(self, worker_id: int) -> None:
        self._statuses[worker_id] = WorkerStatus(worker_id)

    def snapshot(self) -> tuple[WorkerStatus, ...]:
        return tuple(self._statuses)


@dataclass
class _WorkItem:
    job_id: str
    benchmark: BenchmarkId
    shard_index: int
    shard_count: int
    attempts: int = 0


class JobQueue:
    """FIFO of pending work items."""

    def __init__(self) -> None:
        self._items: deque[_WorkItem] = deque()

    def append(self, item: _WorkItem) -> None:
        self._items.append(item)

    def popleft(self) -> _WorkItem:
        return self._items.popleft()

    def purge_job(self, job_id: str) -> int:
        kept = [item for item in self._items if item.job_id != job_id]
        removed = len(self._items) - len(kept)
        self._items = deque(kept)
        return removed

    def __len__(self) -> int:
        return len(self._items)

    def __bool__(self) -> bool:
        return bool(self._items)


@dataclass
class _Progress:
    expected: int
    partials: list[PartialScore] = field(default_factory=list)


@dataclass
class _JobRecord:
    job_id: str
    model: ModelRef
    requested: frozenset[BenchmarkId]
    expanded: frozenset[BenchmarkId]
    settings: EvalSettings
    data_parallel: int
    submitted_at: datetime
    state: JobState = JobState.PENDING
    failure_reason: str | None = None
    finished_at: datetime | None = None
    items: dict[tuple[BenchmarkId, int], _WorkItem] = field(default_factory=dict)
    progress: dict[BenchmarkId, _Progress] = field(default_factory=dict)
    done: set[BenchmarkId] = field(default_factory=set)

    def snapshot(self) -> EvalJob:
        return EvalJob(
            job_id=self.job_id,
            model=self.model,
            benchmarks=self.requested,
            settings=self.settings,
            data_parallel=self.data_parallel,
            state=self.state,
            submitted_at=self.submitted_at,
            finished_at=self.finished_at,
            failure_reason=self.failure_reason,
        )


@dataclass(frozen=True)
class WorkItemStatus:
    benchmark: BenchmarkId
    shard_index: int
    shard_count: int
    attempts: int


def _now() -> datetime:
    return datetime.now(timezone.utc)


def _failure_label(exc: BaseException) -> str:
    name = type(exc).__name__
    if name.endswith("Error"):
        name = name[: -len("Error")]
    return f"{name}: {exc}"


def _default_job_id() -> str:
    return f"job-{uuid.uuid4().hex[:12]}"


class Evaluator:
    """Receives evaluation requests and drives them to completion on the pool."""

    def __init__(
        self,
        registry: RunnerRegistry,
        store: ResultStore,
        *,
        worker_count: int = 8,
        fixture: FixtureManifest | None = None,
        process_timeout: float = 3600.0,
        extra_env: Mapping[str, str] | None = None,
        retry_limit: int = DEFAULT_RETRY_LIMIT,
        job_id_factory: Callable[[], str] | None = None,
    ) -> None:
        self._registry = registry
        self._store = store
        self._pool = WorkerPool(worker_count)
        self._fixture = fixture
        self._process_timeout = process_timeout
        self._extra_env = dict(extra_env) if extra_env else None
        self._retry_limit = retry_limit
        self._job_id_factory = job_id_factory or _default_job_id

        self._lock = threading.Lock()
        self._work_ready = threading.Condition(self._lock)
        self._changed = threading.Condition(self._lock)
        self._queue = JobQueue()
        self._jobs: dict[str, _JobRecord] = {}
        self._threads: list[threading.Thread] = []
        self._shutdown = False

    @property
    def registry(self) -> RunnerRegistry:
        return self._registry

    @property
    def store(self) -> ResultStore:
        return self._store

    @property
    def worker_count(self) -> int:
        return self._pool.worker_count

    # -- intake ------------------------------------------------------------

    def submit(
        self,
        model: ModelRef,
        benchmarks: Iterable[BenchmarkId],
        settings: EvalSettings | None = None,
        data_parallel: int = 1,
    ) -> str:
        """Validate, enqueue one work item per (benchmark, shard), return the job id."""
        settings = settings or EvalSettings()
        if data_parallel < 1:
            raise ValueError("data_parallel must be >= 1")
        requested = frozenset(benchmarks)
        expanded = expand_benchmarks(requested)
        for benchmark in sorted(expanded, key=lambda b: b.value):
            self._registry.resolve(benchmark)
            validate_settings(settings, benchmark)
        with self._lock:
            job_id = self._job_id_factory()
            if job_id in self._jobs:
                raise ValueError(f"duplicate job id from factory: {job_id}")
            rec = _JobRecord(
                job_id=job_id,
                model=model,
                requested=requested,
                expanded=expanded,
                settings=settings,
                data_parallel=data_parallel,
                submitted_at=_now(),
            )
            for benchmark in sorted(expanded, key=lambda b: b.value):
                rec.progress[benchmark] = _Progress(expected=data_parallel)
                for shard in range(data_parallel):
                    item = _WorkItem(job_id, benchmark, shard, data_parallel)
                    rec.items[(benchmark, shard)] = item
                    self._queue.append(item)
            self._jobs[job_id] = rec
            self._work_ready.notify_all()
        return job_id

    # -- scheduling --------------------------------------------------------

    def run_scheduler(self) -> None:
        """Start the worker threads draining the queue. Idempotent."""
        with self._lock:
            if self._threads:
                return
            self._shutdown = False
            threads = [
                threading.Thread(
                    target=self._worker_loop,
                    args=(i,),
                    name=f"evaldeck-worker-{i}",
                    daemon=True,
                )
                for i in range(self._pool.worker_count)
            ]
            self._threads = threads
        for thread in threads:
            thread.start()

    def shutdown(self, wait: bool = True) -> None:
        with self._lock:
            self._shutdown = True
            self._work_ready.notify_all()
        if wait:
            for thread in self._threads:
                thread.join(timeout=10.0)

    def __enter__(self) -> "Evaluator":
        self.run_scheduler()
        return self

    def __exit__(self, *exc_info) -> None:
        self.shutdown()

    def _worker_loop(self, worker_id: int) -> None:
        while True:
            with self._lock:
                while not self._queue and not self._shutdown:
                    self._work_ready.wait()
                if self._shutdown:
                    return
                item = self._queue.popleft()
                rec = self._jobs[item.job_id]
                if rec.state.is_terminal:
                    continue  # purged job raced with dequeue; drop silently
                item.attempts += 1
                self._pool.mark_busy(worker_id, item)
                self._advance_locked(rec, JobState.SCHEDULED)
                model = rec.model
                settings = rec.settings
            partial: PartialScore | None = None
            error: Exception | None = None
            try:
                spec = self._registry.resolve(item.benchmark)
                with self._lock:
                    self._advance_locked(rec, JobState.FETCHING)
                if not spec.is_fixture:
                    self.fetch_artifacts(model, item.benchmark)
                with self._lock:
                    self._advance_locked(rec, JobState.RUNNING)
                req = RunRequest(
                    job_id=item.job_id,
                    model=model,
                    benchmark=item.benchmark,
                    settings=settings.for_benchmark(item.benchmark),
                    shard_index=item.shard_index,
                    shard_count=item.shard_count,
                )
                if spec.is_fixture:
                    if self._fixture is None:
                        raise ConnectorError(
                            "fixture runner selected but no manifest configured"
                        )
                    partial = fixture_run(req, self._fixture)
                else:
                    partial = spawn_process_runner(
                        req,
                        spec,
                        timeout=self._process_timeout,
                        extra_env=self._extra_env,
                    )
            except Exception as exc:  # failures become job state, never a dead worker
                error = exc
            with self._lock:
                self._pool.mark_idle(worker_id)
                self._finish_item_locked(rec, item, partial, error)
                self._changed.notify_all()

    def _advance_locked(self, rec: _JobRecord, target: JobState) -> None:
        if rec.state.is_terminal:
            return
        if LIFECYCLE_ORDER[target] > LIFECYCLE_ORDER[rec.state]:
            rec.state = target

    def _fail_job_locked(self, rec: _JobRecord, reason: str) -> None:
        if rec.state.is_terminal:
            return
        self._queue.purge_job(rec.job_id)
        rec.state = JobState.FAILED
        rec.failure_reason = reason
        rec.finished_at = _now()

    def _finish_item_locked(
        self,
        rec: _JobRecord,
        item: _WorkItem,
        partial: PartialScore | None,
        error: Exception | None,
    ) -> None:
        if rec.state.is_terminal:
            return  # job failed or was cancelled while the shard ran; drop the result
        if error is not None:
            transient = isinstance(error, (SpawnFailedError, RunnerTimeoutError))
            if transient and item.attempts <= self._retry_limit:
                self._queue.append(item)
                self._work_ready.notify()
                return
            self._fail_job_locked(rec, _failure_label(error))
            return
        assert partial is not None
        progress = rec.progress[item.benchmark]
        progress.partials.append(partial)
        if len(progress.partials) < progress.expected:
            return
        try:
            merged = merge_partials(progress.partials)
            record = ScoreRecord(
                model=rec.model,
                benchmark=item.benchmark,
                score=merged.score,
                sample_count=merged.sample_count,
                subscores=merged.subscores,
                settings=rec.settings.for_benchmark(item.benchmark),
                job_id=rec.job_id,
                created_at=_now(),
            )
            self._store.put_result(record)
        except EvaldeckError as exc:
            self._fail_job_locked(rec, _failure_label(exc))
            return
        rec.done.add(item.benchmark)
        if rec.done == rec.expanded:
            # results are persisted before the job is observable as completed
            self._advance_locked(rec, JobState.COMPLETED)
            rec.finished_at = _now()

    # -- artifacts ---------------------------------------------------------

    def fetch_artifacts(self, model: ModelRef, benchmark: BenchmarkId) -> FetchedArtifacts:
        """Resolve the model files and optional benchmark data cache.

        Local paths must exist; hub models must have a cached copy in the
        artifact store. A missing benchmark data cache is not an error.
        """
        if model.kind is ModelKind.LOCAL_PATH:
            path = Path(model.value)
            if not path.exists():
                raise ModelNotFoundError(f"local model path not found: {model.value}")
            model_path = path
        else:
            cached = self._store.artifact_path(model_artifact_key(model))
            if cached is None:
                raise ModelNotFoundError(
                    f"hub model {model.value!r} has no cached copy in the artifact store"
                )
            model_path = cached
        data_path = self._store.artifact_path(benchmark_data_key(benchmark))
        return FetchedArtifacts(model_path=model_path, data_path=data_path)

    # -- observation -------------------------------------------------------

    def job_status(self, job_id: str) -> EvalJob:
        with self._lock:
            rec = self._jobs.get(job_id)
            if rec is None:
                raise UnknownJobError(f"unknown job id: {job_id}")
            return rec.snapshot()

    def cancel(self, job_id: str) -> None:
        """Discard queued shards and fail the job; terminal jobs are untouched."""
        with self._lock:
            rec = self._jobs.get(job_id)
            if rec is None:
                raise UnknownJobError(f"unknown job id: {job_id}")
            if rec.state.is_terminal:
                return
            self._fail_job_locked(rec, "cancelled")
            self._changed.notify_all()

    def jobs(self) -> list[EvalJob]:
        with self._lock:
            return [rec.snapshot() for rec in self._jobs.values()]

    def work_items(self, job_id: str) -> list[WorkItemStatus]:
        with self._lock:
            rec = self._jobs.get(job_id)
            if rec is None:
                raise UnknownJobError(f"unknown job id: {job_id}")
            return [
                WorkItemStatus(item.benchmark, item.shard_index, item.shard_count, item.attempts)
                for item in rec.items.values()
            ]

    def pool_snapshot(self) -> tuple[WorkerStatus, ...]:
        with self._lock:
            return self._pool.snapshot()

    def queued_count(self) -> int:
        with self._lock:
            return len(self._queue)

    def wait_for(self, job_id: str, timeout: float | None = None) -> EvalJob:
        """Block until the job reaches a terminal state; returns the final snapshot."""
        with self._lock:
            rec = self._jobs.get(job_id)
            if rec is None:
                raise UnknownJobError(f"unknown job id: {job_id}")
            if not self._changed.wait_for(lambda: rec.state.is_terminal, timeout=timeout):
                raise TimeoutError(f"job {job_id} not terminal after {timeout}s")
            return rec.snapshot()

    def wait_all(self, timeout: float | None = None) -> None:
        """Block until every submitted job is terminal."""
        with self._lock:
            done = lambda: all(r.state.is_terminal for r in self._jobs.values())
            if not self._changed.wait_for(done, timeout=timeout):
                raise TimeoutError(f"jobs still active after {timeout}s")
