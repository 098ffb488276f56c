"""File-backed store for score records and evaluation artifacts.

Layout:
    <root>/results/<url-encoded model>/<benchmark>/<job_id>.json
    <root>/artifacts/<url-encoded key>

Records are append-only JSON documents, written atomically (temp file,
fsync, rename) so a record visible to a reader is always complete.
"""

from __future__ import annotations

import fcntl
import json
import os
import tempfile
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable
from urllib.parse import quote, unquote

from .connector import FixtureManifest
from .model import (
    BenchmarkId,
    Dtype,
    Engine,
    EvalSettings,
    EvaldeckError,
    MalformedRefError,
    ModelKind,
    ModelRef,
    ScoreRecord,
    parse_model_ref,
)


class StorageError(EvaldeckError):
    """An I/O failure or contract breach in the store, with context."""


class InvalidKeyError(EvaldeckError):
    pass


@dataclass(frozen=True)
class ResultQuery:
    """Filter for get_results; empty filters select everything."""

    models: frozenset[str] | None = None
    benchmarks: frozenset[BenchmarkId] | None = None
    latest_only: bool = True


def model_ref_from_string(value: str) -> ModelRef:
    """Recover a ModelRef from its rendered form.

    Names that the strict parser rejects (for example display names with
    spaces, as used when seeding records from a fixture manifest) fall back
    to a local-path reference.
    """
    try:
        return parse_model_ref(value)
    except MalformedRefError:
        return ModelRef(ModelKind.LOCAL_PATH, value)


def _now() -> datetime:
    return datetime.now(timezone.utc)


def _record_to_payload(record: ScoreRecord) -> dict:
    return {
        "model": record.model.render(),
        "benchmark": record.benchmark.value,
        "score": record.score,
        "sample_count": record.sample_count,
        "subscores": dict(record.subscores),
        "settings": {
            "engine": record.settings.engine.value,
            "dtype": record.settings.dtype.value,
            "num_fewshot": record.settings.num_fewshot,
        },
        "job_id": record.job_id,
        "created_at": record.created_at.isoformat(),
    }


def _record_from_payload(payload: dict, source: Path) -> ScoreRecord:
    try:
        settings = payload["settings"]
        return ScoreRecord(
            model=model_ref_from_string(payload["model"]),
            benchmark=BenchmarkId(payload["benchmark"]),
            score=float(payload["score"]),
            sample_count=int(payload["sample_count"]),
            subscores={str(k): float(v) for k, v in payload.get("subscores", {}).items()},
            settings=EvalSettings(
                engine=Engine(settings["engine"]),
                dtype=Dtype(settings["dtype"]),
                num_fewshot=int(settings["num_fewshot"]),
            ),
            job_id=str(payload["job_id"]),
            created_at=datetime.fromisoformat(payload["created_at"]),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise StorageError(f"corrupt result file {source}: {exc}") from exc


def _validate_artifact_key(key: str) -> None:
    if not key:
        raise InvalidKeyError("artifact key must be non-empty")
    if any(segment == ".." for segment in key.split("/")):
        raise InvalidKeyError(f"artifact key must not traverse directories: {key!r}")


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise
    dir_fd = os.open(path.parent, os.O_RDONLY)
    try:
        os.fsync(dir_fd)
    finally:
        os.close(dir_fd)


class ResultStore:
    """Durable store for score records and artifact blobs under one root."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self._results_dir = self.root / "results"
        self._artifacts_dir = self.root / "artifacts"
        try:
            self._results_dir.mkdir(parents=True, exist_ok=True)
            self._artifacts_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StorageError(f"cannot create store under {self.root}: {exc}") from exc

    # -- results ---------------------------------------------------------

    def _record_dir(self, model: str, benchmark: BenchmarkId) -> Path:
        return self._results_dir / quote(model, safe="") / benchmark.value

    def put_result(self, record: ScoreRecord) -> None:
        record.validate()
        target_dir = self._record_dir(record.model.render(), record.benchmark)
        target = target_dir / f"{quote(record.job_id, safe='')}.json"
        payload = json.dumps(_record_to_payload(record), ensure_ascii=False, sort_keys=True)
        try:
            target_dir.mkdir(parents=True, exist_ok=True)
            # Writers for the same (model, benchmark) serialize on a lock file;
            # distinct keys proceed in parallel.
            lock_path = target_dir / ".lock"
            with open(lock_path, "w") as lock_fh:
                fcntl.flock(lock_fh, fcntl.LOCK_EX)
                try:
                    if target.exists():
                        raise StorageError(
                            f"record already exists (append-only store): {target}"
                        )
                    _atomic_write(target, payload.encode("utf-8"))
                finally:
                    fcntl.flock(lock_fh, fcntl.LOCK_UN)
        except StorageError:
            raise
        except OSError as exc:
            raise StorageError(
                f"failed to persist {record.benchmark.value} result for "
                f"{record.model.render()!r}: {exc}"
            ) from exc

    def _iter_record_files(self, query: ResultQuery) -> Iterable[Path]:
        if not self._results_dir.exists():
            return
        for model_dir in sorted(self._results_dir.iterdir()):
            if not model_dir.is_dir():
                continue
            model = unquote(model_dir.name)
            if query.models is not None and model not in query.models:
                continue
            for bench_dir in sorted(model_dir.iterdir()):
                if not bench_dir.is_dir():
                    continue
                try:
                    benchmark = BenchmarkId(bench_dir.name)
                except ValueError:
                    continue
                if query.benchmarks is not None and benchmark not in query.benchmarks:
                    continue
                for path in sorted(bench_dir.glob("*.json")):
                    yield path

    def get_results(self, query: ResultQuery | None = None) -> list[ScoreRecord]:
        query = query or ResultQuery()
        records: list[ScoreRecord] = []
        for path in self._iter_record_files(query):
            try:
                payload = json.loads(path.read_text(encoding="utf-8"))
            except (OSError, ValueError) as exc:
                raise StorageError(f"unreadable result file {path}: {exc}") from exc
            records.append(_record_from_payload(payload, path))
        if query.latest_only:
            latest: dict[tuple[str, BenchmarkId], ScoreRecord] = {}
            for record in records:
                key = (record.model.render(), record.benchmark)
                current = latest.get(key)
                if current is None or (record.created_at, record.job_id) > (
                    current.created_at,
                    current.job_id,
                ):
                    latest[key] = record
            records = list(latest.values())
        records.sort(key=lambda r: (r.model.render(), r.benchmark.value, r.created_at, r.job_id))
        return records

    def list_models(self) -> list[str]:
        """Distinct model strings having at least one record, sorted."""
        models = set()
        if self._results_dir.exists():
            for model_dir in self._results_dir.iterdir():
                if model_dir.is_dir() and any(model_dir.glob("*/*.json")):
                    models.add(unquote(model_dir.name))
        return sorted(models)

    # -- artifacts -------------------------------------------------------

    def _artifact_file(self, key: str) -> Path:
        _validate_artifact_key(key)
        return self._artifacts_dir / quote(key, safe="")

    def put_artifact(self, key: str, data: bytes) -> None:
        target = self._artifact_file(key)
        try:
            _atomic_write(target, data)
        except OSError as exc:
            raise StorageError(f"failed to store artifact {key!r}: {exc}") from exc

    def get_artifact(self, key: str) -> bytes | None:
        target = self._artifact_file(key)
        try:
            return target.read_bytes()
        except FileNotFoundError:
            return None
        except OSError as exc:
            raise StorageError(f"failed to read artifact {key!r}: {exc}") from exc

    def artifact_path(self, key: str) -> Path | None:
        """Filesystem path of a stored artifact, or None when missing."""
        target = self._artifact_file(key)
        return target if target.exists() else None


def seed_from_manifest(store: ResultStore, manifest: FixtureManifest) -> int:
    """Write one ScoreRecord per manifest entry; returns the record count.

    Used to preload a store with known scores so reports can be exercised
    without running evaluations. Each call uses fresh job ids, so reseeding
    appends new record versions rather than failing.
    """
    created_at = _now()
    run_tag = uuid.uuid4().hex[:8]
    keys = sorted(manifest.entries, key=lambda k: (k[0], k[1].value))
    for i, key in enumerate(keys):
        model, benchmark = key
        entry = manifest.entries[key]
        record = ScoreRecord(
            model=model_ref_from_string(model),
            benchmark=benchmark,
            score=entry.score,
            sample_count=entry.sample_count,
            subscores=dict(entry.subscores),
            settings=EvalSettings().for_benchmark(benchmark),
            job_id=f"seed-{run_tag}-{i:04d}",
            created_at=created_at,
        )
        store.put_result(record)
    return len(keys)
