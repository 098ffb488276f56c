from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import benchdata  # noqa: E402

from evaldeck.connector import FixtureManifest, fixture_spec  # noqa: E402
from evaldeck.database import ResultStore, seed_from_manifest  # noqa: E402
from evaldeck.model import BenchmarkId  # noqa: E402


@pytest.fixture()
def manifest_path(tmp_path) -> Path:
    return benchdata.write_manifest(tmp_path / "open_models.json")


@pytest.fixture()
def manifest(manifest_path) -> FixtureManifest:
    return FixtureManifest.load(manifest_path)


@pytest.fixture()
def fixture_registry(manifest):
    from evaldeck.connector import RunnerRegistry

    registry = RunnerRegistry()
    for benchmark in BenchmarkId:
        if not benchmark.is_composite:
            registry.register(fixture_spec(benchmark))
    return registry


@pytest.fixture()
def store(tmp_path) -> ResultStore:
    return ResultStore(tmp_path / "store")


@pytest.fixture()
def seeded_store(store, manifest) -> ResultStore:
    seed_from_manifest(store, manifest)
    return store
