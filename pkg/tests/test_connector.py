from __future__ import annotations

import json
import random
import stat
import textwrap
from pathlib import Path

import pytest

import benchdata
from evaldeck.connector import (
    BenchmarkMismatchError,
    DuplicateShardError,
    EmptyMergeError,
    FixtureManifest,
    FixtureMissError,
    InvalidTemplateError,
    MalformedOutputError,
    MixedBenchmarksError,
    NonZeroExitError,
    PartialScore,
    RunnerRegistry,
    RunnerSpec,
    RunnerTimeoutError,
    RunRequest,
    SpawnFailedError,
    UnknownBenchmarkError,
    build_invocation,
    fixture_run,
    fixture_spec,
    merge_partials,
    shard_slice_size,
    spawn_process_runner,
)
from evaldeck.model import BenchmarkId, EvalSettings, expand_benchmarks, parse_model_ref


def _req(
    benchmark: BenchmarkId = BenchmarkId.MMLU,
    model: str = "upstage/SOLAR-10.7B-Instruct-v1.0",
    shard_index: int = 0,
    shard_count: int = 1,
    num_fewshot: int | None = None,
) -> RunRequest:
    return RunRequest(
        job_id="j-1",
        model=parse_model_ref(model),
        benchmark=benchmark,
        settings=EvalSettings(num_fewshot=num_fewshot),
        shard_index=shard_index,
        shard_count=shard_count,
    )


def _stub_runner(tmp_path: Path, name: str, body: str) -> str:
    """Write an executable python script whose argv ends with --output_path <path>."""
    script = tmp_path / name
    script.write_text("#!/usr/bin/env python3\n" + textwrap.dedent(body), encoding="utf-8")
    script.chmod(script.stat().st_mode | stat.S_IXUSR | stat.S_IXGRP | stat.S_IXOTH)
    return str(script)


ECHO_BODY = """
import json, sys
args = sys.argv[1:]
out = args[args.index("--output_path") + 1]
with open(out, "w") as fh:
    json.dump({"score": 42.0, "sample_count": 10}, fh)
"""


# -- registry -----------------------------------------------------------------


def test_register_and_resolve_round_trip() -> None:
    registry = RunnerRegistry()
    spec = fixture_spec(BenchmarkId.MMLU)
    registry.register(spec)
    assert registry.resolve(BenchmarkId.MMLU) is spec


def test_register_missing_output_path_is_invalid() -> None:
    registry = RunnerRegistry()
    with pytest.raises(InvalidTemplateError):
        registry.register(
            RunnerSpec(BenchmarkId.MMLU, "runner", ("--model", "{model}"))
        )


def test_register_rejects_duplicate_model_placeholder() -> None:
    registry = RunnerRegistry()
    with pytest.raises(InvalidTemplateError):
        registry.register(
            RunnerSpec(
                BenchmarkId.MMLU, "runner", ("{model}", "{model}", "{output_path}")
            )
        )


def test_register_rejects_unknown_placeholder() -> None:
    registry = RunnerRegistry()
    with pytest.raises(InvalidTemplateError):
        registry.register(
            RunnerSpec(BenchmarkId.MMLU, "runner", ("{model}", "{output_path}", "{gpu}"))
        )


def test_second_registration_wins() -> None:
    registry = RunnerRegistry()
    first = RunnerSpec(BenchmarkId.MT_BENCH, "first", ("{model}", "{output_path}"))
    second = RunnerSpec(BenchmarkId.MT_BENCH, "second", ("{model}", "{output_path}"))
    registry.register(first)
    registry.register(second)
    assert registry.resolve(BenchmarkId.MT_BENCH) is second


def test_resolve_unregistered_raises() -> None:
    registry = RunnerRegistry()
    with pytest.raises(UnknownBenchmarkError):
        registry.resolve(BenchmarkId.EQ_BENCH)


def test_all_h6_members_resolve_once_registered() -> None:
    registry = RunnerRegistry()
    for benchmark in expand_benchmarks({BenchmarkId.H6_EN}):
        registry.register(fixture_spec(benchmark))
    for benchmark in expand_benchmarks({BenchmarkId.H6_EN}):
        assert registry.resolve(benchmark).benchmark is benchmark


def test_runner_spec_rejects_composite_benchmark() -> None:
    with pytest.raises(ValueError):
        RunnerSpec(BenchmarkId.H6_EN, "runner")


# -- build_invocation ---------------------------------------------------------


def test_build_invocation_substitutes_published_example() -> None:
    spec = RunnerSpec(
        BenchmarkId.MMLU,
        "runner",
        ("--model", "{model}", "--fewshot", "{num_fewshot}", "--out", "{output_path}"),
    )
    tokens = build_invocation(_req(), spec, "/tmp/out.json")
    assert tokens == [
        "--model",
        "upstage/SOLAR-10.7B-Instruct-v1.0",
        "--fewshot",
        "5",
        "--out",
        "/tmp/out.json",
    ]


def test_build_invocation_substitutes_shard_placeholders() -> None:
    spec = RunnerSpec(
        BenchmarkId.MMLU,
        "runner",
        ("{model}", "{shard_index}", "{shard_count}", "{output_path}"),
    )
    tokens = build_invocation(_req(shard_index=3, shard_count=8), spec, "o")
    assert tokens[1:3] == ["3", "8"]


def test_build_invocation_benchmark_mismatch() -> None:
    spec = fixture_spec(BenchmarkId.GSM8K)
    with pytest.raises(BenchmarkMismatchError):
        build_invocation(_req(BenchmarkId.MMLU), spec, "o")


def test_build_invocation_leaves_no_unsubstituted_braces() -> None:
    rng = random.Random(3)
    placeholders = ["{model}", "{num_fewshot}", "{engine}", "{dtype}",
                    "{shard_index}", "{shard_count}", "{output_path}"]
    for _ in range(100):
        extras = rng.sample(placeholders[1:-1], rng.randint(0, 5))
        template = ["--model", "{model}", *extras, "--out={output_path}"]
        spec = RunnerSpec(BenchmarkId.MMLU, "runner", tuple(template))
        tokens = build_invocation(_req(shard_index=1, shard_count=4), spec, "out.json")
        assert all("{" not in t and "}" not in t for t in tokens)


def test_build_invocation_is_deterministic() -> None:
    spec = fixture_spec(BenchmarkId.ARC)
    req = _req(BenchmarkId.ARC, shard_index=2, shard_count=5)
    assert build_invocation(req, spec, "x") == build_invocation(req, spec, "x")


# -- shard partition ----------------------------------------------------------


def _brute_force_slices(total: int, shard_count: int) -> list[int]:
    # independent oracle: cut points at floor(total*i/k), sizes are the diffs
    bounds = [total * i // shard_count for i in range(shard_count + 1)]
    return [bounds[i + 1] - bounds[i] for i in range(shard_count)]


def test_even_split_example() -> None:
    assert [shard_slice_size(100, i, 4) for i in range(4)] == [25, 25, 25, 25]


def test_uneven_split_example_frozen() -> None:
    sizes = [shard_slice_size(10, i, 3) for i in range(3)]
    assert sizes == _brute_force_slices(10, 3)
    assert sizes == [3, 3, 4]
    assert sum(sizes) == 10


def test_partition_matches_oracle_and_sums_to_total() -> None:
    rng = random.Random(17)
    for _ in range(500):
        total = rng.randint(0, 5000)
        shard_count = rng.randint(1, 16)
        sizes = [shard_slice_size(total, i, shard_count) for i in range(shard_count)]
        assert sizes == _brute_force_slices(total, shard_count)
        assert sum(sizes) == total
        assert all(s >= 0 for s in sizes)


# -- fixture runner -----------------------------------------------------------


def test_fixture_run_returns_published_score(manifest: FixtureManifest) -> None:
    partial = fixture_run(
        RunRequest(
            job_id="j",
            model=parse_model_ref("upstage/SOLAR-10.7B-Instruct-v1.0"),
            benchmark=BenchmarkId.MMLU,
            settings=EvalSettings(),
        ),
        manifest,
    )
    assert partial.score == 65.28
    assert partial.sample_count == benchdata.SAMPLE_COUNTS["mmlu"]


def test_fixture_run_shard_gets_partition_slice() -> None:
    manifest = FixtureManifest.from_entries(
        [
            __import__("evaldeck.connector", fromlist=["FixtureEntry"]).FixtureEntry(
                model="org/m", benchmark=BenchmarkId.MMLU, score=65.28, sample_count=100
            )
        ]
    )
    partial = fixture_run(_req(model="org/m", shard_index=0, shard_count=4), manifest)
    assert partial.sample_count == 25
    assert partial.score == 65.28


def test_fixture_miss_names_model_and_benchmark(manifest: FixtureManifest) -> None:
    with pytest.raises(FixtureMissError) as exc_info:
        fixture_run(_req(model="nobody/unknown"), manifest)
    assert "nobody/unknown" in str(exc_info.value)
    assert "mmlu" in str(exc_info.value)


def test_manifest_load_rejects_out_of_scale_scores(tmp_path: Path) -> None:
    bad = tmp_path / "bad.json"
    bad.write_text(
        json.dumps([{"model": "m", "benchmark": "mt_bench", "score": 12.0, "sample_count": 5}])
    )
    from evaldeck.model import ScaleViolationError

    with pytest.raises(ScaleViolationError):
        FixtureManifest.load(bad)


def test_manifest_load_rejects_malformed_entries(tmp_path: Path) -> None:
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps([{"model": "m", "benchmark": "nope", "score": 1, "sample_count": 1}]))
    with pytest.raises(ValueError):
        FixtureManifest.load(bad)


# -- merge --------------------------------------------------------------------


def _partial(score: float, count: int, shard: int, benchmark=BenchmarkId.MMLU, subscores=None):
    return PartialScore(
        benchmark=benchmark,
        shard_index=shard,
        score=score,
        sample_count=count,
        subscores=subscores or {},
    )


def test_merge_symmetric_equal_weights() -> None:
    merged = merge_partials([_partial(70.0, 50, 0), _partial(80.0, 50, 1)])
    assert merged.score == 75.0
    assert merged.sample_count == 100


def test_merge_weighted_mean_against_hand_computed_value() -> None:
    # oracle: (60*10 + 90*30) / (10 + 30) = 3300 / 40 = 82.5
    merged = merge_partials([_partial(60.0, 10, 0), _partial(90.0, 30, 1)])
    assert merged.score == pytest.approx(82.5, abs=1e-12)
    assert merged.sample_count == 40


def test_merge_single_partial_is_identity() -> None:
    merged = merge_partials([_partial(42.0, 7, 0, subscores={"sub": 40.0})])
    assert merged.score == 42.0
    assert merged.sample_count == 7
    assert merged.subscores == {"sub": 40.0}


def test_merge_rejects_empty_mixed_and_duplicates() -> None:
    with pytest.raises(EmptyMergeError):
        merge_partials([])
    with pytest.raises(MixedBenchmarksError):
        merge_partials([_partial(1.0, 1, 0), _partial(1.0, 1, 1, benchmark=BenchmarkId.ARC)])
    with pytest.raises(DuplicateShardError):
        merge_partials([_partial(1.0, 1, 0), _partial(2.0, 1, 0)])


def test_merge_is_permutation_invariant() -> None:
    rng = random.Random(5)
    for _ in range(100):
        parts = [
            _partial(rng.uniform(0, 100), rng.randint(0, 50), shard)
            for shard in range(rng.randint(1, 10))
        ]
        if sum(p.sample_count for p in parts) == 0:
            continue
        reference = merge_partials(parts)
        for _ in range(5):
            shuffled = parts[:]
            rng.shuffle(shuffled)
            again = merge_partials(shuffled)
            assert again.score == reference.score
            assert again.sample_count == reference.sample_count
            assert again.subscores == reference.subscores


def test_merge_subscores_key_wise_with_partial_presence() -> None:
    parts = [
        _partial(50.0, 10, 0, subscores={"a": 10.0, "b": 20.0}),
        _partial(60.0, 30, 1, subscores={"a": 50.0}),
    ]
    merged = merge_partials(parts)
    assert merged.subscores["a"] == pytest.approx((10.0 * 10 + 50.0 * 30) / 40)
    assert merged.subscores["b"] == pytest.approx(20.0)


def test_random_shard_partitions_merge_back_to_manifest_score() -> None:
    from evaldeck.connector import FixtureEntry

    rng = random.Random(29)
    for _ in range(200):
        score = round(rng.uniform(0, 100), 4)
        total = rng.randint(1, 5000)
        k = rng.randint(1, 16)
        manifest = FixtureManifest.from_entries(
            [FixtureEntry(model="org/m", benchmark=BenchmarkId.MMLU, score=score, sample_count=total)]
        )
        parts = [
            fixture_run(_req(model="org/m", shard_index=i, shard_count=k), manifest)
            for i in range(k)
        ]
        merged = merge_partials(parts)
        assert merged.sample_count == total
        assert abs(merged.score - score) < 1e-9


def test_sharded_equals_unsharded_for_every_k_up_to_16(manifest: FixtureManifest) -> None:
    hub_id = "upstage/SOLAR-10.7B-Instruct-v1.0"
    single = fixture_run(_req(model=hub_id, benchmark=BenchmarkId.GSM8K), manifest)
    for k in range(1, 17):
        parts = [
            fixture_run(
                _req(model=hub_id, benchmark=BenchmarkId.GSM8K, shard_index=i, shard_count=k),
                manifest,
            )
            for i in range(k)
        ]
        merged = merge_partials(parts)
        assert merged.sample_count == single.sample_count
        assert abs(merged.score - single.score) < 1e-9


# -- process runner -----------------------------------------------------------


def test_process_runner_reads_result_file(tmp_path: Path) -> None:
    exe = _stub_runner(tmp_path, "ok.py", ECHO_BODY)
    spec = RunnerSpec(BenchmarkId.MMLU, exe)
    partial = spawn_process_runner(_req(), spec, timeout=30.0)
    assert partial.score == 42.0
    assert partial.sample_count == 10


def test_process_runner_nonzero_exit(tmp_path: Path) -> None:
    exe = _stub_runner(tmp_path, "fail.py", "import sys\nsys.stderr.write('boom')\nsys.exit(1)\n")
    spec = RunnerSpec(BenchmarkId.MMLU, exe)
    with pytest.raises(NonZeroExitError) as exc_info:
        spawn_process_runner(_req(), spec, timeout=30.0)
    assert exc_info.value.code == 1
    assert "boom" in exc_info.value.stderr_tail


def test_process_runner_malformed_payload(tmp_path: Path) -> None:
    body = """
import sys
args = sys.argv[1:]
out = args[args.index("--output_path") + 1]
with open(out, "w") as fh:
    fh.write("not json at all")
"""
    exe = _stub_runner(tmp_path, "bad.py", body)
    spec = RunnerSpec(BenchmarkId.MMLU, exe)
    with pytest.raises(MalformedOutputError):
        spawn_process_runner(_req(), spec, timeout=30.0)


def test_process_runner_missing_output_file(tmp_path: Path) -> None:
    exe = _stub_runner(tmp_path, "silent.py", "pass\n")
    spec = RunnerSpec(BenchmarkId.MMLU, exe)
    with pytest.raises(MalformedOutputError):
        spawn_process_runner(_req(), spec, timeout=30.0)


def test_process_runner_out_of_scale_score_is_malformed(tmp_path: Path) -> None:
    body = """
import json, sys
args = sys.argv[1:]
out = args[args.index("--output_path") + 1]
with open(out, "w") as fh:
    json.dump({"score": 12.0, "sample_count": 3}, fh)
"""
    exe = _stub_runner(tmp_path, "oob.py", body)
    spec = RunnerSpec(BenchmarkId.MT_BENCH, exe)
    with pytest.raises(MalformedOutputError):
        spawn_process_runner(_req(BenchmarkId.MT_BENCH), spec, timeout=30.0)


def test_process_runner_spawn_failure() -> None:
    spec = RunnerSpec(BenchmarkId.MMLU, "/nonexistent/runner-binary")
    with pytest.raises(SpawnFailedError):
        spawn_process_runner(_req(), spec, timeout=30.0)


def test_process_runner_timeout(tmp_path: Path) -> None:
    exe = _stub_runner(tmp_path, "slow.py", "import time\ntime.sleep(30)\n")
    spec = RunnerSpec(BenchmarkId.MMLU, exe)
    with pytest.raises(RunnerTimeoutError):
        spawn_process_runner(_req(), spec, timeout=0.3)


def test_process_runner_passes_extra_env(tmp_path: Path) -> None:
    body = """
import json, os, sys
args = sys.argv[1:]
out = args[args.index("--output_path") + 1]
with open(out, "w") as fh:
    json.dump({"score": float(os.environ["PROBE_SCORE"]), "sample_count": 1}, fh)
"""
    exe = _stub_runner(tmp_path, "env.py", body)
    spec = RunnerSpec(BenchmarkId.MMLU, exe)
    partial = spawn_process_runner(_req(), spec, timeout=30.0, extra_env={"PROBE_SCORE": "33.5"})
    assert partial.score == 33.5


def test_process_runner_refuses_fixture_spec() -> None:
    with pytest.raises(ValueError):
        spawn_process_runner(_req(), fixture_spec(BenchmarkId.MMLU))
