"""Command-line entry points.

    evaldeck eval   --ckpt_path <model> --h6_en [--mt_bench ...] [--fixture m.json]
    evaldeck report --models a,b --criteria h6_avg,mt_bench [--json]
    evaldeck seed   --fixture m.json
    evaldeck serve  [--listen host:port] [--fixture m.json]

Exit codes: 0 success, 1 runtime failure (failed job, no data), 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import json
import socket
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .config import AddressInUseError, Config, load_config
from .connector import (
    DEFAULT_RUNNER_TIMEOUT,
    FixtureManifest,
    RunnerRegistry,
    RunnerSpec,
    fixture_spec,
)
from .database import ResultQuery, ResultStore, seed_from_manifest
from .evaluator import Evaluator
from .gateway import ChatGateway
from .model import (
    BenchmarkId,
    Dtype,
    Engine,
    EvalSettings,
    EvaldeckError,
    JobState,
    expand_benchmarks,
    parse_model_ref,
)
from .reporter import Criterion, NoDataError, build_report, format_score, render_table

BENCHMARK_FLAGS = {
    "h6_en": BenchmarkId.H6_EN,
    "mt_bench": BenchmarkId.MT_BENCH,
    "eq_bench": BenchmarkId.EQ_BENCH,
    "ifeval": BenchmarkId.IFEVAL,
}


def _add_common_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--env-file", type=Path, default=None, help="path to a .env file")
    parser.add_argument("--storage-root", type=Path, default=None, help="store directory")


def _resolve_config(args: argparse.Namespace) -> Config:
    env_file = args.env_file
    if env_file is None and Path(".env").exists():
        env_file = Path(".env")
    config = load_config(env_file)
    overrides = {}
    if getattr(args, "storage_root", None) is not None:
        overrides["storage_root"] = args.storage_root
    if getattr(args, "workers", None) is not None:
        overrides["worker_count"] = args.workers
    if getattr(args, "listen", None) is not None:
        overrides["listen_address"] = args.listen
    return replace(config, **overrides) if overrides else config


def _build_registry(args: argparse.Namespace) -> tuple[RunnerRegistry, FixtureManifest | None]:
    registry = RunnerRegistry()
    manifest = None
    if getattr(args, "fixture", None):
        manifest = FixtureManifest.load(args.fixture)
        for benchmark in BenchmarkId:
            if not benchmark.is_composite:
                registry.register(fixture_spec(benchmark))
    for entry in getattr(args, "runner", None) or []:
        name, sep, executable = entry.partition("=")
        if not sep:
            raise ValueError(f"--runner takes BENCHMARK=EXECUTABLE, got {entry!r}")
        registry.register(RunnerSpec(BenchmarkId(name), executable))
    return registry, manifest


def run_eval_command(argv: Sequence[str]) -> int:
    parser = argparse.ArgumentParser(prog="evaldeck eval", description="run benchmarks for one model")
    parser.add_argument("--ckpt_path", "--ckpt-path", dest="ckpt_path", required=True,
                        help="hub model name or local model directory path")
    parser.add_argument("--h6_en", action="store_true", help="the six-benchmark general suite")
    parser.add_argument("--mt_bench", action="store_true")
    parser.add_argument("--eq_bench", action="store_true")
    parser.add_argument("--ifeval", action="store_true")
    parser.add_argument("--data_parallel", type=int, default=1, help="shards per benchmark")
    parser.add_argument("--engine", choices=[e.value for e in Engine], default=Engine.HF.value)
    parser.add_argument("--dtype", choices=[d.value for d in Dtype], default=Dtype.FLOAT16.value)
    parser.add_argument("--num_fewshot", type=int, default=None,
                        help="override the per-benchmark few-shot default")
    parser.add_argument("--fixture", type=Path, default=None,
                        help="score manifest replayed by the fixture runner")
    parser.add_argument("--runner", action="append", metavar="BENCHMARK=EXECUTABLE",
                        help="register an external runner executable")
    parser.add_argument("--timeout", type=float, default=DEFAULT_RUNNER_TIMEOUT,
                        help="per-shard runner timeout in seconds")
    parser.add_argument("--workers", type=int, default=None)
    _add_common_options(parser)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    benchmarks = {b for flag, b in BENCHMARK_FLAGS.items() if getattr(args, flag)}
    if not benchmarks:
        print("error: at least one benchmark flag is required "
              "(--h6_en, --mt_bench, --eq_bench, --ifeval)", file=sys.stderr)
        return 2
    if args.data_parallel < 1:
        print("error: --data_parallel must be >= 1", file=sys.stderr)
        return 2

    try:
        config = _resolve_config(args)
        registry, manifest = _build_registry(args)
        store = ResultStore(config.storage_root)
        settings = EvalSettings(
            engine=Engine(args.engine), dtype=Dtype(args.dtype), num_fewshot=args.num_fewshot
        )
        model = parse_model_ref(args.ckpt_path)
        extra_env = {"OPENAI_API_KEY": config.openai_api_key} if config.openai_api_key else None
        evaluator = Evaluator(
            registry,
            store,
            worker_count=config.worker_count,
            fixture=manifest,
            process_timeout=args.timeout,
            extra_env=extra_env,
        )
        with evaluator:
            job_id = evaluator.submit(model, benchmarks, settings, args.data_parallel)
            expanded = expand_benchmarks(benchmarks)
            print(
                f"job {job_id}: {len(expanded)} benchmarks x {args.data_parallel} shards "
                f"= {len(expanded) * args.data_parallel} work items"
            )
            job = evaluator.wait_for(job_id)
    except (EvaldeckError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if job.state is not JobState.COMPLETED:
        print(f"job {job_id} failed: {job.failure_reason}", file=sys.stderr)
        return 1
    records = [
        r
        for r in store.get_results(ResultQuery(models=frozenset({model.render()}), latest_only=False))
        if r.job_id == job_id
    ]
    width = max(len("benchmark"), *(len(r.benchmark.value) for r in records))
    print(f"{'benchmark'.ljust(width)}  {'score':>8}  {'samples':>8}")
    for record in sorted(records, key=lambda r: r.benchmark.value):
        print(
            f"{record.benchmark.value.ljust(width)}  {format_score(record.score):>8}  "
            f"{record.sample_count:>8}"
        )
    return 0


def run_report_command(argv: Sequence[str]) -> int:
    parser = argparse.ArgumentParser(prog="evaldeck report", description="score table and ranking")
    parser.add_argument("--models", required=True, help="comma-separated model strings")
    parser.add_argument("--criteria", required=True, help="comma-separated criteria ids")
    parser.add_argument("--json", action="store_true", help="emit the report payload as JSON")
    _add_common_options(parser)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    models = [m.strip() for m in args.models.split(",") if m.strip()]
    criteria = []
    for token in args.criteria.split(","):
        token = token.strip()
        if not token:
            continue
        try:
            criteria.append(Criterion(token))
        except ValueError:
            print(f"error: unknown criterion {token!r} "
                  f"(known: {', '.join(c.value for c in Criterion)})", file=sys.stderr)
            return 2
    if not models or not criteria:
        print("error: --models and --criteria must be non-empty", file=sys.stderr)
        return 2

    try:
        config = _resolve_config(args)
        store = ResultStore(config.storage_root)
        report = build_report(models, criteria, store)
    except NoDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (EvaldeckError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.json:
        print(json.dumps(report.to_payload()))
    else:
        sys.stdout.write(render_table(report))
    return 0


def run_seed_command(argv: Sequence[str]) -> int:
    parser = argparse.ArgumentParser(prog="evaldeck seed",
                                     description="load a score manifest into the store")
    parser.add_argument("--fixture", type=Path, required=True)
    _add_common_options(parser)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        config = _resolve_config(args)
        store = ResultStore(config.storage_root)
        manifest = FixtureManifest.load(args.fixture)
        count = seed_from_manifest(store, manifest)
    except (EvaldeckError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"seeded {count} records into {config.storage_root}")
    return 0


def _check_address(host: str, port: int) -> None:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            sock.bind((host, port))
        except OSError as exc:
            raise AddressInUseError(f"cannot listen on {host}:{port}: {exc}") from exc


def run_serve_command(argv: Sequence[str]) -> int:
    parser = argparse.ArgumentParser(prog="evaldeck serve",
                                     description="serve the gateway wire API")
    parser.add_argument("--listen", default=None, help="host:port (default from config)")
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--fixture", type=Path, default=None)
    parser.add_argument("--runner", action="append", metavar="BENCHMARK=EXECUTABLE")
    parser.add_argument("--data_parallel", type=int, default=1,
                        help="shards per benchmark for no-code requests")
    parser.add_argument("--console-dir", type=Path, default=None,
                        help="static directory to serve the web console from")
    _add_common_options(parser)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        config = _resolve_config(args)
        registry, manifest = _build_registry(args)
        store = ResultStore(config.storage_root)
        extra_env = {"OPENAI_API_KEY": config.openai_api_key} if config.openai_api_key else None
        evaluator = Evaluator(
            registry,
            store,
            worker_count=config.worker_count,
            fixture=manifest,
            extra_env=extra_env,
        )
        gateway = ChatGateway(evaluator, store, data_parallel=args.data_parallel)
        host, port = config.host_port()
        _check_address(host, port)
    except AddressInUseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (EvaldeckError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    from .server import create_app
    import uvicorn

    console_dir = str(args.console_dir) if args.console_dir else None
    app = create_app(gateway, evaluator, store, console_dir=console_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


_COMMANDS = {
    "eval": run_eval_command,
    "report": run_report_command,
    "seed": run_seed_command,
    "serve": run_serve_command,
}


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        print(__doc__.strip())
        return 0 if argv else 2
    command = argv[0]
    handler = _COMMANDS.get(command)
    if handler is None:
        print(f"error: unknown command {command!r} "
              f"(expected one of: {', '.join(_COMMANDS)})", file=sys.stderr)
        return 2
    return handler(argv[1:])


def entrypoint() -> None:
    raise SystemExit(main())
