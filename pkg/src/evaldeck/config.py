"""Configuration from `.env`-style files and the process environment.

Recognized keys: OPENAI_API_KEY, SLACK_BOT_TOKEN, SLACK_APP_TOKEN, plus the
namespaced plumbing keys EVALDECK_STORAGE_ROOT, EVALDECK_WORKERS and
EVALDECK_LISTEN. Process environment values override file values. Missing
keys leave optionals unset; an absent OPENAI_API_KEY only disables
judge-backed runners, absent chat tokens only disable chat bridging.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .model import EvaldeckError


class MalformedEnvLineError(EvaldeckError):
    def __init__(self, line_number: int, line: str) -> None:
        super().__init__(f"malformed env line {line_number}: {line!r}")
        self.line_number = line_number


class AddressInUseError(EvaldeckError):
    pass


DEFAULT_STORAGE_ROOT = Path("evaldeck-data")
DEFAULT_WORKER_COUNT = 8
DEFAULT_LISTEN = "127.0.0.1:8000"

_KNOWN_KEYS = (
    "OPENAI_API_KEY",
    "SLACK_BOT_TOKEN",
    "SLACK_APP_TOKEN",
    "EVALDECK_STORAGE_ROOT",
    "EVALDECK_WORKERS",
    "EVALDECK_LISTEN",
)


@dataclass(frozen=True)
class Config:
    openai_api_key: str | None = None
    chat_bot_token: str | None = None
    chat_app_token: str | None = None
    storage_root: Path = DEFAULT_STORAGE_ROOT
    worker_count: int = DEFAULT_WORKER_COUNT
    listen_address: str = DEFAULT_LISTEN

    def __post_init__(self) -> None:
        if self.worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        self.host_port()  # validates the listen address shape

    def host_port(self) -> tuple[str, int]:
        host, sep, port = self.listen_address.rpartition(":")
        if not sep or not host:
            raise ValueError(f"listen address must be host:port, got {self.listen_address!r}")
        return host, int(port)


def parse_env_file(path: str | Path) -> dict[str, str]:
    """Parse KEY=value lines; '#' comments and blank lines are ignored."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_number, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep or not key or " " in key:
                raise MalformedEnvLineError(line_number, raw.rstrip("\n"))
            values[key] = value.strip()
    return values


def load_config(
    env_file: str | Path | None = None,
    environ: Mapping[str, str] | None = None,
) -> Config:
    """Merge env file and process environment (environment wins)."""
    environ = os.environ if environ is None else environ
    merged: dict[str, str] = {}
    if env_file is not None:
        merged.update(parse_env_file(env_file))
    for key in _KNOWN_KEYS:
        if key in environ:
            merged[key] = environ[key]

    worker_count = DEFAULT_WORKER_COUNT
    if "EVALDECK_WORKERS" in merged:
        try:
            worker_count = int(merged["EVALDECK_WORKERS"])
        except ValueError:
            raise ValueError(
                f"EVALDECK_WORKERS must be an integer, got {merged['EVALDECK_WORKERS']!r}"
            ) from None
    return Config(
        openai_api_key=merged.get("OPENAI_API_KEY"),
        chat_bot_token=merged.get("SLACK_BOT_TOKEN"),
        chat_app_token=merged.get("SLACK_APP_TOKEN"),
        storage_root=Path(merged.get("EVALDECK_STORAGE_ROOT", DEFAULT_STORAGE_ROOT)),
        worker_count=worker_count,
        listen_address=merged.get("EVALDECK_LISTEN", DEFAULT_LISTEN),
    )
