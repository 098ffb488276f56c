"""Chat-style no-code interaction surface.

One session is a small state machine: typing "Request!" walks the user
through model entry and confirmation and launches an evaluation job;
typing "Report!" walks through model and criteria selection and returns a
report payload. Errors are carried in-band as replies; events never raise
through to the transport.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from .database import ResultStore
from .evaluator import Evaluator
from .model import EvaldeckError, ModelRef, parse_model_ref
from .reporter import Criterion, Report, build_report

REQUEST_TRIGGER = "Request!"
REPORT_TRIGGER = "Report!"

HELP_TEXT = (
    f'Type "{REQUEST_TRIGGER}" to launch an evaluation '
    f'or "{REPORT_TRIGGER}" to look up stored results.'
)
MODEL_PROMPT = "Enter the model name on the hub or the local model directory path."
MODEL_SELECT_PROMPT = "Select the models to include in the report."
CRITERIA_SELECT_PROMPT = "Select the evaluation criteria."


class UnknownSessionError(EvaldeckError):
    pass


class EventKind(str, Enum):
    TEXT = "text"
    SELECT = "select"
    CONFIRM = "confirm"
    DENY = "deny"


@dataclass(frozen=True)
class GatewayEvent:
    kind: EventKind
    session_id: str
    text: str | None = None
    options: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind is EventKind.SELECT and not self.options:
            raise ValueError("select events carry a non-empty option list")

    @classmethod
    def from_payload(cls, session_id: str, payload: dict) -> "GatewayEvent":
        if not isinstance(payload, dict):
            raise ValueError("event payload must be a JSON object")
        try:
            kind = EventKind(payload.get("kind"))
        except ValueError:
            raise ValueError(f"unknown event kind: {payload.get('kind')!r}") from None
        text = payload.get("text")
        if text is not None and not isinstance(text, str):
            raise ValueError("event 'text' must be a string")
        options = payload.get("options") or ()
        if not isinstance(options, (list, tuple)) or not all(
            isinstance(o, str) for o in options
        ):
            raise ValueError("event 'options' must be a list of strings")
        return cls(kind=kind, session_id=session_id, text=text, options=tuple(options))


class ReplyKind(str, Enum):
    PROMPT = "prompt"
    CHOICES = "choices"
    JOB_LAUNCHED = "job_launched"
    JOB_FINISHED = "job_finished"
    REPORT = "report"
    ERROR = "error"


@dataclass(frozen=True)
class GatewayReply:
    kind: ReplyKind
    text: str | None = None
    options: tuple[str, ...] = ()
    job_id: str | None = None
    report: Report | None = None

    def to_payload(self) -> dict:
        payload: dict = {"kind": self.kind.value}
        if self.text is not None:
            payload["text"] = self.text
        if self.options:
            payload["options"] = list(self.options)
        if self.job_id is not None:
            payload["job_id"] = self.job_id
        if self.report is not None:
            payload["report"] = self.report.to_payload()
        return payload


def _prompt(text: str) -> GatewayReply:
    return GatewayReply(kind=ReplyKind.PROMPT, text=text)


def _choices(text: str, options: Sequence[str]) -> GatewayReply:
    return GatewayReply(kind=ReplyKind.CHOICES, text=text, options=tuple(options))


def _error(text: str) -> GatewayReply:
    return GatewayReply(kind=ReplyKind.ERROR, text=text)


class SessionPhase(str, Enum):
    IDLE = "idle"
    AWAIT_MODEL = "await_model"
    AWAIT_CONFIRM = "await_confirm"
    AWAIT_MODEL_SELECTION = "await_model_selection"
    AWAIT_CRITERIA_SELECTION = "await_criteria_selection"
    WATCHING_JOB = "watching_job"


@dataclass
class GatewaySession:
    session_id: str
    user_id: str = "anonymous"
    phase: SessionPhase = SessionPhase.IDLE
    pending_model: ModelRef | None = None
    selected_models: tuple[str, ...] = ()
    watched_job_id: str | None = None
    # events for one session are handled serially, in arrival order
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def _reset(self) -> None:
        self.phase = SessionPhase.IDLE
        self.pending_model = None
        self.selected_models = ()
        self.watched_job_id = None


class ChatGateway:
    """Routes session events to the evaluator and reporter."""

    def __init__(
        self,
        evaluator: Evaluator,
        store: ResultStore,
        *,
        data_parallel: int = 1,
        criteria: Sequence[Criterion] = tuple(Criterion),
    ) -> None:
        self._evaluator = evaluator
        self._store = store
        self._data_parallel = data_parallel
        self._criteria = tuple(criteria)
        self._sessions: dict[str, GatewaySession] = {}
        self._sessions_lock = threading.Lock()

    # -- session management -------------------------------------------------

    def open_session(self, user_id: str = "anonymous") -> GatewaySession:
        session = GatewaySession(session_id=f"s-{uuid.uuid4().hex[:12]}", user_id=user_id)
        with self._sessions_lock:
            self._sessions[session.session_id] = session
        return session

    def get_session(self, session_id: str) -> GatewaySession:
        with self._sessions_lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise UnknownSessionError(f"unknown session id: {session_id}")
        return session

    def sessions(self) -> list[GatewaySession]:
        with self._sessions_lock:
            return list(self._sessions.values())

    # -- event handling -------------------------------------------------------

    def handle_event(self, event: GatewayEvent) -> list[GatewayReply]:
        session = self.get_session(event.session_id)
        with session.lock:
            try:
                return self._dispatch(session, event)
            except EvaldeckError as exc:
                return [_error(str(exc))]
            except Exception as exc:  # total over inputs: surface, don't raise
                return [_error(f"internal error: {exc}")]

    def _dispatch(self, session: GatewaySession, event: GatewayEvent) -> list[GatewayReply]:
        phase = session.phase
        if event.kind is EventKind.TEXT:
            return self._on_text(session, (event.text or "").strip())
        if event.kind is EventKind.CONFIRM:
            if phase is SessionPhase.AWAIT_CONFIRM:
                return self._launch(session)
            return [_error("Nothing awaits confirmation. " + HELP_TEXT)]
        if event.kind is EventKind.DENY:
            if phase is SessionPhase.AWAIT_CONFIRM:
                session._reset()
                return [_prompt("Evaluation request cancelled.")]
            return [_error("Nothing awaits confirmation. " + HELP_TEXT)]
        if event.kind is EventKind.SELECT:
            if phase is SessionPhase.AWAIT_MODEL_SELECTION:
                return self._on_model_selection(session, event.options)
            if phase is SessionPhase.AWAIT_CRITERIA_SELECTION:
                return self._on_criteria_selection(session, event.options)
            return [_error("Nothing to select right now. " + HELP_TEXT)]
        return [_error(HELP_TEXT)]

    def _on_text(self, session: GatewaySession, text: str) -> list[GatewayReply]:
        phase = session.phase
        if phase is SessionPhase.AWAIT_MODEL:
            try:
                model = parse_model_ref(text)
            except EvaldeckError as exc:
                return [_error(f"That does not look like a model reference ({exc}). {MODEL_PROMPT}")]
            session.pending_model = model
            session.phase = SessionPhase.AWAIT_CONFIRM
            benchmarks = ", ".join(b.value for b in self._evaluator.registry.registered())
            return [
                _prompt(
                    f"Evaluate {model.render()!r} on: {benchmarks or 'no registered benchmarks'}? "
                    "Confirm to launch or deny to cancel."
                )
            ]
        if phase is SessionPhase.IDLE:
            if text == REQUEST_TRIGGER:
                session.phase = SessionPhase.AWAIT_MODEL
                return [_prompt(MODEL_PROMPT)]
            if text == REPORT_TRIGGER:
                models = self._store.list_models()
                if not models:
                    return [_error("No evaluation results are stored yet. " + HELP_TEXT)]
                session.phase = SessionPhase.AWAIT_MODEL_SELECTION
                return [_choices(MODEL_SELECT_PROMPT, models)]
        return [_error(HELP_TEXT)]

    def _launch(self, session: GatewaySession) -> list[GatewayReply]:
        model = session.pending_model
        assert model is not None
        benchmarks = self._evaluator.registry.registered()
        try:
            job_id = self._evaluator.submit(
                model, benchmarks, data_parallel=self._data_parallel
            )
        except (EvaldeckError, ValueError) as exc:
            session._reset()
            return [_error(f"Could not launch the evaluation: {exc}")]
        session.phase = SessionPhase.WATCHING_JOB
        session.pending_model = None
        session.watched_job_id = job_id
        return [GatewayReply(kind=ReplyKind.JOB_LAUNCHED, job_id=job_id)]

    def _on_model_selection(
        self, session: GatewaySession, options: tuple[str, ...]
    ) -> list[GatewayReply]:
        known = set(self._store.list_models())
        unknown = [m for m in options if m not in known]
        if unknown:
            return [_error("Unknown models: " + ", ".join(sorted(unknown)))]
        session.selected_models = options
        session.phase = SessionPhase.AWAIT_CRITERIA_SELECTION
        return [_choices(CRITERIA_SELECT_PROMPT, [c.value for c in self._criteria])]

    def _on_criteria_selection(
        self, session: GatewaySession, options: tuple[str, ...]
    ) -> list[GatewayReply]:
        criteria = []
        for option in options:
            try:
                criteria.append(Criterion(option))
            except ValueError:
                return [_error(f"Unknown criterion: {option!r}")]
        models = list(session.selected_models)
        session._reset()
        report = build_report(models, criteria, self._store)
        return [GatewayReply(kind=ReplyKind.REPORT, report=report)]

    # -- completion notifications --------------------------------------------

    def notify_completions(self) -> list[tuple[str, GatewayReply]]:
        """Emit exactly one terminal notification per watched job.

        Watching sessions whose job reached a terminal state get a
        JobFinished (or an error reply carrying the failure reason) and
        return to idle, so repeated polls are idempotent.
        """
        emitted: list[tuple[str, GatewayReply]] = []
        for session in self.sessions():
            with session.lock:
                if session.phase is not SessionPhase.WATCHING_JOB:
                    continue
                job_id = session.watched_job_id
                assert job_id is not None
                try:
                    job = self._evaluator.job_status(job_id)
                except EvaldeckError as exc:
                    session._reset()
                    emitted.append((session.session_id, _error(str(exc))))
                    continue
                if not job.state.is_terminal:
                    continue
                session._reset()
                if job.failure_reason is None:
                    reply = GatewayReply(kind=ReplyKind.JOB_FINISHED, job_id=job_id)
                else:
                    reply = _error(f"Evaluation job {job_id} failed: {job.failure_reason}")
                emitted.append((session.session_id, reply))
        return emitted
