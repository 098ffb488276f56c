"""HTTP + WebSocket wire API over the gateway, evaluator and store.

Endpoints:
    POST /sessions                  -> {"session_id": ...}
    POST /sessions/{id}/events      -> array of reply objects
    GET  /jobs/{id}                 -> job snapshot
    GET  /models                    -> array of model strings
    POST /reports                   -> report payload
    WS   /sessions/{id}/stream      -> pushed reply objects (JobFinished etc.)

Asynchronous notifications come from a poller thread that inspects
watching sessions once per second; replies for sessions with no attached
stream are buffered until one connects.
"""

from __future__ import annotations

import asyncio
import queue
import threading
from collections import defaultdict, deque
from contextlib import asynccontextmanager

from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.staticfiles import StaticFiles

from .database import ResultStore
from .evaluator import Evaluator, UnknownJobError
from .gateway import ChatGateway, GatewayEvent, UnknownSessionError
from .model import EvalJob
from .reporter import Criterion, NoDataError, build_report

NOTIFY_INTERVAL = 1.0
_PENDING_LIMIT = 256


def job_payload(job: EvalJob) -> dict:
    return {
        "job_id": job.job_id,
        "model": job.model.render(),
        "benchmarks": sorted(b.value for b in job.benchmarks),
        "settings": {
            "engine": job.settings.engine.value,
            "dtype": job.settings.dtype.value,
            "num_fewshot": job.settings.num_fewshot,
        },
        "data_parallel": job.data_parallel,
        "state": job.state.value,
        "failure_reason": job.failure_reason,
        "submitted_at": job.submitted_at.isoformat(),
        "finished_at": job.finished_at.isoformat() if job.finished_at else None,
    }


class StreamHub:
    """Fan-out of reply payloads to the websocket streams of each session."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._streams: dict[str, set[queue.Queue]] = defaultdict(set)
        self._pending: dict[str, deque] = defaultdict(lambda: deque(maxlen=_PENDING_LIMIT))

    def attach(self, session_id: str) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        with self._lock:
            for payload in self._pending.pop(session_id, ()):
                q.put(payload)
            self._streams[session_id].add(q)
        return q

    def detach(self, session_id: str, q: queue.Queue) -> None:
        with self._lock:
            self._streams[session_id].discard(q)

    def publish(self, session_id: str, payload: dict) -> None:
        with self._lock:
            streams = self._streams.get(session_id)
            if streams:
                for q in streams:
                    q.put(payload)
            else:
                self._pending[session_id].append(payload)


class _Notifier(threading.Thread):
    def __init__(self, gateway: ChatGateway, hub: StreamHub, interval: float) -> None:
        super().__init__(name="evaldeck-notifier", daemon=True)
        self._gateway = gateway
        self._hub = hub
        self._interval = interval
        self._stop = threading.Event()

    def run(self) -> None:
        while not self._stop.wait(self._interval):
            self.poll_once()

    def poll_once(self) -> None:
        for session_id, reply in self._gateway.notify_completions():
            self._hub.publish(session_id, reply.to_payload())

    def stop(self) -> None:
        self._stop.set()


def create_app(
    gateway: ChatGateway,
    evaluator: Evaluator,
    store: ResultStore,
    *,
    notify_interval: float = NOTIFY_INTERVAL,
    console_dir: str | None = None,
) -> FastAPI:
    hub = StreamHub()
    notifier = _Notifier(gateway, hub, notify_interval)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        evaluator.run_scheduler()
        notifier.start()
        yield
        notifier.stop()
        evaluator.shutdown()

    app = FastAPI(title="evaldeck", lifespan=lifespan)
    app.state.hub = hub
    app.state.notifier = notifier

    @app.post("/sessions")
    def create_session() -> dict:
        session = gateway.open_session()
        return {"session_id": session.session_id}

    @app.post("/sessions/{session_id}/events")
    def post_event(session_id: str, payload: dict) -> list[dict]:
        try:
            event = GatewayEvent.from_payload(session_id, payload)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        try:
            replies = gateway.handle_event(event)
        except UnknownSessionError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return [reply.to_payload() for reply in replies]

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str) -> dict:
        try:
            return job_payload(evaluator.job_status(job_id))
        except UnknownJobError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.get("/models")
    def get_models() -> list[str]:
        return store.list_models()

    @app.post("/reports")
    def post_report(payload: dict) -> dict:
        models = payload.get("models")
        raw_criteria = payload.get("criteria")
        if not isinstance(models, list) or not all(isinstance(m, str) for m in models) or not models:
            raise HTTPException(status_code=422, detail="'models' must be a non-empty string array")
        if not isinstance(raw_criteria, list) or not raw_criteria:
            raise HTTPException(status_code=422, detail="'criteria' must be a non-empty array")
        try:
            criteria = [Criterion(c) for c in raw_criteria]
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=f"unknown criterion: {exc}") from exc
        try:
            report = build_report(models, criteria, store)
        except NoDataError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return report.to_payload()

    @app.websocket("/sessions/{session_id}/stream")
    async def stream(websocket: WebSocket, session_id: str) -> None:
        try:
            gateway.get_session(session_id)
        except UnknownSessionError:
            await websocket.close(code=4404)
            return
        await websocket.accept()
        q = hub.attach(session_id)
        receiver = asyncio.create_task(websocket.receive())
        try:
            while True:
                if receiver.done():
                    message = receiver.result()
                    if message.get("type") == "websocket.disconnect":
                        break
                    receiver = asyncio.create_task(websocket.receive())
                try:
                    payload = q.get_nowait()
                except queue.Empty:
                    await asyncio.wait({receiver}, timeout=0.05)
                    continue
                await websocket.send_json(payload)
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            receiver.cancel()
            hub.detach(session_id, q)

    if console_dir:
        app.mount("/", StaticFiles(directory=console_dir, html=True), name="console")

    return app
