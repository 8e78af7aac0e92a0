"""HTTP + WebSocket service exposing a live session to the biofeedback UI.

One pipeline producer publishes into a SessionHub; each WebSocket subscriber
drains an independent bounded queue (1024 events) and is disconnected with
close code 1013 if it stalls past the bound. Session logs are JSONL files,
one event per line, final line = the metrics object.

publish() may be called from any thread: session logging happens inline and
fan-out is handed to the server's event loop (captured over the app
lifespan) in submission order.
"""

import asyncio
import json
import logging
import socket
import threading
import uuid
from contextlib import asynccontextmanager
from pathlib import Path

from fastapi import FastAPI, Request, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse

from .errors import BreathSenseError
from .stream import (
    DecisionSmoother,
    MetricsAggregator,
    compliance_score,
    event_line,
    metrics_line,
    parse_script,
)

log = logging.getLogger("breathsense.service")

QUEUE_BOUND = 1024
SLOW_SUBSCRIBER_CLOSE = 1013  # "try again later"


class SessionAlreadyActive(BreathSenseError):
    pass


class NoActiveSession(BreathSenseError):
    pass


class PortInUse(BreathSenseError):
    pass


class Subscriber:
    def __init__(self):
        self.queue = asyncio.Queue(maxsize=QUEUE_BOUND)
        self.dead = False

    def offer(self, item: str):
        try:
            self.queue.put_nowait(item)
        except asyncio.QueueFull:
            self.dead = True


class _Session:
    def __init__(self, session_id: str, script, log_path: Path):
        self.session_id = session_id
        self.script = script
        self.log_path = log_path
        self.fh = open(log_path, "w", encoding="utf-8")
        self.smoother = DecisionSmoother()
        self.aggregator = MetricsAggregator()
        self.timeline = []


class SessionHub:
    """Session state + event fan-out; publish() may be called from any thread."""

    def __init__(self, log_dir, models_loaded: bool = False, compliance_threshold: float = 0.7):
        self.log_dir = Path(log_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)
        self.models_loaded = models_loaded
        self.compliance_threshold = compliance_threshold
        self._lock = threading.Lock()
        self._session = None
        self._subscribers = {}
        self._next_sub = 0
        self._loop = None

    def attach_loop(self, loop) -> None:
        with self._lock:
            self._loop = loop

    def start_session(self, script=None) -> str:
        with self._lock:
            if self._session is not None:
                raise SessionAlreadyActive(self._session.session_id)
            session_id = str(uuid.uuid4())
            self._session = _Session(session_id, script, self.log_dir / f"{session_id}.jsonl")
            log.info("session %s started", session_id)
            return session_id

    def stop_session(self):
        with self._lock:
            if self._session is None:
                raise NoActiveSession("no session to stop")
            sess = self._session
            self._session = None
        metrics = sess.aggregator.snapshot()
        if sess.script:
            overall, _ = compliance_score(sess.timeline, sess.script, self.compliance_threshold)
            metrics.compliance = overall
        sess.fh.write(metrics_line(metrics) + "\n")
        sess.fh.close()
        log.info("session %s stopped after %d events", sess.session_id, metrics.total_events)
        return sess.session_id, metrics

    def publish(self, event) -> None:
        line = event_line(event)
        with self._lock:
            if self._session is not None:
                stabilized = self._session.smoother.update(event.decision)
                self._session.aggregator.push(event.t_start, stabilized)
                self._session.timeline.append((event.t_start, stabilized))
                self._session.fh.write(line + "\n")
                self._session.fh.flush()
            loop = self._loop
            has_subscribers = bool(self._subscribers)
        if loop is not None and has_subscribers:
            loop.call_soon_threadsafe(self._fanout, line)

    def _fanout(self, line: str) -> None:
        with self._lock:
            subscribers = list(self._subscribers.values())
        for sub in subscribers:
            if not sub.dead:
                sub.offer(line)

    def subscribe(self) -> tuple:
        with self._lock:
            sub_id = self._next_sub
            self._next_sub += 1
            sub = Subscriber()
            self._subscribers[sub_id] = sub
            return sub_id, sub

    def unsubscribe(self, sub_id: int) -> None:
        with self._lock:
            self._subscribers.pop(sub_id, None)

    @property
    def session_active(self) -> bool:
        with self._lock:
            return self._session is not None


async def pump_subscriber(sub: Subscriber, ws: WebSocket) -> None:
    """Forward queued event lines to one websocket until it stalls or drops."""
    while True:
        if sub.dead:
            await ws.close(code=SLOW_SUBSCRIBER_CLOSE)
            return
        try:
            item = await asyncio.wait_for(sub.queue.get(), timeout=0.1)
        except asyncio.TimeoutError:
            continue
        await ws.send_text(item)


def create_app(hub: SessionHub) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app):
        hub.attach_loop(asyncio.get_running_loop())
        yield
        hub.attach_loop(None)

    app = FastAPI(title="breathsense", lifespan=lifespan)
    app.state.hub = hub

    @app.get("/health")
    def health():
        return {"status": "ok", "models_loaded": hub.models_loaded}

    @app.post("/session/start")
    async def session_start(request: Request):
        raw = await request.body()
        body = json.loads(raw) if raw else None
        script = None
        if isinstance(body, list):
            script = parse_script(body)
        elif isinstance(body, dict) and body.get("script"):
            script = parse_script(body["script"])
        try:
            session_id = hub.start_session(script)
        except SessionAlreadyActive:
            return JSONResponse(status_code=409, content={"error": "SessionAlreadyActive"})
        return {"session_id": session_id}

    @app.post("/session/stop")
    def session_stop():
        try:
            session_id, metrics = hub.stop_session()
        except NoActiveSession:
            return JSONResponse(status_code=404, content={"error": "NoActiveSession"})
        return {"session_id": session_id, "metrics": metrics.to_json()}

    @app.websocket("/stream")
    async def stream(ws: WebSocket):
        await ws.accept()
        sub_id, sub = hub.subscribe()
        try:
            await pump_subscriber(sub, ws)
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            hub.unsubscribe(sub_id)

    return app


def check_port_free(port: int, host: str = "127.0.0.1") -> None:
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((host, port))
    except OSError:
        raise PortInUse(f"port {port} already in use")
    finally:
        probe.close()


class ServiceRunner:
    """uvicorn in a background thread, used by the monitor subcommand."""

    def __init__(self, hub: SessionHub, port: int, host: str = "127.0.0.1"):
        import uvicorn

        check_port_free(port, host)
        config = uvicorn.Config(create_app(hub), host=host, port=port, log_level="warning")
        self.server = uvicorn.Server(config)
        self.thread = threading.Thread(target=self.server.run, daemon=True)

    def start(self):
        self.thread.start()

    def stop(self):
        self.server.should_exit = True
        self.thread.join(timeout=5)


def load_script_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_script(json.load(fh))
