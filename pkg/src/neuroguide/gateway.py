"""Network edge for human-in-the-loop sessions.

Serves one operator connection per session over a persistent WebSocket at
/session (JSON text frames, schemas in docs/message_schemas.md) plus a plain
HTTP /healthz probe and optional static assets for the console bundle. Human
actions enter the same lag channel / world-state path the simulator uses, so a
human session records a bag with exactly the structure of an agent session.

The session loop runs in a worker thread that advances the logical clock at
wall 10 Hz; every server push is derived from a bus envelope the loop
published. Disconnects pause the loop; reconnecting resumes it with a full
checklist snapshot.
"""

from __future__ import annotations

import asyncio
import http
import json
import mimetypes
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from queue import Empty, Queue

import numpy as np

from .bus import BagWriter, MessageBus, STANDARD_TOPICS
from .classifier import rolling_summary, EmptyHistory, WorkloadVector
from .policy import GuidanceDecision, RuleTable, build_default_rule_table
from .sim.agent import LagChannel
from .sim.generator import FnirsGenerator
from .sim.metrics import compute_metrics
from .sim.session import SessionConfig, _ClassifierNode, _EngineNode, _PipelineNode, _PolicyNode
from .sim.training import train_fixture_models
from .tasks import ActionAck, EngineEvent, FalseErrorMonitor, NoActiveError, TaskEngine, WorldState

__all__ = ["GatewayServer", "HumanSession", "ProtocolViolation", "serve"]

HEARTBEAT_S = 1.0


class ProtocolViolation(ValueError):
    pass


@dataclass
class _ServerPush:
    payload: dict


class HumanSession:
    """One human-driven session: the simulator loop with the agent replaced by
    an operator action queue. Thread-safe entry points: submit_action,
    submit_gaze, ack_error, pause, resume, stop."""

    def __init__(self, cfg: SessionConfig, push, models=None,
                 rules: RuleTable | None = None, realtime: bool = True):
        if cfg.condition not in ("baseline", "random", "adaptive"):
            raise ProtocolViolation(f"unknown condition {cfg.condition!r}")
        self.cfg = cfg
        self.push = push  # callable(dict) invoked for every ServerMessage
        self.realtime = realtime
        self.models = models or train_fixture_models(cfg.pipeline, cfg.model_seed)
        self.rules = rules or build_default_rule_table()
        self.checklist = cfg.checklist_spec()
        self.script = cfg.effective_script()
        self._declared = set(self.checklist.control_ids())

        pipe_cfg = cfg.pipeline
        self._interval_ns = pipe_cfg.frame_interval_ns
        self._n_cal = int(round(cfg.calibration_s * pipe_cfg.sample_rate_hz))
        self._task_start_ns = self._n_cal * self._interval_ns
        self._cap_ticks = self._n_cal + int(round(cfg.time_cap_s * pipe_cfg.sample_rate_hz))

        seeds = np.random.SeedSequence(cfg.seed).spawn(4)
        self._gen = FnirsGenerator(self.script, pipe_cfg, int(seeds[0].generate_state(1)[0]))
        self._policy_rng = np.random.default_rng(seeds[2])
        self._lag = LagChannel(cfg.late_prob, int(seeds[3].generate_state(1)[0]))

        self.bus = MessageBus(STANDARD_TOPICS)
        self._sink = None
        self._writer = None
        self.engine = TaskEngine(self.checklist, cfg.condition,
                                 session_start_ns=self._task_start_ns)
        self.monitor = FalseErrorMonitor()
        _PipelineNode(self.bus, pipe_cfg, self._n_cal)
        _ClassifierNode(self.bus, self.models, pipe_cfg.window_samples)
        _EngineNode(self.bus, self.engine, self._task_start_ns)
        self._policy = _PolicyNode(self.bus, self.engine, self.rules,
                                   cfg.condition, self._policy_rng, cfg.random_mode)

        self._actions: Queue = Queue()
        self._gaze: str | None = None
        self._events: list[EngineEvent] = []
        self._workload: list[dict] = []
        self._acks: list[ActionAck] = []
        self._last_completed = {"ts": None, "control": None}
        self._pause = threading.Event()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._tick = 0
        self._parameters = self.checklist.initial_parameters()
        self._last_action = None
        self.ended = False

        self.bus.subscribe("engine_events", self._on_event)
        self.bus.subscribe("workload", self._on_workload)
        self.bus.subscribe("guidance", self._on_guidance)

    # -- bus fan-out to the operator ---------------------------------------

    def _on_event(self, env) -> None:
        ev = EngineEvent.from_payload(env.decoded())
        self._events.append(ev)
        if ev.kind == "step_completed":
            self._last_completed = {"ts": ev.timestamp_ns,
                                    "control": ev.detail["control_id"]}
            self.push({"type": "checklist_state", **self.engine.tree.snapshot(),
                       "timestamp_ns": ev.timestamp_ns})
        elif ev.kind == "error_detected":
            self.monitor.observe_error(ev)
            try:
                view = self.engine.error_dashboard_state()
            except NoActiveError:  # pragma: no cover - race-free in one thread
                view = {}
            self.push({"type": "error_alert", "timestamp_ns": ev.timestamp_ns,
                       **view})
            self.push({"type": "checklist_state", **self.engine.tree.snapshot(),
                       "timestamp_ns": ev.timestamp_ns})

    def _on_workload(self, env) -> None:
        obj = env.decoded()
        self._workload.append(obj)
        self._history = getattr(self, "_history", [])
        self._history.append(WorkloadVector.from_payload(obj))
        if len(self._history) > 200:
            self._history = self._history[-150:]
        summary = {}
        try:
            roll = rolling_summary(self._history, span_s=10.0, now_ns=env.timestamp_ns)
            summary = {facet: entry["state"] for facet, entry in roll.items()}
        except EmptyHistory:
            pass
        self.push({"type": "workload", "timestamp_ns": env.timestamp_ns,
                   "vector": obj, "summary": summary})

    def _on_guidance(self, env) -> None:
        self.push({"type": "guidance", "timestamp_ns": env.timestamp_ns,
                   **env.decoded()})

    # -- operator entry points ----------------------------------------------

    def submit_action(self, control_id: str, value) -> None:
        if control_id not in self._declared:
            raise ProtocolViolation(f"undeclared control {control_id!r}")
        if self.ended:
            raise ProtocolViolation("session has ended")
        self._actions.put({"control_id": control_id, "value": value})

    def submit_gaze(self, control_id: str | None) -> None:
        if control_id is not None and control_id not in self._declared:
            raise ProtocolViolation(f"undeclared control {control_id!r}")
        self._gaze = control_id

    def ack_error(self, event_id) -> None:
        # Operator confirmation of the audible alert; recorded for the logs.
        pass

    def pause(self) -> None:
        self._pause.set()

    def resume(self) -> None:
        self._pause.clear()

    def snapshot(self) -> dict:
        return {"type": "checklist_state", **self.engine.tree.snapshot(),
                "timestamp_ns": self._tick * self._interval_ns}

    def start_message(self) -> dict:
        """One-time session description: the console renders its panel from
        the checklist document echoed here."""
        doc = self.cfg.checklist if self.cfg.checklist is not None else None
        if doc is None:
            from . import data

            doc = data.load_fixture_checklist()
        return {
            "type": "session_started",
            "condition": self.cfg.condition,
            "calibration_s": self.cfg.calibration_s,
            "sample_rate_hz": self.cfg.pipeline.sample_rate_hz,
            "checklist": doc,
        }

    # -- loop -----------------------------------------------------------------

    def start(self, bag_path: str | None = None) -> None:
        import io

        self._sink = open(bag_path, "wb") if bag_path else io.BytesIO()
        self._writer = BagWriter(self._sink, self.cfg.session_id, 0, STANDARD_TOPICS)
        self.bus.attach_recorder(self._writer)
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def _run(self) -> None:
        period = 1.0 / self.cfg.pipeline.sample_rate_hz
        next_wall = time.monotonic()
        while not self._stop.is_set() and self._tick < self._cap_ticks:
            if self._pause.is_set():
                time.sleep(0.02)
                next_wall = time.monotonic()
                continue
            self._step_once()
            if self.engine.tree.complete:
                break
            if self.realtime:
                next_wall += period
                delay = next_wall - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
        self._finish()

    def _step_once(self) -> None:
        tick = self._tick
        now = tick * self._interval_ns
        phase = "calibration" if tick < self._n_cal else "task"
        self.bus.publish("clock", {"tick": tick, "phase": phase}, now)

        if phase == "task":
            try:
                queued = self._actions.get_nowait()
                self._lag.send({**queued, "event_time_ns": now}, now)
            except Empty:
                pass
            delivered = self._lag.deliver(now)
        else:
            delivered = None
        if delivered is not None:
            self._parameters[delivered["control_id"]] = delivered["value"]
            self._last_action = {
                "control_id": delivered["control_id"],
                "value": delivered["value"],
                "timestamp_ns": now,
            }
        ws = WorldState(now, dict(self._parameters), gaze_target=self._gaze,
                        last_action=self._last_action)
        self.bus.publish("world_state", ws.to_payload(), now)

        if delivered is not None:
            correct = (
                self._last_completed["ts"] == now
                and self._last_completed["control"] == delivered["control_id"]
            )
            ack = ActionAck(delivered["control_id"], delivered["value"],
                            delivered["event_time_ns"], now, correct)
            self._acks.append(ack)
            self.bus.publish("frontend_acks", ack.to_payload(), now)
            for false_ev in self.monitor.observe_ack(ack):
                self.bus.publish("engine_events", false_ev.to_payload(), now)

        self.bus.publish("raw_fnirs", self._gen.frame(tick).to_payload(), now)
        self._tick += 1

    def _finish(self) -> None:
        if self.ended:
            return
        self.ended = True
        self._writer.close()
        end_ns = self._tick * self._interval_ns
        metrics = compute_metrics(
            self._workload, self._events, self._policy.decisions, self._acks,
            self._task_start_ns, end_ns, self.cfg.condition, self.cfg.seed,
        )
        self.push({"type": "session_ended", "metrics": metrics,
                   "completed": self.engine.tree.complete})


class GatewayServer:
    """websockets-based server: /session (one operator per session), /healthz,
    and optional static file serving for the console bundle."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0,
                 static_dir: str | None = None, models=None, realtime: bool = True):
        self.host = host
        self.port = port
        self.static_dir = Path(static_dir) if static_dir else None
        self.models = models
        self.realtime = realtime
        self.session: HumanSession | None = None
        self._server = None
        self._loop: asyncio.AbstractEventLoop | None = None

    # -- http side ------------------------------------------------------------

    def _process_request(self, connection, request):
        from websockets.http11 import Response
        from websockets.datastructures import Headers

        path = request.path.split("?")[0]
        if path == "/session":
            return None  # proceed with the websocket handshake
        if path == "/healthz":
            body = b"ok\n"
            return Response(
                200, "OK", Headers({"Content-Type": "text/plain",
                                    "Content-Length": str(len(body))}), body
            )
        if self.static_dir is not None:
            rel = path.lstrip("/") or "index.html"
            target = (self.static_dir / rel).resolve()
            if target.is_file() and str(target).startswith(str(self.static_dir.resolve())):
                body = target.read_bytes()
                ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
                return Response(
                    200, "OK", Headers({"Content-Type": ctype,
                                        "Content-Length": str(len(body))}), body
                )
        body = b"not found\n"
        return Response(
            404, "Not Found", Headers({"Content-Type": "text/plain",
                                       "Content-Length": str(len(body))}), body
        )

    # -- websocket side ----------------------------------------------------------

    async def _handler(self, websocket) -> None:
        loop = asyncio.get_running_loop()
        outbox: asyncio.Queue = asyncio.Queue()

        def push(payload: dict) -> None:
            loop.call_soon_threadsafe(outbox.put_nowait, payload)

        async def pump():
            while True:
                payload = await outbox.get()
                await websocket.send(json.dumps(payload, sort_keys=True))

        async def heartbeat():
            while True:
                await asyncio.sleep(HEARTBEAT_S)
                await websocket.send(json.dumps({"type": "heartbeat"}))

        pump_task = asyncio.create_task(pump())
        beat_task = asyncio.create_task(heartbeat())
        try:
            if self.session is not None and not self.session.ended:
                # Reconnect: resume the paused session with a full snapshot.
                self.session.push = push
                self.session.resume()
                await websocket.send(json.dumps(self.session.start_message(),
                                                sort_keys=True))
                await websocket.send(json.dumps(self.session.snapshot(), sort_keys=True))
            async for raw in websocket:
                try:
                    msg = json.loads(raw)
                    await self._dispatch(msg, push, websocket)
                except ProtocolViolation as exc:
                    await websocket.send(json.dumps(
                        {"type": "protocol_violation", "reason": str(exc)}
                    ))
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    await websocket.send(json.dumps(
                        {"type": "protocol_violation", "reason": f"malformed message: {exc}"}
                    ))
                    await websocket.close(code=1002, reason="protocol violation")
                    return
        finally:
            pump_task.cancel()
            beat_task.cancel()
            if self.session is not None and not self.session.ended:
                self.session.pause()  # disconnect pauses; reconnect resumes

    async def _dispatch(self, msg: dict, push, websocket) -> None:
        kind = msg.get("type")
        if kind == "start_session":
            if self.session is not None and not self.session.ended:
                raise ProtocolViolation("session already running")
            cfg = SessionConfig.from_jsonable(msg.get("config", {}))
            self.session = HumanSession(cfg, push, models=self.models,
                                        realtime=self.realtime)
            self.session.start(bag_path=msg.get("bag_path"))
            await websocket.send(json.dumps(self.session.start_message(),
                                            sort_keys=True))
            await websocket.send(json.dumps(self.session.snapshot(), sort_keys=True))
            return
        if self.session is None:
            raise ProtocolViolation("no session; send start_session first")
        if kind == "action":
            self.session.submit_action(msg["control_id"], msg["value"])
        elif kind == "gaze":
            self.session.submit_gaze(msg.get("control_id"))
        elif kind == "ack_error":
            self.session.ack_error(msg.get("event_id"))
        elif kind == "pause":
            self.session.pause()
        elif kind == "resume":
            self.session.resume()
        else:
            raise ProtocolViolation(f"unknown message type {kind!r}")

    # -- lifecycle ------------------------------------------------------------------

    async def start(self):
        import websockets

        self._server = await websockets.serve(
            self._handler, self.host, self.port,
            process_request=self._process_request,
        )
        self.port = self._server.sockets[0].getsockname()[1]
        return self

    async def stop(self):
        if self.session is not None:
            self.session.stop()
        self._server.close()
        await self._server.wait_closed()


def serve(host: str = "127.0.0.1", port: int = 8765, static_dir: str | None = None):
    """Blocking entry point used by the CLI."""

    async def _main():
        server = GatewayServer(host, port, static_dir=static_dir)
        await server.start()
        print(f"gateway listening on ws://{host}:{server.port}/session", flush=True)
        await asyncio.Future()

    asyncio.run(_main())
