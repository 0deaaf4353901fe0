"""Closed-loop session runner.

One session wires generator -> pipeline -> classifier -> policy and
agent -> lag channel -> world -> engine on a single bus, recorded to a bag.
The logical clock advances in frame intervals; every publish carries the
logical time, so a (config, seed) pair produces a byte-identical bag, and
replaying a bag's input topics through fresh consumers reproduces the derived
topics byte-for-byte.

Tick order (fixed; replay depends on it):
  1. clock            -> engine timing checks -> guidance decisions
  2. world_state      (after delivering at most one lagged action)
  3. frontend_acks    (ack of the delivered action, correctness attached)
  4. raw_fnirs        -> hemo -> workload
  5. agent planning/acting (feeds the lag channel, nothing published)
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from ..bus import Bag, BagWriter, MessageBus, STANDARD_TOPICS, encode_payload
from ..classifier import EmptyHistory, WorkloadVector, classify_all, extract_features, rolling_summary
from ..pipeline import PipelineConfig, StreamingPipeline, calibrate_baseline
from ..policy import (
    CognitiveContext,
    GuidanceDecision,
    RuleTable,
    build_default_rule_table,
    decide,
)
from ..tasks import (
    ActionAck,
    ChecklistSpec,
    EngineEvent,
    FalseErrorMonitor,
    TaskEngine,
    WorldState,
)
from .agent import AgentProfile, LagChannel, PilotAgent, scripted_need
from .generator import FnirsGenerator, LoadScript, ScriptSegment
from .metrics import compute_metrics
from .training import DEFAULT_MODEL_SEED, train_fixture_models

__all__ = ["SessionConfig", "SessionResult", "run_session", "rerun_from_bag"]

CONDITIONS = ("baseline", "random", "adaptive")


def _default_checklist() -> dict:
    from .. import data

    return data.load_fixture_checklist()


@dataclass
class SessionConfig:
    condition: str = "baseline"
    seed: int = 0
    checklist: dict | None = None  # None -> packaged 9-procedure fixture
    agent: AgentProfile = field(default_factory=AgentProfile)
    load_script: LoadScript | None = None  # None -> constant optimal
    late_prob: float = 0.0
    calibration_s: float = 12.0
    time_cap_s: float = 1800.0
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    model_seed: int = DEFAULT_MODEL_SEED
    random_mode: str = "subsets"

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise ValueError(f"condition must be one of {CONDITIONS}")
        if self.calibration_s * self.pipeline.sample_rate_hz < self.pipeline.window_samples:
            raise ValueError("calibration must span at least one full window")

    @property
    def session_id(self) -> str:
        return f"{self.condition}|seed={self.seed}|cal={self.calibration_s}"

    def checklist_spec(self) -> ChecklistSpec:
        doc = self.checklist if self.checklist is not None else _default_checklist()
        return ChecklistSpec.from_dict(doc)

    def effective_script(self) -> LoadScript:
        base = self.load_script or LoadScript.constant("optimal")
        return LoadScript(
            [ScriptSegment(self.calibration_s)] + list(base.segments),
            artifacts=list(base.artifacts),
            noise_uM=base.noise_uM,
        )

    def to_jsonable(self) -> dict:
        return {
            "condition": self.condition,
            "seed": self.seed,
            "checklist": self.checklist,
            "agent": self.agent.to_payload(),
            "load_script": None if self.load_script is None else self.load_script.to_payload(),
            "late_prob": self.late_prob,
            "calibration_s": self.calibration_s,
            "time_cap_s": self.time_cap_s,
            "model_seed": self.model_seed,
            "random_mode": self.random_mode,
        }

    @classmethod
    def from_jsonable(cls, obj: dict) -> "SessionConfig":
        return cls(
            condition=obj.get("condition", "baseline"),
            seed=obj.get("seed", 0),
            checklist=obj.get("checklist"),
            agent=AgentProfile.from_payload(obj["agent"])
            if obj.get("agent") is not None
            else AgentProfile(),
            load_script=None
            if obj.get("load_script") is None
            else LoadScript.from_payload(obj["load_script"]),
            late_prob=obj.get("late_prob", 0.0),
            calibration_s=obj.get("calibration_s", 12.0),
            time_cap_s=obj.get("time_cap_s", 1800.0),
            model_seed=obj.get("model_seed", DEFAULT_MODEL_SEED),
            random_mode=obj.get("random_mode", "subsets"),
        )


@dataclass
class SessionResult:
    config: SessionConfig
    bag_bytes: bytes
    events: list
    guidance: list
    workload: list
    acks: list
    metrics: dict
    completed: bool
    guidance_seen: int
    guidance_matched: int

    @property
    def bag(self) -> Bag:
        return Bag.from_bytes(self.bag_bytes)

    def event_log_lines(self) -> list:
        return [e.to_record() for e in self.events]

    def guidance_log_lines(self) -> list:
        return [
            json.dumps(g, sort_keys=True, separators=(",", ":")) for g in self.guidance
        ]


class _PipelineNode:
    """raw_fnirs -> hemo; collects the calibration segment, then streams."""

    def __init__(self, bus: MessageBus, cfg: PipelineConfig, n_calibration: int):
        self.bus = bus
        self.cfg = cfg
        self.n_calibration = n_calibration
        self._cal_frames: list = []
        self._pipeline: StreamingPipeline | None = None
        bus.subscribe("raw_fnirs", self._on_frame)

    def _on_frame(self, env) -> None:
        from ..pipeline import RawFrame

        frame = RawFrame.from_payload(env.decoded())
        if self._pipeline is None:
            self._cal_frames.append(frame)
            if len(self._cal_frames) >= self.n_calibration:
                baseline = calibrate_baseline(self._cal_frames, self.cfg)
                self._pipeline = StreamingPipeline(self.cfg, baseline)
                self._cal_frames = []
            return
        sample = self._pipeline.ingest(frame)
        if sample is not None:
            self.bus.publish("hemo", sample.to_payload(), env.timestamp_ns)


class _ClassifierNode:
    """hemo -> workload once a full window of samples exists."""

    def __init__(self, bus: MessageBus, models: dict, window_samples: int):
        self.bus = bus
        self.models = models
        self.window_samples = window_samples
        self._window: list = []
        bus.subscribe("hemo", self._on_hemo)

    def _on_hemo(self, env) -> None:
        from ..pipeline import HemoSample

        sample = HemoSample.from_payload(env.decoded())
        self._window.append(sample)
        if len(self._window) > self.window_samples:
            self._window.pop(0)
        if len(self._window) < self.window_samples:
            return
        spec = self.models["memory"].feature_spec
        feats = extract_features(self._window, spec)
        vector = classify_all(feats, self.models, env.timestamp_ns)
        self.bus.publish("workload", vector.to_payload(), env.timestamp_ns)


class _EngineNode:
    """world_state + clock -> engine_events."""

    def __init__(self, bus: MessageBus, engine: TaskEngine, task_start_ns: int):
        self.bus = bus
        self.engine = engine
        self.task_start_ns = task_start_ns
        bus.subscribe("world_state", self._on_world)
        bus.subscribe("clock", self._on_clock)

    def _publish(self, events, ts) -> None:
        for ev in events:
            self.bus.publish("engine_events", ev.to_payload(), ts)

    def _on_world(self, env) -> None:
        if env.timestamp_ns < self.task_start_ns:
            return
        ws = WorldState.from_payload(env.decoded())
        self._publish(self.engine.apply_world_state(ws), env.timestamp_ns)

    def _on_clock(self, env) -> None:
        if env.decoded().get("phase") != "task":
            return
        self._publish(self.engine.check_clock(env.timestamp_ns), env.timestamp_ns)


class _PolicyNode:
    """engine_events(guidance_due|timeout) -> guidance, using the rolling
    workload summary; before classifier warm-up the summary defaults to
    all-optimal (least disruptive)."""

    def __init__(self, bus: MessageBus, engine: TaskEngine, rules: RuleTable,
                 condition: str, rng, random_mode: str, backend=None):
        self.bus = bus
        self.engine = engine
        self.rules = rules
        self.condition = condition
        self.rng = rng
        self.random_mode = random_mode
        self.backend = backend
        self.decisions: list = []
        self._history: list = []
        self._error_active = False
        bus.subscribe("workload", self._on_workload)
        bus.subscribe("engine_events", self._on_event)

    def _on_workload(self, env) -> None:
        self._history.append(WorkloadVector.from_payload(env.decoded()))
        if len(self._history) > 200:
            self._history = self._history[-150:]

    def _summary(self, now_ns: int) -> dict:
        try:
            summary = rolling_summary(self._history, span_s=10.0, now_ns=now_ns)
            return {facet: entry["state"] for facet, entry in summary.items()}
        except EmptyHistory:
            return {"memory": "optimal", "attention": "optimal", "perception": "optimal"}

    def _on_event(self, env) -> None:
        obj = env.decoded()
        kind = obj["event"]
        if kind == "error_detected":
            self._error_active = True
            return
        if kind == "step_completed":
            self._error_active = False
            return
        if kind not in ("guidance_due", "timeout"):
            return
        if self.condition == "baseline":
            return
        step = self.engine.tree.active_step
        if step is None:
            return
        ctx = CognitiveContext(
            workload_summary=self._summary(env.timestamp_ns),
            procedure_id=self.engine.tree.active_procedure_id,
            step_id=step.id,
            instruction=step.instruction,
            gaze_focus=None,
            error_context=self._error_active,
        )
        decision = decide(
            ctx,
            step,
            self.condition,
            self.rules,
            rng=self.rng,
            backend=self.backend,
            random_mode=self.random_mode,
        )
        if decision is not None:
            payload = decision.to_payload()
            payload["trigger"] = kind
            payload["step_id"] = step.id
            self.decisions.append(payload)
            self.bus.publish("guidance", payload, env.timestamp_ns)


def _spawn_rngs(seed: int):
    children = np.random.SeedSequence(seed).spawn(4)
    return {
        "generator": np.random.default_rng(children[0]),
        "agent": np.random.default_rng(children[1]),
        "policy": np.random.default_rng(children[2]),
        "lag": np.random.default_rng(children[3]),
    }


def run_session(cfg: SessionConfig, models: dict | None = None,
                bag_path: str | None = None, backend=None,
                rules: RuleTable | None = None) -> SessionResult:
    """Run one closed-loop session; returns logs, metrics, and the bag."""
    if models is None:
        models = train_fixture_models(cfg.pipeline, cfg.model_seed)
    if rules is None:
        rules = build_default_rule_table()
    checklist = cfg.checklist_spec()
    script = cfg.effective_script()
    pipe_cfg = cfg.pipeline
    interval_ns = pipe_cfg.frame_interval_ns
    n_cal = int(round(cfg.calibration_s * pipe_cfg.sample_rate_hz))
    task_start_ns = n_cal * interval_ns
    cap_ticks = n_cal + int(round(cfg.time_cap_s * pipe_cfg.sample_rate_hz))

    seeds = np.random.SeedSequence(cfg.seed).spawn(4)
    gen = FnirsGenerator(script, pipe_cfg, int(seeds[0].generate_state(1)[0]))
    agent = PilotAgent(cfg.agent, checklist, int(seeds[1].generate_state(1)[0]))
    policy_rng = np.random.default_rng(seeds[2])
    lag = LagChannel(cfg.late_prob, int(seeds[3].generate_state(1)[0]))

    bus = MessageBus(STANDARD_TOPICS)
    sink = io.BytesIO()
    writer = BagWriter(sink, cfg.session_id, 0, STANDARD_TOPICS)
    bus.attach_recorder(writer)

    engine = TaskEngine(checklist, cfg.condition, session_start_ns=task_start_ns)
    monitor = FalseErrorMonitor()
    _PipelineNode(bus, pipe_cfg, n_cal)
    _ClassifierNode(bus, models, pipe_cfg.window_samples)
    _EngineNode(bus, engine, task_start_ns)
    policy = _PolicyNode(bus, engine, rules, cfg.condition, policy_rng,
                         cfg.random_mode, backend)

    events: list[EngineEvent] = []
    workload: list[dict] = []
    acks: list[ActionAck] = []
    # Fed by subscriptions so ack correctness and agent belief updates run
    # inside the same dispatch cascade.
    last_completed = {"ts": None, "control": None}

    def on_event_env(env):
        ev = EngineEvent.from_payload(env.decoded())
        events.append(ev)
        if ev.kind == "step_completed":
            last_completed["ts"] = ev.timestamp_ns
            last_completed["control"] = ev.detail["control_id"]
            agent.on_step_completed(engine.tree.active_step_id)
        elif ev.kind == "error_detected":
            monitor.observe_error(ev)
            agent.on_error(ev.detail["expected_step"])

    def on_workload_env(env):
        workload.append(env.decoded())

    def on_guidance_env(env):
        decision = GuidanceDecision.from_payload(env.decoded())
        now_s = env.timestamp_ns / 1e9
        need = scripted_need(script.states_at(now_s))
        agent.on_guidance(decision, need, env.timestamp_ns)

    bus.subscribe("engine_events", on_event_env)
    bus.subscribe("workload", on_workload_env)
    bus.subscribe("guidance", on_guidance_env)

    parameters = checklist.initial_parameters()
    last_action = None
    tick = 0
    completed = False
    while tick < cap_ticks:
        now = tick * interval_ns
        phase = "calibration" if tick < n_cal else "task"
        bus.publish("clock", {"tick": tick, "phase": phase}, now)

        delivered = lag.deliver(now) if phase == "task" else None
        if delivered is not None:
            parameters[delivered["control_id"]] = delivered["value"]
            last_action = {
                "control_id": delivered["control_id"],
                "value": delivered["value"],
                "timestamp_ns": now,
            }
        ws = WorldState(now, dict(parameters), gaze_target=agent.gaze(), last_action=last_action)
        bus.publish("world_state", ws.to_payload(), now)

        if delivered is not None:
            correct = (
                last_completed["ts"] == now
                and last_completed["control"] == delivered["control_id"]
            )
            ack = ActionAck(
                control_id=delivered["control_id"],
                value=delivered["value"],
                event_time_ns=delivered["event_time_ns"],
                delivered_ns=now,
                correct=correct,
            )
            acks.append(ack)
            bus.publish("frontend_acks", ack.to_payload(), now)
            for false_ev in monitor.observe_ack(ack):
                bus.publish("engine_events", false_ev.to_payload(), now)

        bus.publish("raw_fnirs", gen.frame(tick).to_payload(), now)

        if phase == "task":
            if engine.tree.complete:
                completed = True
                break
            action = agent.poll(now)
            if action is not None:
                lag.send(action, now)
            agent.ensure_plan(now)
        tick += 1

    writer.close()
    end_ns = tick * interval_ns
    metrics = compute_metrics(
        workload, events, policy.decisions, acks, task_start_ns, end_ns,
        cfg.condition, cfg.seed,
    )
    bag_bytes = sink.getvalue()
    if bag_path is not None:
        with open(bag_path, "wb") as fh:
            fh.write(bag_bytes)
        with open(bag_path + ".json", "w", encoding="utf-8") as fh:
            json.dump(cfg.to_jsonable(), fh, indent=1, sort_keys=True)
    return SessionResult(
        config=cfg,
        bag_bytes=bag_bytes,
        events=events,
        guidance=policy.decisions,
        workload=workload,
        acks=acks,
        metrics=metrics,
        completed=completed,
        guidance_seen=agent.guidance_seen,
        guidance_matched=agent.guidance_matched,
    )


def rerun_from_bag(bag: Bag, cfg: SessionConfig, models: dict | None = None,
                   rules: RuleTable | None = None) -> dict:
    """Re-derive the downstream topics from a bag's input topics.

    Replays clock, world_state, frontend_acks and raw_fnirs through fresh
    pipeline/classifier/engine/policy/monitor instances and returns the
    re-derived streams for comparison against the recorded ones.
    """
    from ..bus import replay

    if models is None:
        models = train_fixture_models(cfg.pipeline, cfg.model_seed)
    if rules is None:
        rules = build_default_rule_table()
    checklist = cfg.checklist_spec()
    pipe_cfg = cfg.pipeline
    n_cal = int(round(cfg.calibration_s * pipe_cfg.sample_rate_hz))
    task_start_ns = n_cal * pipe_cfg.frame_interval_ns

    bus = MessageBus(STANDARD_TOPICS)
    engine = TaskEngine(checklist, cfg.condition, session_start_ns=task_start_ns)
    monitor = FalseErrorMonitor()
    policy_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(4)[2])
    _PipelineNode(bus, pipe_cfg, n_cal)
    _ClassifierNode(bus, models, pipe_cfg.window_samples)
    _EngineNode(bus, engine, task_start_ns)
    _PolicyNode(bus, engine, rules, cfg.condition, policy_rng, cfg.random_mode)

    derived: dict[str, list] = {"hemo": [], "workload": [], "engine_events": [], "guidance": []}
    for topic in derived:
        bus.subscribe(topic, lambda env, t=topic: derived[t].append(
            (env.seq, env.timestamp_ns, env.payload)
        ))

    def on_event(env):
        ev = EngineEvent.from_payload(env.decoded())
        if ev.kind == "error_detected":
            monitor.observe_error(ev)

    def on_ack(env):
        ack = ActionAck.from_payload(env.decoded())
        for false_ev in monitor.observe_ack(ack):
            bus.publish("engine_events", false_ev.to_payload(), env.timestamp_ns)

    bus.subscribe("engine_events", on_event)
    bus.subscribe("frontend_acks", on_ack)

    replay(bag, bus, topics={"clock", "world_state", "frontend_acks", "raw_fnirs"})
    return derived
