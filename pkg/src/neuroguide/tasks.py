"""Procedural grounding: checklist task trees driven by 10 Hz world states.

The engine owns a TaskTree built from a checklist document, consumes world
state snapshots, and emits events: step completions, errors (action on a
control that is neither the active step's target nor an already-completed
step's), inaction timeouts (20 s), guidance cadence marks (10 s after a
correct action, suppressed in the baseline condition), and suspected false
errors (errors explained by a late-delivered correct action).

All timing reads the injected logical clock carried by world states and
check_clock() calls; nothing here touches the wall clock, so every trigger is
exact integer-nanosecond arithmetic and replays deterministically.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

__all__ = [
    "SchemaError",
    "DuplicateId",
    "DanglingControlRef",
    "StaleWorldState",
    "NoActiveError",
    "ClockSkewDetected",
    "ControlSpec",
    "StepSpec",
    "ProcedureSpec",
    "ChecklistSpec",
    "load_checklist",
    "WorldState",
    "EngineEvent",
    "TaskTree",
    "TaskEngine",
    "ActionAck",
    "FalseErrorMonitor",
    "false_error_monitor",
    "GUIDANCE_DELAY_NS",
    "TIMEOUT_NS",
    "STATUS_PENDING",
    "STATUS_ACTIVE",
    "STATUS_DONE",
    "STATUS_ERROR",
]

GUIDANCE_DELAY_NS = 10_000_000_000  # guidance cadence: 10 s after a correct action
TIMEOUT_NS = 20_000_000_000  # inaction timeout: 20 s
DEFAULT_LAG_HORIZON_NS = 1_000_000_000

STATUS_PENDING = "pending"
STATUS_ACTIVE = "active"
STATUS_DONE = "done"
STATUS_ERROR = "error"

EVENT_STEP_COMPLETED = "step_completed"
EVENT_ERROR_DETECTED = "error_detected"
EVENT_TIMEOUT = "timeout"
EVENT_GUIDANCE_DUE = "guidance_due"
EVENT_FALSE_ERROR = "false_error_suspected"


class SchemaError(ValueError):
    pass


class DuplicateId(SchemaError):
    pass


class DanglingControlRef(SchemaError):
    pass


class StaleWorldState(ValueError):
    pass


class NoActiveError(LookupError):
    pass


class ClockSkewDetected(ValueError):
    pass


@dataclass(frozen=True)
class ControlSpec:
    id: str
    kind: str = "switch"
    initial: object = "OFF"


@dataclass(frozen=True)
class StepSpec:
    id: str
    instruction: str
    target_control: str
    expected_value: object
    # Message content blocks; load variants are prefix-contained by
    # construction: essential = command, standard = command + context,
    # comprehensive = command + context + environment.
    command: str
    context: str
    environment: str

    def message(self, load: str) -> str:
        if load == "essential":
            return self.command
        if load == "standard":
            return f"{self.command} {self.context}"
        if load == "comprehensive":
            return f"{self.command} {self.context} {self.environment}"
        raise KeyError(load)


@dataclass(frozen=True)
class ProcedureSpec:
    id: str
    title: str
    steps: tuple


@dataclass(frozen=True)
class ChecklistSpec:
    name: str
    controls: tuple
    procedures: tuple

    @property
    def steps(self):
        return [s for p in self.procedures for s in p.steps]

    def control_ids(self):
        return [c.id for c in self.controls]

    def step_by_id(self, step_id: str) -> StepSpec:
        for s in self.steps:
            if s.id == step_id:
                return s
        raise KeyError(step_id)

    def initial_parameters(self) -> dict:
        return {c.id: c.initial for c in self.controls}

    def validate(self) -> None:
        if not self.procedures:
            raise SchemaError("checklist has no procedures")
        seen = set()
        for c in self.controls:
            if c.id in seen:
                raise DuplicateId(f"control {c.id!r}")
            seen.add(c.id)
        declared = {c.id for c in self.controls}
        ids = set()
        for p in self.procedures:
            if p.id in ids:
                raise DuplicateId(f"procedure {p.id!r}")
            ids.add(p.id)
            if not p.steps:
                raise SchemaError(f"procedure {p.id!r} has no steps")
            for s in p.steps:
                if s.id in ids:
                    raise DuplicateId(f"step {s.id!r}")
                ids.add(s.id)
                if s.target_control not in declared:
                    raise DanglingControlRef(
                        f"step {s.id!r} references {s.target_control!r}"
                    )

    @classmethod
    def from_dict(cls, obj: dict) -> "ChecklistSpec":
        try:
            controls = tuple(
                ControlSpec(c["id"], c.get("kind", "switch"), c.get("initial", "OFF"))
                for c in obj["controls"]
            )
            procedures = tuple(
                ProcedureSpec(
                    p["id"],
                    p.get("title", p["id"]),
                    tuple(
                        StepSpec(
                            id=s["id"],
                            instruction=s["instruction"],
                            target_control=s["target_control"],
                            expected_value=s["expected_value"],
                            command=s["messages"]["command"],
                            context=s["messages"]["context"],
                            environment=s["messages"]["environment"],
                        )
                        for s in p["steps"]
                    ),
                )
                for p in obj["procedures"]
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed checklist document: {exc}") from exc
        spec = cls(obj.get("name", "checklist"), controls, procedures)
        spec.validate()
        return spec


def load_checklist(source) -> "TaskTree":
    """Build a TaskTree from a checklist document (path, JSON text, or dict)."""
    if isinstance(source, dict):
        obj = source
    else:
        text = source
        if "\n" not in str(source) and str(source).endswith(".json"):
            with open(source, encoding="utf-8") as fh:
                text = fh.read()
        obj = json.loads(text)
    return TaskTree(ChecklistSpec.from_dict(obj))


@dataclass(frozen=True)
class WorldState:
    timestamp_ns: int
    parameters: dict
    gaze_target: str | None = None
    last_action: dict | None = None  # {control_id, value, timestamp_ns}

    def to_payload(self) -> dict:
        return {
            "timestamp_ns": self.timestamp_ns,
            "parameters": self.parameters,
            "gaze_target": self.gaze_target,
            "last_action": self.last_action,
        }

    @classmethod
    def from_payload(cls, obj: dict) -> "WorldState":
        return cls(
            obj["timestamp_ns"], obj["parameters"], obj.get("gaze_target"),
            obj.get("last_action"),
        )


@dataclass(frozen=True)
class EngineEvent:
    kind: str
    timestamp_ns: int
    step_id: str | None
    detail: dict = field(default_factory=dict)

    def to_payload(self) -> dict:
        return {
            "event": self.kind,
            "timestamp_ns": self.timestamp_ns,
            "step_id": self.step_id,
            "detail": self.detail,
        }

    @classmethod
    def from_payload(cls, obj: dict) -> "EngineEvent":
        return cls(obj["event"], obj["timestamp_ns"], obj.get("step_id"),
                   obj.get("detail", {}))

    def to_record(self) -> str:
        """Line-delimited export form."""
        return json.dumps(self.to_payload(), sort_keys=True, separators=(",", ":"))


class TaskTree:
    """Mirror of procedures/steps with statuses and the active-step cursor."""

    def __init__(self, spec: ChecklistSpec):
        spec.validate()
        self.spec = spec
        self.status = {s.id: STATUS_PENDING for s in spec.steps}
        self._order = [s.id for s in spec.steps]
        self._proc_of = {
            s.id: p.id for p in spec.procedures for s in p.steps
        }
        self._step_of = {s.id: s for s in spec.steps}
        self.status[self._order[0]] = STATUS_ACTIVE

    @property
    def active_step_id(self) -> str | None:
        for sid in self._order:
            if self.status[sid] in (STATUS_ACTIVE, STATUS_ERROR):
                return sid
        return None

    @property
    def active_step(self) -> StepSpec | None:
        sid = self.active_step_id
        return self._step_of[sid] if sid else None

    @property
    def active_procedure_id(self) -> str | None:
        sid = self.active_step_id
        return self._proc_of[sid] if sid else None

    @property
    def complete(self) -> bool:
        return self.active_step_id is None

    def procedure_of(self, step_id: str) -> str:
        return self._proc_of[step_id]

    def done_controls(self) -> set:
        return {
            self._step_of[sid].target_control
            for sid in self._order
            if self.status[sid] == STATUS_DONE
        }

    def done_count(self) -> int:
        return sum(1 for sid in self._order if self.status[sid] == STATUS_DONE)

    def mark_done(self, step_id: str) -> None:
        self.status[step_id] = STATUS_DONE
        for sid in self._order:
            if self.status[sid] == STATUS_PENDING:
                self.status[sid] = STATUS_ACTIVE
                break

    def snapshot(self) -> dict:
        active = self.active_step
        return {
            "active_step_id": self.active_step_id,
            "active_procedure_id": self.active_procedure_id,
            "active_instruction": active.instruction if active else None,
            "active_target_control": active.target_control if active else None,
            "active_expected_value": active.expected_value if active else None,
            "done_count": self.done_count(),
            "total_steps": len(self._order),
            "status": dict(self.status),
            "complete": self.complete,
        }


class TaskEngine:
    """Event-loop owner of one TaskTree.

    apply_world_state() reacts to action transitions; check_clock() fires the
    timing triggers. Guidance marks fire exactly GUIDANCE_DELAY_NS after each
    arming correct action (session start arms the first step) and are
    single-shot per arm; timeouts fire every TIMEOUT_NS of continued inaction
    and re-arm on any action. Both carry their exact due time in the detail.
    """

    def __init__(self, checklist: ChecklistSpec | TaskTree, condition: str = "baseline",
                 session_start_ns: int = 0, error_on_wrong_value: bool = False):
        self.tree = checklist if isinstance(checklist, TaskTree) else TaskTree(checklist)
        self.condition = condition
        self.error_on_wrong_value = error_on_wrong_value
        self._last_ws_ns: int | None = None
        self._last_action_sig = None
        self._timeout_due: int | None = session_start_ns + TIMEOUT_NS
        self._guidance_due: int | None = (
            session_start_ns + GUIDANCE_DELAY_NS
            if condition in ("random", "adaptive")
            else None
        )
        self._alert_pending = False
        self._params_checked = False

    # -- world state path ---------------------------------------------------

    def apply_world_state(self, ws: WorldState) -> list:
        if self._last_ws_ns is not None and ws.timestamp_ns < self._last_ws_ns:
            raise StaleWorldState(
                f"world state at {ws.timestamp_ns} after {self._last_ws_ns}"
            )
        self._last_ws_ns = ws.timestamp_ns
        if not self._params_checked:
            declared = set(self.tree.spec.control_ids())
            missing = declared - set(ws.parameters)
            if missing:
                raise SchemaError(f"world state missing controls {sorted(missing)}")
            self._params_checked = True

        events: list[EngineEvent] = []
        action = ws.last_action
        if action is None:
            return events
        sig = (action["control_id"], action["value"], action["timestamp_ns"])
        if sig == self._last_action_sig:
            return events
        self._last_action_sig = sig
        self._arm_timeout(ws.timestamp_ns)

        active = self.tree.active_step
        if active is None:
            return events
        if action["control_id"] == active.target_control:
            if ws.parameters.get(active.target_control) == active.expected_value:
                events.append(self._complete(active, ws.timestamp_ns, action))
            elif self.error_on_wrong_value:
                events.append(self._error(active, ws.timestamp_ns, action))
            return events
        if action["control_id"] in self.tree.done_controls():
            return events
        events.append(self._error(active, ws.timestamp_ns, action))
        return events

    def _complete(self, step: StepSpec, now_ns: int, action: dict) -> EngineEvent:
        self.tree.mark_done(step.id)
        self._guidance_due = (
            now_ns + GUIDANCE_DELAY_NS
            if self.condition in ("random", "adaptive") and not self.tree.complete
            else None
        )
        return EngineEvent(
            EVENT_STEP_COMPLETED,
            now_ns,
            step.id,
            {
                "procedure_id": self.tree.procedure_of(step.id),
                "control_id": action["control_id"],
                "action_timestamp_ns": action["timestamp_ns"],
            },
        )

    def _error(self, step: StepSpec, now_ns: int, action: dict) -> EngineEvent:
        self.tree.status[step.id] = STATUS_ERROR
        self._alert_pending = True
        return EngineEvent(
            EVENT_ERROR_DETECTED,
            now_ns,
            step.id,
            {
                "procedure_id": self.tree.procedure_of(step.id),
                "expected_step": step.id,
                "expected_control": step.target_control,
                "actual_control": action["control_id"],
                "actual_value": action["value"],
                "action_timestamp_ns": action["timestamp_ns"],
            },
        )

    # -- clock path ----------------------------------------------------------

    def _arm_timeout(self, now_ns: int) -> None:
        self._timeout_due = now_ns + TIMEOUT_NS

    def check_clock(self, now_ns: int) -> list:
        events: list[EngineEvent] = []
        if self.tree.complete:
            return events
        if self._guidance_due is not None and now_ns >= self._guidance_due:
            step = self.tree.active_step
            events.append(
                EngineEvent(
                    EVENT_GUIDANCE_DUE,
                    now_ns,
                    step.id,
                    {
                        "procedure_id": self.tree.procedure_of(step.id),
                        "due_ns": self._guidance_due,
                    },
                )
            )
            self._guidance_due = None  # single-shot until the next correct action
        if self._timeout_due is not None and now_ns >= self._timeout_due:
            step = self.tree.active_step
            events.append(
                EngineEvent(
                    EVENT_TIMEOUT,
                    now_ns,
                    step.id,
                    {
                        "procedure_id": self.tree.procedure_of(step.id),
                        "due_ns": self._timeout_due,
                    },
                )
            )
            self._timeout_due = self._timeout_due + TIMEOUT_NS  # repeats while idle
        return events

    # -- dashboard ------------------------------------------------------------

    def error_dashboard_state(self) -> dict:
        sid = self.tree.active_step_id
        if sid is None or self.tree.status[sid] != STATUS_ERROR:
            raise NoActiveError("no step is in error")
        step = self.tree.spec.step_by_id(sid)
        alert = self._alert_pending
        self._alert_pending = False  # audible alert is edge-triggered
        return {
            "expected_step_id": step.id,
            "expected_control": step.target_control,
            "corrective_instruction": step.instruction,
            "alert": alert,
        }


# -- false error detection -----------------------------------------------------


@dataclass(frozen=True)
class ActionAck:
    """Frontend acknowledgement of an action: when the operator performed it
    (event_time_ns) versus when the backend received it (delivered_ns)."""

    control_id: str
    value: object
    event_time_ns: int
    delivered_ns: int
    correct: bool = False  # delivered action completed the expected step

    def to_payload(self) -> dict:
        return {
            "control_id": self.control_id,
            "value": self.value,
            "event_time_ns": self.event_time_ns,
            "delivered_ns": self.delivered_ns,
            "correct": self.correct,
        }

    @classmethod
    def from_payload(cls, obj: dict) -> "ActionAck":
        return cls(obj["control_id"], obj["value"], obj["event_time_ns"],
                   obj["delivered_ns"], obj.get("correct", False))


class FalseErrorMonitor:
    """Flags errors explained by frontend lag: an ErrorDetected is false when
    a correct action with an earlier event time arrives within the lag horizon
    after the error was raised."""

    def __init__(self, lag_horizon_ns: int = DEFAULT_LAG_HORIZON_NS):
        self.lag_horizon_ns = lag_horizon_ns
        self._open_errors: deque = deque()

    def observe_error(self, event: EngineEvent) -> None:
        if event.kind == EVENT_ERROR_DETECTED:
            self._open_errors.append(event)

    def observe_ack(self, ack: ActionAck) -> list:
        if ack.delivered_ns < ack.event_time_ns:
            raise ClockSkewDetected(
                f"ack delivered at {ack.delivered_ns} before event time "
                f"{ack.event_time_ns}; timestamps are not on one clock"
            )
        flagged = []
        while self._open_errors and (
            self._open_errors[0].timestamp_ns + self.lag_horizon_ns < ack.delivered_ns
        ):
            self._open_errors.popleft()  # horizon expired; error stands
        if not ack.correct:
            return flagged
        remaining = deque()
        for err in self._open_errors:
            if (
                ack.event_time_ns < err.timestamp_ns
                and err.timestamp_ns < ack.delivered_ns <= err.timestamp_ns + self.lag_horizon_ns
            ):
                flagged.append(
                    EngineEvent(
                        EVENT_FALSE_ERROR,
                        ack.delivered_ns,
                        err.step_id,
                        {
                            "error_timestamp_ns": err.timestamp_ns,
                            "ack_event_time_ns": ack.event_time_ns,
                            "ack_control": ack.control_id,
                        },
                    )
                )
            else:
                remaining.append(err)
        self._open_errors = remaining
        return flagged


def false_error_monitor(event_log, ack_log, lag_horizon_ns: int = DEFAULT_LAG_HORIZON_NS) -> dict:
    """Offline form over complete logs; the live monitor replayed in order.

    Returns counts plus two rates: rate_of_errors = false / total errors (the
    share of raised errors explained by lag) and rate_per_action = false /
    correct actions, the study's reported false-error rate.
    """
    monitor = FalseErrorMonitor(lag_horizon_ns)
    merged: list[tuple] = []  # (time, order, kind, item)
    for ev in event_log:
        if ev.kind == EVENT_ERROR_DETECTED:
            merged.append((ev.timestamp_ns, 0, "error", ev))
    for ack in ack_log:
        merged.append((ack.delivered_ns, 1, "ack", ack))
    merged.sort(key=lambda item: (item[0], item[1]))
    false_events = []
    for _, _, kind, item in merged:
        if kind == "error":
            monitor.observe_error(item)
        else:
            false_events.extend(monitor.observe_ack(item))
    total_errors = sum(1 for ev in event_log if ev.kind == EVENT_ERROR_DETECTED)
    correct_actions = sum(1 for a in ack_log if a.correct)
    return {
        "false_errors": len(false_events),
        "total_errors": total_errors,
        "correct_actions": correct_actions,
        "rate_of_errors": len(false_events) / total_errors if total_errors else 0.0,
        "rate_per_action": len(false_events) / correct_actions if correct_actions else 0.0,
        "events": false_events,
    }
