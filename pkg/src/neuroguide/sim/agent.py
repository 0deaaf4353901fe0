"""Synthetic pilot agents and the lagging action channel.

The agent keeps its own belief of the current checklist step, like a pilot
working a paper checklist: it advances optimistically when it acts, adopts the
engine's authoritative step when a completion confirms or diverges, and
re-syncs to the dashboard's expected step after an error alert. Actions fire
after a lognormal latency; with probability base_error_prob the agent operates
a future step's control instead. Guidance whose modality set matches the
scripted need pulls the pending action earlier and halves the next error draw.

The lag channel models the frontend/backend disconnect: a late-tagged action
is held until one later action passes it, which is exactly the reordering that
raises a false error downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..policy import AUDIO, TEXT, VISUAL

__all__ = ["AgentProfile", "PilotAgent", "LagChannel", "scripted_need"]


@dataclass(frozen=True)
class AgentProfile:
    expertise: str = "novice"  # novice | experienced
    base_error_prob: float = 0.04
    latency_mean_s: float = 2.0
    latency_sigma: float = 0.35
    guidance_error_mult: float = 0.5
    guidance_latency_mult: float = 0.8

    def validate(self) -> None:
        if not 0.0 <= self.base_error_prob <= 1.0:
            raise ValueError("base_error_prob must be a probability")
        if self.latency_mean_s <= 0 or self.latency_sigma <= 0:
            raise ValueError("latency parameters must be positive")

    def to_payload(self) -> dict:
        return {
            "expertise": self.expertise,
            "base_error_prob": self.base_error_prob,
            "latency_mean_s": self.latency_mean_s,
            "latency_sigma": self.latency_sigma,
            "guidance_error_mult": self.guidance_error_mult,
            "guidance_latency_mult": self.guidance_latency_mult,
        }

    @classmethod
    def from_payload(cls, obj: dict) -> "AgentProfile":
        return cls(**obj)


def scripted_need(states: dict) -> tuple:
    """Modality set the scripted ground-truth states call for; mirrors the
    worst-facet precedence of the strategy table."""
    values = list(states.values())
    if "overload" in values:
        return (VISUAL,)
    if "underload" in values:
        return (VISUAL, AUDIO, TEXT)
    return (VISUAL, AUDIO)


class PilotAgent:
    def __init__(self, profile: AgentProfile, checklist, seed: int):
        profile.validate()
        self.profile = profile
        self._steps = list(checklist.steps)
        self._order = [s.id for s in self._steps]
        self._step_of = {s.id: s for s in self._steps}
        self._rng = np.random.default_rng(seed)
        self.belief: str | None = self._order[0]
        self._pending: dict | None = None
        self._boost_next = False
        self.guidance_seen = 0
        self.guidance_matched = 0
        self.actions_sent = 0

    def _local_next(self, step_id: str) -> str | None:
        idx = self._order.index(step_id)
        return self._order[idx + 1] if idx + 1 < len(self._order) else None

    def _future_controls(self, step_id: str) -> list:
        idx = self._order.index(step_id)
        return [
            (self._step_of[sid].target_control, self._step_of[sid].expected_value)
            for sid in self._order[idx + 1 :]
        ]

    def _draw_latency_ns(self) -> int:
        mu = float(np.log(self.profile.latency_mean_s))
        lat = float(np.exp(self._rng.normal(mu, self.profile.latency_sigma)))
        if self._boost_next:
            lat *= self.profile.guidance_latency_mult
        return max(int(lat * 1e9), 100_000_000)

    def ensure_plan(self, now_ns: int) -> None:
        """Plan the next action for the believed step if nothing is pending."""
        if self._pending is not None or self.belief is None:
            return
        step = self._step_of[self.belief]
        err_p = self.profile.base_error_prob
        if self._boost_next:
            err_p *= self.profile.guidance_error_mult
        futures = self._future_controls(self.belief)
        make_error = bool(self._rng.random() < err_p) and bool(futures)
        latency = self._draw_latency_ns()
        self._boost_next = False
        if make_error:
            control, value = futures[int(self._rng.integers(len(futures)))]
        else:
            control, value = step.target_control, step.expected_value
        self._pending = {
            "act_at_ns": now_ns + latency,
            "control_id": control,
            "value": value,
            "believed_step": self.belief,
        }

    def poll(self, now_ns: int) -> dict | None:
        """Emit the pending action once due; belief advances optimistically."""
        if self._pending is None or now_ns < self._pending["act_at_ns"]:
            return None
        pending = self._pending
        self._pending = None
        self.belief = self._local_next(pending["believed_step"])
        self.actions_sent += 1
        return {
            "control_id": pending["control_id"],
            "value": pending["value"],
            "event_time_ns": now_ns,
        }

    def on_step_completed(self, engine_active_step: str | None) -> None:
        """Adopt the engine's view when it diverges from local belief."""
        if engine_active_step != self.belief:
            self.belief = engine_active_step
            self._pending = None

    def on_error(self, expected_step: str) -> None:
        """Dashboard re-sync: redo the step the engine expects."""
        self.belief = expected_step
        self._pending = None

    def on_guidance(self, decision, need: tuple, now_ns: int) -> None:
        self.guidance_seen += 1
        if tuple(decision.modalities) != tuple(need):
            return
        self.guidance_matched += 1
        self._boost_next = True
        if self._pending is not None and self._pending["act_at_ns"] > now_ns:
            remaining = self._pending["act_at_ns"] - now_ns
            self._pending["act_at_ns"] = now_ns + int(
                remaining * self.profile.guidance_latency_mult
            )

    def gaze(self) -> str | None:
        return self._pending["control_id"] if self._pending is not None else None


class LagChannel:
    """Frontend-to-backend action path with seeded reordering lag.

    Actions are tagged late with probability late_prob. A late head is held
    until a later non-late action jumps past it (then it delivers on the next
    tick) or a fallback delay expires; the fallback must exceed typical
    inter-action gaps or held actions self-deliver before anything can
    overtake them and no reordering ever occurs. At most one action delivers
    per tick so every delivery gets its own world-state transition.
    """

    def __init__(self, late_prob: float, seed: int,
                 fallback_delay_ns: int = 5_000_000_000):
        if not 0.0 <= late_prob <= 1.0:
            raise ValueError("late_prob must be a probability")
        self.late_prob = late_prob
        self.fallback_delay_ns = fallback_delay_ns
        self._rng = np.random.default_rng(seed)
        self._queue: list[dict] = []
        self.sent = 0
        self.late = 0

    def send(self, action: dict, now_ns: int) -> None:
        self.sent += 1
        is_late = bool(self._rng.random() < self.late_prob)
        if is_late:
            self.late += 1
        self._queue.append({"action": action, "late": is_late, "sent_ns": now_ns})

    def deliver(self, now_ns: int) -> dict | None:
        if not self._queue:
            return None
        head = self._queue[0]
        if not head["late"]:
            self._queue.pop(0)
            return head["action"]
        for i, entry in enumerate(self._queue[1:], start=1):
            if not entry["late"]:
                self._queue.pop(i)
                head["late"] = False  # reordered; head delivers next tick
                return entry["action"]
        if now_ns - head["sent_ns"] >= self.fallback_delay_ns:
            self._queue.pop(0)
            return head["action"]
        return None
