"""Synthetic fNIRS frame generation conditioned on a workload load script.

Channels are partitioned across the three facets (first third drives working
memory, middle third attention, last third perception). Each scripted state
maps to a hemoglobin concentration pair, the forward Beer-Lambert model turns
concentrations into optical densities, and intensities follow
I = I0 * 10^(-OD) with per-frame Gaussian concentration noise and optional
multiplicative motion spikes. Everything is a pure function of (script,
config, seed), so identical seeds give identical streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..classifier import FACETS, OPTIMAL
from ..pipeline import PipelineConfig, RawFrame, forward_od

__all__ = [
    "ScriptSegment",
    "LoadScript",
    "FnirsGenerator",
    "STATE_CONCENTRATIONS",
    "facet_channels",
]

# state -> (hbo uM, hbr uM) concentration change while a facet holds the state
STATE_CONCENTRATIONS = {
    "underload": (-0.8, 0.4),
    "optimal": (0.0, 0.0),
    "overload": (0.8, -0.4),
}


def facet_channels(channel_count: int) -> dict:
    """Contiguous channel ranges per facet."""
    third = channel_count // 3
    return {
        "memory": range(0, third),
        "attention": range(third, 2 * third),
        "perception": range(2 * third, channel_count),
    }


@dataclass(frozen=True)
class ScriptSegment:
    duration_s: float
    memory: str = OPTIMAL
    attention: str = OPTIMAL
    perception: str = OPTIMAL

    def state(self, facet: str) -> str:
        return getattr(self, facet)


@dataclass
class LoadScript:
    segments: list
    # (time_s, channel, relative amplitude) multiplicative intensity spikes
    artifacts: list = field(default_factory=list)
    noise_uM: float = 0.05

    def __post_init__(self):
        if not self.segments:
            raise ValueError("load script needs at least one segment")
        for seg in self.segments:
            for facet in FACETS:
                if seg.state(facet) not in STATE_CONCENTRATIONS:
                    raise ValueError(f"unknown state {seg.state(facet)!r}")

    @property
    def duration_s(self) -> float:
        return sum(seg.duration_s for seg in self.segments)

    def states_at(self, t_s: float) -> dict:
        """Per-facet target states at time t; the last segment extends forever
        so the script covers any session duration."""
        acc = 0.0
        for seg in self.segments:
            acc += seg.duration_s
            if t_s < acc:
                return {facet: seg.state(facet) for facet in FACETS}
        last = self.segments[-1]
        return {facet: last.state(facet) for facet in FACETS}

    @classmethod
    def constant(cls, state: str, duration_s: float = 3600.0, **kwargs) -> "LoadScript":
        return cls(
            [ScriptSegment(duration_s, memory=state, attention=state, perception=state)],
            **kwargs,
        )

    def to_payload(self) -> dict:
        return {
            "segments": [
                {
                    "duration_s": seg.duration_s,
                    "memory": seg.memory,
                    "attention": seg.attention,
                    "perception": seg.perception,
                }
                for seg in self.segments
            ],
            "artifacts": [list(a) for a in self.artifacts],
            "noise_uM": self.noise_uM,
        }

    @classmethod
    def from_payload(cls, obj: dict) -> "LoadScript":
        return cls(
            [ScriptSegment(**seg) for seg in obj["segments"]],
            artifacts=[tuple(a) for a in obj.get("artifacts", [])],
            noise_uM=obj.get("noise_uM", 0.05),
        )


class FnirsGenerator:
    """Deterministic frame source: frame(tick) for tick = 0, 1, 2, ..."""

    BASE_INTENSITY = 1000.0

    def __init__(self, script: LoadScript, cfg: PipelineConfig, seed: int):
        self.script = script
        self.cfg = cfg
        self._rng = np.random.default_rng(seed)
        self._channels = facet_channels(cfg.channel_count)
        # Slightly different source brightness per channel/wavelength keeps
        # the baseline statistics non-degenerate.
        self._i0 = self.BASE_INTENSITY * (
            1.0 + 0.05 * np.arange(cfg.channel_count)[:, None]
            + 0.02 * np.arange(2)[None, :]
        )
        self._interval_ns = cfg.frame_interval_ns
        self._next_tick = 0

    def frame(self, tick: int) -> RawFrame:
        # Noise is drawn from one stream, so frames must be taken in order.
        if tick != self._next_tick:
            raise ValueError(
                f"frames must be generated sequentially (expected {self._next_tick}, got {tick})"
            )
        self._next_tick += 1
        cfg = self.cfg
        t_s = tick / cfg.sample_rate_hz
        states = self.script.states_at(t_s)
        hbo = np.zeros(cfg.channel_count)
        hbr = np.zeros(cfg.channel_count)
        for facet, chans in self._channels.items():
            c_hbo, c_hbr = STATE_CONCENTRATIONS[states[facet]]
            for ch in chans:
                hbo[ch] = c_hbo
                hbr[ch] = c_hbr
        noise = self.script.noise_uM
        if noise > 0:
            hbo = hbo + self._rng.normal(0.0, noise, size=hbo.shape)
            hbr = hbr + self._rng.normal(0.0, noise, size=hbr.shape)
        od = forward_od(hbo, hbr, cfg)  # (channels, 2)
        intensity = self._i0 * np.power(10.0, -od)
        for t_art, channel, amplitude in self.script.artifacts:
            if abs(t_s - t_art) < 1.0 / cfg.sample_rate_hz / 2:
                intensity[channel, :] *= 1.0 + amplitude
        timestamp_ns = tick * self._interval_ns
        return RawFrame(timestamp_ns, intensity)

    def frames(self, n: int, start_tick: int = 0):
        for tick in range(start_tick, start_tick + n):
            yield self.frame(tick)
