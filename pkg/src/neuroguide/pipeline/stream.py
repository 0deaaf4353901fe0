"""Streaming composition of the preprocessing stages.

Frames arrive at the nominal rate; once the sliding window is full, every new
frame yields one HemoSample: the window is wavelet-corrected, the newest
corrected sample runs through the streaming low-pass, and the filtered
intensities pass through optical density and the Beer-Lambert inversion.
Identical frame streams produce bit-identical HemoSample streams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .lowpass import StreamingLowpass
from .mbll import NonPositiveIntensity, beer_lambert, optical_density
from .wavelet import motion_correct

__all__ = [
    "RawFrame",
    "BaselineStats",
    "HemoSample",
    "NonMonotonicTimestamp",
    "SegmentTooShort",
    "QUALITY_OK",
    "QUALITY_ARTIFACT",
    "QUALITY_GAP",
    "calibrate_baseline",
    "StreamingPipeline",
    "batch_process",
]

QUALITY_OK = "ok"
QUALITY_ARTIFACT = "artifact_heavy"
QUALITY_GAP = "gap"


class NonMonotonicTimestamp(ValueError):
    pass


class SegmentTooShort(ValueError):
    pass


@dataclass(frozen=True)
class RawFrame:
    """One acquisition frame: (channels, 2) light intensities, both wavelengths."""

    timestamp_ns: int
    intensities: np.ndarray

    def validate(self, cfg: PipelineConfig) -> None:
        arr = np.asarray(self.intensities, dtype=float)
        if arr.shape != (cfg.channel_count, 2):
            raise ValueError(
                f"intensities shape {arr.shape}, expected {(cfg.channel_count, 2)}"
            )
        if not np.all(arr > 0):
            raise NonPositiveIntensity("raw intensities must be > 0")

    def to_payload(self) -> dict:
        return {
            "timestamp_ns": self.timestamp_ns,
            "intensities": np.asarray(self.intensities).tolist(),
        }

    @classmethod
    def from_payload(cls, obj: dict) -> "RawFrame":
        return cls(obj["timestamp_ns"], np.asarray(obj["intensities"], dtype=float))


@dataclass(frozen=True)
class BaselineStats:
    """Per-channel, per-wavelength intensity mean and variance over the
    calibration segment."""

    mean: np.ndarray  # (channels, 2)
    variance: np.ndarray  # (channels, 2)
    n_frames: int

    def validate(self) -> None:
        if not np.all(self.mean > 0):
            raise NonPositiveIntensity("baseline means must be > 0")


@dataclass(frozen=True)
class HemoSample:
    timestamp_ns: int
    hbo: np.ndarray  # (channels,) concentration change, uM
    hbr: np.ndarray  # (channels,) concentration change, uM
    quality: tuple  # per channel: ok | artifact_heavy | gap

    def to_payload(self) -> dict:
        return {
            "timestamp_ns": self.timestamp_ns,
            "hbo": np.asarray(self.hbo).tolist(),
            "hbr": np.asarray(self.hbr).tolist(),
            "quality": list(self.quality),
        }

    @classmethod
    def from_payload(cls, obj: dict) -> "HemoSample":
        return cls(
            obj["timestamp_ns"],
            np.asarray(obj["hbo"], dtype=float),
            np.asarray(obj["hbr"], dtype=float),
            tuple(obj["quality"]),
        )


def calibrate_baseline(frames, cfg: PipelineConfig) -> BaselineStats:
    """Mean/variance per channel and wavelength over a calibration segment of
    at least one full window."""
    stack = np.stack([np.asarray(f.intensities, dtype=float) for f in frames])
    if stack.shape[0] < cfg.window_samples:
        raise SegmentTooShort(
            f"calibration needs >= {cfg.window_samples} frames, got {stack.shape[0]}"
        )
    stats = BaselineStats(
        mean=stack.mean(axis=0), variance=stack.var(axis=0), n_frames=stack.shape[0]
    )
    stats.validate()
    return stats


class StreamingPipeline:
    """Single-subject pipeline state: ring buffer, gap flags, filter state.

    ingest() returns None until the window fills, then one HemoSample per
    frame. Gaps (inter-frame interval beyond the configured factor) mark every
    sample whose window still contains the discontinuity as quality "gap".
    """

    def __init__(self, cfg: PipelineConfig, baseline: BaselineStats):
        cfg.validate()
        baseline.validate()
        self.cfg = cfg
        self.baseline = baseline
        n = cfg.window_samples
        self._buf = np.zeros((n, cfg.channel_count, 2))
        self._ts = np.zeros(n, dtype=np.int64)
        self._gap = np.zeros(n, dtype=bool)
        self._count = 0
        self._last_ts: int | None = None
        self._lowpass = StreamingLowpass(
            cfg.lowpass_cutoff_hz, cfg.sample_rate_hz, cfg.lowpass_order,
            cfg.channel_count * 2,
        )
        self._baseline_flat = baseline.mean.reshape(-1)

    @property
    def window_ready(self) -> bool:
        return self._count >= self.cfg.window_samples

    def ingest(self, frame: RawFrame) -> HemoSample | None:
        frame.validate(self.cfg)
        if self._last_ts is not None and frame.timestamp_ns <= self._last_ts:
            raise NonMonotonicTimestamp(
                f"timestamp {frame.timestamp_ns} <= previous {self._last_ts}"
            )
        gap = (
            self._last_ts is not None
            and frame.timestamp_ns - self._last_ts > self.cfg.gap_threshold_ns
        )
        self._last_ts = frame.timestamp_ns
        n = self.cfg.window_samples
        self._buf = np.roll(self._buf, -1, axis=0)
        self._ts = np.roll(self._ts, -1)
        self._gap = np.roll(self._gap, -1)
        self._buf[-1] = np.asarray(frame.intensities, dtype=float)
        self._ts[-1] = frame.timestamp_ns
        self._gap[-1] = gap
        if self._count < n:
            self._count += 1
        if self._count < n:
            return None
        return self._process_current()

    def _process_current(self) -> HemoSample:
        cfg = self.cfg
        series = self._buf.reshape(cfg.window_samples, -1).T  # (C*2, n)
        corrected, _, sigma_peak = motion_correct(
            series, cfg.wavelet_threshold, cfg.wavelet_threshold_mode
        )
        newest = corrected[:, -1]
        filtered = self._lowpass.step(newest)
        if np.any(filtered <= 0):
            raise NonPositiveIntensity(
                "filtered intensity fell to <= 0; check input scale"
            )
        od = optical_density(filtered, self._baseline_flat)
        od_pairs = od.reshape(cfg.channel_count, 2)
        hbo, hbr = beer_lambert(od_pairs, cfg)
        window_has_gap = bool(self._gap.any())
        heavy = sigma_peak.reshape(cfg.channel_count, 2).max(axis=1)
        quality = tuple(
            QUALITY_GAP
            if window_has_gap
            else (QUALITY_ARTIFACT if heavy[c] > cfg.artifact_sigma_flag else QUALITY_OK)
            for c in range(cfg.channel_count)
        )
        return HemoSample(int(self._ts[-1]), hbo, hbr, quality)


def batch_process(frames, baseline: BaselineStats, cfg: PipelineConfig):
    """Offline oracle for the streaming path, computed a different way: the
    per-window wavelet outputs are collected into one series which is filtered
    in a single block call, then OD and the Beer-Lambert inversion run
    vectorized over all emitted samples. Agrees with streaming to float
    round-off because the causal filter and state initialization are shared.

    Returns (timestamps, hbo, hbr) arrays; quality flags are a streaming
    concern and are not recomputed here.
    """
    cfg.validate()
    baseline.validate()
    n = cfg.window_samples
    stack = np.stack([np.asarray(f.intensities, dtype=float) for f in frames])
    ts = np.asarray([f.timestamp_ns for f in frames], dtype=np.int64)
    if np.any(np.diff(ts) <= 0):
        raise NonMonotonicTimestamp("timestamps must strictly increase")
    if stack.shape[0] < n:
        return np.zeros(0, dtype=np.int64), np.zeros((0, cfg.channel_count)), np.zeros((0, cfg.channel_count))
    flat = stack.reshape(stack.shape[0], -1)  # (frames, C*2)
    newest = np.empty((stack.shape[0] - n + 1, flat.shape[1]))
    for i in range(n - 1, stack.shape[0]):
        corrected, _, _ = motion_correct(
            flat[i - n + 1 : i + 1].T, cfg.wavelet_threshold, cfg.wavelet_threshold_mode
        )
        newest[i - n + 1] = corrected[:, -1]
    lp = StreamingLowpass(
        cfg.lowpass_cutoff_hz, cfg.sample_rate_hz, cfg.lowpass_order, flat.shape[1]
    )
    filtered = lp.process(newest)
    if np.any(filtered <= 0):
        raise NonPositiveIntensity("filtered intensity fell to <= 0")
    od = optical_density(filtered, baseline.mean.reshape(-1)[None, :])
    od_pairs = od.reshape(od.shape[0], cfg.channel_count, 2)
    hbo, hbr = beer_lambert(od_pairs, cfg)
    return ts[n - 1 :], hbo, hbr
