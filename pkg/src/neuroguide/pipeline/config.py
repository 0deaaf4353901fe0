"""Pipeline configuration: acquisition geometry, filter design, and chromophore
constants, loadable from a documented key-value file (docs/pipeline_config.md)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ConfigError(ValueError):
    pass


# Molar extinction coefficients in 1/(mM*cm), rows = wavelength (760, 850 nm),
# columns = (HbO, HbR). Literature defaults (Cope tabulation); the study
# hardware's exact constants are not published, so these ship as config.
DEFAULT_EXTINCTION = ((1.4866, 3.8437), (2.5264, 1.7986))
DEFAULT_DPF = (6.0, 6.0)


@dataclass
class PipelineConfig:
    sample_rate_hz: float = 10.0
    channel_count: int = 18
    window_seconds: float = 10.0
    wavelet_name: str = "db5"
    wavelet_threshold: float = 0.1
    # "scaled" thresholds against the robust per-level sigma (median|c|/0.6745);
    # "absolute" compares |c| against wavelet_threshold directly.
    wavelet_threshold_mode: str = "scaled"
    lowpass_cutoff_hz: float = 0.12
    lowpass_order: int = 4
    extinction_matrix: tuple = DEFAULT_EXTINCTION
    path_length_cm: float = 3.0
    dpf: tuple = DEFAULT_DPF
    # Inter-frame interval above 2/sample_rate flags a stream gap.
    gap_factor: float = 2.0
    # Peak detail-coefficient magnitude in robust sigmas above which the
    # emitted sample is flagged artifact_heavy (spikes land many sigmas out;
    # measurement noise stays near 3).
    artifact_sigma_flag: float = 5.0

    def __post_init__(self):
        self.validate()

    @property
    def window_samples(self) -> int:
        return int(round(self.window_seconds * self.sample_rate_hz))

    @property
    def frame_interval_ns(self) -> int:
        return int(round(1e9 / self.sample_rate_hz))

    @property
    def gap_threshold_ns(self) -> int:
        return int(round(self.gap_factor * 1e9 / self.sample_rate_hz))

    def extinction_array(self) -> np.ndarray:
        return np.asarray(self.extinction_matrix, dtype=float)

    def validate(self) -> None:
        if self.sample_rate_hz <= 0:
            raise ConfigError("sample_rate_hz must be positive")
        n = self.window_seconds * self.sample_rate_hz
        if abs(n - round(n)) > 1e-9 or round(n) < 8:
            raise ConfigError(
                "window_seconds * sample_rate_hz must be an integer >= 8"
            )
        if self.channel_count < 1:
            raise ConfigError("channel_count must be >= 1")
        if self.wavelet_name != "db5":
            raise ConfigError(f"unsupported wavelet {self.wavelet_name!r}")
        if self.wavelet_threshold_mode not in ("scaled", "absolute"):
            raise ConfigError("wavelet_threshold_mode must be scaled|absolute")
        if not 0 < self.lowpass_cutoff_hz < self.sample_rate_hz / 2:
            raise ConfigError("lowpass_cutoff_hz must lie below Nyquist")
        if self.lowpass_order < 1:
            raise ConfigError("lowpass_order must be >= 1")
        ext = self.extinction_array()
        if ext.shape != (2, 2):
            raise ConfigError("extinction_matrix must be 2x2")
        if abs(float(np.linalg.det(ext))) <= 1e-12:
            raise ConfigError("extinction_matrix is singular")
        if self.path_length_cm <= 0:
            raise ConfigError("path_length_cm must be positive")
        if len(self.dpf) != 2 or any(d <= 0 for d in self.dpf):
            raise ConfigError("dpf must be two positive factors")


def save_config(cfg: PipelineConfig, path: str) -> None:
    lines = [
        "# neuroguide pipeline configuration (key = value)",
        f"sample_rate_hz = {cfg.sample_rate_hz}",
        f"channel_count = {cfg.channel_count}",
        f"window_seconds = {cfg.window_seconds}",
        f"wavelet_name = {cfg.wavelet_name}",
        f"wavelet_threshold = {cfg.wavelet_threshold}",
        f"wavelet_threshold_mode = {cfg.wavelet_threshold_mode}",
        f"lowpass_cutoff_hz = {cfg.lowpass_cutoff_hz}",
        f"lowpass_order = {cfg.lowpass_order}",
        "extinction_matrix = "
        + ", ".join(str(v) for row in cfg.extinction_matrix for v in row),
        f"path_length_cm = {cfg.path_length_cm}",
        "dpf = " + ", ".join(str(v) for v in cfg.dpf),
        f"gap_factor = {cfg.gap_factor}",
        f"artifact_sigma_flag = {cfg.artifact_sigma_flag}",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_config(path: str) -> PipelineConfig:
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()

    def floats(key: str) -> list[float]:
        return [float(v) for v in values[key].split(",")]

    kwargs = {}
    simple = {
        "sample_rate_hz": float,
        "channel_count": int,
        "window_seconds": float,
        "wavelet_name": str,
        "wavelet_threshold": float,
        "wavelet_threshold_mode": str,
        "lowpass_cutoff_hz": float,
        "lowpass_order": int,
        "path_length_cm": float,
        "gap_factor": float,
        "artifact_sigma_flag": float,
    }
    for key, conv in simple.items():
        if key in values:
            kwargs[key] = conv(values[key])
    if "extinction_matrix" in values:
        flat = floats("extinction_matrix")
        if len(flat) != 4:
            raise ConfigError("extinction_matrix needs 4 comma-separated values")
        kwargs["extinction_matrix"] = ((flat[0], flat[1]), (flat[2], flat[3]))
    if "dpf" in values:
        d = floats("dpf")
        if len(d) != 2:
            raise ConfigError("dpf needs 2 comma-separated values")
        kwargs["dpf"] = tuple(d)
    return PipelineConfig(**kwargs)
