"""Streaming fNIRS preprocessing: windowing, wavelet artifact suppression,
low-pass filtering, optical density, and Beer-Lambert inversion."""

from .config import ConfigError, PipelineConfig, load_config, save_config
from .csvio import read_frames_csv, write_frames_csv
from .lowpass import (
    SeriesTooShort,
    StreamingLowpass,
    butterworth_attenuation_db,
    design_lowpass,
    lowpass_filter,
)
from .mbll import (
    NonPositiveIntensity,
    SingularExtinctionMatrix,
    beer_lambert,
    forward_od,
    mbll_matrix,
    optical_density,
)
from .stream import (
    QUALITY_ARTIFACT,
    QUALITY_GAP,
    QUALITY_OK,
    BaselineStats,
    HemoSample,
    NonMonotonicTimestamp,
    RawFrame,
    SegmentTooShort,
    StreamingPipeline,
    batch_process,
    calibrate_baseline,
)
from .wavelet import NonFiniteInput, default_levels, motion_correct, wavedec, waverec

__all__ = [
    "PipelineConfig",
    "ConfigError",
    "load_config",
    "save_config",
    "RawFrame",
    "BaselineStats",
    "HemoSample",
    "StreamingPipeline",
    "StreamingLowpass",
    "batch_process",
    "calibrate_baseline",
    "optical_density",
    "beer_lambert",
    "forward_od",
    "mbll_matrix",
    "motion_correct",
    "wavedec",
    "waverec",
    "default_levels",
    "design_lowpass",
    "lowpass_filter",
    "butterworth_attenuation_db",
    "read_frames_csv",
    "write_frames_csv",
    "NonMonotonicTimestamp",
    "NonFiniteInput",
    "NonPositiveIntensity",
    "SingularExtinctionMatrix",
    "SeriesTooShort",
    "SegmentTooShort",
    "QUALITY_OK",
    "QUALITY_ARTIFACT",
    "QUALITY_GAP",
]
