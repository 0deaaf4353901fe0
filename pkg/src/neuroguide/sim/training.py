"""Fixture model training for the synthetic closed loop.

The study's trained classifiers are proprietary, so sessions run on models fit
against the generator's own state-to-hemodynamics mapping: for each facet, a
script sweeps that facet through the three states (others held optimal), the
stream runs through the real preprocessing pipeline, and windows that sit
fully inside a settled segment become labeled training features. Fitting is
deterministic, so a given (config, seed) always yields the same models.
"""

from __future__ import annotations

import numpy as np

from ..classifier import (
    CLASSES,
    FACETS,
    FacetModel,
    FeatureSpec,
    extract_features,
    fit_multinomial,
)
from ..pipeline import PipelineConfig, StreamingPipeline, calibrate_baseline
from .generator import FnirsGenerator, LoadScript, ScriptSegment

__all__ = ["train_fixture_models", "default_models"]

DEFAULT_MODEL_SEED = 7777

_SEGMENT_S = 30.0
_SETTLE_S = 8.0  # skip windows near segment transitions (filter settling)
_CALIBRATION_S = 15.0
_SUBSAMPLE = 5

_cache: dict = {}


def _training_script() -> LoadScript:
    """All-optimal calibration prefix (matching how sessions baseline), then
    nine segments crossing the facet states so every facet pair covers all
    nine state combinations exactly once: the fitted models see realistic
    variance on every channel and learn to ignore off-facet channels."""
    segments = [ScriptSegment(_CALIBRATION_S)]
    for i in range(9):
        segments.append(
            ScriptSegment(
                _SEGMENT_S,
                memory=CLASSES[i % 3],
                attention=CLASSES[(i // 3 + i) % 3],
                perception=CLASSES[(2 * (i // 3) + i) % 3],
            )
        )
    return LoadScript(segments, noise_uM=0.05)


def _collect_training_set(cfg: PipelineConfig, seed: int):
    """One pipeline pass over the crossing script; labels per facet at each
    usable window (window fully inside a settled segment for all facets)."""
    script = _training_script()
    gen = FnirsGenerator(script, cfg, seed)
    n_cal = int(_CALIBRATION_S * cfg.sample_rate_hz)
    cal_frames = [gen.frame(t) for t in range(n_cal)]
    baseline = calibrate_baseline(cal_frames, cfg)
    pipeline = StreamingPipeline(cfg, baseline)
    spec = FeatureSpec(
        channel_count=cfg.channel_count,
        window_samples=cfg.window_samples,
        sample_rate_hz=cfg.sample_rate_hz,
    )
    window: list = []
    feats = []
    labels = {facet: [] for facet in FACETS}
    total_ticks = int(script.duration_s * cfg.sample_rate_hz)
    window_s = cfg.window_samples / cfg.sample_rate_hz
    for tick in range(n_cal, total_ticks):
        sample = pipeline.ingest(gen.frame(tick))
        if sample is None:
            continue
        window.append(sample)
        if len(window) > cfg.window_samples:
            window.pop(0)
        if len(window) < cfg.window_samples or tick % _SUBSAMPLE:
            continue
        t_end = tick / cfg.sample_rate_hz  # script time includes calibration
        states_end = script.states_at(t_end)
        states_back = script.states_at(max(t_end - window_s - _SETTLE_S, 0.0))
        if states_end != states_back:
            continue  # window straddles a transition or its settling tail
        feats.append(extract_features(window, spec, z_score=False))
        for facet in FACETS:
            labels[facet].append(CLASSES.index(states_end[facet]))
    return np.asarray(feats), {f: np.asarray(v) for f, v in labels.items()}, spec


def train_fixture_models(cfg: PipelineConfig, seed: int = DEFAULT_MODEL_SEED) -> dict:
    """Fit the three facet models; cached per (config fingerprint, seed)."""
    key = (
        cfg.channel_count,
        cfg.sample_rate_hz,
        cfg.window_seconds,
        cfg.lowpass_cutoff_hz,
        seed,
    )
    if key in _cache:
        return _cache[key]
    feats, labels, spec = _collect_training_set(cfg, seed)
    mu = feats.mean(axis=0)
    sigma = np.maximum(feats.std(axis=0), 1e-9)
    spec.mu = mu
    spec.sigma = sigma
    z = (feats - mu) / sigma
    models = {}
    for facet in FACETS:
        weights = fit_multinomial(z, labels[facet], l2=0.05, tol=1e-6)
        model = FacetModel(facet=facet, weights=weights, feature_spec=spec)
        model.validate()
        models[facet] = model
    _cache[key] = models
    return models


def default_models(cfg: PipelineConfig | None = None) -> dict:
    return train_fixture_models(cfg if cfg is not None else PipelineConfig())
