"""Walk a synthetic dual-wavelength stream through the preprocessing chain.

Generates 40 s of frames whose ground truth steps from rest to an activated
state, calibrates the baseline on the first window, then streams frames
through wavelet artifact suppression, the 0.12 Hz low-pass, optical density,
and the Beer-Lambert inversion, printing the recovered concentrations.
"""

import numpy as np

from neuroguide.pipeline import (
    PipelineConfig,
    RawFrame,
    StreamingPipeline,
    calibrate_baseline,
    forward_od,
)

cfg = PipelineConfig()
rng = np.random.default_rng(0)
print(f"config: {cfg.sample_rate_hz:g} Hz, {cfg.channel_count} channels, "
      f"{cfg.window_samples}-sample window, {cfg.wavelet_name}/{cfg.wavelet_threshold}, "
      f"low-pass {cfg.lowpass_cutoff_hz} Hz")

I0 = 1000.0 * (1 + 0.05 * np.arange(cfg.channel_count))[:, None] * np.ones((1, 2))


def frame(tick: int) -> RawFrame:
    t = tick / cfg.sample_rate_hz
    # activation eases in over 20-28 s (hemodynamics are smooth)
    x = np.clip((t - 20.0) / 8.0, 0.0, 1.0)
    hbo = np.full(cfg.channel_count, 0.8 * (3 * x * x - 2 * x ** 3))
    hbr = -0.5 * hbo
    od = forward_od(hbo, hbr, cfg)
    noise = rng.normal(0, 0.0005, size=od.shape)
    intensity = I0 * np.power(10.0, -(od + noise))
    if tick == 260:
        intensity[4] *= 1.35  # motion spike on channel 4
    return RawFrame(tick * cfg.frame_interval_ns, intensity)


frames = [frame(t) for t in range(400)]
baseline = calibrate_baseline(frames[:150], cfg)
print(f"baseline over {baseline.n_frames} frames; mean intensity ch0 = "
      f"{baseline.mean[0, 0]:.1f}")

pipeline = StreamingPipeline(cfg, baseline)
print("\n   t(s)   HbO ch0 (uM)   HbR ch0 (uM)   quality ch4")
for f in frames:
    sample = pipeline.ingest(f)
    if sample is None:
        continue
    t = sample.timestamp_ns / 1e9
    if abs(t * 2 - round(t * 2)) < 1e-9 and round(t * 10) % 50 == 0:
        print(f"  {t:5.1f}   {sample.hbo[0]:12.3f}   {sample.hbr[0]:12.3f}   "
              f"{sample.quality[4]}")

print("\nThe step at 20 s appears gradually (causal 0.12 Hz low-pass settling),")
print("and the spike at t=26 s is absorbed by the wavelet stage.")
