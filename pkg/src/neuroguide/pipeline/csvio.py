"""Raw frame CSV import/export for offline fixtures.

Column layout: timestamp_ns, then ch{i}_w1, ch{i}_w2 for each channel, e.g.
timestamp_ns,ch0_w1,ch0_w2,ch1_w1,... A header row is required and validated
against the configured channel count.
"""

from __future__ import annotations

import csv

import numpy as np

from .config import ConfigError, PipelineConfig
from .stream import RawFrame

__all__ = ["read_frames_csv", "write_frames_csv"]


def _header(cfg: PipelineConfig) -> list[str]:
    cols = ["timestamp_ns"]
    for c in range(cfg.channel_count):
        cols += [f"ch{c}_w1", f"ch{c}_w2"]
    return cols


def write_frames_csv(frames, cfg: PipelineConfig, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_header(cfg))
        for f in frames:
            row = [f.timestamp_ns]
            row += [repr(float(v)) for v in np.asarray(f.intensities).reshape(-1)]
            writer.writerow(row)


def read_frames_csv(path: str, cfg: PipelineConfig) -> list[RawFrame]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _header(cfg):
            raise ConfigError(
                f"{path}: header does not match {cfg.channel_count} channels"
            )
        frames = []
        for row in reader:
            if not row:
                continue
            ts = int(row[0])
            vals = np.asarray([float(v) for v in row[1:]], dtype=float)
            frames.append(RawFrame(ts, vals.reshape(cfg.channel_count, 2)))
    return frames
