"""Optical density and the modified Beer-Lambert inversion.

OD(t) = -log10(I(t) / I_baseline): decreased light (more absorption) gives
positive OD, matching published extinction coefficient conventions. The 2x2
system per channel,

    dOD(lambda_i) = [eps_HbO(lambda_i) dC_HbO + eps_HbR(lambda_i) dC_HbR]
                    * path_length_cm * dpf(lambda_i),

is solved for (dC_HbO, dC_HbR) with concentrations reported in micromolar
(extinction coefficients are per millimolar, hence the 1e3 factor).
"""

from __future__ import annotations

import numpy as np

from .config import PipelineConfig

__all__ = [
    "NonPositiveIntensity",
    "SingularExtinctionMatrix",
    "optical_density",
    "mbll_matrix",
    "beer_lambert",
    "forward_od",
]


class NonPositiveIntensity(ValueError):
    pass


class SingularExtinctionMatrix(ValueError):
    pass


def optical_density(intensity, baseline_mean):
    """Elementwise OD = -log10(I / I0). Shapes broadcast; all inputs must be
    strictly positive."""
    inten = np.asarray(intensity, dtype=float)
    base = np.asarray(baseline_mean, dtype=float)
    if np.any(inten <= 0) or np.any(base <= 0):
        raise NonPositiveIntensity("intensities and baseline means must be > 0")
    return -np.log10(inten / base)


def mbll_matrix(cfg: PipelineConfig) -> np.ndarray:
    """Forward matrix M with dOD = M @ (dC_HbO, dC_HbR) in mM units."""
    ext = cfg.extinction_array()
    dpf = np.asarray(cfg.dpf, dtype=float)
    return ext * cfg.path_length_cm * dpf[:, None]


def _inverse_matrix(cfg: PipelineConfig) -> np.ndarray:
    m = mbll_matrix(cfg)
    det = float(np.linalg.det(m))
    if abs(det) <= 1e-12:
        raise SingularExtinctionMatrix(f"|det| = {abs(det):.3e}")
    return np.linalg.inv(m)

def beer_lambert(od_pair: np.ndarray, cfg: PipelineConfig):
    """Invert OD at the two wavelengths into (hbo_uM, hbr_uM).

    od_pair has the wavelength axis last: shape (..., 2); returns two arrays
    of shape (...).
    """
    inv = _inverse_matrix(cfg)
    od = np.asarray(od_pair, dtype=float)
    conc_mm = od @ inv.T
    conc_um = conc_mm * 1e3
    return conc_um[..., 0], conc_um[..., 1]


def forward_od(hbo_um, hbr_um, cfg: PipelineConfig) -> np.ndarray:
    """Forward model used by the round-trip oracle and the synthetic frame
    generator: concentrations in uM to OD at both wavelengths (..., 2)."""
    m = mbll_matrix(cfg)
    conc = np.stack([np.asarray(hbo_um, dtype=float),
                     np.asarray(hbr_um, dtype=float)], axis=-1) / 1e3
    return conc @ m.T
