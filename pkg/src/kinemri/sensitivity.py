"""Coil sensitivity estimation from the autocalibration signal (ACS).

Profiles are estimated per frame by dividing each coil's low-resolution
image by the RSS combination of all coils, optionally smoothed, and
normalized so that ``sum_k |S_k|^2 = 1`` at every pixel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .operators import ifft2c, rss

REFINEMENTS = ("none", "gaussian_smooth")


@dataclass
class SensitivityConfig:
    """Options for sensitivity estimation.

    ``epsilon_div`` guards the RSS denominator against zero-background
    pixels. ``refinement`` is either ``"none"`` (estimates returned
    unchanged) or ``"gaussian_smooth"`` with standard deviation ``sigma``.
    """

    epsilon_div: float = 1e-12
    refinement: str = "none"
    sigma: float = 1.0

    def __post_init__(self) -> None:
        if self.epsilon_div <= 0:
            raise ValueError("epsilon_div must be positive")
        if self.refinement not in REFINEMENTS:
            raise ValueError(f"unknown refinement {self.refinement!r}")
        if self.refinement == "gaussian_smooth" and self.sigma <= 0:
            raise ValueError("sigma must be positive when smoothing")


def estimate_from_acs(
    acs_kspace: np.ndarray, epsilon_div: float = 1e-12
) -> np.ndarray:
    """Estimate sensitivities from ACS-masked k-space.

    Per frame and coil: the inverse FFT of the coil's ACS data divided
    elementwise by the RSS over coils (plus ``epsilon_div``).

    Parameters
    ----------
    acs_kspace : ``(n_x, n_y, n_c, n_t)`` complex, nonzero only on the
        autocalibration lines.

    Raises
    ------
    ValueError
        If a frame carries no ACS signal at all.
    """
    frame_energy = np.sum(np.abs(acs_kspace) ** 2, axis=(0, 1, 2))
    if np.any(frame_energy == 0):
        empty = np.flatnonzero(frame_energy == 0).tolist()
        raise ValueError(f"empty autocalibration region in frame(s) {empty}")
    coil_images = ifft2c(acs_kspace)
    denom = rss(coil_images) + epsilon_div
    return coil_images / denom[:, :, None, :]


def refine(sens: np.ndarray, cfg: SensitivityConfig) -> np.ndarray:
    """Refine sensitivity estimates per the configured mode.

    ``"none"`` returns the input unchanged. ``"gaussian_smooth"`` applies a
    separable Gaussian per coil and frame to the real and imaginary parts.
    """
    if cfg.refinement == "none":
        return sens
    smoothed = np.empty_like(sens)
    for k in range(sens.shape[2]):
        for t in range(sens.shape[3]):
            smoothed[:, :, k, t] = gaussian_filter(
                sens[:, :, k, t].real, cfg.sigma
            ) + 1j * gaussian_filter(sens[:, :, k, t].imag, cfg.sigma)
    return smoothed


def normalize(sens: np.ndarray) -> np.ndarray:
    """Scale sensitivities so that ``sum_k |S_k|^2 = 1`` pointwise.

    Idempotent. Raises if any pixel has zero sensitivity in all coils,
    listing the offending ``(x, y, frame)`` coordinates.
    """
    power = np.sum(np.abs(sens) ** 2, axis=2)
    if np.any(power == 0):
        coords = np.argwhere(power == 0)
        shown = [tuple(int(v) for v in c) for c in coords[:10]]
        raise ValueError(
            f"zero sensitivity at {coords.shape[0]} pixel(s), e.g. (x, y, frame) = {shown}"
        )
    return sens / np.sqrt(power)[:, :, None, :]
