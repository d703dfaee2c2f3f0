"""Deformable registration of a moving sequence to a static reference.

Displacement fields are ``(2, n_x, n_y)`` per frame (components along the
two spatial axes, in pixels) and map reference coordinates into the moving
frame: ``warp(moving, field) ~ reference``.

Three classical solvers are provided: an additive demons scheme with
Gaussian field smoothing (implemented here), and the iterative
Lucas-Kanade and TV-L1 optical flow solvers from scikit-image. All are
deterministic given their configuration.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.ndimage import gaussian_filter, zoom
from skimage.registration import optical_flow_ilk, optical_flow_tvl1

METHODS = ("demons", "optical_flow_ilk", "optical_flow_tvl1")


@dataclass
class WarpConfig:
    """Warping options: scaling-and-squaring integration steps (0 warps by
    the raw displacement), bilinear interpolation, zero fill with a
    validity mask outside the grid."""

    integration_steps: int = 2

    def __post_init__(self) -> None:
        if self.integration_steps < 0:
            raise ValueError("integration_steps must be >= 0")


@dataclass
class RegMethodConfig:
    method: str = "demons"
    demons_iterations: int = 10
    demons_sigma: float = 1.0
    ilk_radius: int = 5
    ilk_warps: int = 3
    tvl1_attachment: float = 15.0
    tvl1_tightness: float = 0.3
    tvl1_warps: int = 3
    tvl1_iterations: int = 5
    tvl1_tol: float = 1e-2

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown registration method {self.method!r}")
        if self.demons_iterations < 1 or self.demons_sigma <= 0:
            raise ValueError("demons needs positive iterations and sigma")
        if self.ilk_radius < 1 or self.ilk_warps < 1:
            raise ValueError("ilk needs positive radius and warp count")
        if min(self.tvl1_attachment, self.tvl1_tightness, self.tvl1_tol) <= 0:
            raise ValueError("tvl1 parameters must be positive")


class WarpResult(NamedTuple):
    image: np.ndarray
    valid: np.ndarray


def _bilinear_sample(
    frame: np.ndarray, px: np.ndarray, py: np.ndarray, clamp: bool = False
) -> WarpResult:
    """Sample ``frame`` at fractional coordinates.

    A sample is valid iff its coordinates lie within the grid hull
    ``[0, n_x - 1] x [0, n_y - 1]``. With ``clamp`` the coordinates are
    clipped to the hull (constant extension); otherwise invalid samples
    are exactly zero.
    """
    n_x, n_y = frame.shape
    valid = (px >= 0) & (px <= n_x - 1) & (py >= 0) & (py <= n_y - 1)
    if clamp:
        px = np.clip(px, 0, n_x - 1)
        py = np.clip(py, 0, n_y - 1)
    x0 = np.clip(np.floor(px).astype(int), 0, n_x - 1)
    y0 = np.clip(np.floor(py).astype(int), 0, n_y - 1)
    x1 = np.minimum(x0 + 1, n_x - 1)
    y1 = np.minimum(y0 + 1, n_y - 1)
    wx = np.clip(px - x0, 0.0, 1.0)
    wy = np.clip(py - y0, 0.0, 1.0)
    value = (
        frame[x0, y0] * (1 - wx) * (1 - wy)
        + frame[x1, y0] * wx * (1 - wy)
        + frame[x0, y1] * (1 - wx) * wy
        + frame[x1, y1] * wx * wy
    )
    if not clamp:
        value = np.where(valid, value, 0.0)
    return WarpResult(image=value, valid=valid.astype(np.uint8))


def _grid(n_x: int, n_y: int) -> tuple[np.ndarray, np.ndarray]:
    return np.meshgrid(np.arange(n_x, dtype=float), np.arange(n_y, dtype=float), indexing="ij")


def compose_displacement(outer: np.ndarray, inner: np.ndarray) -> np.ndarray:
    """Composition ``(outer o inner)(x) = inner(x) + outer(x + inner(x))``.

    The outer field is resampled bilinearly at the displaced positions
    with edge clamping (constant extension beyond the grid), which keeps
    spatially constant fields exactly constant under composition.
    """
    gx, gy = _grid(outer.shape[1], outer.shape[2])
    px, py = gx + inner[0], gy + inner[1]
    sampled0 = _bilinear_sample(outer[0], px, py, clamp=True).image
    sampled1 = _bilinear_sample(outer[1], px, py, clamp=True).image
    return np.stack([inner[0] + sampled0, inner[1] + sampled1], axis=0)


def integrate_field(field: np.ndarray, steps: int) -> np.ndarray:
    """Scaling-and-squaring integration of a stationary velocity field.

    Scales by ``2**-steps``, then composes the field with itself ``steps``
    times. ``steps == 0`` returns the field unchanged.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if steps == 0:
        return field.copy()
    current = field / (2.0**steps)
    for _ in range(steps):
        current = compose_displacement(current, current)
    return current


def warp(
    image: np.ndarray, field: np.ndarray, cfg: WarpConfig | None = None
) -> WarpResult:
    """Resample an image at displaced coordinates: ``I(x + v(x))``.

    The field is integrated per ``cfg.integration_steps`` first; sampling
    is bilinear with zero fill and a validity bit per pixel.
    """
    if cfg is None:
        cfg = WarpConfig()
    if field.shape != (2,) + image.shape:
        raise ValueError(f"field shape {field.shape} does not match image {image.shape}")
    displaced = integrate_field(field, cfg.integration_steps)
    gx, gy = _grid(image.shape[0], image.shape[1])
    return _bilinear_sample(image, gx + displaced[0], gy + displaced[1])


# Step-length normalization of the demons force: bounds each update to
# roughly half this many pixels.
_DEMONS_MAX_STEP = 2.0
# Coarsest pyramid level is at least this wide.
_DEMONS_MIN_LEVEL = 8


def _demons_level(
    moving: np.ndarray,
    reference: np.ndarray,
    iterations: int,
    sigma: float,
    field: np.ndarray,
) -> np.ndarray:
    """Additive demons iterations at one resolution: symmetric forces,
    Gaussian smoothing of the accumulated displacement field."""
    raw_warp = WarpConfig(integration_steps=0)
    grad_ref = np.gradient(reference)
    normalizer = _DEMONS_MAX_STEP**2
    for _ in range(iterations):
        warped = warp(moving, field, raw_warp).image
        diff = reference - warped
        grad_warped = np.gradient(warped)
        gx = 0.5 * (grad_ref[0] + grad_warped[0])
        gy = 0.5 * (grad_ref[1] + grad_warped[1])
        denom = gx**2 + gy**2 + diff**2 / normalizer
        update = np.divide(diff, denom, out=np.zeros_like(diff), where=denom > 1e-12)
        field = field + np.stack([update * gx, update * gy], axis=0)
        field[0] = gaussian_filter(field[0], sigma)
        field[1] = gaussian_filter(field[1], sigma)
    return field


def _demons_pair(
    moving: np.ndarray, reference: np.ndarray, iterations: int, sigma: float
) -> np.ndarray:
    """Coarse-to-fine demons over a factor-2 pyramid.

    Runs ``iterations`` demons updates per level; displacements from a
    coarser level are upsampled and doubled to initialize the next one.
    """
    levels = 1
    while min(moving.shape) / 2 ** levels >= _DEMONS_MIN_LEVEL:
        levels += 1
    field = None
    for level in reversed(range(levels)):
        factor = 2**level
        if factor > 1:
            moving_l = zoom(moving, 1.0 / factor, order=1)
            reference_l = zoom(reference, 1.0 / factor, order=1)
        else:
            moving_l, reference_l = moving, reference
        if field is None:
            field = np.zeros((2,) + reference_l.shape)
        else:
            scale = (
                reference_l.shape[0] / field.shape[1],
                reference_l.shape[1] / field.shape[2],
            )
            field = 2.0 * np.stack(
                [zoom(field[0], scale, order=1), zoom(field[1], scale, order=1)], axis=0
            )
        field = _demons_level(moving_l, reference_l, iterations, sigma, field)
    return field


def register_pair(
    moving: np.ndarray, reference: np.ndarray, cfg: RegMethodConfig | None = None
) -> np.ndarray:
    """Estimate the displacement field aligning one frame to the reference.

    Returns a ``(2, n_x, n_y)`` field such that ``warp(moving, field)``
    approximates ``reference``.
    """
    if cfg is None:
        cfg = RegMethodConfig()
    if moving.shape != reference.shape:
        raise ValueError("moving and reference shapes differ")
    if not (np.all(np.isfinite(moving)) and np.all(np.isfinite(reference))):
        raise ValueError("registration inputs must be finite")
    moving = np.asarray(moving, dtype=float)
    reference = np.asarray(reference, dtype=float)
    # canonical intensity scale so the solvers (and their fixed weights)
    # are invariant to joint rescaling of the inputs
    span = float(reference.max() - reference.min())
    if span > 0:
        moving = moving / span
        reference = reference / span
    if cfg.method == "demons":
        return _demons_pair(moving, reference, cfg.demons_iterations, cfg.demons_sigma)
    if cfg.method == "optical_flow_ilk":
        flow = optical_flow_ilk(
            reference,
            moving,
            radius=cfg.ilk_radius,
            num_warp=cfg.ilk_warps,
            gaussian=False,
            prefilter=True,
        )
    else:
        flow = optical_flow_tvl1(
            reference,
            moving,
            attachment=cfg.tvl1_attachment,
            tightness=cfg.tvl1_tightness,
            num_warp=cfg.tvl1_warps,
            num_iter=cfg.tvl1_iterations,
            tol=cfg.tvl1_tol,
        )
    return np.asarray(flow, dtype=float)


def register_sequence(
    moving: np.ndarray, reference: np.ndarray, cfg: RegMethodConfig | None = None
) -> np.ndarray:
    """Register every frame of a sequence to the reference.

    Returns a ``(2, n_x, n_y, n_t)`` field stack.
    """
    if moving.ndim != 3:
        raise ValueError("moving sequence must have shape (n_x, n_y, n_t)")
    fields = [
        register_pair(moving[:, :, t], reference, cfg) for t in range(moving.shape[2])
    ]
    return np.stack(fields, axis=-1)


def smoothness_loss(field: np.ndarray) -> float:
    """Mean absolute spatial gradient of the displacement field.

    Forward differences along both spatial axes (zero at the trailing
    edge), summed over both components, averaged as
    ``1 / (2 * n_pixels * n_t)``. Zero iff the field is constant per
    frame; scales linearly with the field.
    """
    if field.ndim != 4 or field.shape[0] != 2:
        raise ValueError("field must have shape (2, n_x, n_y, n_t)")
    if not np.all(np.isfinite(field)):
        raise ValueError("field must be finite")
    dx = np.abs(np.diff(field, axis=1)).sum()
    dy = np.abs(np.diff(field, axis=2)).sum()
    n_pixels = field.shape[1] * field.shape[2]
    return float((dx + dy) / (2.0 * n_pixels * field.shape[3]))
