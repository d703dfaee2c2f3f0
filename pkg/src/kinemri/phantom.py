"""Synthetic dynamic multi-coil phantom with known ground truth.

Soft-edged ellipse phantoms are evaluated analytically at deformed
coordinates, so every moving frame, the reference, and the per-frame
ground-truth displacement fields are mutually consistent without any
resampling error: ``warp(moving_t, true_field_t) == reference`` up to
interpolation. The reference plays the contracted phase; contraction
motion dilates the moving frames around a configurable center.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .operators import expand_coils, fft2c

MOTIONS = ("static", "translation", "contraction")

# (center_x, center_y, axis_x, axis_y, intensity), all but intensity as
# fractions of the image size
DEFAULT_ELLIPSES = [
    (0.50, 0.50, 0.38, 0.30, 0.80),
    (0.46, 0.46, 0.18, 0.16, 0.60),
    (0.46, 0.46, 0.10, 0.09, -0.40),
    (0.64, 0.60, 0.06, 0.06, 0.50),
]


@dataclass
class PhantomConfig:
    n_x: int = 64
    n_y: int = 64
    n_c: int = 4
    n_t: int = 11
    motion: str = "contraction"
    translation_step: tuple[float, float] = (0.25, 0.0)
    amplitude: float = 0.1
    center: tuple[float, float] = (0.5, 0.5)
    ellipses: list[tuple[float, float, float, float, float]] = dataclass_field(
        default_factory=lambda: list(DEFAULT_ELLIPSES)
    )
    edge_width: float = 0.25
    # small tissue-like floor; keeps low-resolution estimates nonzero
    background: float = 0.02
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.n_x, self.n_y) < 8:
            raise ValueError("spatial dimensions must be >= 8")
        if min(self.n_c, self.n_t) < 1:
            raise ValueError("n_c and n_t must be >= 1")
        if self.motion not in MOTIONS:
            raise ValueError(f"unknown motion {self.motion!r}")
        if not 0 <= self.amplitude < 0.5:
            raise ValueError("amplitude must lie in [0, 0.5)")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass
class PhantomData:
    moving: np.ndarray  # (n_x, n_y, n_t) real
    reference: np.ndarray  # (n_x, n_y) real
    true_fields: np.ndarray  # (2, n_x, n_y, n_t), pixels
    sensitivities: np.ndarray  # (n_x, n_y, n_c, n_t) complex, normalized


def _smoothstep(t: np.ndarray) -> np.ndarray:
    s = np.clip(t, 0.0, 1.0)
    return 3 * s**2 - 2 * s**3


def _render(cfg: PhantomConfig, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Evaluate the soft-edged ellipse sum at pixel coordinates."""
    value = np.full_like(px, cfg.background)
    for cx, cy, ax, ay, intensity in cfg.ellipses:
        rho = np.sqrt(
            ((px - cx * cfg.n_x) / (ax * cfg.n_x)) ** 2
            + ((py - cy * cfg.n_y) / (ay * cfg.n_y)) ** 2
        )
        value += intensity * _smoothstep((1.0 - rho) / cfg.edge_width)
    return np.clip(value, 0.0, None)


def _pixel_grid(cfg: PhantomConfig) -> tuple[np.ndarray, np.ndarray]:
    return np.meshgrid(
        np.arange(cfg.n_x, dtype=float), np.arange(cfg.n_y, dtype=float), indexing="ij"
    )


def _frame_transform(cfg: PhantomConfig, t: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame displacement (field components mapping reference
    coordinates into moving frame ``t``)."""
    px, py = _pixel_grid(cfg)
    if cfg.motion == "static":
        return np.zeros_like(px), np.zeros_like(py)
    if cfg.motion == "translation":
        dx, dy = cfg.translation_step
        return np.full_like(px, (t + 1) * dx), np.full_like(py, (t + 1) * dy)
    growth = np.expm1(cfg.amplitude * (t + 1) / cfg.n_t)
    cx = cfg.center[0] * (cfg.n_x - 1)
    cy = cfg.center[1] * (cfg.n_y - 1)
    return growth * (px - cx), growth * (py - cy)


def coil_sensitivities(
    n_x: int, n_y: int, n_c: int, n_frames: int
) -> np.ndarray:
    """Smooth complex Gaussian-bump profiles, normalized pointwise.

    Coil centers sit on a circle around the image; each coil carries a
    small distinct linear phase. Strictly nonzero everywhere.
    """
    gx, gy = np.meshgrid(
        np.arange(n_x, dtype=float), np.arange(n_y, dtype=float), indexing="ij"
    )
    sigma = 0.6 * max(n_x, n_y)
    radius = 0.55 * max(n_x, n_y)
    maps = np.empty((n_x, n_y, n_c), dtype=complex)
    for k in range(n_c):
        angle = 2 * np.pi * k / n_c
        cx = (n_x - 1) / 2 + radius * np.cos(angle)
        cy = (n_y - 1) / 2 + radius * np.sin(angle)
        bump = np.exp(-((gx - cx) ** 2 + (gy - cy) ** 2) / (2 * sigma**2))
        phase = 0.1 * (np.cos(angle) * gx + np.sin(angle) * gy) / max(n_x, n_y)
        maps[:, :, k] = bump * np.exp(2j * np.pi * phase)
    power = np.sqrt(np.sum(np.abs(maps) ** 2, axis=2, keepdims=True))
    maps = maps / power
    return np.repeat(maps[:, :, :, None], n_frames, axis=3)


def generate(cfg: PhantomConfig) -> PhantomData:
    """Build the moving sequence, reference frame, ground-truth fields and
    normalized sensitivities."""
    px, py = _pixel_grid(cfg)
    reference = _render(cfg, px, py)
    moving = np.empty((cfg.n_x, cfg.n_y, cfg.n_t))
    fields = np.empty((2, cfg.n_x, cfg.n_y, cfg.n_t))
    for t in range(cfg.n_t):
        ux, uy = _frame_transform(cfg, t)
        fields[0, :, :, t] = ux
        fields[1, :, :, t] = uy
        if cfg.motion == "translation":
            moving[:, :, t] = _render(cfg, px - ux, py - uy)
        elif cfg.motion == "static":
            moving[:, :, t] = reference
        else:
            # moving(q) = ref(ctr + (q - ctr) / dilation): the inverse of
            # q -> q + growth * (q - ctr)
            growth = np.expm1(cfg.amplitude * (t + 1) / cfg.n_t)
            cx = cfg.center[0] * (cfg.n_x - 1)
            cy = cfg.center[1] * (cfg.n_y - 1)
            moving[:, :, t] = _render(
                cfg,
                cx + (px - cx) / (1.0 + growth),
                cy + (py - cy) / (1.0 + growth),
            )
    sens = coil_sensitivities(cfg.n_x, cfg.n_y, cfg.n_c, cfg.n_t)
    return PhantomData(
        moving=moving, reference=reference, true_fields=fields, sensitivities=sens
    )


def synthesize_kspace(
    truth: np.ndarray,
    sens: np.ndarray,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> np.ndarray:
    """Fully sampled multi-coil k-space of a (real or complex) image
    sequence, with optional circular Gaussian noise of the given standard
    deviation per complex sample. Seeded and reproducible."""
    kspace = fft2c(expand_coils(truth.astype(complex), sens))
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        scale = noise_sigma / np.sqrt(2.0)
        kspace = kspace + rng.normal(scale=scale, size=kspace.shape) + 1j * rng.normal(
            scale=scale, size=kspace.shape
        )
    return kspace


def object_mask(cfg: PhantomConfig, dilate: float = 1.0) -> np.ndarray:
    """Boolean support of the (reference) phantom body, for masked error
    statistics."""
    px, py = _pixel_grid(cfg)
    cx, cy, ax, ay, _ = cfg.ellipses[0]
    rho = np.sqrt(
        ((px - cx * cfg.n_x) / (ax * cfg.n_x * dilate)) ** 2
        + ((py - cy * cfg.n_y) / (ay * cfg.n_y * dilate)) ** 2
    )
    return rho <= 1.0


def combined_sequence(
    data: PhantomData, cfg: PhantomConfig, reference_index: int | None = None
) -> tuple[np.ndarray, int]:
    """Full image sequence with the reference inserted at the given index
    (mid-sequence by default), as acquired scans would present it."""
    if reference_index is None:
        reference_index = cfg.n_t // 2
    if not 0 <= reference_index <= cfg.n_t:
        raise ValueError("reference_index out of range")
    combined = np.insert(data.moving, reference_index, data.reference, axis=2)
    return combined, reference_index


def write_dataset(
    cfg: PhantomConfig, out_dir, reference_index: int | None = None
) -> dict:
    """Write a phantom dataset in the pipeline container format.

    Produces ``kspace.arr`` (fully sampled, reference frame included),
    ``truth.arr``, ``fields.arr``, ``sens.arr`` and ``meta.json``.
    """
    import json
    from pathlib import Path

    from .container import write_array

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = generate(cfg)
    combined, ref_index = combined_sequence(data, cfg, reference_index)
    sens = coil_sensitivities(cfg.n_x, cfg.n_y, cfg.n_c, combined.shape[2])
    kspace = synthesize_kspace(combined, sens, cfg.noise_sigma, cfg.seed)
    write_array(out / "kspace.arr", kspace, "kspace_full")
    write_array(out / "truth.arr", combined, "truth_magnitude")
    write_array(out / "fields.arr", data.true_fields, "true_fields")
    write_array(out / "sens.arr", sens, "sensitivities")
    meta = {
        "n_x": cfg.n_x,
        "n_y": cfg.n_y,
        "n_c": cfg.n_c,
        "n_t": cfg.n_t,
        "reference_frame_index": ref_index,
        "motion": cfg.motion,
        "noise_sigma": cfg.noise_sigma,
        "seed": cfg.seed,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return meta
