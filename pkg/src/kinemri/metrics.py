"""Image quality metrics and evaluation losses.

SSIM uses uniform square sliding windows (stride 1, valid positions only)
with population (biased) window statistics, so a temporally constant
sequence scores identically under the 2D and 3D variants. PSNR and NMSE
follow the usual ground-truth-normalized definitions: the first argument
``f`` is the ground truth, the second ``d`` the prediction.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field as dataclass_field
from typing import Callable

import numpy as np

from .registration import smoothness_loss


def _data_range(f: np.ndarray, supplied: float | None) -> float:
    if supplied is not None:
        if supplied <= 0:
            raise ValueError("data_range must be positive")
        return float(supplied)
    span = float(np.max(f) - np.min(f))
    return span if span > 0 else 1.0


def _windowed_ssim(
    f: np.ndarray, d: np.ndarray, window: tuple[int, ...], data_range: float
) -> float:
    windows_f = np.lib.stride_tricks.sliding_window_view(f, window)
    windows_d = np.lib.stride_tricks.sliding_window_view(d, window)
    axes = tuple(range(-len(window), 0))
    mu_f = windows_f.mean(axis=axes)
    mu_d = windows_d.mean(axis=axes)
    var_f = (windows_f**2).mean(axis=axes) - mu_f**2
    var_d = (windows_d**2).mean(axis=axes) - mu_d**2
    cov = (windows_f * windows_d).mean(axis=axes) - mu_f * mu_d
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    value = ((2 * mu_f * mu_d + c1) * (2 * cov + c2)) / (
        (mu_f**2 + mu_d**2 + c1) * (var_f + var_d + c2)
    )
    return float(value.mean())


def ssim2d(
    f: np.ndarray, d: np.ndarray, data_range: float | None = None, window: int = 7
) -> float:
    """Mean SSIM over all ``window x window`` patches of a 2D frame."""
    if f.shape != d.shape:
        raise ValueError("shapes differ")
    if f.ndim != 2:
        raise ValueError("ssim2d expects 2D frames")
    if min(f.shape) < window:
        raise ValueError(f"frame smaller than the {window}x{window} window")
    return _windowed_ssim(
        np.asarray(f, float), np.asarray(d, float), (window, window), _data_range(f, data_range)
    )


def ssim3d(
    f: np.ndarray,
    d: np.ndarray,
    data_range: float | None = None,
    window: tuple[int, int, int] = (7, 7, 3),
) -> float:
    """Mean SSIM over spatiotemporal patches of a dynamic sequence."""
    if f.shape != d.shape:
        raise ValueError("shapes differ")
    if f.ndim != 3:
        raise ValueError("ssim3d expects (n_x, n_y, n_t) sequences")
    if f.shape[2] < window[2]:
        raise ValueError(f"need at least {window[2]} frames")
    if f.shape[0] < window[0] or f.shape[1] < window[1]:
        raise ValueError("frames smaller than the spatial window")
    return _windowed_ssim(
        np.asarray(f, float), np.asarray(d, float), window, _data_range(f, data_range)
    )


def psnr(f: np.ndarray, d: np.ndarray) -> float:
    """Peak signal-to-noise ratio, ``20 log10(max(f) / rmse)`` in dB.

    Identical inputs return ``math.inf``.
    """
    if f.shape != d.shape:
        raise ValueError("shapes differ")
    mse = float(np.mean((np.asarray(f, float) - np.asarray(d, float)) ** 2))
    if mse == 0:
        return math.inf
    return 20.0 * math.log10(float(np.max(f)) / math.sqrt(mse))


def nmse(f: np.ndarray, d: np.ndarray) -> float:
    """Normalized mean squared error ``||f - d||^2 / ||f||^2``."""
    if f.shape != d.shape:
        raise ValueError("shapes differ")
    denom = float(np.sum(np.asarray(f, float) ** 2))
    if denom == 0:
        raise ValueError("ground truth is identically zero")
    return float(np.sum((np.asarray(f, float) - np.asarray(d, float)) ** 2)) / denom


def phase_averaged(
    metric: Callable[[np.ndarray, np.ndarray], float],
    registered: np.ndarray,
    reference: np.ndarray,
) -> float:
    """Arithmetic mean of ``metric(reference, frame)`` over all frames."""
    values = [
        metric(reference, registered[:, :, t]) for t in range(registered.shape[2])
    ]
    return float(np.mean(values))


def similarity_loss(
    prediction: np.ndarray, truth: np.ndarray, data_range: float | None = None
) -> float:
    """Similarity part of the losses: (1 - mean frame SSIM) +
    (1 - 3D SSIM) + mean absolute error.

    The SSIM data range defaults to the span of the full truth sequence so
    all three terms share a scale. Zero iff prediction equals truth.
    """
    if prediction.shape != truth.shape:
        raise ValueError("shapes differ")
    rng = _data_range(truth, data_range)
    frame_ssim = np.mean(
        [
            ssim2d(truth[:, :, t], prediction[:, :, t], data_range=rng)
            for t in range(truth.shape[2])
        ]
    )
    mae = float(np.mean(np.abs(prediction - truth)))
    return (1.0 - float(frame_ssim)) + (1.0 - ssim3d(truth, prediction, data_range=rng)) + mae


def reconstruction_loss(prediction: np.ndarray, truth: np.ndarray) -> float:
    """Loss of the reconstructed moving magnitudes against ground truth."""
    return similarity_loss(prediction, truth)


def registration_loss(
    registered: np.ndarray, reference: np.ndarray, field: np.ndarray
) -> float:
    """Alignment loss: similarity to the repeated reference plus field
    smoothness."""
    repeated = np.repeat(reference[:, :, None], registered.shape[2], axis=2)
    return similarity_loss(registered, repeated) + smoothness_loss(field)


def combined_loss(l_rec: float, l_reg: float, alpha: float = 1.0, beta: float = 1.0) -> float:
    """Weighted total ``alpha * l_rec + beta * l_reg``."""
    if alpha < 0 or beta < 0:
        raise ValueError("weights must be non-negative")
    return alpha * l_rec + beta * l_reg


@dataclass
class MetricsReport:
    """Per-frame and phase-averaged metrics plus loss values.

    The phase-averaged entries are the arithmetic means of the per-frame
    rows. ``timing_seconds`` is kept out of the deterministic JSON
    serialization; ``extras`` carries run metadata such as the mask hash.
    """

    per_frame: list[dict]
    phase_averaged: dict
    losses: dict
    timing_seconds: dict = dataclass_field(default_factory=dict)
    extras: dict = dataclass_field(default_factory=dict)

    @classmethod
    def from_frames(
        cls,
        frame_metrics: list[dict],
        losses: dict,
        timing_seconds: dict | None = None,
        extras: dict | None = None,
    ) -> "MetricsReport":
        keys = [k for k in frame_metrics[0] if k != "frame"]
        averaged = {
            k: float(np.mean([row[k] for row in frame_metrics])) for k in keys
        }
        return cls(
            per_frame=frame_metrics,
            phase_averaged=averaged,
            losses=losses,
            timing_seconds=timing_seconds or {},
            extras=extras or {},
        )

    def to_dict(self, include_timing: bool = False) -> dict:
        payload = {
            "per_frame": self.per_frame,
            "phase_averaged": self.phase_averaged,
            "losses": self.losses,
            "extras": self.extras,
        }
        if include_timing:
            payload["timing_seconds"] = self.timing_seconds
        return payload

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        columns = list(self.per_frame[0].keys())
        writer = csv.DictWriter(buffer, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in self.per_frame:
            writer.writerow(row)
        summary = dict(self.phase_averaged)
        summary["frame"] = "mean"
        writer.writerow(summary)
        return buffer.getvalue()

    @classmethod
    def from_dict(cls, payload: dict) -> "MetricsReport":
        return cls(
            per_frame=payload["per_frame"],
            phase_averaged=payload["phase_averaged"],
            losses=payload["losses"],
            timing_seconds=payload.get("timing_seconds", {}),
            extras=payload.get("extras", {}),
        )
