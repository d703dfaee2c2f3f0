"""End-to-end pipeline: sensitivity estimation, sampling, reconstruction,
registration, warping and metrics, with the standard pre/postprocessing.

A run splits the reference frame from the moving frames, zero-pads in the
image domain, normalizes k-space by a high percentile of the ACS
magnitudes, builds the sampling mask, reconstructs, registers the
reconstructed magnitudes to the reference, warps, center-crops (fractions
of the pre-padding shape) and reports per-frame and phase-averaged
metrics. Runs are deterministic under a fixed seed; every stage failure
aborts with a stage-tagged error and removes partial artifacts.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field as dataclass_field, asdict
from pathlib import Path

import numpy as np

from . import phantom as phantom_mod
from .container import read_array, write_array
from .metrics import (
    MetricsReport,
    combined_loss,
    nmse,
    psnr,
    reconstruction_loss,
    registration_loss,
    ssim2d,
)
from .operators import apply_mask, fft2c, ifft2c, rss
from .phantom import PhantomConfig, combined_sequence, generate, synthesize_kspace
from .reconstruction import ReconConfig, admm_reconstruct
from .registration import RegMethodConfig, WarpConfig, register_sequence, warp
from .sampling import (
    SamplerConfig,
    acs_line_indices,
    acs_mask,
    adaptive_mask,
    budget,
    dataset_optimized_mask,
    equispaced_mask,
    initial_mask,
    kt_equispaced_mask,
    mask_to_json,
)
from .sensitivity import SensitivityConfig, estimate_from_acs, normalize, refine


class ConfigError(ValueError):
    """Invalid pipeline configuration."""


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineConfig:
    input_dir: str | None = None
    phantom: PhantomConfig | None = None
    reference_frame_index: int | None = None
    sampler: SamplerConfig = dataclass_field(default_factory=SamplerConfig)
    sensitivity: SensitivityConfig = dataclass_field(default_factory=SensitivityConfig)
    recon: ReconConfig = dataclass_field(default_factory=ReconConfig)
    registration: RegMethodConfig = dataclass_field(default_factory=RegMethodConfig)
    warp: WarpConfig = dataclass_field(default_factory=WarpConfig)
    alpha: float = 1.0
    beta: float = 1.0
    pad_to: tuple[int, int] | None = None
    normalize_percentile: float = 99.5
    crop_fractions: tuple[float, float] = (1.0 / 3.0, 1.0 / 2.0)
    output_dir: str = "out"
    seed: int = 0

    def __post_init__(self) -> None:
        if (self.input_dir is None) == (self.phantom is None):
            raise ConfigError("provide exactly one of input_dir or phantom config")
        if not 0 < self.normalize_percentile <= 100:
            raise ConfigError("normalize_percentile must lie in (0, 100]")
        if not all(0 < f <= 1 for f in self.crop_fractions):
            raise ConfigError("crop fractions must lie in (0, 1]")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("loss weights must be non-negative")

    @classmethod
    def from_dict(cls, payload: dict) -> "PipelineConfig":
        try:
            phantom_cfg = payload.get("phantom")
            pre = payload.get("preprocess", {})
            post = payload.get("postprocess", {})
            weights = payload.get("loss_weights", {})
            pad_to = pre.get("pad_to")
            return cls(
                input_dir=payload.get("input"),
                phantom=PhantomConfig(**phantom_cfg) if phantom_cfg else None,
                reference_frame_index=payload.get("reference_frame_index"),
                sampler=SamplerConfig(**payload.get("sampler", {})),
                sensitivity=SensitivityConfig(**payload.get("sensitivity", {})),
                recon=ReconConfig(**payload.get("recon", {})),
                registration=RegMethodConfig(**payload.get("registration", {})),
                warp=WarpConfig(**payload.get("warp", {})),
                alpha=weights.get("alpha", 1.0),
                beta=weights.get("beta", 1.0),
                pad_to=tuple(pad_to) if pad_to else None,
                normalize_percentile=pre.get("normalize_percentile", 99.5),
                crop_fractions=tuple(post.get("crop", (1.0 / 3.0, 1.0 / 2.0))),
                output_dir=payload.get("output_dir", "out"),
                seed=payload.get("seed", 0),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        sampler = asdict(self.sampler)
        sampler.pop("scorer", None)
        payload = {
            "input": self.input_dir,
            "phantom": asdict(self.phantom) if self.phantom else None,
            "reference_frame_index": self.reference_frame_index,
            "sampler": sampler,
            "sensitivity": asdict(self.sensitivity),
            "recon": asdict(self.recon),
            "registration": asdict(self.registration),
            "warp": asdict(self.warp),
            "loss_weights": {"alpha": self.alpha, "beta": self.beta},
            "preprocess": {
                "pad_to": list(self.pad_to) if self.pad_to else None,
                "normalize_percentile": self.normalize_percentile,
            },
            "postprocess": {"crop": list(self.crop_fractions)},
            "output_dir": self.output_dir,
            "seed": self.seed,
        }
        return payload


def pad_kspace(kspace: np.ndarray, pad_to: tuple[int, int]) -> np.ndarray:
    """Zero-pad in the image domain to the target spatial shape, then
    project back to k-space."""
    n_x, n_y = kspace.shape[:2]
    tx, ty = pad_to
    if tx < n_x or ty < n_y:
        raise ValueError(f"pad target {pad_to} smaller than data ({n_x}, {n_y})")
    if (tx, ty) == (n_x, n_y):
        return kspace
    img = ifft2c(kspace)
    ox, oy = (tx - n_x) // 2, (ty - n_y) // 2
    pad_width = [(ox, tx - n_x - ox), (oy, ty - n_y - oy)] + [(0, 0)] * (kspace.ndim - 2)
    return fft2c(np.pad(img, pad_width))


def normalization_scale(
    kspace: np.ndarray, center_fraction: float, percentile: float = 99.5
) -> float:
    """Percentile of the flattened magnitude of the ACS-masked data."""
    mask = acs_mask(kspace.shape[1], center_fraction, kspace.shape[3])
    magnitudes = np.abs(apply_mask(kspace, mask)).ravel()
    scale = float(np.quantile(magnitudes, percentile / 100.0))
    if scale <= 0:
        raise ValueError("normalization scale is zero (no ACS signal)")
    return scale


def preprocess(
    kspace: np.ndarray,
    pad_to: tuple[int, int] | None,
    center_fraction: float,
    percentile: float = 99.5,
) -> tuple[np.ndarray, float]:
    """Image-domain zero-padding followed by ACS-percentile normalization.

    Returns the normalized k-space and the scale ``s`` for inversion.
    """
    if pad_to is not None:
        kspace = pad_kspace(kspace, pad_to)
    scale = normalization_scale(kspace, center_fraction, percentile)
    return kspace / scale, scale


def postprocess_crop(
    img: np.ndarray,
    fractions: tuple[float, float],
    base_shape: tuple[int, int] | None = None,
) -> np.ndarray:
    """Center crop to ``floor(base * fraction)`` per spatial axis.

    ``base_shape`` defaults to the image's own spatial shape; the pipeline
    passes the pre-padding shape. Centering ties go toward the lower
    index.
    """
    if not all(0 < f <= 1 for f in fractions):
        raise ValueError("fractions must lie in (0, 1]")
    bx, by = base_shape if base_shape is not None else img.shape[:2]
    cx, cy = max(1, int(bx * fractions[0])), max(1, int(by * fractions[1]))
    if cx > img.shape[0] or cy > img.shape[1]:
        raise ValueError("crop larger than image")
    sx, sy = (img.shape[0] - cx) // 2, (img.shape[1] - cy) // 2
    return img[sx : sx + cx, sy : sy + cy]


def _mask_hash(mask: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(mask, dtype=np.uint8).tobytes()).hexdigest()


def _load_input(cfg: PipelineConfig) -> tuple[np.ndarray, int]:
    """Full k-space (n_x, n_y, n_c, n_t + 1) and the reference index."""
    if cfg.phantom is not None:
        data = generate(cfg.phantom)
        combined, ref_index = combined_sequence(data, cfg.phantom, cfg.reference_frame_index)
        sens = phantom_mod.coil_sensitivities(
            cfg.phantom.n_x, cfg.phantom.n_y, cfg.phantom.n_c, combined.shape[2]
        )
        kspace = synthesize_kspace(
            combined, sens, cfg.phantom.noise_sigma, cfg.phantom.seed
        )
        return kspace, ref_index
    dataset = Path(cfg.input_dir)
    kspace, _ = read_array(dataset / "kspace.arr")
    meta = json.loads((dataset / "meta.json").read_text())
    ref_index = (
        cfg.reference_frame_index
        if cfg.reference_frame_index is not None
        else meta["reference_frame_index"]
    )
    if not 0 <= ref_index < kspace.shape[3]:
        raise ConfigError(f"reference_frame_index {ref_index} out of range")
    return kspace, ref_index


def _build_mask(
    cfg: PipelineConfig,
    moving_kspace: np.ndarray,
    sens: np.ndarray,
    truth_moving: np.ndarray,
) -> np.ndarray:
    sampler = cfg.sampler
    n_y, n_t = moving_kspace.shape[1], moving_kspace.shape[3]
    if budget(n_y, sampler.acceleration) < len(
        acs_line_indices(n_y, sampler.center_fraction)
    ):
        raise ValueError("line budget smaller than the ACS block")
    if sampler.scheme == "acs_only":
        return acs_mask(n_y, sampler.center_fraction, n_t)
    if sampler.scheme == "equispaced":
        return equispaced_mask(
            n_y,
            sampler.acceleration,
            n_t,
            offset=sampler.offset,
            mode=sampler.mode,
            center_fraction=sampler.center_fraction,
            seed=sampler.seed,
        )
    if sampler.scheme == "kt_equispaced":
        return kt_equispaced_mask(
            n_y,
            sampler.acceleration,
            n_t,
            offset=sampler.offset,
            center_fraction=sampler.center_fraction,
            mode=sampler.mode,
        )
    if sampler.scheme == "dataset_optimized":
        return dataset_optimized_mask([(moving_kspace, truth_moving)], sampler)
    init = initial_mask(sampler, n_y, n_t)
    return adaptive_mask(apply_mask(moving_kspace, init), sens, sampler)


def run(cfg: PipelineConfig) -> tuple[MetricsReport, dict[str, Path]]:
    """Execute the full pipeline and write artifacts to the output dir.

    Returns the metrics report and the paths of the written artifacts.
    Raises :class:`StageError` on any stage failure (partial artifacts are
    removed) and :class:`ConfigError` for invalid configuration.
    """
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    timings: dict[str, float] = {}
    stage = "load"

    def _clock(name: str, start: float) -> None:
        timings[name] = time.perf_counter() - start

    try:
        start = time.perf_counter()
        kspace_full, ref_index = _load_input(cfg)
        prepad_shape = kspace_full.shape[:2]
        moving = np.delete(kspace_full, ref_index, axis=3)
        reference = kspace_full[:, :, :, ref_index : ref_index + 1]
        _clock(stage, start)

        stage = "preprocess"
        start = time.perf_counter()
        fraction = cfg.sampler.center_fraction
        moving_pre, scale = preprocess(
            moving, cfg.pad_to, fraction, cfg.normalize_percentile
        )
        reference_pre = (
            pad_kspace(reference, cfg.pad_to) if cfg.pad_to else reference
        ) / scale
        _clock(stage, start)

        stage = "sensitivity"
        start = time.perf_counter()
        acs = acs_mask(moving_pre.shape[1], fraction, moving_pre.shape[3])
        sens = normalize(
            refine(
                estimate_from_acs(
                    apply_mask(moving_pre, acs), cfg.sensitivity.epsilon_div
                ),
                cfg.sensitivity,
            )
        )
        _clock(stage, start)

        stage = "sampling"
        start = time.perf_counter()
        truth_moving = rss(ifft2c(moving_pre))
        mask = _build_mask(cfg, moving_pre, sens, truth_moving)
        mask_digest = _mask_hash(mask)
        _clock(stage, start)

        stage = "reconstruction"
        start = time.perf_counter()
        undersampled = apply_mask(moving_pre, mask)
        if _mask_hash(mask) != mask_digest:
            raise RuntimeError("mask changed between sampling and reconstruction")
        recon = admm_reconstruct(undersampled, sens, mask, cfg.recon)
        _clock(stage, start)

        stage = "registration"
        start = time.perf_counter()
        reference_image = rss(ifft2c(reference_pre))[:, :, 0]
        fields = register_sequence(recon.magnitude, reference_image, cfg.registration)
        _clock(stage, start)

        stage = "warping"
        start = time.perf_counter()
        registered = np.stack(
            [
                warp(recon.magnitude[:, :, t], fields[:, :, :, t], cfg.warp).image
                for t in range(recon.magnitude.shape[2])
            ],
            axis=2,
        )
        _clock(stage, start)

        stage = "metrics"
        start = time.perf_counter()
        # metrics are reported on unnormalized magnitudes
        recon_mag = recon.magnitude * scale
        registered_s = registered * scale
        reference_s = reference_image * scale
        truth_moving_s = truth_moving * scale

        def _crop(img: np.ndarray) -> np.ndarray:
            return postprocess_crop(img, cfg.crop_fractions, prepad_shape)

        per_frame = []
        uncropped = []
        ref_crop = _crop(reference_s)
        for t in range(registered_s.shape[2]):
            frame_crop = _crop(registered_s[:, :, t])
            per_frame.append(
                {
                    "frame": t,
                    "ssim": ssim2d(ref_crop, frame_crop),
                    "psnr": psnr(ref_crop, frame_crop),
                    "nmse": nmse(ref_crop, frame_crop),
                }
            )
            uncropped.append(
                {
                    "frame": t,
                    "ssim": ssim2d(reference_s, registered_s[:, :, t]),
                    "psnr": psnr(reference_s, registered_s[:, :, t]),
                    "nmse": nmse(reference_s, registered_s[:, :, t]),
                }
            )
        l_rec = reconstruction_loss(recon_mag, truth_moving_s)
        l_reg = registration_loss(registered_s, reference_s, fields)
        losses = {
            "l_rec": l_rec,
            "l_reg": l_reg,
            "total": combined_loss(l_rec, l_reg, cfg.alpha, cfg.beta),
            "alpha": cfg.alpha,
            "beta": cfg.beta,
        }
        report = MetricsReport.from_frames(
            per_frame,
            losses,
            timing_seconds=timings,
            extras={
                "mask_sha256": mask_digest,
                "uncropped_per_frame": uncropped,
                "scale": scale,
                "reference_frame_index": ref_index,
                "seed": cfg.seed,
            },
        )
        _clock(stage, start)

        stage = "write"
        start = time.perf_counter()
        artifacts: dict[str, Path] = {}

        def _write(name: str, writer) -> None:
            path = out_dir / name
            writer(path)
            written.append(path)
            artifacts[name] = path

        _write("mask.arr", lambda p: write_array(p, mask, "sampling_mask"))
        _write(
            "recon.arr",
            lambda p: write_array(p, recon.complex_image * scale, "reconstruction"),
        )
        _write("fields.arr", lambda p: write_array(p, fields, "deformation_fields"))
        _write(
            "warped.arr", lambda p: write_array(p, registered_s, "registered_magnitude")
        )
        _write("mask.json", lambda p: p.write_text(json.dumps(mask_to_json(mask))))
        _write("metrics.json", lambda p: p.write_text(report.to_json()))
        _write("metrics.csv", lambda p: p.write_text(report.to_csv()))
        _write("config.json", lambda p: p.write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True)))
        timings[stage] = time.perf_counter() - start
        (out_dir / "timings.json").write_text(json.dumps(timings, indent=2))
        return report, artifacts
    except (ConfigError, StageError):
        raise
    except Exception as exc:
        for path in written:
            path.unlink(missing_ok=True)
        raise StageError(stage, exc) from exc


def convert_cmrxrecon(mat_path: str, out_dir: str) -> None:
    """Converter stub for CMRxRecon ``.mat`` scans.

    A converter would read the fully sampled multi-coil k-space (MATLAB
    array ``kspace_full``, axes reordered to ``(n_x, n_y, n_c, n_t)``),
    write it as ``kspace.arr`` (dtype ``c64``, semantic ``"kspace_full"``)
    plus a ``meta.json`` carrying ``n_x, n_y, n_c, n_t`` and
    ``reference_frame_index`` (the end-systolic segment). Out of scope
    here.
    """
    raise NotImplementedError("CMRxRecon ingestion is not part of this package")
