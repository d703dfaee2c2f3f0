"""Rectilinear sampling mask generation under an exact per-frame line budget.

Masks are binary ``(n_y, n_t)`` arrays selecting phase-encode lines per
temporal frame. All schemes are deterministic: ties are broken toward the
lower line index, and any randomness (per-frame equispaced offsets) is
driven by an explicit seed.

The per-frame budget counts *all* acquired lines, autocalibration (ACS)
lines included. Fixed schemes (equispaced, kt-equispaced) are equalized to
the exact budget after fusing with the ACS block: surplus lines are dropped
and missing lines added nearest the k-space center first, so every sampler
in this module emits exactly ``budget(n_y, R)`` lines per frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .operators import fft2c, ifft2c, reduce_coils

MODES = ("phase_specific", "unified")
SCHEMES = ("acs_only", "equispaced", "kt_equispaced", "dataset_optimized", "adaptive")
INITS = ("acs", "equispaced_fused")

# scorer: (init_kspace, sensitivities) -> line scores (n_y, n_t)
LineScorer = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class SamplerConfig:
    """Mask generation options.

    ``acceleration`` is the target factor R; ``center_fraction`` the ACS
    fraction of ``n_y``. ``mode`` selects one pattern per frame
    (``"phase_specific"``) or a single shared pattern (``"unified"``).
    ``init`` chooses the initial data for the adaptive scheme: ACS only, or
    ACS fused with an equispaced pattern at ``(R - 4)x`` when ``R > 4``.
    """

    acceleration: float = 4.0
    center_fraction: float = 0.04
    mode: str = "phase_specific"
    scheme: str = "adaptive"
    offset: int = 0
    init: str = "acs"
    seed: int | None = None
    scorer: LineScorer | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.acceleration < 1:
            raise ValueError("acceleration must be >= 1")
        if not 0 < self.center_fraction <= 1:
            raise ValueError("center_fraction must lie in (0, 1]")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.init not in INITS:
            raise ValueError(f"unknown init {self.init!r}")


def budget(n_y: int, acceleration: float) -> int:
    """Total lines acquired per frame: ``round(n_y / R)``, at least 1.

    Rounds half up, so e.g. ``budget(246, 4) == 62``.
    """
    if n_y < 1:
        raise ValueError("n_y must be >= 1")
    if acceleration < 1:
        raise ValueError("acceleration must be >= 1")
    return max(1, int(np.floor(n_y / acceleration + 0.5)))


def acs_line_indices(n_y: int, center_fraction: float) -> np.ndarray:
    """Indices of the contiguous ACS block: ``ceil(fraction * n_y)`` center
    lines, ties toward the lower index."""
    if not 0 < center_fraction <= 1:
        raise ValueError("center_fraction must lie in (0, 1]")
    n_acs = int(np.ceil(center_fraction * n_y))
    start = (n_y - n_acs) // 2
    return np.arange(start, start + n_acs)


def acs_mask(n_y: int, center_fraction: float, n_t: int) -> np.ndarray:
    """Mask retaining only the ACS block, identical in every frame."""
    mask = np.zeros((n_y, n_t), dtype=np.uint8)
    mask[acs_line_indices(n_y, center_fraction), :] = 1
    return mask


def _equalize_to_budget(
    lines: np.ndarray, acs: np.ndarray, n_y: int, target: int
) -> np.ndarray:
    """Trim or pad a line set to exactly ``target`` lines.

    ACS lines are never removed. Surplus non-ACS lines are dropped nearest
    the k-space center first (most redundant with the ACS block); missing
    lines are added nearest the center first. Ties toward the lower index.
    """
    if target < len(acs):
        raise ValueError(f"budget {target} smaller than ACS block ({len(acs)} lines)")
    center = (n_y - 1) / 2.0
    selected = set(int(v) for v in lines) | set(int(v) for v in acs)
    acs_set = set(int(v) for v in acs)
    while len(selected) > target:
        removable = sorted(selected - acs_set, key=lambda y: (abs(y - center), y))
        selected.remove(removable[0])
    if len(selected) < target:
        missing = sorted(set(range(n_y)) - selected, key=lambda y: (abs(y - center), y))
        selected.update(missing[: target - len(selected)])
    return np.array(sorted(selected), dtype=int)


def _equispaced_lines(n_y: int, acceleration: float, offset: int) -> np.ndarray:
    stride = max(1, int(np.floor(acceleration)))
    if not 0 <= offset < max(1, int(np.floor(acceleration + 0.5))):
        raise ValueError(f"offset {offset} out of range for R={acceleration}")
    return np.arange(offset, n_y, stride)


def equispaced_mask(
    n_y: int,
    acceleration: float,
    n_t: int,
    offset: int = 0,
    mode: str = "unified",
    center_fraction: float = 0.0,
    seed: int | None = None,
    exact_budget: bool = True,
) -> np.ndarray:
    """Equispaced lines with stride ``floor(R)``, fused with the ACS block.

    Unified mode repeats one pattern across frames. Phase-specific mode
    uses an independent per-frame offset drawn from ``seed`` when given,
    otherwise the explicit ``offset`` everywhere. With ``exact_budget`` the
    fused set is equalized to exactly ``budget(n_y, R)`` lines per frame.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    acs = (
        acs_line_indices(n_y, center_fraction)
        if center_fraction > 0
        else np.array([], dtype=int)
    )
    target = budget(n_y, acceleration)
    stride_span = max(1, int(np.floor(acceleration)))
    if mode == "phase_specific" and seed is not None:
        rng = np.random.default_rng(seed)
        offsets = rng.integers(0, stride_span, size=n_t)
    else:
        offsets = np.full(n_t, offset)
    if mode == "unified":
        offsets[:] = offset
    mask = np.zeros((n_y, n_t), dtype=np.uint8)
    for t in range(n_t):
        lines = _equispaced_lines(n_y, acceleration, int(offsets[t]))
        if exact_budget:
            lines = _equalize_to_budget(lines, acs, n_y, target)
        else:
            lines = np.union1d(lines, acs)
        mask[lines, t] = 1
    return mask


def kt_equispaced_mask(
    n_y: int,
    acceleration: float,
    n_t: int,
    offset: int = 0,
    center_fraction: float = 0.0,
    mode: str = "phase_specific",
    exact_budget: bool = True,
) -> np.ndarray:
    """Temporally interleaved equispaced sampling.

    Frame ``t`` uses offset ``(offset + t) mod floor(R)``, so the union of
    non-ACS lines over any ``floor(R)`` consecutive frames covers every
    residue class. Only meaningful per frame, hence phase-specific only.
    """
    if mode != "phase_specific":
        raise ValueError("kt scheme is phase-specific only")
    acs = (
        acs_line_indices(n_y, center_fraction)
        if center_fraction > 0
        else np.array([], dtype=int)
    )
    target = budget(n_y, acceleration)
    stride = max(1, int(np.floor(acceleration)))
    mask = np.zeros((n_y, n_t), dtype=np.uint8)
    for t in range(n_t):
        lines = _equispaced_lines(n_y, acceleration, (offset + t) % stride)
        if exact_budget:
            lines = _equalize_to_budget(lines, acs, n_y, target)
        else:
            lines = np.union1d(lines, acs)
        mask[lines, t] = 1
    return mask


def _topk_lines(scores: np.ndarray, count: int, forced: np.ndarray) -> np.ndarray:
    """Highest-scoring ``count`` lines including all forced ones.

    Ties broken toward the lower line index (stable sort on descending
    score).
    """
    n_y = scores.shape[0]
    n_forced = int(forced.sum())
    if count < n_forced:
        raise ValueError(f"budget {count} smaller than {n_forced} forced lines")
    selected = forced.astype(bool).copy()
    order = np.argsort(-scores, kind="stable")
    for idx in order:
        if selected.sum() >= count:
            break
        selected[idx] = True
    out = np.zeros(n_y, dtype=np.uint8)
    out[selected] = 1
    return out


def binarize_budget(
    scores: np.ndarray,
    line_budget: int,
    forced: np.ndarray | None = None,
    mode: str = "phase_specific",
) -> np.ndarray:
    """Turn per-line scores into a binary mask with an exact line budget.

    Phase-specific mode selects the top-scoring lines per frame; unified
    mode ranks the frame-summed scores and repeats one pattern. Forced
    lines (e.g. ACS) are always kept and count toward the budget.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 2:
        raise ValueError("scores must have shape (n_y, n_t)")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores contain non-finite values")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    n_y, n_t = scores.shape
    if forced is None:
        forced = np.zeros((n_y, n_t), dtype=np.uint8)
    if forced.shape != scores.shape:
        raise ValueError("forced mask shape must match scores")
    mask = np.zeros((n_y, n_t), dtype=np.uint8)
    if mode == "unified":
        pattern = _topk_lines(
            scores.sum(axis=1), line_budget, forced.any(axis=1)
        )
        mask[:] = pattern[:, None]
    else:
        for t in range(n_t):
            mask[:, t] = _topk_lines(scores[:, t], line_budget, forced[:, t])
    return mask


def kspace_energy_scorer(init_kspace: np.ndarray, sens: np.ndarray) -> np.ndarray:
    """Score candidate lines by the k-space energy of the zero-filled
    coil-combined estimate of the initial data.

    Coil modulation spreads the autocalibration spectrum over the full
    grid, so unacquired lines receive an extrapolated energy estimate.
    """
    combined = reduce_coils(ifft2c(init_kspace), sens)
    spectrum = fft2c(combined)
    return np.sum(np.abs(spectrum) ** 2, axis=0)


def lines_in_kspace(kspace: np.ndarray) -> np.ndarray:
    """Binary (n_y, n_t) mask of lines carrying any nonzero sample."""
    return np.any(kspace != 0, axis=(0, 2)).astype(np.uint8)


def adaptive_mask(
    init_kspace: np.ndarray,
    sens: np.ndarray,
    cfg: SamplerConfig,
    scorer: LineScorer | None = None,
) -> np.ndarray:
    """Scorer-driven mask informed by the initially acquired data.

    Candidate lines are scored from the zero-filled estimate of the
    initial data; the ACS block is always forced and the remaining budget
    goes to the highest-scoring lines. If the initial data already sits
    exactly at the budget its mask is returned unchanged.
    """
    n_y, n_t = init_kspace.shape[1], init_kspace.shape[3]
    target = budget(n_y, cfg.acceleration)
    init_lines = lines_in_kspace(init_kspace)
    if np.all(init_lines.sum(axis=0) == target):
        return init_lines
    score_fn = scorer or cfg.scorer or kspace_energy_scorer
    scores = np.asarray(score_fn(init_kspace, sens), dtype=float)
    forced = acs_mask(n_y, cfg.center_fraction, n_t)
    return binarize_budget(scores, target, forced=forced, mode=cfg.mode)


def _zero_filled_rss(line_images: list[np.ndarray], lines: Sequence[int]) -> np.ndarray:
    total = np.zeros_like(line_images[0])
    for y in lines:
        total = total + line_images[y]
    return np.sqrt(np.sum(np.abs(total) ** 2, axis=2))


def dataset_optimized_mask(
    corpus: Sequence[tuple[np.ndarray, np.ndarray]],
    cfg: SamplerConfig,
    quality: Callable[[np.ndarray, np.ndarray], float] | None = None,
) -> np.ndarray:
    """Greedy forward selection of lines maximizing corpus-mean quality.

    Starting from the ACS block, repeatedly adds the line whose inclusion
    maximizes the mean zero-filled reconstruction quality (SSIM by
    default) over the corpus, until the budget is met. Deterministic given
    corpus order; ties toward the lower line index.

    Parameters
    ----------
    corpus : sequence of ``(kspace, truth)`` pairs with shapes
        ``(n_x, n_y, n_c, n_t)`` and ``(n_x, n_y, n_t)``.
    """
    if len(corpus) == 0:
        raise ValueError("corpus is empty")
    if quality is None:
        from .metrics import ssim2d

        quality = ssim2d
    n_y, n_t = corpus[0][0].shape[1], corpus[0][0].shape[3]
    target = budget(n_y, cfg.acceleration)
    acs = acs_line_indices(n_y, cfg.center_fraction)
    if target < len(acs):
        raise ValueError(f"budget {target} smaller than ACS block ({len(acs)} lines)")

    # Per-item, per-line image contributions: the zero-filled image of a
    # line set is the sum of its members (FFT linearity).
    caches = []
    for kspace, _ in corpus:
        line_images = []
        for y in range(n_y):
            single = np.zeros_like(kspace)
            single[:, y] = kspace[:, y]
            line_images.append(ifft2c(single))
        caches.append(line_images)

    def mean_quality(lines_per_frame: list[list[int]]) -> float:
        values = []
        for (kspace, truth), line_images in zip(corpus, caches):
            for t in range(n_t):
                recon = _zero_filled_rss(
                    [img[..., t : t + 1] for img in line_images],
                    lines_per_frame[t],
                )[..., 0]
                values.append(quality(truth[..., t], recon))
        return float(np.mean(values))

    if cfg.mode == "unified":
        selected = list(acs)
        while len(selected) < target:
            best_score, best_line = -np.inf, None
            for y in range(n_y):
                if y in selected:
                    continue
                score = mean_quality([selected + [y]] * n_t)
                if score > best_score:
                    best_score, best_line = score, y
            selected.append(best_line)
        mask = np.zeros((n_y, n_t), dtype=np.uint8)
        mask[sorted(selected), :] = 1
        return mask

    mask = np.zeros((n_y, n_t), dtype=np.uint8)
    for t in range(n_t):
        selected = list(acs)
        while len(selected) < target:
            best_score, best_line = -np.inf, None
            for y in range(n_y):
                if y in selected:
                    continue
                values = []
                for (kspace, truth), line_images in zip(corpus, caches):
                    recon = _zero_filled_rss(
                        [img[..., t : t + 1] for img in line_images],
                        selected + [y],
                    )[..., 0]
                    values.append(quality(truth[..., t], recon))
                score = float(np.mean(values))
                if score > best_score:
                    best_score, best_line = score, y
            selected.append(best_line)
        mask[sorted(selected), t] = 1
    return mask


def initial_mask(cfg: SamplerConfig, n_y: int, n_t: int) -> np.ndarray:
    """Initial acquisition pattern for the adaptive scheme.

    ``"acs"`` retains the ACS block only; ``"equispaced_fused"`` fuses it
    with an equispaced pattern at ``(R - 4)x`` when ``R > 4`` (ACS only
    otherwise).
    """
    if cfg.init == "acs" or cfg.acceleration <= 4:
        return acs_mask(n_y, cfg.center_fraction, n_t)
    return equispaced_mask(
        n_y,
        cfg.acceleration - 4,
        n_t,
        offset=cfg.offset,
        mode=cfg.mode,
        center_fraction=cfg.center_fraction,
        seed=cfg.seed,
    )


def mask_to_json(mask: np.ndarray) -> dict:
    """JSON-friendly mask encoding: per-frame lists of acquired line indices."""
    return {
        "n_y": int(mask.shape[0]),
        "frames": [
            sorted(int(y) for y in np.flatnonzero(mask[:, t]))
            for t in range(mask.shape[1])
        ],
    }


def mask_from_json(payload: dict) -> np.ndarray:
    mask = np.zeros((payload["n_y"], len(payload["frames"])), dtype=np.uint8)
    for t, lines in enumerate(payload["frames"]):
        mask[lines, t] = 1
    return mask
