"""Multi-coil Cartesian MRI forward model.

Array conventions used throughout the package:

- dynamic k-space / per-coil image stacks: complex ``(n_x, n_y, n_c, n_t)``
- dynamic images: ``(n_x, n_y, n_t)``, complex or real
- coil sensitivities: complex ``(n_x, n_y, n_c, n_t)``
- sampling masks: binary ``(n_y, n_t)``, one bit per phase-encode line
  and frame (rectilinear line sampling on a Cartesian grid)

FFTs are centered (shifted so the DC component sits at ``n // 2``) and
orthonormal, so round-trip and Parseval identities hold to high precision
and the forward/adjoint pair below passes the inner-product test.
"""

from __future__ import annotations

import numpy as np

SPATIAL_AXES = (0, 1)


def _check_nonempty(arr: np.ndarray, name: str) -> None:
    if arr.size == 0:
        raise ValueError(f"{name} has a zero-length dimension: shape {arr.shape}")


def fft2c(img: np.ndarray, axes: tuple[int, int] = SPATIAL_AXES) -> np.ndarray:
    """Centered, orthonormal 2D FFT over the spatial axes.

    Satisfies ``ifft2c(fft2c(x)) == x`` and ``norm(fft2c(x)) == norm(x)``.
    """
    _check_nonempty(img, "image")
    shifted = np.fft.ifftshift(img, axes=axes)
    transformed = np.fft.fft2(shifted, axes=axes, norm="ortho")
    return np.fft.fftshift(transformed, axes=axes)


def ifft2c(kspace: np.ndarray, axes: tuple[int, int] = SPATIAL_AXES) -> np.ndarray:
    """Centered, orthonormal 2D inverse FFT over the spatial axes."""
    _check_nonempty(kspace, "kspace")
    shifted = np.fft.ifftshift(kspace, axes=axes)
    transformed = np.fft.ifft2(shifted, axes=axes, norm="ortho")
    return np.fft.fftshift(transformed, axes=axes)


def rss(coil_images: np.ndarray, coil_axis: int = 2) -> np.ndarray:
    """Root-sum-of-squares combination over the coil axis.

    Returns a real, elementwise non-negative array with the coil axis
    removed.
    """
    if coil_images.shape[coil_axis] < 1:
        raise ValueError("need at least one coil")
    return np.sqrt(np.sum(np.abs(coil_images) ** 2, axis=coil_axis))


def expand_coils(image: np.ndarray, sens: np.ndarray) -> np.ndarray:
    """Sensitivity-encode an image into per-coil images.

    Parameters
    ----------
    image : ``(n_x, n_y, n_t)`` complex
    sens : ``(n_x, n_y, n_c, n_t)`` complex

    Returns
    -------
    ``(n_x, n_y, n_c, n_t)`` complex, coil ``k`` equal to ``sens_k * image``.
    """
    if image.shape != sens.shape[:2] + sens.shape[3:]:
        raise ValueError(
            f"image shape {image.shape} incompatible with sensitivities {sens.shape}"
        )
    return sens * image[:, :, None, :]


def reduce_coils(coil_images: np.ndarray, sens: np.ndarray) -> np.ndarray:
    """Coil-combine per-coil images, adjoint of :func:`expand_coils`.

    Computes ``sum_k conj(sens_k) * coil_images_k`` over the coil axis.
    """
    if coil_images.shape != sens.shape:
        raise ValueError(
            f"coil image shape {coil_images.shape} != sensitivities {sens.shape}"
        )
    return np.sum(np.conj(sens) * coil_images, axis=2)


def apply_mask(kspace: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Zero out k-space lines that are not acquired.

    A sample at ``[x, y, c, t]`` is kept iff ``mask[y, t] == 1``. Idempotent.
    """
    if mask.shape != (kspace.shape[1], kspace.shape[3]):
        raise ValueError(
            f"mask shape {mask.shape} does not match k-space lines/frames "
            f"({kspace.shape[1]}, {kspace.shape[3]})"
        )
    return kspace * mask.astype(kspace.dtype)[None, :, None, :]


def check_normalized(sens: np.ndarray, tol: float = 1e-6) -> None:
    """Raise if the coil sensitivities do not satisfy ``sum_k |S_k|^2 = 1``."""
    power = np.sum(np.abs(sens) ** 2, axis=2)
    if not np.allclose(power, 1.0, atol=tol):
        worst = float(np.max(np.abs(power - 1.0)))
        raise ValueError(
            f"sensitivities are not normalized (max |sum_k |S_k|^2 - 1| = {worst:.3e})"
        )


def forward_operator(
    image: np.ndarray,
    sens: np.ndarray,
    mask: np.ndarray,
    validate: bool = False,
) -> np.ndarray:
    """Acquisition operator: mask . FFT . coil-expansion, per frame.

    Parameters
    ----------
    image : ``(n_x, n_y, n_t)`` complex
    sens : ``(n_x, n_y, n_c, n_t)`` complex, normalized
    mask : ``(n_y, n_t)`` binary
    validate : check the sensitivity normalization before applying.
    """
    if validate:
        check_normalized(sens)
    return apply_mask(fft2c(expand_coils(image, sens)), mask)


def adjoint_operator(
    kspace: np.ndarray,
    sens: np.ndarray,
    mask: np.ndarray,
    validate: bool = False,
) -> np.ndarray:
    """Adjoint of :func:`forward_operator`: coil-combine . IFFT . mask."""
    if validate:
        check_normalized(sens)
    return reduce_coils(ifft2c(apply_mask(kspace, mask)), sens)
