"""Gradient magnitude images and the max-pooled pyramid fed to the supplementary branch."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

# Separable 3x3 operators as (smoothing, derivative) 1-D kernels; the derivative
# is taken first so a constant image gives exact zeros.
GRADIENT_OPERATORS = {
    "sobel": ((1.0, 2.0, 1.0), (-1.0, 0.0, 1.0)),
    "scharr": ((3.0, 10.0, 3.0), (-1.0, 0.0, 1.0)),
    "central": ((0.0, 1.0, 0.0), (-1.0, 0.0, 1.0)),
}


class InvalidImageError(ValueError):
    pass


class PyramidShapeError(ValueError):
    pass


def _check_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise InvalidImageError(f"expected a non-empty 2-D image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise InvalidImageError("image contains non-finite pixels")
    return img


def gradient_responses(img: np.ndarray, operator: str = "sobel") -> tuple[np.ndarray, np.ndarray]:
    """Horizontal and vertical derivative responses with replicate borders."""
    img = _check_image(img)
    try:
        smooth, diff = GRADIENT_OPERATORS[operator]
    except KeyError:
        raise ValueError(
            f"unknown gradient operator {operator!r}; choose from {sorted(GRADIENT_OPERATORS)}"
        ) from None
    gx = ndimage.correlate1d(ndimage.correlate1d(img, diff, axis=1, mode="nearest"), smooth, axis=0, mode="nearest")
    gy = ndimage.correlate1d(ndimage.correlate1d(img, diff, axis=0, mode="nearest"), smooth, axis=1, mode="nearest")
    return gx, gy


def gradient_magnitude(
    img: np.ndarray, operator: str = "sobel", normalize: bool = True
) -> np.ndarray:
    """Per-pixel gradient magnitude ``sqrt(gx**2 + gy**2)``.

    With ``normalize`` the result is divided by its global maximum so it lies
    in [0, 1]; a constant image gives an all-zero map.
    """
    gx, gy = gradient_responses(img, operator)
    mag = np.hypot(gx, gy)
    if normalize:
        peak = mag.max()
        if peak > 0:
            mag = mag / peak
    return mag


def build_pyramid(base: np.ndarray, levels: int = 5) -> list[np.ndarray]:
    """Repeated 2x2/stride-2 max pooling; level 0 is ``base`` itself."""
    base = np.asarray(base)
    if base.ndim != 2:
        raise PyramidShapeError(f"expected a 2-D array, got shape {base.shape}")
    if levels < 1:
        raise PyramidShapeError("levels must be >= 1")
    factor = 2 ** (levels - 1)
    h, w = base.shape
    if h % factor or w % factor:
        raise PyramidShapeError(
            f"shape {base.shape} is not divisible by {factor} (needed for {levels} levels)"
        )
    pyramid = [base]
    for _ in range(levels - 1):
        prev = pyramid[-1]
        ph, pw = prev.shape
        pyramid.append(prev.reshape(ph // 2, 2, pw // 2, 2).max(axis=(1, 3)))
    return pyramid
