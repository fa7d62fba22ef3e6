"""Natural-scene-statistics primitives: MSCN map and (A)GGD moment fits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as _gamma_fn

from ..errors import DegenerateSampleError

# Local-normalization window: 7x7 Gaussian, sigma = 7/6, stabilizer C = 1
# on the [0, 255] intensity scale.
MSCN_WINDOW = 7
MSCN_SIGMA = 7.0 / 6.0
MSCN_C = 1.0
MIN_IMAGE_SIDE = 16

# Moment-matching lookup grid shared by the GGD and AGGD fits.
SHAPE_GRID = np.arange(0.2, 10.0 + 1e-9, 0.001)
_G1 = _gamma_fn(1.0 / SHAPE_GRID)
_G2 = _gamma_fn(2.0 / SHAPE_GRID)
_G3 = _gamma_fn(3.0 / SHAPE_GRID)
_GGD_RHO = _G1 * _G3 / (_G2 ** 2)        # E[x^2] / E[|x|]^2 per shape
_AGGD_RHO = (_G2 ** 2) / (_G1 * _G3)     # E[|x|]^2 / E[x^2] per shape


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    half = size // 2
    xs = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(xs ** 2) / (2.0 * sigma * sigma))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()

_MSCN_KERNEL = _gaussian_kernel(MSCN_WINDOW, MSCN_SIGMA)


def mscn(image: np.ndarray) -> np.ndarray:
    """Mean-subtracted contrast-normalized map of a luminance image.

    The numerator is accumulated as a weighted sum of (center - neighbor)
    differences, so constant images map to exactly zero everywhere instead
    of picking up convolution round-off. Borders reflect.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-d luminance map, got shape {img.shape}")
    if min(img.shape) < MIN_IMAGE_SIDE:
        raise ValueError(
            f"image {img.shape} too small, need at least {MIN_IMAGE_SIDE} per side")
    half = MSCN_WINDOW // 2
    padded = np.pad(img, half, mode="reflect")
    h, w = img.shape
    num = np.zeros_like(img)
    for di in range(MSCN_WINDOW):
        for dj in range(MSCN_WINDOW):
            num += _MSCN_KERNEL[di, dj] * (img - padded[di:di + h, dj:dj + w])
    mu = img - num
    var = np.zeros_like(img)
    for di in range(MSCN_WINDOW):
        for dj in range(MSCN_WINDOW):
            diff = padded[di:di + h, dj:dj + w] - mu
            var += _MSCN_KERNEL[di, dj] * (diff * diff)
    return num / (np.sqrt(var) + MSCN_C)


def paired_products(coeffs: np.ndarray) -> tuple[np.ndarray, ...]:
    """Neighbor products of an MSCN map in H, V, D1, D2 order."""
    h = coeffs[:, :-1] * coeffs[:, 1:]
    v = coeffs[:-1, :] * coeffs[1:, :]
    d1 = coeffs[:-1, :-1] * coeffs[1:, 1:]
    d2 = coeffs[:-1, 1:] * coeffs[1:, :-1]
    return h, v, d1, d2


@dataclass(frozen=True)
class GgdFit:
    shape: float
    variance: float


@dataclass(frozen=True)
class AggdFit:
    shape: float
    mean: float
    sigma_left: float
    sigma_right: float


def _check_samples(samples: np.ndarray) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 100:
        raise ValueError(f"need at least 100 samples, got {x.size}")
    if np.ptp(x) == 0.0:
        raise DegenerateSampleError("all samples identical, distribution fit undefined")
    return x


def fit_ggd(samples: np.ndarray) -> GgdFit:
    """Moment-matching GGD fit via the gamma-ratio lookup grid."""
    x = _check_samples(samples)
    sq_mean = float(np.mean(x * x))
    abs_mean = float(np.mean(np.abs(x)))
    rho = sq_mean / (abs_mean * abs_mean)
    shape = float(SHAPE_GRID[int(np.argmin(np.abs(_GGD_RHO - rho)))])
    return GgdFit(shape, sq_mean)


def fit_aggd(samples: np.ndarray) -> AggdFit:
    """Moment-matching AGGD fit (separate left/right scales)."""
    x = _check_samples(samples)
    neg = x[x < 0.0]
    pos = x[x > 0.0]
    sigma_l = math.sqrt(float(np.mean(neg * neg))) if neg.size else 0.0
    sigma_r = math.sqrt(float(np.mean(pos * pos))) if pos.size else 0.0
    sq_mean = float(np.mean(x * x))
    abs_mean = float(np.mean(np.abs(x)))
    r_hat = (abs_mean * abs_mean) / sq_mean
    if sigma_l > 0.0 and sigma_r > 0.0:
        g = sigma_l / sigma_r
        r_hat = r_hat * ((g ** 3 + 1.0) * (g + 1.0)) / ((g * g + 1.0) ** 2)
    # one-sided data: the skew correction tends to 1 in both limits
    shape = float(SHAPE_GRID[int(np.argmin((_AGGD_RHO - r_hat) ** 2))])
    mean = (sigma_r - sigma_l) * (_gamma_fn(2.0 / shape) / _gamma_fn(1.0 / shape)) \
        * math.sqrt(_gamma_fn(1.0 / shape) / _gamma_fn(3.0 / shape))
    return AggdFit(shape, mean, sigma_l, sigma_r)
