"""Joint gradient-magnitude / Laplacian-of-Gaussian statistics (40 per frame).

Pipeline: Gaussian-derivative gradient magnitude and LoG response maps,
joint adaptive normalization of both, 10x10 joint histogram of the
quantized maps, then 10 GM marginals + 10 LoG marginals + 2x10 aggregated
conditional (independency) statistics. The constants below are config
choices, frozen here because selection indices depend on them.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import correlate

# Derivative/LoG filter scale and the normalization-map parameters.
FILTER_SIGMA = 0.5
NORM_SIGMA_RATIO = 2.5          # normalization window sigma = ratio * FILTER_SIGMA
NORM_STABILIZER = 0.2           # added to the normalization map
COND_PROB_EPS = 1e-4            # stabilizes the conditional-probability ratios
N_BINS = 10
BIN_STEP = 0.2
BORDER_TRIM = math.ceil(3 * NORM_SIGMA_RATIO * FILTER_SIGMA)
_MIN_SIDE = 16

GMLOG_FEATURE_NAMES = tuple(
    f"gmlog.{block}.{i:02d}"
    for block in ("gm.margin", "log.margin", "log.cond", "gm.cond")
    for i in range(N_BINS)
)


def _window_size(sigma: float) -> int:
    return 2 * math.ceil(3 * sigma) + 1


def _gaussian(size: int, sigma: float) -> np.ndarray:
    half = size // 2
    xs = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(xs ** 2) / (2.0 * sigma * sigma))
    k = np.outer(g, g)
    return k / k.sum()


def _derivative_kernels(sigma: float) -> tuple[np.ndarray, np.ndarray]:
    # central differences of a Gaussian window two pixels wider
    size = _window_size(sigma)
    g = _gaussian(size + 2, sigma)
    kx = (g[1:-1, 2:] - g[1:-1, :-2]) / 2.0
    ky = (g[2:, 1:-1] - g[:-2, 1:-1]) / 2.0
    return kx, ky


def _log_kernel(sigma: float) -> np.ndarray:
    size = _window_size(sigma)
    half = size // 2
    ys, xs = np.mgrid[-half:half + 1, -half:half + 1].astype(np.float64)
    rsq = xs ** 2 + ys ** 2
    g = np.exp(-rsq / (2.0 * sigma * sigma))
    k = g * (rsq - 2.0 * sigma * sigma) / (sigma ** 4 * g.sum())
    k -= k.mean()               # zero response on constants
    return k / np.abs(k).sum()

_KX, _KY = _derivative_kernels(FILTER_SIGMA)
_KLOG = _log_kernel(FILTER_SIGMA)
_KNORM = _gaussian(_window_size(NORM_SIGMA_RATIO * FILTER_SIGMA),
                   NORM_SIGMA_RATIO * FILTER_SIGMA)


def _filter(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return correlate(img, kernel, mode="constant", cval=0.0)


def gmlog_frame(image: np.ndarray) -> np.ndarray:
    """40 joint GM/LoG statistics of one luminance frame."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2 or min(img.shape) < _MIN_SIDE:
        raise ValueError(
            f"need a 2-d image of at least {_MIN_SIDE} per side, got {img.shape}")
    gx = _filter(img, _KX)
    gy = _filter(img, _KY)
    gm = np.sqrt(gx * gx + gy * gy)
    log_map = np.abs(_filter(img, _KLOG))

    # joint adaptive normalization over a larger Gaussian neighborhood
    energy = (gm * gm + log_map * log_map) / 2.0
    nmap = np.sqrt(np.maximum(_filter(energy, _KNORM), 0.0)) + NORM_STABILIZER
    gm = gm / nmap
    log_map = log_map / nmap

    t = BORDER_TRIM
    gm = gm[t:-t, t:-t]
    log_map = log_map[t:-t, t:-t]

    gm_bins = np.clip(np.ceil(gm / BIN_STEP).astype(np.int64), 1, N_BINS) - 1
    log_bins = np.clip(np.ceil(log_map / BIN_STEP).astype(np.int64), 1, N_BINS) - 1
    joint = np.bincount((gm_bins * N_BINS + log_bins).ravel(),
                        minlength=N_BINS * N_BINS).astype(np.float64)
    joint = joint.reshape(N_BINS, N_BINS)
    joint /= joint.sum()

    gm_margin = joint.sum(axis=1)
    log_margin = joint.sum(axis=0)
    cond_log = joint / (gm_margin[:, None] + COND_PROB_EPS)
    cond_log = cond_log.sum(axis=0) / cond_log.sum()
    cond_gm = joint / (log_margin[None, :] + COND_PROB_EPS)
    cond_gm = cond_gm.sum(axis=1) / cond_gm.sum()

    return np.concatenate([gm_margin, log_margin, cond_log, cond_gm])
