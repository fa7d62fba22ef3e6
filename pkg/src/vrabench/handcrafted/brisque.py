"""BRISQUE-style NSS features: 36 per frame, 72 after mean/std fusion.

Per scale (original plus one 2x downsample): GGD shape/variance of the
MSCN map, then AGGD shape/mean/sigma_l^2/sigma_r^2 for each of the four
neighbor-product orientations (H, V, D1, D2). The dimension order below
is frozen; selection indices depend on it.
"""

from __future__ import annotations

import numpy as np

from .nss import MIN_IMAGE_SIDE, fit_aggd, fit_ggd, mscn, paired_products

_ORIENTATIONS = ("h", "v", "d1", "d2")
_SCALES = ("s1", "s2")

BRISQUE_FEATURE_NAMES = tuple(
    f"brisque.{scale}.{block}"
    for scale in _SCALES
    for block in (
        ["ggd.shape", "ggd.variance"]
        + [f"{o}.{stat}" for o in _ORIENTATIONS
           for stat in ("shape", "mean", "sigma_l_sq", "sigma_r_sq")]
    )
)


def downsample2x(image: np.ndarray) -> np.ndarray:
    """2x2 box average; a trailing odd row/column is dropped."""
    h2, w2 = image.shape[0] // 2, image.shape[1] // 2
    v = image[:h2 * 2, :w2 * 2]
    return (v[0::2, 0::2] + v[0::2, 1::2] + v[1::2, 0::2] + v[1::2, 1::2]) / 4.0


def brisque_frame(image: np.ndarray) -> np.ndarray:
    """36 NSS statistics of one luminance frame."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2 or min(img.shape) < 2 * MIN_IMAGE_SIDE:
        raise ValueError(
            f"need a 2-d image of at least {2 * MIN_IMAGE_SIDE} per side, got {img.shape}")
    feats: list[float] = []
    for scale in range(2):
        if scale:
            img = downsample2x(img)
        coeffs = mscn(img)
        ggd = fit_ggd(coeffs)
        feats.extend((ggd.shape, ggd.variance))
        for product in paired_products(coeffs):
            aggd = fit_aggd(product)
            feats.extend((aggd.shape, aggd.mean,
                          aggd.sigma_left ** 2, aggd.sigma_right ** 2))
    return np.array(feats)
