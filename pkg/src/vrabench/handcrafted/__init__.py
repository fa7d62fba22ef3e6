"""Native per-frame feature extractors (no external IQA toolboxes)."""

from __future__ import annotations

import numpy as np

from ..datamodel import FrameFeatureMatrix
from ..errors import MediaError
from .brisque import BRISQUE_FEATURE_NAMES, brisque_frame
from .gmlog import GMLOG_FEATURE_NAMES, gmlog_frame
from .nss import AggdFit, GgdFit, fit_aggd, fit_ggd, mscn

EXTRACTORS = {
    "brisque": (brisque_frame, BRISQUE_FEATURE_NAMES),
    "gmlog": (gmlog_frame, GMLOG_FEATURE_NAMES),
}

# ITU-R BT.601 luma weights, indexed for BGR frames as decoded by OpenCV.
_BT601_BGR = np.array([0.114, 0.587, 0.299])


def to_luminance(frame: np.ndarray, channel_order: str = "bgr") -> np.ndarray:
    """Color frame (or grayscale map) to a float64 luminance map in [0, 255]."""
    arr = np.asarray(frame, dtype=np.float64)
    if arr.ndim == 2:
        return arr
    if arr.ndim == 3 and arr.shape[2] == 3:
        weights = _BT601_BGR if channel_order == "bgr" else _BT601_BGR[::-1]
        return arr @ weights
    raise MediaError(f"expected HxW or HxWx3 frame, got shape {arr.shape}")


def extract_video(frames, model: str, video_id: str) -> FrameFeatureMatrix:
    """Run one extractor over decoded frames; one feature row per frame."""
    frame_fn, names = EXTRACTORS[model]
    rows = [frame_fn(to_luminance(frame)) for frame in frames]
    if not rows:
        raise MediaError(f"{video_id!r}: no frames to extract from")
    return FrameFeatureMatrix(video_id, names, np.vstack(rows))


__all__ = [
    "AggdFit", "GgdFit", "BRISQUE_FEATURE_NAMES", "GMLOG_FEATURE_NAMES",
    "EXTRACTORS", "brisque_frame", "extract_video", "fit_aggd", "fit_ggd",
    "gmlog_frame", "mscn", "to_luminance",
]
