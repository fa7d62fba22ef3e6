"""Frame-to-video feature pooling and the design-matrix join.

Per-frame features are fused to video level by concatenating column means
with column sample standard deviations (n-1 denominator, 0 for a single
frame), doubling the width. Video-native features that are already one
row per video bypass fusion via ``passthrough_vector``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .datamodel import FrameFeatureMatrix, VideoFeatureVector, VideoRecord
from .errors import FeatureFormatError, SchemaError


def fuse_mean_std(matrix: FrameFeatureMatrix) -> VideoFeatureVector:
    """Mean/std pooling with concatenation: width d in, width 2d out."""
    rows = matrix.rows
    means = rows.mean(axis=0)
    if rows.shape[0] > 1:
        stds = rows.std(axis=0, ddof=1)
    else:
        stds = np.zeros(rows.shape[1])
    names = tuple(f"{n}.mean" for n in matrix.feature_names) + \
        tuple(f"{n}.std" for n in matrix.feature_names)
    return VideoFeatureVector(matrix.video_id, names, np.concatenate([means, stds]))


def passthrough_vector(matrix: FrameFeatureMatrix) -> VideoFeatureVector:
    """Treat an already-video-level (single-row) matrix as the fused vector."""
    if matrix.n_frames != 1:
        raise FeatureFormatError(
            f"{matrix.video_id!r}: pass-through expects one row, got {matrix.n_frames}")
    return VideoFeatureVector(matrix.video_id, matrix.feature_names, matrix.rows[0])


@dataclass(frozen=True)
class DesignMatrix:
    """Feature rows joined with MOS targets, in manifest order."""

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    video_ids: tuple[str, ...]


def consolidate(vectors: Sequence[VideoFeatureVector],
                records: Sequence[VideoRecord]) -> DesignMatrix:
    """Join fused vectors with manifest records into (X, y).

    Row order follows the manifest; every vector must have a record and
    all vectors must share the exact same ordered feature names.
    """
    if not vectors:
        raise SchemaError("no feature vectors to consolidate")
    names = vectors[0].feature_names
    by_id: dict[str, VideoFeatureVector] = {}
    for vec in vectors:
        if vec.feature_names != names:
            raise SchemaError(
                f"{vec.video_id!r}: feature names disagree with {vectors[0].video_id!r}")
        by_id[vec.video_id] = vec
    known = {rec.video_id for rec in records}
    missing = sorted(set(by_id) - known)
    if missing:
        raise SchemaError(f"no manifest record for video(s): {', '.join(missing)}")
    ordered = [rec for rec in records if rec.video_id in by_id]
    X = np.vstack([by_id[rec.video_id].values for rec in ordered])
    y = np.array([rec.mos for rec in ordered])
    return DesignMatrix(X, y, names, tuple(rec.video_id for rec in ordered))
