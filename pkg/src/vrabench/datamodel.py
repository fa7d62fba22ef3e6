"""Dataset/feature data model and all file I/O.

File formats (shared with external extractors):
  - manifest CSV: ``video_id,subset,facial_id_pair,submit_id,path,r1..r5[,mos]``
  - per-video frame-feature CSV: header = feature names, one row per frame
  - consolidated feature CSV: same, with a leading ``video_id`` column
  - box JSON: ``{"video_id": str, "boxes": [{"frame", "x", "y", "w", "h"}]}``

Floats are written with ``repr`` so a write/load round-trip is exact.
All loaders are pure functions of the file contents and return immutable
values; they are safe to call concurrently on distinct paths.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BoxFormatError,
    DuplicateVideoError,
    FeatureFormatError,
    ManifestError,
)

SUBSETS = ("C1", "C2", "C3")
RATING_MIN = 1
RATING_MAX = 5
N_RATERS = 5

MANIFEST_COLUMNS = ("video_id", "subset", "facial_id_pair", "submit_id", "path",
                    "r1", "r2", "r3", "r4", "r5")

# Stored mos, when present, must agree with the rating mean to this tolerance.
MOS_TOLERANCE = 1e-6


def rating_stats(ratings: Sequence[int]) -> tuple[float, float]:
    """Mean and sample (n-1) standard deviation of a rating list."""
    n = len(ratings)
    mean = sum(ratings) / n
    if n < 2:
        return mean, 0.0
    var = sum((r - mean) ** 2 for r in ratings) / (n - 1)
    return mean, math.sqrt(var)


@dataclass(frozen=True)
class VideoRecord:
    """One annotated face-swap clip."""

    video_id: str
    subset: str
    facial_id_pair: str
    submit_id: str
    path: str
    ratings: tuple[int, ...]
    mos: float
    mos_std: float

    def __post_init__(self):
        if self.subset not in SUBSETS:
            raise ManifestError(f"unknown subset {self.subset!r}")
        if not self.ratings:
            raise ManifestError("empty rating list")
        for r in self.ratings:
            if not (RATING_MIN <= r <= RATING_MAX):
                raise ManifestError(f"rating {r} outside [{RATING_MIN}, {RATING_MAX}]")
        mean, std = rating_stats(self.ratings)
        if abs(self.mos - mean) > MOS_TOLERANCE:
            raise ManifestError(
                f"mos {self.mos} disagrees with rating mean {mean} for {self.video_id!r}")
        if abs(self.mos_std - std) > MOS_TOLERANCE:
            raise ManifestError(
                f"mos_std {self.mos_std} disagrees with rating std {std} for {self.video_id!r}")

    @classmethod
    def from_ratings(cls, video_id: str, subset: str, facial_id_pair: str,
                     submit_id: str, path: str, ratings: Sequence[int]) -> "VideoRecord":
        mean, std = rating_stats(ratings)
        return cls(video_id, subset, facial_id_pair, submit_id, path,
                   tuple(int(r) for r in ratings), mean, std)


def _validated_matrix(values, width: int, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != width:
        raise FeatureFormatError(f"{what}: expected 2-d array of width {width}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise FeatureFormatError(f"{what}: non-finite value")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


def _check_names(names: Sequence[str], what: str) -> tuple[str, ...]:
    names = tuple(str(n) for n in names)
    if len(set(names)) != len(names):
        raise FeatureFormatError(f"{what}: duplicate feature names")
    return names


@dataclass(frozen=True)
class FrameFeatureMatrix:
    """Per-frame feature vectors for one video, with named dimensions."""

    video_id: str
    feature_names: tuple[str, ...]
    rows: np.ndarray

    def __post_init__(self):
        names = _check_names(self.feature_names, f"features for {self.video_id!r}")
        rows = _validated_matrix(self.rows, len(names), f"features for {self.video_id!r}")
        if rows.shape[0] < 1:
            raise FeatureFormatError(f"features for {self.video_id!r}: no frames")
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "rows", rows)

    @property
    def n_frames(self) -> int:
        return self.rows.shape[0]

    @property
    def width(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class VideoFeatureVector:
    """One fused (video-level) feature vector."""

    video_id: str
    feature_names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        names = _check_names(self.feature_names, f"vector for {self.video_id!r}")
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1 or vals.shape[0] != len(names):
            raise FeatureFormatError(
                f"vector for {self.video_id!r}: {vals.shape} does not match {len(names)} names")
        if not np.all(np.isfinite(vals)):
            raise FeatureFormatError(f"vector for {self.video_id!r}: non-finite value")
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned face box for one frame (pixel units)."""

    frame_index: int
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.frame_index < 0:
            raise BoxFormatError(f"negative frame index {self.frame_index}")
        if self.w <= 0 or self.h <= 0:
            raise BoxFormatError(f"non-positive box extent {self.w}x{self.h}")


# ---------------------------------------------------------------- manifests

def load_manifest(path) -> list[VideoRecord]:
    """Parse a manifest CSV into validated records, preserving file order."""
    path = Path(path)
    records: list[VideoRecord] = []
    seen: set[str] = set()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"{path}: empty file, expected a header row")
        has_mos = tuple(header) == MANIFEST_COLUMNS + ("mos",)
        if not has_mos and tuple(header) != MANIFEST_COLUMNS:
            raise ManifestError(f"{path}: unexpected header {header!r}")
        width = len(MANIFEST_COLUMNS) + (1 if has_mos else 0)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise ManifestError(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
            video_id, subset, pair, submit, relpath = row[:5]
            try:
                ratings = [int(v) for v in row[5:10]]
            except ValueError:
                raise ManifestError(f"{path}:{lineno}: non-integer rating in {row[5:10]!r}")
            try:
                record = VideoRecord.from_ratings(video_id, subset, pair, submit,
                                                  relpath, ratings)
                if has_mos:
                    stored = float(row[10])
                    if abs(stored - record.mos) > MOS_TOLERANCE:
                        raise ManifestError(
                            f"stored mos {stored} disagrees with rating mean {record.mos}")
            except ManifestError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from None
            if video_id in seen:
                raise DuplicateVideoError(f"{path}:{lineno}: duplicate video_id {video_id!r}")
            seen.add(video_id)
            records.append(record)
    return records


def write_manifest(records: Iterable[VideoRecord], path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS + ("mos",))
        for rec in records:
            writer.writerow([rec.video_id, rec.subset, rec.facial_id_pair,
                             rec.submit_id, rec.path, *rec.ratings, repr(rec.mos)])


# ------------------------------------------------------------ feature files

def write_features(matrix: FrameFeatureMatrix, path) -> None:
    """Write one per-video frame-feature CSV (header = feature names)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(matrix.feature_names)
        for row in matrix.rows:
            writer.writerow([repr(float(v)) for v in row])


def load_features(path, video_id: str | None = None) -> FrameFeatureMatrix:
    """Load a per-video frame-feature CSV; video_id defaults to the file stem."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            names = next(reader)
        except StopIteration:
            raise FeatureFormatError(f"{path}: empty file")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(names):
                raise FeatureFormatError(
                    f"{path}:{lineno}: {len(row)} values under a {len(names)}-name header")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise FeatureFormatError(f"{path}:{lineno}: non-numeric value")
    if not rows:
        raise FeatureFormatError(f"{path}: no frame rows")
    try:
        return FrameFeatureMatrix(video_id or path.stem, tuple(names), np.array(rows))
    except FeatureFormatError as exc:
        raise FeatureFormatError(f"{path}: {exc}") from None


def write_consolidated(vectors: Sequence[VideoFeatureVector], path) -> None:
    """Write the video-level CSV: one row per video, leading video_id column."""
    if not vectors:
        raise FeatureFormatError("nothing to consolidate")
    names = vectors[0].feature_names
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("video_id",) + names)
        for vec in vectors:
            if vec.feature_names != names:
                raise FeatureFormatError(
                    f"{vec.video_id!r}: feature names differ from first vector")
            writer.writerow([vec.video_id, *(repr(float(v)) for v in vec.values)])


def load_consolidated(path) -> list[VideoFeatureVector]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FeatureFormatError(f"{path}: empty file")
        if not header or header[0] != "video_id":
            raise FeatureFormatError(f"{path}: consolidated CSV must start with video_id")
        names = tuple(header[1:])
        out = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(names) + 1:
                raise FeatureFormatError(
                    f"{path}:{lineno}: {len(row) - 1} values under a {len(names)}-name header")
            try:
                values = [float(v) for v in row[1:]]
            except ValueError:
                raise FeatureFormatError(f"{path}:{lineno}: non-numeric value")
            try:
                out.append(VideoFeatureVector(row[0], names, np.array(values)))
            except FeatureFormatError as exc:
                raise FeatureFormatError(f"{path}:{lineno}: {exc}") from None
    return out


# ------------------------------------------------------------------- boxes

def load_box_bundle(path) -> tuple[str, list[BoundingBox]]:
    """Load a box JSON file; returns (video_id, boxes sorted by frame)."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BoxFormatError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(payload, dict) or "video_id" not in payload or "boxes" not in payload:
        raise BoxFormatError(f"{path}: expected object with video_id and boxes")
    boxes = []
    for i, entry in enumerate(payload["boxes"]):
        try:
            boxes.append(BoundingBox(int(entry["frame"]), int(entry["x"]),
                                     int(entry["y"]), int(entry["w"]), int(entry["h"])))
        except KeyError as exc:
            raise BoxFormatError(f"{path}: box {i} missing field {exc}") from None
        except BoxFormatError as exc:
            raise BoxFormatError(f"{path}: box {i}: {exc}") from None
    if not boxes:
        raise BoxFormatError(f"{path}: no boxes for video {payload['video_id']!r}")
    boxes.sort(key=lambda b: b.frame_index)
    return str(payload["video_id"]), boxes


def load_boxes(path) -> list[BoundingBox]:
    return load_box_bundle(path)[1]


def write_box_bundle(video_id: str, boxes: Sequence[BoundingBox], path) -> None:
    payload = {"video_id": video_id,
               "boxes": [{"frame": b.frame_index, "x": b.x, "y": b.y,
                          "w": b.w, "h": b.h} for b in boxes]}
    Path(path).write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")
