"""Stable face-crop computation and frame cropping.

One crop region is computed per target video from its detected face boxes
(enlarge each box about its center, then take the bounding union) and is
then applied unchanged to every frame of every face-swap video derived
from that target, so consecutive cropped frames never jitter.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .datamodel import BoundingBox
from .errors import BoxFormatError, MediaError

# Head-region enlargement applied to each detected face box.
DEFAULT_ENLARGE_FACTOR = 1.3


@dataclass(frozen=True)
class CropRegion:
    """Frame-independent crop rectangle shared by all swaps of one target."""

    x: int
    y: int
    w: int
    h: int
    source_video_id: str = ""

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise BoxFormatError(f"non-positive crop extent {self.w}x{self.h}")


def union_boxes(boxes: Sequence[BoundingBox]) -> BoundingBox:
    """Smallest axis-aligned box containing every input box."""
    if not boxes:
        raise BoxFormatError("cannot union an empty box list")
    x0 = min(b.x for b in boxes)
    y0 = min(b.y for b in boxes)
    x1 = max(b.x + b.w for b in boxes)
    y1 = max(b.y + b.h for b in boxes)
    return BoundingBox(0, x0, y0, x1 - x0, y1 - y0)


def enlarge_box(box: BoundingBox, factor: float, frame_w: int, frame_h: int) -> BoundingBox:
    """Scale a box about its center, then intersect with the frame."""
    if factor <= 0:
        raise BoxFormatError(f"enlargement factor must be positive, got {factor}")
    if frame_w <= 0 or frame_h <= 0:
        raise BoxFormatError(f"bad frame dims {frame_w}x{frame_h}")
    cx = box.x + box.w / 2.0
    cy = box.y + box.h / 2.0
    nw = round(box.w * factor)
    nh = round(box.h * factor)
    nx = round(cx - nw / 2.0)
    ny = round(cy - nh / 2.0)
    x0 = max(nx, 0)
    y0 = max(ny, 0)
    x1 = min(nx + nw, frame_w)
    y1 = min(ny + nh, frame_h)
    if x1 <= x0 or y1 <= y0:
        raise BoxFormatError(
            f"box ({box.x},{box.y},{box.w},{box.h}) lies outside the {frame_w}x{frame_h} frame")
    return BoundingBox(box.frame_index, x0, y0, x1 - x0, y1 - y0)


def build_crop_region(boxes: Sequence[BoundingBox], factor: float,
                      frame_w: int, frame_h: int, source_video_id: str = "",
                      enlarge_after_union: bool = False) -> CropRegion:
    """Deterministic crop region from per-frame boxes.

    Default order enlarges each box first and unions afterwards; the
    ``enlarge_after_union`` switch flips the order for comparison runs.
    """
    if enlarge_after_union:
        merged = enlarge_box(union_boxes(boxes), factor, frame_w, frame_h)
    else:
        enlarged = [enlarge_box(b, factor, frame_w, frame_h) for b in boxes]
        merged = union_boxes(enlarged)
        # union of clamped boxes is already inside the frame
    return CropRegion(merged.x, merged.y, merged.w, merged.h, source_video_id)


def crop_frames(frames: Iterable[np.ndarray], region: CropRegion) -> Iterator[np.ndarray]:
    """Crop every frame to the region; dims and count are preserved."""
    for index, frame in enumerate(frames):
        if frame is None or getattr(frame, "ndim", 0) < 2:
            raise MediaError(f"undecodable frame at index {index}")
        h, w = frame.shape[:2]
        if region.x + region.w > w or region.y + region.h > h:
            raise MediaError(
                f"frame {index} is {w}x{h}, smaller than crop "
                f"({region.x},{region.y},{region.w},{region.h})")
        yield frame[region.y:region.y + region.h, region.x:region.x + region.w]


def iter_video_frames(path, stride: int = 1) -> Iterator[np.ndarray]:
    """Decode frames from a video file or a directory of PNG/JPG frames."""
    import cv2

    if stride < 1:
        raise MediaError(f"stride must be >= 1, got {stride}")
    path = Path(path)
    if path.is_dir():
        files = sorted(p for p in path.iterdir()
                       if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
        if not files:
            raise MediaError(f"{path}: no image frames found")
        for index, file in enumerate(files):
            if index % stride:
                continue
            frame = cv2.imread(str(file))
            if frame is None:
                raise MediaError(f"{path}: failed to decode frame {index} ({file.name})")
            yield frame
        return
    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        raise MediaError(f"{path}: cannot open video")
    try:
        index = 0
        while True:
            ok, frame = cap.read()
            if not ok:
                break
            if index % stride == 0:
                yield frame
            index += 1
        if index == 0:
            raise MediaError(f"{path}: no decodable frames")
    finally:
        cap.release()


def crop_video_file(src, dst, region: CropRegion, fmt: str = "png",
                    stride: int = 1, fps: float = 25.0) -> int:
    """Crop a whole video to ``dst``; returns the number of frames written.

    ``fmt='png'`` writes a frame directory, ``fmt='mp4'`` a video container.
    """
    import cv2

    src, dst = Path(src), Path(dst)
    frames = crop_frames(iter_video_frames(src, stride=stride), region)
    count = 0
    if fmt == "png":
        dst.mkdir(parents=True, exist_ok=True)
        for frame in frames:
            cv2.imwrite(str(dst / f"{count:06d}.png"), frame)
            count += 1
    elif fmt == "mp4":
        dst.parent.mkdir(parents=True, exist_ok=True)
        writer = cv2.VideoWriter(str(dst), cv2.VideoWriter_fourcc(*"mp4v"),
                                 fps, (region.w, region.h))
        if not writer.isOpened():
            raise MediaError(f"{dst}: cannot open mp4 writer")
        try:
            for frame in frames:
                writer.write(frame)
                count += 1
        finally:
            writer.release()
    else:
        raise MediaError(f"unknown crop output format {fmt!r}")
    if count == 0:
        raise MediaError(f"{src}: no frames cropped")
    return count
