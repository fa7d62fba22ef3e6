import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vrabench.datamodel import BoundingBox
from vrabench.errors import BoxFormatError, MediaError
from vrabench.preprocess import (
    CropRegion,
    build_crop_region,
    crop_frames,
    crop_video_file,
    enlarge_box,
    iter_video_frames,
    union_boxes,
)

box_strategy = st.builds(
    BoundingBox,
    frame_index=st.just(0),
    x=st.integers(-50, 500), y=st.integers(-50, 500),
    w=st.integers(1, 300), h=st.integers(1, 300))


def as_tuple(b):
    return (b.x, b.y, b.w, b.h)


class TestUnion:
    def test_single(self):
        b = BoundingBox(0, 0, 0, 10, 10)
        assert as_tuple(union_boxes([b])) == (0, 0, 10, 10)

    def test_two_overlapping(self):
        u = union_boxes([BoundingBox(0, 0, 0, 10, 10), BoundingBox(1, 5, 5, 10, 10)])
        assert as_tuple(u) == (0, 0, 15, 15)

    def test_two_disjoint(self):
        u = union_boxes([BoundingBox(0, 2, 3, 4, 4), BoundingBox(1, 0, 0, 1, 1)])
        assert as_tuple(u) == (0, 0, 6, 7)

    def test_empty_error(self):
        with pytest.raises(BoxFormatError):
            union_boxes([])

    @given(st.lists(box_strategy, min_size=1, max_size=6))
    def test_contains_all_and_idempotent(self, boxes):
        u = union_boxes(boxes)
        for b in boxes:
            assert u.x <= b.x and u.y <= b.y
            assert u.x + u.w >= b.x + b.w and u.y + u.h >= b.y + b.h
        assert as_tuple(union_boxes([u, u])) == as_tuple(u)

    @given(st.lists(box_strategy, min_size=2, max_size=6), st.randoms())
    def test_commutative_associative(self, boxes, rnd):
        shuffled_boxes = list(boxes)
        rnd.shuffle(shuffled_boxes)
        assert as_tuple(union_boxes(shuffled_boxes)) == as_tuple(union_boxes(boxes))
        left = union_boxes([union_boxes(boxes[:1]), union_boxes(boxes[1:])])
        assert as_tuple(left) == as_tuple(union_boxes(boxes))


class TestEnlarge:
    def test_center_preserving(self):
        b = enlarge_box(BoundingBox(0, 100, 100, 100, 100), 1.3, 1080, 1920)
        assert as_tuple(b) == (85, 85, 130, 130)

    def test_clamp_at_origin(self):
        b = enlarge_box(BoundingBox(0, 0, 0, 100, 100), 1.3, 1080, 1920)
        assert as_tuple(b) == (0, 0, 115, 115)

    def test_identity_factor(self):
        b = BoundingBox(0, 17, 23, 40, 52)
        assert as_tuple(enlarge_box(b, 1.0, 1080, 1920)) == as_tuple(b)

    def test_fully_outside_error(self):
        with pytest.raises(BoxFormatError, match="outside"):
            enlarge_box(BoundingBox(0, 2000, 2000, 10, 10), 1.3, 1080, 1920)

    def test_composition_on_exact_factors(self):
        # dyadic factors and dims keep the arithmetic exact, so the
        # f1-then-f2 composition equals a single f1*f2 enlargement
        b = BoundingBox(0, 256, 256, 64, 32)
        once = enlarge_box(b, 1.25 * 1.5, 4096, 4096)
        twice = enlarge_box(enlarge_box(b, 1.25, 4096, 4096), 1.5, 4096, 4096)
        assert as_tuple(once) == as_tuple(twice)

    @given(st.builds(BoundingBox, frame_index=st.just(0),
                     x=st.integers(200, 500), y=st.integers(200, 500),
                     w=st.integers(1, 150), h=st.integers(1, 150)),
           st.floats(min_value=1.0, max_value=1.5))
    def test_composition_within_rounding(self, box, f):
        # interior boxes, so no clamping: only integer rounding differs
        frame = 2000
        once = enlarge_box(box, f * f, frame, frame)
        twice = enlarge_box(enlarge_box(box, f, frame, frame), f, frame, frame)
        for a, b in zip(as_tuple(once), as_tuple(twice)):
            assert abs(a - b) <= 2


class TestCropRegion:
    def test_single_box(self):
        region = build_crop_region([BoundingBox(0, 100, 100, 100, 100)], 1.3,
                                   1080, 1920, source_video_id="t")
        assert (region.x, region.y, region.w, region.h) == (85, 85, 130, 130)
        assert region.source_video_id == "t"

    def test_two_disjoint(self):
        boxes = [BoundingBox(0, 100, 100, 100, 100), BoundingBox(1, 500, 700, 100, 100)]
        region = build_crop_region(boxes, 1.3, 1080, 1920)
        e1 = enlarge_box(boxes[0], 1.3, 1080, 1920)
        e2 = enlarge_box(boxes[1], 1.3, 1080, 1920)
        u = union_boxes([e1, e2])
        assert (region.x, region.y, region.w, region.h) == as_tuple(u)

    def test_full_frame_clamps(self):
        region = build_crop_region([BoundingBox(0, 0, 0, 1080, 1920)], 1.3, 1080, 1920)
        assert (region.x, region.y, region.w, region.h) == (0, 0, 1080, 1920)

    def test_deterministic_and_shared(self):
        boxes = [BoundingBox(i, 50 + i, 60 + i, 80, 90) for i in range(5)]
        a = build_crop_region(boxes, 1.3, 1080, 1920, "tgt")
        b = build_crop_region(boxes, 1.3, 1080, 1920, "tgt")
        assert a == b

    def test_order_switch(self):
        boxes = [BoundingBox(0, 10, 10, 50, 50), BoundingBox(1, 200, 200, 50, 50)]
        default = build_crop_region(boxes, 1.3, 1080, 1920)
        flipped = build_crop_region(boxes, 1.3, 1080, 1920, enlarge_after_union=True)
        assert (default.w, default.h) != (flipped.w, flipped.h)


class TestCropFrames:
    def frames(self, n=4, h=60, w=40):
        rng = np.random.default_rng(0)
        return [rng.integers(0, 255, size=(h, w, 3)).astype(np.uint8) for _ in range(n)]

    def test_dims_and_count(self):
        region = CropRegion(5, 10, 20, 30)
        out = list(crop_frames(self.frames(), region))
        assert len(out) == 4
        assert all(f.shape == (30, 20, 3) for f in out)

    def test_identity_crop(self):
        frames = self.frames()
        region = CropRegion(0, 0, 40, 60)
        out = list(crop_frames(frames, region))
        assert all(np.array_equal(a, b) for a, b in zip(out, frames))

    def test_degenerate_1x1(self):
        out = list(crop_frames(self.frames(), CropRegion(3, 4, 1, 1)))
        assert len(out) == 4 and all(f.shape == (1, 1, 3) for f in out)

    def test_bad_frame_raises_with_index(self):
        frames = self.frames()[:2] + [None]
        with pytest.raises(MediaError, match="index 2"):
            list(crop_frames(frames, CropRegion(0, 0, 10, 10)))


class TestVideoFiles:
    def test_png_dir_roundtrip(self, tmp_path):
        import cv2

        src = tmp_path / "src"
        src.mkdir()
        rng = np.random.default_rng(1)
        frames = [rng.integers(0, 255, size=(64, 48, 3)).astype(np.uint8)
                  for _ in range(5)]
        for i, f in enumerate(frames):
            cv2.imwrite(str(src / f"{i:03d}.png"), f)
        region = CropRegion(8, 10, 20, 30)
        n = crop_video_file(src, tmp_path / "out", region, fmt="png")
        assert n == 5
        cropped = list(iter_video_frames(tmp_path / "out"))
        assert len(cropped) == 5
        assert all(c.shape == (30, 20, 3) for c in cropped)
        assert np.array_equal(cropped[0], frames[0][10:40, 8:28])

    def test_stride(self, tmp_path):
        import cv2

        src = tmp_path / "src"
        src.mkdir()
        for i in range(6):
            cv2.imwrite(str(src / f"{i}.png"), np.full((20, 20, 3), i, np.uint8))
        out = list(iter_video_frames(src, stride=2))
        assert len(out) == 3

    def test_missing_video_error(self, tmp_path):
        with pytest.raises(MediaError):
            list(iter_video_frames(tmp_path / "nope.mp4"))

    def test_undecodable_file_error(self, tmp_path):
        bad = tmp_path / "bad.mp4"
        bad.write_bytes(b"this is not a video")
        with pytest.raises(MediaError):
            list(iter_video_frames(bad))
