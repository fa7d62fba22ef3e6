import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vrabench.datamodel import FrameFeatureMatrix, VideoFeatureVector, VideoRecord
from vrabench.errors import SchemaError
from vrabench.fusion import consolidate, fuse_mean_std, passthrough_vector


def matrix(rows, names=None, vid="v"):
    rows = np.asarray(rows, dtype=np.float64)
    names = names or tuple(f"f{i}" for i in range(rows.shape[1]))
    return FrameFeatureMatrix(vid, names, rows)


class TestFuse:
    def test_two_frames(self):
        out = fuse_mean_std(matrix([[1, 2], [3, 4]]))
        assert np.allclose(out.values, [2.0, 3.0, math.sqrt(2), math.sqrt(2)])
        assert out.feature_names == ("f0.mean", "f1.mean", "f0.std", "f1.std")

    def test_single_frame(self):
        out = fuse_mean_std(matrix([[5, 7]]))
        assert np.array_equal(out.values, [5.0, 7.0, 0.0, 0.0])

    def test_width_doubles(self):
        out = fuse_mean_std(matrix(np.zeros((4, 2048)) + 0.5))
        assert out.values.shape == (4096,)

    @settings(max_examples=40)
    @given(st.lists(st.lists(st.integers(-1000, 1000), min_size=3, max_size=3),
                    min_size=1, max_size=16),
           st.randoms())
    def test_frame_permutation_invariance(self, rows, rnd):
        # integer sums are exact, so the mean block is bitwise stable; the
        # std block can wobble one ulp when the mean is not representable
        base = fuse_mean_std(matrix(rows)).values
        shuffled_rows = list(rows)
        rnd.shuffle(shuffled_rows)
        permuted = fuse_mean_std(matrix(shuffled_rows)).values
        assert np.array_equal(permuted[:3], base[:3])
        assert np.allclose(permuted[3:], base[3:], rtol=1e-12, atol=1e-9)

    @given(st.lists(st.lists(st.integers(-1000, 1000), min_size=2, max_size=2),
                    min_size=2, max_size=12))
    def test_duplication_closed_form(self, rows):
        n = len(rows)
        base = fuse_mean_std(matrix(rows)).values
        doubled = fuse_mean_std(matrix(rows + rows)).values
        assert np.array_equal(doubled[:2], base[:2])  # mean block exact
        factor = math.sqrt(2.0 * (n - 1) / (2.0 * n - 1)) if n > 1 else 0.0
        if n == 1:
            # two identical frames still have zero spread
            assert np.allclose(doubled[2:], 0.0, atol=1e-12)
        else:
            assert np.allclose(doubled[2:], base[2:] * factor, rtol=1e-12)

    def test_passthrough(self):
        m = matrix([[1.5, 2.5]])
        out = passthrough_vector(m)
        assert out.feature_names == m.feature_names
        assert np.array_equal(out.values, [1.5, 2.5])
        with pytest.raises(Exception):
            passthrough_vector(matrix([[1, 2], [3, 4]]))


class TestConsolidate:
    def records(self, ids):
        return [VideoRecord.from_ratings(v, "C3", f"p{i % 2}", f"s{i % 2}",
                                         f"{v}.mp4", [1 + i % 5] * 5)
                for i, v in enumerate(ids)]

    def vectors(self, ids, d=4):
        names = tuple(f"f{i}" for i in range(d))
        return [VideoFeatureVector(v, names, np.arange(d) + i)
                for i, v in enumerate(ids)]

    def test_shapes_and_order(self):
        records = self.records(["a", "b", "c"])
        vectors = self.vectors(["c", "a", "b"])   # any input order
        design = consolidate(vectors, records)
        assert design.X.shape == (3, 4)
        assert design.video_ids == ("a", "b", "c")  # manifest order
        assert design.y.tolist() == [r.mos for r in records]

    def test_permuted_names_schema_error(self):
        records = self.records(["a", "b"])
        names = ("f0", "f1", "f2", "f3")
        vecs = [VideoFeatureVector("a", names, np.zeros(4)),
                VideoFeatureVector("b", names[::-1], np.zeros(4))]
        with pytest.raises(SchemaError, match="names"):
            consolidate(vecs, records)

    def test_missing_record_join_error(self):
        records = self.records(["a"])
        with pytest.raises(SchemaError, match="ghost"):
            consolidate(self.vectors(["a", "ghost"]), records)

    def test_c3_shape(self):
        # 640 videos x 72 fused dims, the full-subset shape
        from vrabench.synth import make_benchmark_dataset

        records, _, _ = make_benchmark_dataset(0)
        names = tuple(f"b{i}" for i in range(72))
        vectors = [VideoFeatureVector(r.video_id, names, np.zeros(72))
                   for r in records]
        design = consolidate(vectors, records)
        assert design.X.shape == (640, 72)
