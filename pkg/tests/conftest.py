import numpy as np
import pytest

from vrabench.datamodel import VideoRecord


@pytest.fixture
def tiny_records():
    """12 videos, 3 submit ids x 2 pairs x 2 videos, subset C3."""
    records = []
    rng = np.random.default_rng(5)
    for s in ("s1", "s2", "s3"):
        for p in ("pA", "pB"):
            for v in range(2):
                ratings = rng.integers(1, 6, size=5).tolist()
                records.append(VideoRecord.from_ratings(
                    f"{s}_{p}_{v}", "C3", p, s, f"videos/{s}_{p}_{v}.mp4", ratings))
    return records
