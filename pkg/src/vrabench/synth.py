"""Seeded synthetic datasets shaped like the C3 subset (640 clips).

The generator plants a monotone relation between a latent per-video
quality level and the feature columns, with rater noise on top, so the
full pipeline has a known signal to recover. Outputs are byte-identical
for a given seed (no timestamps, repr float formatting).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .datamodel import (
    VideoFeatureVector,
    VideoRecord,
    write_consolidated,
    write_manifest,
)

N_SUBMITS = 16
N_PAIRS = 20
VIDEOS_PER_CELL = 2          # 16 * 20 * 2 = 640, the C3 shape
N_INFORMATIVE = 6
N_NOISE = 2

_SUBMIT_SPREAD = (1.35, 4.65)    # base quality range across submissions
_PAIR_SD = 0.12                  # identity-pair offset
_VIDEO_SD = 0.15                 # per-video latent jitter
_RATER_SD = 0.30                 # per-rating noise before integer rounding
_FEATURE_SD = 0.08               # informative-feature noise


def _round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(x + 0.5)


def make_benchmark_dataset(seed: int, subset: str = "C3",
                           n_submits: int = N_SUBMITS, n_pairs: int = N_PAIRS,
                           per_cell: int = VIDEOS_PER_CELL
                           ) -> tuple[list[VideoRecord], list[VideoFeatureVector], dict]:
    rng = np.random.default_rng(seed)
    submits = [f"s{i + 1:02d}" for i in range(n_submits)]
    pairs = [f"p{i + 1:02d}" for i in range(n_pairs)]
    base = np.linspace(*_SUBMIT_SPREAD, n_submits)
    base = base[rng.permutation(n_submits)]
    pair_offset = rng.normal(0.0, _PAIR_SD, size=n_pairs)

    coef = np.array([1.0, -0.8, 1.2, -1.1, 0.9, 1.05])[:N_INFORMATIVE]
    names = tuple(f"synth.f{i:02d}" for i in range(N_INFORMATIVE + N_NOISE))

    records: list[VideoRecord] = []
    vectors: list[VideoFeatureVector] = []
    for si, submit in enumerate(submits):
        for pi, pair in enumerate(pairs):
            for v in range(per_cell):
                vid = f"{subset.lower()}_{submit}_{pair}_{v:02d}"
                latent = base[si] + pair_offset[pi] + rng.normal(0.0, _VIDEO_SD)
                latent = float(np.clip(latent, 1.0, 5.0))
                ratings = np.clip(
                    _round_half_up(latent + rng.normal(0.0, _RATER_SD, size=5)),
                    1, 5).astype(int)
                records.append(VideoRecord.from_ratings(
                    vid, subset, pair, submit, f"videos/{vid}.mp4", ratings.tolist()))
                informative = coef * latent + rng.normal(0.0, _FEATURE_SD,
                                                         size=N_INFORMATIVE)
                # two monotone nonlinear channels keep the RBF kernel honest
                informative[-2] = np.tanh(latent - 3.0) + rng.normal(0.0, _FEATURE_SD / 2)
                informative[-1] = (latent / 5.0) ** 2 + rng.normal(0.0, _FEATURE_SD / 2)
                noise = rng.normal(0.0, 1.0, size=N_NOISE)
                vectors.append(VideoFeatureVector(
                    vid, names, np.concatenate([informative, noise])))
    meta = {
        "seed": seed,
        "subset": subset,
        "n_videos": len(records),
        "n_submits": n_submits,
        "n_pairs": n_pairs,
        "feature_names": list(names),
        "informative": list(range(N_INFORMATIVE)),
        "noise": list(range(N_INFORMATIVE, N_INFORMATIVE + N_NOISE)),
    }
    return records, vectors, meta


def write_benchmark_dataset(out_dir, seed: int, subset: str = "C3") -> dict:
    """Write manifest.csv, features.csv, and meta.json under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records, vectors, meta = make_benchmark_dataset(seed, subset=subset)
    write_manifest(records, out / "manifest.csv")
    write_consolidated(vectors, out / "features.csv")
    (out / "meta.json").write_text(json.dumps(meta, indent=1) + "\n", encoding="utf-8")
    return meta


def make_selection_design(seed: int, n_rows: int = 640, n_features: int = 100,
                          n_informative: int = 5
                          ) -> tuple[np.ndarray, np.ndarray, list[int]]:
    """Design with a handful of informative columns among pure noise.

    Targets depend linearly (with alternating signs) on the informative
    columns only; returns (X, y, informative indices).
    """
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n_rows, n_features))
    informative = sorted(rng.choice(n_features, size=n_informative, replace=False).tolist())
    signs = np.array([1.0 if i % 2 == 0 else -1.0 for i in range(n_informative)])
    weights = signs * rng.uniform(1.0, 2.0, size=n_informative)
    y = 3.0 + X[:, informative] @ weights / np.sqrt(n_informative) \
        + rng.normal(0.0, 0.1, size=n_rows)
    return X, y, informative
