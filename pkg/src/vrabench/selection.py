"""Two-stage feature selection driven by linear-SVR weight ranking.

Stage 1 grid-searches the selected dimension k (step 20, the full width
always included) over seeded random train/test iterations; stage 2 runs
100 iterations at the chosen k and keeps the k most frequently selected
feature indices. Both stages re-rank per iteration on that iteration's
train split. Selection is a pure function of (X, y, seed_base).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import SplitError, UndefinedMetricError
from .rng import shuffled
from .svr import (
    DEFAULT_EPSILON,
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    _plcc_score,
    linear_weights,
    predict,
    train_svr,
)

log = logging.getLogger(__name__)

DEFAULT_STEP = 20
STAGE1_ITERATIONS = 10
STAGE2_ITERATIONS = 100
TEST_FRACTION = 0.2
# Table-1 style rule: only high-dimensional feature models get selected.
SELECTION_WIDTH_THRESHOLD = 1000


@dataclass(frozen=True)
class SelectionConfig:
    """Linear ranking regressor settings plus loop sizes.

    The ranking tolerance is looser than the regression default: with far
    more rows than feature dimensions the linear-SVR dual is degenerate
    and the last digits of the KKT gap cost millions of iterations while
    leaving the weight ordering unchanged.
    """

    C: float = 1.0
    epsilon: float = DEFAULT_EPSILON
    tol: float = 1e-2
    max_iter: int = DEFAULT_MAX_ITER
    step: int = DEFAULT_STEP
    stage1_iterations: int = STAGE1_ITERATIONS
    stage2_iterations: int = STAGE2_ITERATIONS
    test_fraction: float = TEST_FRACTION
    jobs: int = 1


@dataclass(frozen=True)
class SelectionResult:
    k: int
    selected_indices: tuple[int, ...]        # sorted ascending
    frequency: tuple[int, ...]               # per-feature stage-2 counts
    stage1_scores: tuple[tuple[int, float], ...] = ()   # (candidate k, mean PLCC)


def rank_by_importance(X: np.ndarray, y: np.ndarray,
                       config: SelectionConfig = SelectionConfig()) -> np.ndarray:
    """Feature indices by descending |linear SVR weight|; ties by lower index."""
    model = train_svr(X, y, kernel="linear", C=config.C, epsilon=config.epsilon,
                      tol=config.tol, max_iter=config.max_iter)
    w = linear_weights(model)
    return np.argsort(-np.abs(w), kind="stable")


def _split_indices(n: int, seed: int, test_fraction: float) -> tuple[np.ndarray, np.ndarray]:
    order = shuffled(range(n), seed)
    n_test = max(1, round(test_fraction * n))
    if n_test >= n - 1:
        raise SplitError(f"cannot carve a {test_fraction:.0%} test split from {n} rows")
    return np.array(sorted(order[n_test:])), np.array(sorted(order[:n_test]))


def candidate_dimensions(width: int, step: int) -> list[int]:
    """step, 2*step, ... plus the full width itself."""
    if width < 1:
        raise ValueError("empty feature space")
    candidates = list(range(step, width + 1, step))
    if not candidates or candidates[-1] != width:
        candidates.append(width)
    return candidates


def stage1_select_k(X: np.ndarray, y: np.ndarray,
                    config: SelectionConfig = SelectionConfig(),
                    seed_base: int = 0) -> tuple[int, dict[int, float]]:
    """Pick the dimension k with the best mean test PLCC over seeded splits.

    Iterations whose test targets are constant are skipped and logged; a
    candidate whose predictions make PLCC undefined contributes 0 for that
    iteration. Ties between candidates resolve toward smaller k.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    candidates = candidate_dimensions(X.shape[1], config.step)
    sums = {k: 0.0 for k in candidates}
    used = 0
    for i in range(config.stage1_iterations):
        train_idx, test_idx = _split_indices(y.shape[0], seed_base + i,
                                             config.test_fraction)
        if np.ptp(y[test_idx]) == 0.0:
            log.warning("stage 1 iteration %d skipped: constant test targets", i)
            continue
        ranking = rank_by_importance(X[train_idx], y[train_idx], config)
        for k in candidates:
            cols = np.sort(ranking[:k])
            model = train_svr(X[train_idx][:, cols], y[train_idx], kernel="linear",
                              C=config.C, epsilon=config.epsilon,
                              tol=config.tol, max_iter=config.max_iter)
            pred = predict(model, X[test_idx][:, cols])
            try:
                sums[k] += _plcc_score(pred, y[test_idx])
            except UndefinedMetricError:
                log.warning("stage 1 iteration %d, k=%d: undefined PLCC", i, k)
        used += 1
    if used == 0:
        raise SplitError("every stage-1 iteration was degenerate")
    scores = {k: sums[k] / used for k in candidates}
    best_k = min(candidates, key=lambda k: (-scores[k], k))
    return best_k, scores


_STAGE2_STATE: dict = {}


def _stage2_worker(args: tuple[int, int]) -> tuple[int, list[int] | None]:
    i, seed = args
    X = _STAGE2_STATE["X"]
    y = _STAGE2_STATE["y"]
    config = _STAGE2_STATE["config"]
    train_idx, _ = _split_indices(y.shape[0], seed, config.test_fraction)
    if np.ptp(y[train_idx]) == 0.0:
        return i, None
    ranking = rank_by_importance(X[train_idx], y[train_idx], config)
    return i, ranking[:_STAGE2_STATE["k"]].tolist()


def stage2_select(X: np.ndarray, y: np.ndarray, k: int,
                  config: SelectionConfig = SelectionConfig(),
                  seed_base: int = 0,
                  stage1_scores: dict[int, float] | None = None) -> SelectionResult:
    """Stabilize the top-k subset by selection frequency over seeded splits.

    Iterations are independent given their seeds and run on a process
    pool when ``config.jobs`` exceeds one; the frequency aggregation is
    order-free so parallel runs reproduce the serial result exactly.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    width = X.shape[1]
    if not (1 <= k <= width):
        raise ValueError(f"k={k} outside [1, {width}]")
    tasks = [(i, seed_base + i) for i in range(config.stage2_iterations)]
    if config.jobs > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor
        import os

        _STAGE2_STATE.update(X=X, y=y, config=config, k=k)
        try:
            with ProcessPoolExecutor(max_workers=min(config.jobs,
                                                     os.cpu_count() or 1)) as pool:
                outcomes = list(pool.map(_stage2_worker, tasks, chunksize=4))
        finally:
            _STAGE2_STATE.clear()
    else:
        outcomes = []
        for i, seed in tasks:
            train_idx, _ = _split_indices(y.shape[0], seed, config.test_fraction)
            if np.ptp(y[train_idx]) == 0.0:
                outcomes.append((i, None))
                continue
            ranking = rank_by_importance(X[train_idx], y[train_idx], config)
            outcomes.append((i, ranking[:k].tolist()))
    frequency = np.zeros(width, dtype=np.int64)
    used = 0
    for i, top in sorted(outcomes):
        if top is None:
            log.warning("stage 2 iteration %d skipped: constant train targets", i)
            continue
        frequency[top] += 1
        used += 1
    if used == 0:
        raise SplitError("every stage-2 iteration was degenerate")
    order = np.argsort(-frequency, kind="stable")      # ties by lower index
    selected = tuple(int(v) for v in np.sort(order[:k]))
    stage1 = tuple(sorted((stage1_scores or {}).items()))
    return SelectionResult(k, selected, tuple(int(v) for v in frequency), stage1)


def run_selection(X: np.ndarray, y: np.ndarray,
                  config: SelectionConfig = SelectionConfig(),
                  seed_base: int = 0) -> SelectionResult:
    """Stage 1 then stage 2 on the same data pool."""
    k, scores = stage1_select_k(X, y, config, seed_base)
    return stage2_select(X, y, k, config, seed_base, stage1_scores=scores)


def apply_selection(X: np.ndarray, result: SelectionResult) -> np.ndarray:
    """Column subset at the selected indices, ascending order."""
    X = np.asarray(X)
    if result.selected_indices and max(result.selected_indices) >= X.shape[1]:
        raise IndexError(
            f"selected index {max(result.selected_indices)} out of range for width {X.shape[1]}")
    return X[:, list(result.selected_indices)]


def select_names(names: Sequence[str], result: SelectionResult) -> tuple[str, ...]:
    return tuple(names[i] for i in result.selected_indices)


def save_selection(result: SelectionResult, path,
                   feature_names: Sequence[str] | None = None) -> None:
    payload = {
        "k": result.k,
        "selected_indices": list(result.selected_indices),
        "selected_names": (list(select_names(feature_names, result))
                           if feature_names is not None else None),
        "frequency": list(result.frequency),
        "stage1_curve": [{"k": k, "plcc": v} for k, v in result.stage1_scores],
    }
    Path(path).write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")


def load_selection(path) -> SelectionResult:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return SelectionResult(
        payload["k"], tuple(payload["selected_indices"]),
        tuple(payload["frequency"]),
        tuple((row["k"], row["plcc"]) for row in payload.get("stage1_curve", [])))
