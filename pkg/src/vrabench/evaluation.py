"""Metrics, logistic remapping, protocol splits, and the benchmark runner.

Conventions fixed here:
  - SRCC is computed on raw predictions; PLCC and RMSE on predictions
    remapped through a fitted monotone 4-parameter logistic (identity
    fallback, flagged, when the fit fails or does not help).
  - Splits shuffle group labels with splitmix64 + Fisher-Yates, seed =
    iteration number, so any implementation reproduces them bit-exactly.
  - The logistic remap is applied at the video and the method level alike.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .datamodel import VideoRecord
from .errors import ConvergenceError, SchemaError, SplitError, UndefinedMetricError
from .fusion import DesignMatrix
from .rng import SplitMix64, shuffled
from .selection import (
    SELECTION_WIDTH_THRESHOLD,
    SelectionConfig,
    SelectionResult,
    apply_selection,
    run_selection,
)
from .svr import (
    DEFAULT_C_GRID,
    DEFAULT_EPSILON,
    DEFAULT_GAMMA_GRID,
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    default_grid,
    grid_search,
    predict,
    train_svr,
)

log = logging.getLogger(__name__)

FACIAL_ID_HELD_OUT = 4      # of 20 identity pairs
SUBMIT_ID_HELD_OUT = 3      # of 16 submissions
DEFAULT_ITERATIONS = 100
LOGISTIC_RESTARTS = 10
_RANDOM_PREDICTOR_SALT = 0xD1B54A32D192ED03


# ----------------------------------------------------------------- metrics

def _aligned(pred, gt, min_len: int) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64).ravel()
    g = np.asarray(gt, dtype=np.float64).ravel()
    if p.shape != g.shape:
        raise SchemaError(f"length mismatch: {p.shape[0]} vs {g.shape[0]}")
    if p.shape[0] < min_len:
        raise SchemaError(f"need at least {min_len} points, got {p.shape[0]}")
    return p, g


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values receive the mean of their rank range."""
    x = np.asarray(values, dtype=np.float64).ravel()
    n = x.shape[0]
    order = np.argsort(x, kind="mergesort")
    sx = x[order]
    starts = np.r_[True, sx[1:] != sx[:-1]]
    idx = np.flatnonzero(starts)
    counts = np.diff(np.r_[idx, n])
    group_rank = idx + 1 + (counts - 1) / 2.0
    ranks_sorted = group_rank[np.cumsum(starts) - 1]
    out = np.empty(n)
    out[order] = ranks_sorted
    return out


def _pearson(p: np.ndarray, g: np.ndarray, what: str) -> float:
    pc = p - p.mean()
    gc = g - g.mean()
    denom = math.sqrt(float(np.sum(pc * pc)) * float(np.sum(gc * gc)))
    if denom <= 0.0 or not math.isfinite(denom):
        raise UndefinedMetricError(f"{what}: constant input vector")
    return float(np.sum(pc * gc) / denom)


def srcc(pred, gt) -> float:
    """Spearman rank correlation with average ranks for ties."""
    p, g = _aligned(pred, gt, 3)
    if np.ptp(g) == 0.0:
        raise UndefinedMetricError("srcc: constant ground truth")
    if np.ptp(p) == 0.0:
        raise UndefinedMetricError("srcc: constant predictions")
    return _pearson(average_ranks(p), average_ranks(g), "srcc")


def plcc(pred, gt) -> float:
    p, g = _aligned(pred, gt, 2)
    return _pearson(p, g, "plcc")


def rmse(pred, gt) -> float:
    p, g = _aligned(pred, gt, 1)
    return float(np.sqrt(np.mean((p - g) ** 2)))


# ------------------------------------------------------------ logistic fit

@dataclass(frozen=True)
class LogisticFit:
    beta1: float
    beta2: float
    beta3: float
    beta4: float

    def __call__(self, x: np.ndarray) -> np.ndarray:
        z = np.clip(-(np.asarray(x, dtype=np.float64) - self.beta3) / abs(self.beta4),
                    -500.0, 500.0)
        return self.beta2 + (self.beta1 - self.beta2) / (1.0 + np.exp(z))


def fit_logistic4(pred, gt, seed: int = 0) -> tuple[LogisticFit | None, np.ndarray]:
    """Least-squares monotone logistic remap of predictions onto gt.

    Returns (fit, remapped). ``fit is None`` signals the identity
    fallback: the optimizer failed or never beat the raw predictions.
    """
    p, g = _aligned(pred, gt, 5)
    if np.ptp(p) == 0.0:
        raise UndefinedMetricError("logistic fit: constant predictions")

    def sse(params) -> float:
        b1, b2, b3, b4 = params
        if abs(b4) < 1e-12 or not np.all(np.isfinite(params)):
            return np.inf
        mapped = LogisticFit(b1, b2, b3, b4)(p)
        return float(np.sum((mapped - g) ** 2))

    spread = float(np.std(p))
    init = np.array([float(np.max(g)), float(np.min(g)),
                     float(np.median(p)), spread if spread > 0 else 1.0])
    rng = np.random.default_rng(seed)
    best: tuple[float, np.ndarray] | None = None
    for restart in range(LOGISTIC_RESTARTS):
        if restart == 0:
            start, budget = init, 3000     # moment-based start gets the big budget
        else:
            start = init * rng.normal(1.0, 0.3, size=4) + rng.normal(0.0, 0.1, size=4)
            budget = 700
        if abs(start[3]) < 1e-6:
            start[3] = 1e-3
        res = minimize(sse, start, method="Nelder-Mead",
                       options={"maxiter": budget, "xatol": 1e-10, "fatol": 1e-12,
                                "adaptive": True})
        value = sse(res.x)
        if math.isfinite(value) and (best is None or value < best[0]):
            best = (value, res.x)
        if best is not None and best[0] < p.shape[0] * 1e-16:
            break    # already an exact fit, restarts cannot improve it
    identity_sse = float(np.sum((p - g) ** 2))
    if best is None or best[0] > identity_sse:
        return None, p.copy()
    fit = LogisticFit(*(float(v) for v in best[1]))
    return fit, fit(p)


# ------------------------------------------------------------------ splits

@dataclass(frozen=True)
class SplitSpec:
    protocol: str                   # facial_id | submit_id | inter_subset
    seed: int
    held_out: tuple[str, ...]       # group labels in the test side
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]


_GROUP_KEYS: dict[str, tuple[Callable[[VideoRecord], str], int]] = {
    "facial_id": (lambda r: r.facial_id_pair, FACIAL_ID_HELD_OUT),
    "submit_id": (lambda r: r.submit_id, SUBMIT_ID_HELD_OUT),
}


def make_split(records: Sequence[VideoRecord], protocol: str, seed: int) -> SplitSpec:
    """Group-respecting split: shuffle group labels, hold out the first few."""
    if protocol not in _GROUP_KEYS:
        raise SplitError(f"unknown intra-subset protocol {protocol!r}")
    if not records:
        raise SplitError("no records to split")
    if len({r.subset for r in records}) != 1:
        raise SplitError("intra-subset protocols need records from a single subset")
    key, n_held = _GROUP_KEYS[protocol]
    groups = sorted({key(r) for r in records})
    if len(groups) <= n_held:
        raise SplitError(
            f"{protocol} split needs more than {n_held} groups, found {len(groups)}")
    held = set(shuffled(groups, seed)[:n_held])
    test_ids = tuple(r.video_id for r in records if key(r) in held)
    train_ids = tuple(r.video_id for r in records if key(r) not in held)
    return SplitSpec(protocol, seed, tuple(sorted(held)), train_ids, test_ids)


def method_aggregate(preds, gts, submit_ids: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    """Per-submit-id means of predictions and ground truth, label-ordered."""
    p, g = _aligned(preds, gts, 1)
    ids = list(submit_ids)
    if len(ids) != p.shape[0]:
        raise SchemaError(f"{len(ids)} submit ids for {p.shape[0]} predictions")
    labels = sorted(set(ids))
    if len(labels) < 2:
        raise UndefinedMetricError("method aggregation needs at least 2 submit ids")
    ids_arr = np.array(ids)
    mp = np.array([p[ids_arr == label].mean() for label in labels])
    mg = np.array([g[ids_arr == label].mean() for label in labels])
    return mp, mg


# ------------------------------------------------------------------ report

@dataclass(frozen=True)
class LevelMetrics:
    srcc: float
    plcc: float
    rmse: float
    logistic: tuple[float, float, float, float] | None
    logistic_fallback: bool


@dataclass(frozen=True)
class IterationResult:
    seed: int
    held_out: tuple[str, ...]
    n_train: int
    n_test: int
    video: LevelMetrics
    method: LevelMetrics


@dataclass(frozen=True)
class EvaluationReport:
    protocol: str
    feature_model: str
    iterations: tuple[IterationResult, ...]
    skipped: tuple[tuple[int, str], ...] = ()
    meta: dict = field(default_factory=dict)

    def aggregate(self) -> dict:
        out: dict = {}
        for level in ("video", "method"):
            level_agg = {}
            for metric in ("srcc", "plcc", "rmse"):
                values = [getattr(getattr(it, level), metric) for it in self.iterations]
                if values:
                    mean = float(np.mean(values))
                    std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
                else:
                    mean, std = float("nan"), float("nan")
                level_agg[metric] = {"mean": mean, "std": std}
            if level == "video":
                out.update(level_agg)
            else:
                out["method"] = level_agg
        return out


def _level_dict(level: LevelMetrics) -> dict:
    return {"srcc": level.srcc, "plcc": level.plcc, "rmse": level.rmse,
            "logistic": list(level.logistic) if level.logistic else None,
            "logistic_fallback": level.logistic_fallback}


def report_to_dict(report: EvaluationReport) -> dict:
    return {
        "protocol": report.protocol,
        "feature_model": report.feature_model,
        "iterations": [
            {"seed": it.seed, "held_out": list(it.held_out),
             "n_train": it.n_train, "n_test": it.n_test,
             "video": _level_dict(it.video), "method": _level_dict(it.method)}
            for it in report.iterations
        ],
        "aggregate": report.aggregate(),
        "skipped": [{"seed": seed, "reason": reason} for seed, reason in report.skipped],
        "meta": report.meta,
    }


def _level_from_dict(payload: dict) -> LevelMetrics:
    logistic = payload.get("logistic")
    return LevelMetrics(payload["srcc"], payload["plcc"], payload["rmse"],
                        tuple(logistic) if logistic else None,
                        payload.get("logistic_fallback", False))


def report_from_dict(payload: dict) -> EvaluationReport:
    iterations = tuple(
        IterationResult(row["seed"], tuple(row["held_out"]),
                        row["n_train"], row["n_test"],
                        _level_from_dict(row["video"]), _level_from_dict(row["method"]))
        for row in payload["iterations"])
    skipped = tuple((row["seed"], row["reason"]) for row in payload.get("skipped", []))
    return EvaluationReport(payload["protocol"], payload["feature_model"],
                            iterations, skipped, payload.get("meta", {}))


def save_report(report: EvaluationReport, path) -> None:
    Path(path).write_text(json.dumps(report_to_dict(report), indent=1) + "\n",
                          encoding="utf-8")


def load_report(path) -> EvaluationReport:
    return report_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def report_to_csv(report: EvaluationReport, path) -> None:
    """Flat per-iteration export for scatter/fit plotting."""
    import csv

    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "held_out", "video_srcc", "video_plcc", "video_rmse",
                         "method_srcc", "method_plcc", "method_rmse"])
        for it in report.iterations:
            writer.writerow([it.seed, "|".join(it.held_out),
                             repr(it.video.srcc), repr(it.video.plcc), repr(it.video.rmse),
                             repr(it.method.srcc), repr(it.method.plcc), repr(it.method.rmse)])


# --------------------------------------------------------------- benchmark

@dataclass(frozen=True)
class BenchmarkConfig:
    kernel: str = "rbf"
    c_grid: tuple[float, ...] = DEFAULT_C_GRID
    gamma_grid: tuple[float, ...] = DEFAULT_GAMMA_GRID
    epsilon: float = DEFAULT_EPSILON
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER
    # exploratory budget: grid points this stubborn never win anyway
    grid_max_iter: int = 200_000
    predictor: str = "svr"                    # "svr" | "random"
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    selection_threshold: int = SELECTION_WIDTH_THRESHOLD
    jobs: int = 1


def random_predictions(n: int, seed: int) -> np.ndarray:
    """Seeded uniform guesses in [1, 5] (the random-baseline predictor)."""
    rng = SplitMix64(seed ^ _RANDOM_PREDICTOR_SALT)
    return np.array([1.0 + 4.0 * rng.next_float() for _ in range(n)])


def _metrics_for_level(preds: np.ndarray, gts: np.ndarray, seed: int) -> LevelMetrics:
    s = srcc(preds, gts)
    if preds.shape[0] >= 5:
        fit, remapped = fit_logistic4(preds, gts, seed=seed)
    else:
        fit, remapped = None, preds  # too few points to fit four parameters
    params = (fit.beta1, fit.beta2, fit.beta3, fit.beta4) if fit else None
    return LevelMetrics(s, plcc(remapped, gts), rmse(remapped, gts),
                        params, fit is None)


def _run_iteration(design: DesignMatrix, records_by_id: dict[str, VideoRecord],
                   split: SplitSpec, config: BenchmarkConfig) -> IterationResult:
    index = {vid: i for i, vid in enumerate(design.video_ids)}
    train_rows = np.array([index[v] for v in split.train_ids])
    test_rows = np.array([index[v] for v in split.test_ids])
    X_train, y_train = design.X[train_rows], design.y[train_rows]
    X_test, y_test = design.X[test_rows], design.y[test_rows]
    if np.ptp(y_test) == 0.0:
        raise UndefinedMetricError("constant test targets")

    if config.predictor == "random":
        preds = random_predictions(len(test_rows), split.seed)
    elif config.predictor == "svr":
        grid = default_grid(config.kernel, config.c_grid, config.gamma_grid)
        search = grid_search(X_train, y_train, config.kernel, grid, seed=split.seed,
                             epsilon=config.epsilon, tol=config.tol,
                             max_iter=config.grid_max_iter)
        model = train_svr(X_train, y_train, kernel=config.kernel, C=search.best_C,
                          gamma=search.best_gamma, epsilon=config.epsilon,
                          tol=config.tol, max_iter=config.max_iter)
        preds = predict(model, X_test)
    else:
        raise ValueError(f"unknown predictor {config.predictor!r}")

    video = _metrics_for_level(preds, y_test, split.seed)
    submit_ids = [records_by_id[v].submit_id for v in split.test_ids]
    m_preds, m_gts = method_aggregate(preds, y_test, submit_ids)
    method = _metrics_for_level(m_preds, m_gts, split.seed)
    return IterationResult(split.seed, split.held_out, len(train_rows),
                           len(test_rows), video, method)


_POOL_STATE: dict = {}


def _pool_worker(args) -> tuple[int, IterationResult | None, str | None]:
    split = args
    try:
        result = _run_iteration(_POOL_STATE["design"], _POOL_STATE["records"],
                                split, _POOL_STATE["config"])
        return split.seed, result, None
    except (UndefinedMetricError, ConvergenceError) as exc:
        return split.seed, None, str(exc)


def run_benchmark(design: DesignMatrix, records: Sequence[VideoRecord],
                  protocol: str, iterations: int = DEFAULT_ITERATIONS,
                  config: BenchmarkConfig = BenchmarkConfig(),
                  seed_base: int = 0, feature_model: str = "features",
                  selection: SelectionResult | None = None) -> EvaluationReport:
    """Full intra-subset protocol: split/search/train/score per iteration.

    Feature selection runs once on the whole pool (only when the width
    exceeds the selection threshold, or when a precomputed selection is
    passed); grid search runs inside every iteration on its train side.
    """
    known = {r.video_id for r in records}
    missing = [v for v in design.video_ids if v not in known]
    if missing:
        raise SchemaError(f"features for unknown videos: {missing[:3]}")
    records = [r for r in records if r.video_id in set(design.video_ids)]

    meta: dict = {"seed_base": seed_base, "kernel": config.kernel,
                  "predictor": config.predictor}
    if selection is None and config.predictor == "svr" \
            and design.X.shape[1] > config.selection_threshold:
        selection = run_selection(design.X, design.y, config.selection, seed_base)
    if selection is not None:
        design = DesignMatrix(apply_selection(design.X, selection), design.y,
                              tuple(design.feature_names[i] for i in selection.selected_indices),
                              design.video_ids)
        meta["selection_k"] = selection.k

    records_by_id = {r.video_id: r for r in records}
    splits = [make_split(records, protocol, seed_base + i) for i in range(iterations)]

    jobs = max(1, config.jobs)
    outcomes: list[tuple[int, IterationResult | None, str | None]] = []
    if jobs == 1 or len(splits) <= 1:
        for split in splits:
            try:
                outcomes.append((split.seed, _run_iteration(design, records_by_id,
                                                            split, config), None))
            except (UndefinedMetricError, ConvergenceError) as exc:
                outcomes.append((split.seed, None, str(exc)))
    else:
        from concurrent.futures import ProcessPoolExecutor

        _POOL_STATE.update(design=design, records=records_by_id, config=config)
        try:
            with ProcessPoolExecutor(max_workers=min(jobs, os.cpu_count() or 1)) as pool:
                outcomes = list(pool.map(_pool_worker, splits, chunksize=1))
        finally:
            _POOL_STATE.clear()
    outcomes.sort(key=lambda t: t[0])

    results = tuple(r for _, r, _ in outcomes if r is not None)
    skipped = tuple((seed, reason) for seed, r, reason in outcomes if r is None)
    for seed, reason in skipped:
        log.warning("iteration %d skipped: %s", seed, reason)
    return EvaluationReport(protocol, feature_model, results, skipped, meta)


def evaluate_predictions(preds: np.ndarray, design: DesignMatrix,
                         records: Sequence[VideoRecord],
                         feature_model: str = "features") -> EvaluationReport:
    """Single-shot evaluation of precomputed predictions at both levels."""
    records_by_id = {r.video_id: r for r in records}
    missing = [v for v in design.video_ids if v not in records_by_id]
    if missing:
        raise SchemaError(f"features for unknown videos: {missing[:3]}")
    video = _metrics_for_level(np.asarray(preds, dtype=np.float64), design.y, seed=0)
    submit_ids = [records_by_id[v].submit_id for v in design.video_ids]
    m_preds, m_gts = method_aggregate(preds, design.y, submit_ids)
    method = _metrics_for_level(m_preds, m_gts, seed=0)
    subsets = sorted({records_by_id[v].subset for v in design.video_ids})
    iteration = IterationResult(0, tuple(subsets), 0, len(design.video_ids),
                                video, method)
    return EvaluationReport("single", feature_model, (iteration,), (), {})


def run_inter_subset(train_design: DesignMatrix, test_design: DesignMatrix,
                     test_records: Sequence[VideoRecord],
                     C: float, gamma: float | None, kernel: str = "rbf",
                     epsilon: float = DEFAULT_EPSILON, tol: float = DEFAULT_TOL,
                     max_iter: int = DEFAULT_MAX_ITER,
                     selection: SelectionResult | None = None,
                     predictor: str = "svr",
                     feature_model: str = "features") -> EvaluationReport:
    """Train on one subset, test on another with frozen hyperparameters.

    Selection and (C, gamma) must come from the intra-subset artifacts;
    nothing is re-searched here.
    """
    if train_design.feature_names != test_design.feature_names:
        raise SchemaError("train and test feature names do not match")
    if selection is not None:
        train_design = DesignMatrix(
            apply_selection(train_design.X, selection), train_design.y,
            tuple(train_design.feature_names[i] for i in selection.selected_indices),
            train_design.video_ids)
        test_design = DesignMatrix(
            apply_selection(test_design.X, selection), test_design.y,
            train_design.feature_names, test_design.video_ids)
    records_by_id = {r.video_id: r for r in test_records}
    missing = [v for v in test_design.video_ids if v not in records_by_id]
    if missing:
        raise SchemaError(f"test features for unknown videos: {missing[:3]}")

    if predictor == "random":
        preds = random_predictions(len(test_design.video_ids), 0)
    else:
        model = train_svr(train_design.X, train_design.y, kernel=kernel, C=C,
                          gamma=gamma, epsilon=epsilon, tol=tol, max_iter=max_iter)
        preds = predict(model, test_design.X)
    y_test = test_design.y
    video = _metrics_for_level(preds, y_test, seed=0)
    submit_ids = [records_by_id[v].submit_id for v in test_design.video_ids]
    m_preds, m_gts = method_aggregate(preds, y_test, submit_ids)
    method = _metrics_for_level(m_preds, m_gts, seed=0)
    subsets = sorted({r.subset for r in test_records if r.video_id in records_by_id})
    iteration = IterationResult(0, tuple(subsets), len(train_design.video_ids),
                                len(test_design.video_ids), video, method)
    meta = {"kernel": kernel, "C": C, "gamma": gamma, "predictor": predictor}
    return EvaluationReport("inter_subset", feature_model, (iteration,), (), meta)
