"""Epsilon-insensitive support-vector regression trained by SMO.

The dual is solved in the doubled (alpha, alpha*) form. The working set
takes the maximal-violating variable on the up side and pairs it with the
second-order (maximal objective decrease) partner on the low side; plain
maximal-violating-pair selection stalls far from tolerance on the
low-rank linear kernels this pipeline trains by the hundreds. Convergence
is declared when the KKT violation over all variables drops below
``tol``. Targets are never standardized (MOS scale is kept so RMSE stays
interpretable); features are standardized per model and the statistics
travel with the model.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConvergenceError, KernelError, SchemaError, UndefinedMetricError
from .rng import shuffled

log = logging.getLogger(__name__)

DEFAULT_EPSILON = 0.1
DEFAULT_TOL = 1e-3
DEFAULT_MAX_ITER = 1_000_000
DEFAULT_C_GRID = (0.1, 1.0, 10.0, 100.0, 1000.0)
DEFAULT_GAMMA_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)
VALIDATION_FRACTION = 0.2


# ------------------------------------------------------------ standardizer

@dataclass(frozen=True)
class Standardizer:
    """Per-feature (mean, std) pairs; zero-variance columns map to 0."""

    means: np.ndarray
    stds: np.ndarray


def standardize_fit(X: np.ndarray) -> Standardizer:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError(f"expected a non-empty 2-d design matrix, got {X.shape}")
    means = X.mean(axis=0)
    stds = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.zeros(X.shape[1])
    return Standardizer(means, stds)


def standardize_apply(standardizer: Standardizer, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != standardizer.means.shape[0]:
        raise SchemaError(
            f"width {X.shape[1] if X.ndim == 2 else '?'} does not match "
            f"standardizer width {standardizer.means.shape[0]}")
    safe = np.where(standardizer.stds > 0.0, standardizer.stds, 1.0)
    inv = np.where(standardizer.stds > 0.0, 1.0 / safe, 0.0)
    return (X - standardizer.means) * inv


# ----------------------------------------------------------------- kernels

def pairwise_sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    aa = np.sum(A * A, axis=1)[:, None]
    bb = np.sum(B * B, axis=1)[None, :]
    return np.maximum(aa + bb - 2.0 * (A @ B.T), 0.0)


def kernel_matrix(kernel: str, gamma: float | None,
                  A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if kernel == "linear":
        return A @ B.T
    if kernel == "rbf":
        if gamma is None or gamma <= 0.0:
            raise KernelError(f"rbf kernel needs gamma > 0, got {gamma}")
        return np.exp(-gamma * pairwise_sq_dists(A, B))
    raise KernelError(f"unknown kernel {kernel!r}")


# --------------------------------------------------------------- SMO core

def _smo_loop(K, y, C, epsilon, tol, max_iter):  # pragma: no cover - jitted
    n = y.shape[0]
    m = 2 * n
    alpha = np.zeros(m)
    # score[t] = -sign(t) * gradient[t]; equals the bias at optimal free t
    score = np.empty(m)
    for t in range(n):
        score[t] = y[t] - epsilon
        score[n + t] = y[t] + epsilon
    active = np.arange(m)
    n_act = m
    interval = m if m < 1000 else 1000
    countdown = interval
    shrunk = False
    gap = np.inf
    it = 0
    while it < max_iter:
        best_up = -np.inf
        best_low = np.inf
        i = -1
        for idx in range(n_act):
            t = active[idx]
            a = alpha[t]
            if t < n:
                in_up = a < C
                in_low = a > 0.0
            else:
                in_up = a > 0.0
                in_low = a < C
            v = score[t]
            if in_up and v > best_up:
                best_up = v
                i = t
            if in_low and v < best_low:
                best_low = v
        gap = best_up - best_low
        if gap <= tol:
            if not shrunk:
                break
            # bring shrunk variables back and verify full KKT
            kb = np.zeros(n)
            for u in range(n):
                b = alpha[u] - alpha[n + u]
                if b != 0.0:
                    row = K[u]
                    for t in range(n):
                        kb[t] += row[t] * b
            for t in range(n):
                score[t] = y[t] - epsilon - kb[t]
                score[n + t] = y[t] + epsilon - kb[t]
            for t in range(m):
                active[t] = t
            n_act = m
            shrunk = False
            countdown = interval
            continue
        ik = i if i < n else i - n
        row_sel = K[ik]
        k_ii = K[ik, ik]
        # second-order partner choice: maximal objective decrease
        best_gain = -np.inf
        j = -1
        pair_gap = 0.0
        pair_eta = 1e-12
        for idx in range(n_act):
            t = active[idx]
            a = alpha[t]
            if t < n:
                in_low = a > 0.0
            else:
                in_low = a < C
            if not in_low:
                continue
            diff = best_up - score[t]
            if diff <= 0.0:
                continue
            tk = t if t < n else t - n
            eta = k_ii + K[tk, tk] - 2.0 * row_sel[tk]
            if eta < 1e-12:
                eta = 1e-12
            g = diff * diff / eta
            if g > best_gain:
                best_gain = g
                j = t
                pair_gap = diff
                pair_eta = eta
        if j < 0:
            break
        jk = j if j < n else j - n
        delta = pair_gap / pair_eta
        room_i = (C - alpha[i]) if i < n else alpha[i]
        room_j = alpha[j] if j < n else (C - alpha[j])
        if room_i < delta:
            delta = room_i
        if room_j < delta:
            delta = room_j
        if i < n:
            alpha[i] += delta
        else:
            alpha[i] -= delta
        if j < n:
            alpha[j] -= delta
        else:
            alpha[j] += delta
        row_j = K[jk]
        for idx in range(n_act):
            t = active[idx]
            tk = t if t < n else t - n
            score[t] -= delta * (row_sel[tk] - row_j[tk])
        it += 1
        countdown -= 1
        if countdown == 0:
            countdown = interval
            # drop bound variables that cannot be selected from either side
            kept = 0
            for idx in range(n_act):
                t = active[idx]
                a = alpha[t]
                v = score[t]
                if t < n:
                    up_only = a <= 0.0
                    low_only = a >= C
                else:
                    up_only = a >= C
                    low_only = a <= 0.0
                drop = (up_only and v <= best_low) or (low_only and v >= best_up)
                if not drop:
                    active[kept] = t
                    kept += 1
            if kept < n_act:
                n_act = kept
                shrunk = True
    return alpha, score, gap, it


try:  # the jit pays for itself within one grid search
    from numba import njit

    _smo_loop = njit(cache=True)(_smo_loop)
except ImportError:  # pragma: no cover
    log.warning("numba unavailable; SVR training will be slow")


def solve_svr_dual(K: np.ndarray, y: np.ndarray, C: float, epsilon: float,
                   tol: float = DEFAULT_TOL,
                   max_iter: int = DEFAULT_MAX_ITER) -> tuple[np.ndarray, float, float, int]:
    """Solve the epsilon-SVR dual on a precomputed kernel matrix.

    Returns (dual coefficients beta, bias, final KKT gap, iterations).
    """
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = y.shape[0]
    alpha, score, gap, iters = _smo_loop(K, y, float(C), float(epsilon),
                                         float(tol), int(max_iter))
    if gap > tol:
        raise ConvergenceError(
            f"SMO did not converge in {max_iter} iterations (KKT violation {gap:.3e})")
    alpha = np.clip(alpha, 0.0, C)
    beta = alpha[:n] - alpha[n:]
    free = (alpha > 0.0) & (alpha < C)
    if free.any():
        bias = float(score[free].mean())
    else:
        up = np.concatenate([score[:n][alpha[:n] < C], score[n:][alpha[n:] > 0.0]])
        low = np.concatenate([score[:n][alpha[:n] > 0.0], score[n:][alpha[n:] < C]])
        hi = up.max() if up.size else -np.inf
        lo = low.min() if low.size else np.inf
        bias = float((hi + lo) / 2.0) if np.isfinite(hi) and np.isfinite(lo) \
            else float(np.mean(y))
    return beta, bias, float(gap), int(iters)


def dual_objective(K: np.ndarray, y: np.ndarray, beta: np.ndarray,
                   epsilon: float) -> float:
    """Dual objective in reduced form: 1/2 b'Kb - y'b + eps*|b|_1 (minimized)."""
    return float(0.5 * beta @ K @ beta - y @ beta + epsilon * np.abs(beta).sum())


# ------------------------------------------------------------------ model

@dataclass(frozen=True)
class SvrModel:
    kernel: str
    gamma: float | None
    C: float
    epsilon: float
    support_vectors: np.ndarray      # standardized feature space
    dual_coeffs: np.ndarray          # alpha_i - alpha*_i per support vector
    bias: float
    standardizer: Standardizer
    feature_names: tuple[str, ...] | None = None
    kkt_gap: float = 0.0
    n_iterations: int = 0


def train_svr(X: np.ndarray, y: np.ndarray, kernel: str = "rbf",
              C: float = 1.0, gamma: float | None = None,
              epsilon: float = DEFAULT_EPSILON, tol: float = DEFAULT_TOL,
              max_iter: int = DEFAULT_MAX_ITER,
              feature_names: Sequence[str] | None = None) -> SvrModel:
    """Train one epsilon-SVR model; deterministic given its inputs."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise SchemaError(f"X {X.shape} does not align with y {y.shape}")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 training rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in training data")
    if C <= 0.0:
        raise ValueError(f"C must be positive, got {C}")
    if epsilon < 0.0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}")
    if kernel == "linear":
        gamma = None
    standardizer = standardize_fit(X)
    Xs = standardize_apply(standardizer, X)
    K = kernel_matrix(kernel, gamma, Xs, Xs)
    beta, bias, gap, iters = solve_svr_dual(K, y, C, epsilon, tol, max_iter)
    sv_mask = beta != 0.0
    return SvrModel(kernel, gamma, float(C), float(epsilon),
                    Xs[sv_mask].copy(), beta[sv_mask].copy(), bias,
                    standardizer,
                    tuple(feature_names) if feature_names is not None else None,
                    gap, iters)


def predict(model: SvrModel, X: np.ndarray,
            feature_names: Sequence[str] | None = None) -> np.ndarray:
    """f(x) = sum_i dual_i K(sv_i, x) + bias on standardized x."""
    if feature_names is not None and model.feature_names is not None \
            and tuple(feature_names) != model.feature_names:
        raise SchemaError("feature names do not match the model's training names")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise SchemaError(f"expected a 2-d matrix, got shape {X.shape}")
    if X.shape[0] == 0:
        return np.zeros(0)
    Xs = standardize_apply(model.standardizer, X)
    if model.dual_coeffs.size == 0:
        return np.full(X.shape[0], model.bias)
    K = kernel_matrix(model.kernel, model.gamma, Xs, model.support_vectors)
    return K @ model.dual_coeffs + model.bias


def linear_weights(model: SvrModel) -> np.ndarray:
    """w = sum_i dual_i sv_i in standardized space (linear kernel only)."""
    if model.kernel != "linear":
        raise KernelError(f"linear weights undefined for {model.kernel!r} kernel")
    width = model.standardizer.means.shape[0]
    if model.dual_coeffs.size == 0:
        return np.zeros(width)
    return model.dual_coeffs @ model.support_vectors


# ----------------------------------------------------------- serialization

def save_model(model: SvrModel, path) -> None:
    payload = {
        "kernel": model.kernel,
        "gamma": model.gamma,
        "C": model.C,
        "epsilon": model.epsilon,
        "bias": model.bias,
        "support_vectors": model.support_vectors.tolist(),
        "dual_coeffs": model.dual_coeffs.tolist(),
        "standardizer": {"means": model.standardizer.means.tolist(),
                         "stds": model.standardizer.stds.tolist()},
        "feature_names": list(model.feature_names) if model.feature_names else None,
        "kkt_gap": model.kkt_gap,
        "n_iterations": model.n_iterations,
    }
    Path(path).write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")


def load_model(path) -> SvrModel:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        std = Standardizer(np.array(payload["standardizer"]["means"], dtype=np.float64),
                           np.array(payload["standardizer"]["stds"], dtype=np.float64))
        names = payload["feature_names"]
        n_sv = len(payload["dual_coeffs"])
        svs = np.array(payload["support_vectors"], dtype=np.float64)
        if n_sv == 0:
            svs = svs.reshape(0, std.means.shape[0])
        return SvrModel(payload["kernel"], payload["gamma"], payload["C"],
                        payload["epsilon"], svs,
                        np.array(payload["dual_coeffs"], dtype=np.float64),
                        payload["bias"], std,
                        tuple(names) if names else None,
                        payload.get("kkt_gap", 0.0), payload.get("n_iterations", 0))
    except KeyError as exc:
        raise SchemaError(f"{path}: model file missing field {exc}") from None


# ------------------------------------------------------------- grid search

@dataclass(frozen=True)
class GridSearchResult:
    best_C: float
    best_gamma: float | None
    criterion: str                       # "plcc", or "rmse" fallback
    fallback_rmse: bool
    table: tuple[dict, ...] = field(repr=False)


def default_grid(kernel: str,
                 c_grid: Sequence[float] = DEFAULT_C_GRID,
                 gamma_grid: Sequence[float] = DEFAULT_GAMMA_GRID) -> list[tuple[float, float | None]]:
    """Grid points ordered by (C, gamma) so ties resolve toward smaller values."""
    cs = sorted(c_grid)
    if kernel == "linear":
        return [(c, None) for c in cs]
    return [(c, g) for c in cs for g in sorted(gamma_grid)]


def _plcc_score(pred: np.ndarray, gt: np.ndarray) -> float:
    p = pred - pred.mean()
    g = gt - gt.mean()
    denom = np.sqrt(np.sum(p * p) * np.sum(g * g))
    if denom <= 0.0 or not np.isfinite(denom):
        raise UndefinedMetricError("constant vector in correlation")
    return float(np.sum(p * g) / denom)


def grid_search(X: np.ndarray, y: np.ndarray, kernel: str,
                grid: Sequence[tuple[float, float | None]], seed: int,
                epsilon: float = DEFAULT_EPSILON, tol: float = DEFAULT_TOL,
                max_iter: int = DEFAULT_MAX_ITER) -> GridSearchResult:
    """Pick (C, gamma) on a seeded random 20% validation subset.

    The best point maximizes validation PLCC (RMSE decides if validation
    targets are degenerate); the caller retrains on all the data. Grid
    points whose training fails or whose predictions are constant score
    -inf and cannot win.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if not grid:
        raise ValueError("empty hyperparameter grid")
    if y.shape[0] < 5:
        raise ValueError(f"need at least 5 rows for a 20% validation split, got {y.shape[0]}")
    order = shuffled(range(y.shape[0]), seed)
    n_val = max(1, round(VALIDATION_FRACTION * y.shape[0]))
    val_idx = np.array(sorted(order[:n_val]))
    tr_idx = np.array(sorted(order[n_val:]))

    standardizer = standardize_fit(X[tr_idx])
    Xs_tr = standardize_apply(standardizer, X[tr_idx])
    Xs_val = standardize_apply(standardizer, X[val_idx])
    y_tr, y_val = y[tr_idx], y[val_idx]
    if kernel == "rbf":
        d2_tr = pairwise_sq_dists(Xs_tr, Xs_tr)
        d2_val = pairwise_sq_dists(Xs_val, Xs_tr)
    else:
        k_tr = Xs_tr @ Xs_tr.T
        k_val = Xs_val @ Xs_tr.T

    degenerate_val = np.ptp(y_val) == 0.0
    points = sorted(grid, key=lambda p: (p[0], -1.0 if p[1] is None else p[1]))
    table = []
    for C, gamma in points:
        if kernel == "rbf":
            K = np.exp(-gamma * d2_tr)
            K_val = np.exp(-gamma * d2_val)
        else:
            K, K_val = k_tr, k_val
        entry: dict = {"C": C, "gamma": gamma, "plcc": None, "rmse": None}
        try:
            beta, bias, _, _ = solve_svr_dual(K, y_tr, C, epsilon, tol, max_iter)
            pred = K_val @ beta + bias
            entry["rmse"] = float(np.sqrt(np.mean((pred - y_val) ** 2)))
            if not degenerate_val:
                entry["plcc"] = _plcc_score(pred, y_val)
        except ConvergenceError as exc:
            entry["error"] = str(exc)
            log.warning("grid point C=%g gamma=%s failed: %s", C, gamma, exc)
        except UndefinedMetricError:
            pass  # constant predictions: plcc stays None
        table.append(entry)

    criterion = "rmse" if degenerate_val else "plcc"
    fallback = degenerate_val
    if criterion == "plcc" and all(e["plcc"] is None for e in table):
        criterion = "rmse"
        fallback = True
    best = None
    for entry in table:  # points are (C, gamma)-sorted: first win = smallest tie
        value = entry[criterion]
        if value is None:
            continue
        better = best is None or (value > best[0] if criterion == "plcc" else value < best[0])
        if better:
            best = (value, entry)
    if best is None:
        raise ConvergenceError("every grid point failed to train")
    return GridSearchResult(best[1]["C"], best[1]["gamma"], criterion,
                            fallback, tuple(table))
