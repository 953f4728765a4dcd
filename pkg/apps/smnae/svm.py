"""Binary RBF-kernel SVM: SMO training, Platt-scaled probabilities, (C, gamma) grid search.

Feature matrices follow the column-per-sample convention.
"""
from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.distance import cdist
from scipy.special import expit

from .config import SvmConfig
from .errors import DimensionError, ValidationError
from .numerics import Matrix, as_matrix

logger = logging.getLogger(__name__)

# smallest admissible curvature along an SMO direction
TAU = 1e-12


@dataclass(frozen=True, eq=False)
class SvmModel:
    support_vectors: Matrix  # dim x n_sv
    alphas: np.ndarray  # signed by label
    bias: float
    gamma: float
    c: float
    platt_a: float | None = None
    platt_b: float | None = None
    converged: bool = True
    iterations: int = 0
    dual_trace: tuple[float, ...] = field(default=(), compare=False, repr=False)

    @property
    def dim(self) -> int:
        return self.support_vectors.shape[0]

    @property
    def n_support(self) -> int:
        return self.support_vectors.shape[1]


def rbf_kernel(x, y, gamma: float) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise DimensionError(f"rbf_kernel length mismatch: {x.size} vs {y.size}")
    if gamma <= 0:
        raise ValidationError(f"gamma must be > 0, got {gamma}")
    diff = x - y
    return float(np.exp(-gamma * np.dot(diff, diff)))


def kernel_matrix(a: Matrix, b: Matrix, gamma: float) -> Matrix:
    """K[i, j] = k(a[:, i], b[:, j])."""
    if a.shape[0] != b.shape[0]:
        raise DimensionError(f"kernel_matrix feature mismatch: {a.shape[0]} vs {b.shape[0]}")
    return np.exp(-gamma * cdist(a.T, b.T, "sqeuclidean"))


def _check_labels(labels: Sequence[int], n: int) -> np.ndarray:
    y = np.asarray(labels, dtype=np.float64).ravel()
    if y.size != n:
        raise DimensionError(f"{y.size} labels for {n} samples")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValidationError("SVM labels must be +1 or -1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValidationError("SVM training needs both classes present")
    return y


def _smo(k: Matrix, y: np.ndarray, c: float, tol: float, max_iter: int):
    """Maximal-violating-pair SMO on the dual; returns (alpha, rho, converged, iterations, trace)."""
    n = y.size
    alpha = np.zeros(n)
    grad = -np.ones(n)  # Q alpha - e
    trace: list[float] = [0.0]
    converged = False
    it = 0
    while it < max_iter:
        yg = -y * grad
        up = ((alpha < c) & (y > 0)) | ((alpha > 0) & (y < 0))
        low = ((alpha < c) & (y < 0)) | ((alpha > 0) & (y > 0))
        if not np.any(up) or not np.any(low):
            converged = True
            break
        i = int(np.argmax(np.where(up, yg, -np.inf)))
        j = int(np.argmin(np.where(low, yg, np.inf)))
        gap = yg[i] - yg[j]
        if gap < tol:
            converged = True
            break
        it += 1
        curv = max(k[i, i] + k[j, j] - 2.0 * k[i, j], TAU)
        t_max_i = c - alpha[i] if y[i] > 0 else alpha[i]
        t_max_j = alpha[j] if y[j] > 0 else c - alpha[j]
        t = min(gap / curv, t_max_i, t_max_j)
        d_i, d_j = y[i] * t, -y[j] * t
        alpha[i] += d_i
        alpha[j] += d_j
        # snap to the box
        for idx in (i, j):
            if alpha[idx] < 1e-15:
                alpha[idx] = 0.0
            elif alpha[idx] > c - 1e-15 * c:
                alpha[idx] = c
        grad += y * (y[i] * k[:, i] * d_i + y[j] * k[:, j] * d_j)
        trace.append(float(0.5 * np.sum(alpha) - 0.5 * np.dot(alpha, grad)))
        if it % 10_000 == 0:
            logger.debug(f"SMO progress: iter={it}, gap={gap:.3e}, dual={trace[-1]:.6g}")

    # offset from free multipliers, LIBSVM style
    yg = y * grad
    at_upper = alpha >= c
    at_lower = alpha <= 0
    free = ~(at_upper | at_lower)
    if np.any(free):
        rho = float(np.mean(yg[free]))
    else:
        ub_mask = (at_upper & (y < 0)) | (at_lower & (y > 0))
        lb_mask = (at_upper & (y > 0)) | (at_lower & (y < 0))
        ub = float(np.min(yg[ub_mask])) if np.any(ub_mask) else np.inf
        lb = float(np.max(yg[lb_mask])) if np.any(lb_mask) else -np.inf
        rho = 0.5 * (ub + lb) if np.isfinite(ub) and np.isfinite(lb) else (ub if np.isfinite(ub) else lb)
    return alpha, rho, converged, it, tuple(trace)


def fit_platt(decisions: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Regularized maximum-likelihood sigmoid fit; the slope is kept non-positive."""
    f = np.asarray(decisions, dtype=np.float64).ravel()
    prior1 = float(np.sum(y > 0))
    prior0 = float(y.size - prior1)
    target = np.where(y > 0, (prior1 + 1.0) / (prior1 + 2.0), 1.0 / (prior0 + 2.0))

    def objective(theta: np.ndarray) -> tuple[float, np.ndarray]:
        a, b = theta
        z = a * f + b
        nll = float(np.sum(np.logaddexp(0.0, z) - (1.0 - target) * z))
        resid = target - expit(-z)
        return nll, np.array([np.dot(resid, f), np.sum(resid)])

    theta0 = np.array([0.0, np.log((prior0 + 1.0) / (prior1 + 1.0))])
    res = minimize(objective, theta0, jac=True, method="L-BFGS-B", bounds=[(None, 0.0), (None, None)])
    a, b = (float(v) for v in res.x)
    if a >= -1e-12:
        logger.warning(f"Platt slope clamped: a={a:.3e}, b={b:.4f}, n={f.size}")
    return a, b


def train_svm(features: Matrix, labels: Sequence[int], c: float, gamma: float, tol: float = 1e-3,
              max_iter: int = 100_000, kernel: Matrix | None = None) -> SvmModel:
    x = as_matrix(features, "SVM features")
    n = x.shape[1]
    y = _check_labels(labels, n)
    if c <= 0:
        raise ValidationError(f"C must be > 0, got {c}")
    if gamma <= 0:
        raise ValidationError(f"gamma must be > 0, got {gamma}")
    k = kernel_matrix(x, x, gamma) if kernel is None else kernel
    if k.shape != (n, n):
        raise DimensionError(f"precomputed kernel is {k.shape}, expected {n}x{n}")

    alpha, rho, converged, iterations, trace = _smo(k, y, c, tol, max_iter)
    if not converged:
        logger.warning(f"SMO not converged: iterations={iterations}, max_iter={max_iter}, tol={tol:.1e}")
    sv = alpha > 0
    signed = (y * alpha)[sv]
    decisions = signed @ k[sv, :] - rho
    a, b = fit_platt(decisions, y)
    acc = float(np.mean(np.sign(decisions) == y))
    logger.debug(f"SVM fit: n={n}, n_sv={int(sv.sum())}, c={c}, gamma={gamma:.4g}, iters={iterations}, "
                 f"train_acc={acc:.3f}")
    return SvmModel(support_vectors=x[:, sv].copy(), alphas=signed, bias=-rho, gamma=gamma, c=c,
                    platt_a=a, platt_b=b, converged=converged, iterations=iterations, dual_trace=trace)


def decision_values(model: SvmModel, x: Matrix) -> np.ndarray:
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.shape[0] != model.dim:
        raise DimensionError(f"features have dimension {x.shape[0]}, model expects {model.dim}")
    if model.n_support == 0:
        return np.full(x.shape[1], model.bias)
    return model.alphas @ kernel_matrix(model.support_vectors, x, model.gamma) + model.bias


def decision_value(model: SvmModel, x) -> float:
    return float(decision_values(model, np.asarray(x, dtype=np.float64).reshape(-1, 1))[0])


def probabilities(model: SvmModel, x: Matrix) -> np.ndarray:
    if model.platt_a is None or model.platt_b is None:
        raise ValidationError("SVM has no fitted Platt parameters")
    return expit(-(model.platt_a * decision_values(model, x) + model.platt_b))


def predict_proba(model: SvmModel, x) -> float:
    return float(probabilities(model, np.asarray(x, dtype=np.float64).reshape(-1, 1))[0])


def _stratified_folds(y: np.ndarray, folds: int) -> np.ndarray:
    fold = np.empty(y.size, dtype=int)
    for cls in (-1.0, 1.0):
        idx = np.flatnonzero(y == cls)
        fold[idx] = np.arange(idx.size) % folds
    return fold


def grid_search_svm(features: Matrix, labels: Sequence[int], cfg: SvmConfig) -> tuple[SvmModel, list[dict]]:
    """Stratified k-fold search over C x (gamma_scale / dim); refits the best pair on all data."""
    x = as_matrix(features, "SVM features")
    y = _check_labels(labels, x.shape[1])
    base_gamma = 1.0 / x.shape[0]
    folds = min(cfg.folds, int(np.sum(y > 0)), int(np.sum(y < 0)))
    gammas = [s * base_gamma for s in cfg.gamma_scales]
    if folds < 2:
        logger.warning(f"Grid search skipped: folds={folds}, n={y.size}")
        return train_svm(x, y, cfg.c, cfg.gamma or base_gamma, cfg.tol, cfg.max_iter), []

    fold = _stratified_folds(y, folds)
    results: list[dict] = []
    best: tuple[float, float, float] | None = None
    for gamma in gammas:
        k_full = kernel_matrix(x, x, gamma)
        for c in cfg.c_grid:
            correct = 0
            for f in range(folds):
                tr, te = fold != f, fold == f
                model = train_svm(x[:, tr], y[tr], c, gamma, cfg.tol, cfg.max_iter, kernel=k_full[np.ix_(tr, tr)])
                correct += int(np.sum(np.sign(decision_values(model, x[:, te])) == y[te]))
            acc = correct / y.size
            results.append({"c": c, "gamma": gamma, "cv_accuracy": acc})
            if best is None or acc > best[0]:
                best = (acc, c, gamma)
    assert best is not None
    acc, c, gamma = best
    logger.info(f"SVM grid search: best_c={c}, best_gamma={gamma:.4g}, cv_accuracy={acc:.3f}, folds={folds}")
    return train_svm(x, y, c, gamma, cfg.tol, cfg.max_iter), results


def fit_classifier(features: Matrix, labels: Sequence[int], cfg: SvmConfig) -> SvmModel:
    if cfg.grid_search:
        model, _ = grid_search_svm(features, labels, cfg)
    else:
        gamma = cfg.gamma if cfg.gamma is not None else 1.0 / features.shape[0]
        model = train_svm(features, labels, cfg.c, gamma, cfg.tol, cfg.max_iter)
    logger.info(f"SVM trained: n={features.shape[1]}, dim={features.shape[0]}, n_sv={model.n_support}, "
                f"c={model.c}, gamma={model.gamma:.4g}, converged={model.converged}")
    return model
