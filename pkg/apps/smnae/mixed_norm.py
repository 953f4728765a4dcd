"""Row-group l2,p norm, the class-wise penalty and its proximal operator.

The prox subproblem is

    F(W) = 1/(2 eta) ||W - A||_F^2 + lam * sum_c ||W X_c||_{2,p}

Three solvers share one contract (F(out) <= F(A), monotone trace, and
`converged` only when the stationarity residual on nonzero rows is within tol):

* single class with X_c X_c^T = s^2 I and p = 1: block soft-thresholding, exact;
* single class with X_c X_c^T = s^2 I and p < 1: per-row scalar l_p thresholding
  solved by safeguarded Newton, guarded by a majorize-minimize fallback step;
* anything else: majorize-minimize on F with an isotropic quadratic surrogate.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .config import ProxConfig
from .errors import DimensionError, ValidationError
from .numerics import Matrix, check_finite

logger = logging.getLogger(__name__)

# groups below this norm are exactly zero
ZERO_NORM = 1e-12
# relative slack for objective comparisons at the limit of float resolution
ROUNDOFF = 1e-13


@dataclass(frozen=True, eq=False)
class ClassPartition:
    """Columns of a batch X split by class; X_c keeps the feature rows of X."""

    batches: tuple[Matrix, ...]
    labels: tuple = field(default=(), compare=False)

    def __post_init__(self) -> None:
        if not self.batches:
            raise ValidationError("ClassPartition needs at least one class batch")
        rows = {b.shape[0] for b in self.batches}
        if len(rows) != 1:
            raise DimensionError(f"class batches disagree on feature dimension: {sorted(rows)}")

    @classmethod
    def from_labels(cls, x: Matrix, labels) -> ClassPartition:
        """Partition the columns of `x` by label, classes in order of first appearance."""
        labels = list(labels)
        if len(labels) != x.shape[1]:
            raise DimensionError(f"{len(labels)} labels for {x.shape[1]} columns")
        order = list(dict.fromkeys(labels))
        idx = {c: [j for j, lab in enumerate(labels) if lab == c] for c in order}
        return cls(batches=tuple(x[:, idx[c]] for c in order), labels=tuple(order))

    def map(self, fn) -> ClassPartition:
        """Apply a column-wise transform to every class batch; class membership is unchanged."""
        return ClassPartition(batches=tuple(fn(b) for b in self.batches), labels=self.labels)

    @property
    def feature_dim(self) -> int:
        return self.batches[0].shape[0]

    @property
    def n_classes(self) -> int:
        return len(self.batches)

    @property
    def n_samples(self) -> int:
        return sum(b.shape[1] for b in self.batches)

    @cached_property
    def spectral_sq(self) -> tuple[float, ...]:
        """Largest eigenvalue of X_c X_c^T per class."""
        return tuple(float(np.linalg.norm(b, 2) ** 2) if b.size else 0.0 for b in self.batches)

    @cached_property
    def orthogonal_scale(self) -> float | None:
        """s when there is one class and X X^T = s^2 I, else None."""
        if self.n_classes != 1:
            return None
        x = self.batches[0]
        gram = x @ x.T
        s2 = float(np.trace(gram)) / gram.shape[0]
        if s2 <= 0.0:
            return None
        if np.max(np.abs(gram - s2 * np.eye(gram.shape[0]))) > 1e-10 * max(1.0, s2):
            return None
        return float(np.sqrt(s2))


@dataclass(frozen=True, eq=False)
class ProxResult:
    """Prox output; `residual` is the largest row norm of grad F on the active rows."""

    w: Matrix
    converged: bool
    iterations: int
    trace: tuple[float, ...]
    residual: float
    method: str


def _check_p(p: float) -> None:
    if not 0.0 < p <= 1.0:
        raise ValidationError(f"p must lie in (0, 1], got {p}")


def row_group_norms(w: Matrix) -> np.ndarray:
    return np.linalg.norm(w, axis=1)


def _power_sum(norms: np.ndarray, p: float) -> float:
    """(sum_i norms_i^p)^(1/p), exact 0 for an all-zero vector."""
    nz = norms[norms > 0.0]
    if nz.size == 0:
        return 0.0
    if p == 1.0:
        return float(np.sum(nz))
    # factor out the largest norm so the p-th powers cannot overflow/underflow
    top = float(np.max(nz))
    return top * float(np.sum((nz / top) ** p)) ** (1.0 / p)


def l2p_norm(w: Matrix, p: float) -> float:
    _check_p(p)
    return _power_sum(row_group_norms(w), p)


def class_penalty(w: Matrix, part: ClassPartition, p: float) -> float:
    _check_p(p)
    if w.shape[1] != part.feature_dim:
        raise DimensionError(f"W has {w.shape[1]} columns but class batches have {part.feature_dim} features")
    return sum(_power_sum(row_group_norms(w @ xc), p) for xc in part.batches)


def block_soft_threshold(a: Matrix, tau: float) -> Matrix:
    if tau < 0:
        raise ValidationError(f"tau must be >= 0, got {tau}")
    norms = row_group_norms(a)
    scale = np.zeros_like(norms)
    nz = norms > 0.0
    scale[nz] = np.maximum(0.0, 1.0 - tau / norms[nz])
    return a * scale[:, None]


def prox_objective(w: Matrix, a: Matrix, part: ClassPartition, cfg: ProxConfig) -> float:
    diff = w - a
    return float(np.sum(diff * diff)) / (2.0 * cfg.eta) + cfg.lam * class_penalty(w, part, cfg.p)


def prox_l2p(a: Matrix, part: ClassPartition, cfg: ProxConfig) -> ProxResult:
    """Approximate argmin_W F(W); never returns a point worse than A."""
    check_finite(a, "prox input A")
    if a.shape[1] != part.feature_dim:
        raise DimensionError(f"A has {a.shape[1]} columns but class batches have {part.feature_dim} features")
    if cfg.lam == 0.0:
        f0 = prox_objective(a, a, part, cfg)
        return ProxResult(w=a.copy(), converged=True, iterations=0, trace=(f0,), residual=0.0, method="identity")

    scale = part.orthogonal_scale
    if scale is not None:
        result = _prox_orthogonal(a, part, scale, cfg)
    else:
        result = _prox_majorize(a, part, cfg)
    if not result.converged:
        logger.debug(f"Prox not converged: method={result.method}, iters={result.iterations}, "
                     f"residual={result.residual:.3e}, tol={cfg.tol:.1e}")
    return result


def _lp_threshold(alpha: float, kappa: float, p: float) -> float:
    """argmin_{t>=0} 1/2 (t - alpha)^2 + (kappa/p) t^p by safeguarded Newton on the stationarity equation."""
    if alpha <= 0.0:
        return 0.0
    if kappa <= 0.0:
        return alpha
    # phi(t) = t - alpha + kappa t^(p-1) is convex on t > 0 with its minimum at t_hat
    t_hat = (kappa * (1.0 - p)) ** (1.0 / (2.0 - p))
    if t_hat >= alpha:
        return 0.0

    def phi(t: float) -> float:
        return t - alpha + kappa * t ** (p - 1.0)

    if phi(t_hat) > 0.0:
        return 0.0
    lo, hi, t = t_hat, alpha, alpha
    for _ in range(200):
        f = phi(t)
        if abs(f) <= 1e-15 * max(1.0, alpha):
            break
        if f > 0.0:
            hi = t
        else:
            lo = t
        slope = 1.0 + kappa * (p - 1.0) * t ** (p - 2.0)
        t_next = t - f / slope if slope > 0.0 else 0.5 * (lo + hi)
        if not lo < t_next < hi:
            t_next = 0.5 * (lo + hi)  # bisection fallback
        if abs(t_next - t) <= 1e-16 * max(1.0, alpha):
            t = t_next
            break
        t = t_next
    obj_t = 0.5 * (t - alpha) ** 2 + (kappa / p) * t ** p
    return t if obj_t < 0.5 * alpha * alpha else 0.0


def _prox_orthogonal(a: Matrix, part: ClassPartition, scale: float, cfg: ProxConfig) -> ProxResult:
    alpha = row_group_norms(a)
    directions = np.zeros_like(a)
    nz = alpha > 0.0
    directions[nz] = a[nz] / alpha[nz, None]
    mu = cfg.eta * cfg.lam * scale
    p = cfg.p

    def rebuild(t: np.ndarray) -> Matrix:
        return directions * t[:, None]

    f0 = prox_objective(a, a, part, cfg)
    if p == 1.0:
        t = np.maximum(alpha - mu, 0.0)
        w = rebuild(t)
        return ProxResult(w=w, converged=True, iterations=1, trace=(f0, prox_objective(w, a, part, cfg)),
                          residual=0.0, method="block-soft-threshold")

    def scalar_obj(t: np.ndarray) -> float:
        return 0.5 * float(np.sum((t - alpha) ** 2)) + mu * _power_sum(t, p)

    def stationarity(t: np.ndarray) -> float:
        act = t > ZERO_NORM
        if not np.any(act):
            return 0.0
        kappa = mu * _power_sum(t, p) ** (1.0 - p)
        # d/dt of eta * F; reported in the units of grad F
        return float(np.max(np.abs(t[act] - alpha[act] + kappa * t[act] ** (p - 1.0)))) / cfg.eta

    t = alpha.copy()
    phi = scalar_obj(t)
    trace = [f0]
    residual = stationarity(t)
    converged = residual <= cfg.tol
    it = 0
    while not converged and it < cfg.max_inner_iters:
        it += 1
        kappa = mu * _power_sum(t, p) ** (1.0 - p)
        cand = np.array([_lp_threshold(al, kappa, p) for al in alpha])
        phi_c = scalar_obj(cand)
        if phi_c > phi:
            # majorize-minimize step: linearize the concave outer norm at t
            weights = np.full_like(t, np.inf)
            act = t > ZERO_NORM
            weights[act] = _power_sum(t, p) ** (1.0 - p) * t[act] ** (p - 1.0)
            cand = np.where(act, np.maximum(alpha - mu * weights, 0.0), 0.0)
            phi_c = scalar_obj(cand)
        if phi_c > phi:
            break
        cand[cand <= ZERO_NORM] = 0.0
        t, phi = cand, phi_c
        # F(W) = phi / eta when the rows of W keep the directions of A
        trace.append(phi / cfg.eta)
        residual = stationarity(t)
        converged = residual <= cfg.tol
    return ProxResult(w=rebuild(t), converged=converged, iterations=it, trace=tuple(trace), residual=residual,
                      method="newton-lp-threshold")


def stationarity_residual(w: Matrix, a: Matrix, part: ClassPartition, cfg: ProxConfig) -> float:
    """Largest row norm of grad F over rows whose class projections are all nonzero."""
    p = cfg.p
    grad = (w - a) / cfg.eta
    active = row_group_norms(w) > ZERO_NORM
    for xc in part.batches:
        if xc.shape[1] == 0:
            continue
        proj = w @ xc
        r = row_group_norms(proj)
        nz = r > ZERO_NORM
        active &= nz
        g = _power_sum(r, p)
        if g <= ZERO_NORM:
            continue
        coef = np.zeros_like(r)
        coef[nz] = cfg.lam * g ** (1.0 - p) * r[nz] ** (p - 2.0)
        grad += coef[:, None] * (proj @ xc.T)
    if not np.any(active):
        return 0.0
    return float(np.max(row_group_norms(grad[active])))


def _zero_rows(w: Matrix, a: Matrix, part: ClassPartition, cfg: ProxConfig) -> Matrix:
    """Set to zero every row whose removal does not raise F, smallest rows first."""
    p = cfg.p
    norms = row_group_norms(w)
    rp = np.column_stack([row_group_norms(w @ xc) for xc in part.batches]) ** p
    sums = rp.sum(axis=0)
    quad = (np.sum(a * a, axis=1) - np.sum((w - a) ** 2, axis=1)) / (2.0 * cfg.eta)

    def change(rows: np.ndarray | int, totals: np.ndarray) -> np.ndarray:
        rest = np.maximum(totals - rp[rows], 0.0)
        return quad[rows] + cfg.lam * np.sum(rest ** (1.0 / p) - totals ** (1.0 / p), axis=-1)

    candidates = np.flatnonzero((norms > 0.0) & (change(np.arange(w.shape[0]), sums) <= 0.0))
    if candidates.size == 0:
        return w
    out = w.copy()
    for i in candidates[np.argsort(norms[candidates], kind="stable")]:
        if change(i, sums) <= 0.0:
            sums = np.maximum(sums - rp[i], 0.0)
            out[i] = 0.0
    return out


def _prox_majorize(a: Matrix, part: ClassPartition, cfg: ProxConfig) -> ProxResult:
    p, lam, eta = cfg.p, cfg.lam, cfg.eta
    rho = part.spectral_sq
    w = a.copy()
    f = prox_objective(w, a, part, cfg)
    trace = [f]
    residual = stationarity_residual(w, a, part, cfg)
    it = 0
    while residual > cfg.tol and it < cfg.max_inner_iters:
        it += 1
        num = a / eta
        den = np.full(a.shape[0], 1.0 / eta)
        frozen = np.zeros(a.shape[0], dtype=bool)
        for xc, rho_c in zip(part.batches, rho):
            proj = w @ xc
            r = row_group_norms(proj)
            g = _power_sum(r, p)
            act = r > ZERO_NORM
            frozen |= ~act
            if g <= ZERO_NORM or rho_c <= 0.0:
                continue
            kappa = np.zeros_like(r)
            kappa[act] = g ** (1.0 - p) * r[act] ** (p - 2.0)
            num += lam * kappa[:, None] * (rho_c * w - proj @ xc.T)
            den += lam * kappa * rho_c
        w_next = num / den[:, None]
        # a row with a zero group sits on the nonsmooth set; it keeps its value
        w_next[frozen] = w[frozen]
        w_next[row_group_norms(w_next) <= ZERO_NORM] = 0.0
        f_next = prox_objective(w_next, a, part, cfg)
        # rows shrinking towards zero only get there geometrically; try zero outright
        w_zero = _zero_rows(w_next, a, part, cfg)
        if w_zero is not w_next:
            f_zero = prox_objective(w_zero, a, part, cfg)
            if f_zero <= f_next:
                w_next, f_next = w_zero, f_zero
        if f_next > f + ROUNDOFF * max(1.0, abs(f)):
            break
        w, f = w_next, f_next
        trace.append(f)
        residual = stationarity_residual(w, a, part, cfg)
    return ProxResult(w=w, converged=residual <= cfg.tol, iterations=it, trace=tuple(trace), residual=residual,
                      method="majorize-minimize")
