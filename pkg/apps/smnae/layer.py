"""Supervised mixed-norm autoencoder layer: loss, gradients and proximal-gradient training.

Forward pass for a batch X (one column per sample):

    H = sigmoid(W X)        encoder, W is hidden x input
    O = sigmoid(W' H)       decoder, W' is input x hidden

    J1 = ||X - O||_F^2
    J2 = sum_c ||W X_c||_{2,p}
    J3 = tr(H^T H L)
    J  = J1 + lam J2 + beta J3
"""
from __future__ import annotations

import csv
import logging
from collections.abc import Hashable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .config import TrainConfig
from .errors import DimensionError, NumericalError, ValidationError
from .mixed_norm import ClassPartition, class_penalty, prox_l2p
from .numerics import Matrix, check_finite, derive_seed, frobenius_sq, init_weights, matmul, sigmoid

logger = logging.getLogger(__name__)

TRACE_FIELDS = ("epoch", "total", "j1", "j2", "j3", "step")


@dataclass(frozen=True, eq=False)
class SupervisionMatrix:
    m: Matrix

    @property
    def n(self) -> int:
        return self.m.shape[0]


@dataclass(frozen=True, eq=False)
class Laplacian:
    l: Matrix  # noqa: E741

    @property
    def n(self) -> int:
        return self.l.shape[0]


class LossTerms(NamedTuple):
    total: float
    j1: float
    j2: float
    j3: float


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    total: float
    j1: float
    j2: float
    j3: float
    step: float


@dataclass(frozen=True, eq=False)
class SmnaeLayer:
    w_enc: Matrix
    w_dec: Matrix
    activation: str = "sigmoid"
    trace: tuple[EpochRecord, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.w_enc.ndim != 2 or self.w_dec.ndim != 2:
            raise DimensionError("layer weights must be 2-D")
        if self.w_dec.shape != (self.w_enc.shape[1], self.w_enc.shape[0]):
            raise DimensionError(
                f"decoder shape {self.w_dec.shape} does not mirror encoder shape {self.w_enc.shape}"
            )
        if self.activation != "sigmoid":
            raise ValidationError(f"unsupported activation: {self.activation}")
        check_finite(self.w_enc, "encoder weights")
        check_finite(self.w_dec, "decoder weights")

    @property
    def input_dim(self) -> int:
        return self.w_enc.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w_enc.shape[0]


@dataclass(frozen=True, eq=False)
class StackedSmnae:
    layers: tuple[SmnaeLayer, ...]

    def __post_init__(self) -> None:
        if not self.layers:
            raise ValidationError("a stack needs at least one layer")
        for k in range(1, len(self.layers)):
            if self.layers[k].input_dim != self.layers[k - 1].hidden_dim:
                raise DimensionError(
                    f"layer {k} expects input {self.layers[k].input_dim}, "
                    f"layer {k - 1} produces {self.layers[k - 1].hidden_dim}"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].hidden_dim

    def encode(self, x: Matrix) -> Matrix:
        h = x
        for layer in self.layers:
            h = encode(layer, h)
        return h


def build_supervision_matrix(labels: Sequence[Hashable | None]) -> SupervisionMatrix:
    """+1 for a shared label, -1 when both labels are known and differ, 0 when either is unknown."""
    n = len(labels)
    if n < 1:
        raise ValidationError("supervision matrix needs at least one sample")
    index: dict = {}
    codes = np.array([-1 if lab is None else index.setdefault(lab, len(index)) for lab in labels])
    known = codes >= 0
    m = np.where(codes[:, None] == codes[None, :], 1.0, -1.0)
    m[~(known[:, None] & known[None, :])] = 0.0
    np.fill_diagonal(m, 1.0)
    return SupervisionMatrix(m)


def build_laplacian(sup: SupervisionMatrix) -> Laplacian:
    m = sup.m
    d = m.sum(axis=1)
    lap = -m.copy()
    lap[np.diag_indices_from(lap)] += d
    # enforce exact zero row sums against summation-order rounding
    lap[np.diag_indices_from(lap)] -= lap.sum(axis=1)
    return Laplacian(lap)


def supervision_from_labels(labels: Sequence[Hashable | None]) -> Laplacian:
    return build_laplacian(build_supervision_matrix(labels))


def discrimination_term(h: Matrix, lap: Laplacian) -> float:
    if h.shape[1] != lap.n:
        raise DimensionError(f"H has {h.shape[1]} columns but the Laplacian is {lap.n}x{lap.n}")
    return float(np.sum((h @ lap.l) * h))


def encode(layer: SmnaeLayer, x: Matrix) -> Matrix:
    return sigmoid(matmul(layer.w_enc, x))


def decode(layer: SmnaeLayer, h: Matrix) -> Matrix:
    return sigmoid(matmul(layer.w_dec, h))


def loss_smnae(layer: SmnaeLayer, x: Matrix, part: ClassPartition, lap: Laplacian,
               cfg: TrainConfig) -> LossTerms:
    h = encode(layer, x)
    out = decode(layer, h)
    j1 = frobenius_sq(x - out)
    j2 = class_penalty(layer.w_enc, part, cfg.p)
    j3 = discrimination_term(h, lap)
    total = j1 + cfg.lam * j2 + cfg.beta * j3
    if not np.isfinite(total):
        raise NumericalError(f"SMNAE loss is not finite: j1={j1}, j2={j2}, j3={j3}")
    return LossTerms(total, j1, j2, j3)


def grad_smooth(layer: SmnaeLayer, x: Matrix, lap: Laplacian, beta: float) -> tuple[Matrix, Matrix]:
    """Gradients of J1 + beta J3 with respect to (W, W')."""
    if x.shape[0] != layer.input_dim:
        raise DimensionError(f"X has {x.shape[0]} rows, layer expects {layer.input_dim}")
    h = encode(layer, x)
    out = decode(layer, h)
    delta_out = -2.0 * (x - out) * out * (1.0 - out)
    g_dec = delta_out @ h.T
    d_hidden = layer.w_dec.T @ delta_out
    if beta != 0.0:
        if h.shape[1] != lap.n:
            raise DimensionError(f"H has {h.shape[1]} columns but the Laplacian is {lap.n}x{lap.n}")
        d_hidden = d_hidden + 2.0 * beta * (h @ lap.l)
    g_enc = (d_hidden * h * (1.0 - h)) @ x.T
    return g_enc, g_dec


def train_layer(x: Matrix, part: ClassPartition, lap: Laplacian, hidden: int, cfg: TrainConfig) -> SmnaeLayer:
    """Proximal-gradient training with backtracking: prox step on W, gradient step on W'.

    A step is accepted only when it lowers the total loss, so the recorded
    trace is non-increasing. Each epoch restarts the search from twice the
    last accepted step, capped at eta0.
    """
    n = x.shape[1]
    if hidden < 1:
        raise ValidationError(f"hidden width must be >= 1, got {hidden}")
    if n < 2:
        raise ValidationError(f"training needs at least 2 samples, got {n}")
    if part.n_samples != n or part.feature_dim != x.shape[0]:
        raise DimensionError(
            f"class partition ({part.feature_dim}x{part.n_samples}) does not match X {x.shape[0]}x{n}"
        )
    if lap.n != n:
        raise DimensionError(f"Laplacian is {lap.n}x{lap.n} for {n} samples")
    check_finite(x, "training batch")

    d = x.shape[0]
    layer = SmnaeLayer(
        w_enc=init_weights(hidden, d, derive_seed(cfg.seed, 0)),
        w_dec=init_weights(d, hidden, derive_seed(cfg.seed, 1)),
    )
    terms = loss_smnae(layer, x, part, lap, cfg)
    trace = [EpochRecord(0, *terms, step=0.0)]
    eta = cfg.eta0
    prox_misses = 0
    logger.debug(f"Layer training start: input={d}, hidden={hidden}, n={n}, loss={terms.total:.6g}")

    for epoch in range(1, cfg.max_epochs + 1):
        g_enc, g_dec = grad_smooth(layer, x, lap, cfg.beta)
        eta = min(2.0 * eta, cfg.eta0) if epoch > 1 else cfg.eta0
        accepted = None
        while eta >= cfg.min_step:
            a = layer.w_enc - eta * g_enc
            if cfg.lam > 0.0:
                prox = prox_l2p(a, part, cfg.prox_config(eta))
                prox_misses += not prox.converged
                w_enc = prox.w
            else:
                w_enc = a
            w_dec = layer.w_dec - eta * g_dec
            if not (np.all(np.isfinite(w_enc)) and np.all(np.isfinite(w_dec))):
                raise NumericalError(f"weights diverged at epoch {epoch} (step {eta:.3g})")
            cand = SmnaeLayer(w_enc=w_enc, w_dec=w_dec)
            try:
                cand_terms = loss_smnae(cand, x, part, lap, cfg)
            except NumericalError as e:
                raise NumericalError(f"loss diverged at epoch {epoch}: {e}") from e
            if cand_terms.total < terms.total:
                accepted = (cand, cand_terms)
                break
            eta *= 0.5
        if accepted is None:
            logger.warning(f"Step-size floor reached: epoch={epoch}, min_step={cfg.min_step:.1e}, "
                           f"loss={terms.total:.6g}")
            break
        prev = terms.total
        layer, terms = accepted
        trace.append(EpochRecord(epoch, *terms, step=eta))
        logger.debug(f"Epoch: n={epoch}, total={terms.total:.6g}, j1={terms.j1:.6g}, "
                     f"j2={terms.j2:.6g}, j3={terms.j3:.6g}, step={eta:.3g}")
        if abs(prev - terms.total) < cfg.rel_tol * max(abs(prev), np.finfo(float).tiny):
            break

    if prox_misses:
        logger.warning(f"Prox not converged: layer_hidden={hidden}, steps={prox_misses}, "
                       f"max_inner_iters={cfg.prox_max_inner_iters}")
    logger.info(f"Layer trained: hidden={hidden}, epochs={trace[-1].epoch}, loss={terms.total:.4f}, "
                f"step={trace[-1].step:.3g}")
    return SmnaeLayer(w_enc=layer.w_enc, w_dec=layer.w_dec, trace=tuple(trace))


def train_stacked(x: Matrix, part: ClassPartition, lap: Laplacian, hidden_sizes: Sequence[int],
                  cfg: TrainConfig) -> StackedSmnae:
    """Greedy layer-wise training; layer k sees the encoding of layer k-1 under the same supervision."""
    if not hidden_sizes:
        raise ValidationError("hidden_sizes must be nonempty")
    layers: list[SmnaeLayer] = []
    h, h_part = x, part
    for k, hidden in enumerate(hidden_sizes):
        layer_cfg = cfg if k == 0 else cfg.model_copy(update={"seed": derive_seed(cfg.seed, k)})
        layer = train_layer(h, h_part, lap, hidden, layer_cfg)
        layers.append(layer)
        if k + 1 < len(hidden_sizes):
            h = encode(layer, h)
            h_part = h_part.map(lambda b, layer=layer: encode(layer, b))
    return StackedSmnae(tuple(layers))


def write_trace_csv(trace: Sequence[EpochRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRACE_FIELDS)
        for r in trace:
            writer.writerow([r.epoch, repr(r.total), repr(r.j1), repr(r.j2), repr(r.j3), repr(r.step)])
