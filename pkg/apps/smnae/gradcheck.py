"""Central finite-difference check of the smooth-part gradients (J1 + beta J3)."""
from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .layer import Laplacian, SmnaeLayer, decode, discrimination_term, encode, grad_smooth, supervision_from_labels
from .numerics import Matrix, derive_seed, frobenius_sq, init_weights

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-5


@dataclass(frozen=True)
class GradcheckCase:
    instance: int
    input_dim: int
    hidden_dim: int
    n_samples: int
    beta: float
    rel_error: float


@dataclass(frozen=True)
class GradcheckReport:
    cases: tuple[GradcheckCase, ...]
    step: float

    @property
    def max_rel_error(self) -> float:
        return max((c.rel_error for c in self.cases), default=0.0)


def smooth_objective(layer: SmnaeLayer, x: Matrix, lap: Laplacian, beta: float) -> float:
    h = encode(layer, x)
    f = frobenius_sq(x - decode(layer, h))
    if beta != 0.0:
        f += beta * discrimination_term(h, lap)
    return f


def central_difference(f: Callable[[Matrix], float], w: Matrix, step: float = DEFAULT_STEP) -> Matrix:
    """d f / d w entry by entry: (f(w + h e) - f(w - h e)) / 2h."""
    grad = np.zeros_like(w)
    shifted = w.copy()
    for idx in np.ndindex(*w.shape):
        orig = shifted[idx]
        shifted[idx] = orig + step
        f_plus = f(shifted)
        shifted[idx] = orig - step
        f_minus = f(shifted)
        shifted[idx] = orig
        grad[idx] = (f_plus - f_minus) / (2.0 * step)
    return grad


def relative_error(analytic: Matrix, numeric: Matrix) -> float:
    scale = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric)) / scale


def check_layer(layer: SmnaeLayer, x: Matrix, lap: Laplacian, beta: float, step: float = DEFAULT_STEP) -> float:
    """Largest relative error over the encoder and decoder gradients."""
    g_enc, g_dec = grad_smooth(layer, x, lap, beta)
    n_enc = central_difference(lambda w: smooth_objective(SmnaeLayer(w, layer.w_dec), x, lap, beta),
                               layer.w_enc, step)
    n_dec = central_difference(lambda w: smooth_objective(SmnaeLayer(layer.w_enc, w), x, lap, beta),
                               layer.w_dec, step)
    return max(relative_error(g_enc, n_enc), relative_error(g_dec, n_dec))


def random_instance(seed: int, max_dim: int = 20, max_samples: int = 16) -> tuple[SmnaeLayer, Matrix, Laplacian]:
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, max_dim + 1))
    hidden = int(rng.integers(1, max_dim + 1))
    n = int(rng.integers(2, max_samples + 1))
    x = rng.uniform(0.0, 1.0, size=(d, n))
    labels = [int(v) for v in rng.integers(0, 3, size=n)]
    layer = SmnaeLayer(w_enc=init_weights(hidden, d, derive_seed(seed, 0)),
                       w_dec=init_weights(d, hidden, derive_seed(seed, 1)))
    return layer, x, supervision_from_labels(labels)


def run_gradcheck(instances: int = 20, betas: Sequence[float] = (0.0, 0.5), seed: int = 0,
                  step: float = DEFAULT_STEP) -> GradcheckReport:
    """Random instances with dimensions up to 20 x 16; betas are used in turn."""
    cases: list[GradcheckCase] = []
    for i in range(instances):
        beta = float(betas[i % len(betas)])
        layer, x, lap = random_instance(derive_seed(seed, i))
        err = check_layer(layer, x, lap, beta, step)
        cases.append(GradcheckCase(instance=i, input_dim=layer.input_dim, hidden_dim=layer.hidden_dim,
                                   n_samples=x.shape[1], beta=beta, rel_error=err))
        logger.debug(f"Gradcheck instance: n={i}, shape={layer.hidden_dim}x{layer.input_dim}, samples={x.shape[1]}, "
                     f"beta={beta}, rel_error={err:.3e}")
    report = GradcheckReport(cases=tuple(cases), step=step)
    logger.info(f"Gradcheck complete: instances={instances}, max_rel_error={report.max_rel_error:.3e}")
    return report


def assert_gradients(report: GradcheckReport, tolerance: float = DEFAULT_TOLERANCE) -> None:
    if report.max_rel_error > tolerance:
        worst = max(report.cases, key=lambda c: c.rel_error)
        raise NumericalError(
            f"gradient check failed: max relative error {worst.rel_error:.3e} > {tolerance:.1e} "
            f"(instance {worst.instance}, beta={worst.beta})"
        )
