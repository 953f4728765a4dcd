"""Dense float64 matrix helpers.

Data batches follow the column-per-sample convention: an input batch X has one
column per sample. Every public function returns a fresh array and never
mutates its arguments.
"""
from __future__ import annotations

import numpy as np
from scipy.special import expit

from .errors import DimensionError, NumericalError, ValidationError

Matrix = np.ndarray


def as_matrix(values, name: str = "matrix") -> Matrix:
    """Coerce to a finite 2-D float64 array."""
    m = np.asarray(values, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {m.shape}")
    check_finite(m, name)
    return m


def check_finite(m: np.ndarray, name: str = "matrix") -> None:
    if not np.all(np.isfinite(m)):
        bad = int(np.size(m) - np.count_nonzero(np.isfinite(m)))
        raise NumericalError(f"{name} contains {bad} non-finite value(s)")


def matmul(a: Matrix, b: Matrix) -> Matrix:
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul dimension mismatch: left is {a.shape[0]}x{a.shape[1]}, right is {b.shape[0]}x{b.shape[1]}"
        )
    return a @ b


def sigmoid(m: Matrix) -> Matrix:
    """Logistic function; saturates without overflow warnings."""
    return expit(np.asarray(m, dtype=np.float64))


def frobenius_sq(m: Matrix) -> float:
    return float(np.sum(np.square(m)))


def init_weights(rows: int, cols: int, seed: int) -> Matrix:
    """Uniform draw on [-r, r], r = sqrt(6 / (rows + cols)); a pure function of its arguments."""
    if rows < 1 or cols < 1:
        raise ValidationError(f"init_weights needs rows, cols >= 1, got {rows}x{cols}")
    r = np.sqrt(6.0 / (rows + cols))
    rng = np.random.default_rng(seed)
    return rng.uniform(-r, r, size=(rows, cols))


def derive_seed(seed: int, *keys: int) -> int:
    """Independent child seed for (seed, keys...)."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
