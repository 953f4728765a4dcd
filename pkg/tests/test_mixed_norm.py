"""Tests for the l2,p norm, the class penalty and its proximal operator."""
import numpy as np
import pytest

from apps.smnae.config import ProxConfig
from apps.smnae.errors import DimensionError, NumericalError, ValidationError
from apps.smnae.mixed_norm import (
    ClassPartition,
    block_soft_threshold,
    class_penalty,
    l2p_norm,
    prox_l2p,
    prox_objective,
    row_group_norms,
    stationarity_residual,
)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


def test_row_group_norms():
    """Row norms of simple and random matrices."""
    np.testing.assert_array_equal(row_group_norms(np.array([[3.0, 4.0], [0.0, 0.0]])), [5.0, 0.0])
    np.testing.assert_array_equal(row_group_norms(np.eye(3)), [1.0, 1.0, 1.0])
    w = np.random.default_rng(0).standard_normal((4, 6))
    np.testing.assert_allclose(row_group_norms(w), [np.sqrt(sum(v * v for v in row)) for row in w], atol=1e-12)


def test_l2p_norm_values():
    """Zero matrix, p = 1 and p = 0.5 against hand values."""
    assert l2p_norm(np.zeros((3, 2)), 0.4) == 0.0
    w = np.array([[3.0, 0.0], [0.0, 4.0]])
    assert l2p_norm(w, 1.0) == pytest.approx(7.0, abs=1e-12)
    assert l2p_norm(w, 0.5) == pytest.approx(7.0 + 4.0 * np.sqrt(3.0), abs=1e-10)


def test_l2p_norm_rejects_bad_p():
    """p outside (0, 1] is a validation error."""
    for p in (0.0, 1.5, -1.0):
        with pytest.raises(ValidationError):
            l2p_norm(np.ones((2, 2)), p)


def test_l2p_norm_homogeneous_and_power_mean_ordering(rng):
    """Positive homogeneity, and smaller p never gives a smaller value."""
    w = rng.standard_normal((6, 4))
    for k in (-3.0, 0.5, 11.0):
        assert l2p_norm(k * w, 0.7) == pytest.approx(abs(k) * l2p_norm(w, 0.7), rel=1e-10)
    assert l2p_norm(w, 1.0) == pytest.approx(float(np.sum(row_group_norms(w))), abs=1e-12)
    assert l2p_norm(w, 0.3) >= l2p_norm(w, 0.6) >= l2p_norm(w, 1.0)


def test_class_penalty_reductions(rng):
    """W = 0 gives 0; one identity class reduces to l2p_norm; two classes match a loop."""
    w = rng.standard_normal((3, 4))
    ident = ClassPartition((np.eye(4),))
    assert class_penalty(np.zeros((3, 4)), ident, 0.8) == 0.0
    assert class_penalty(w, ident, 0.8) == pytest.approx(l2p_norm(w, 0.8), rel=1e-12)
    x1, x2 = rng.standard_normal((4, 3)), rng.standard_normal((4, 5))
    expected = l2p_norm(w @ x1, 0.6) + l2p_norm(w @ x2, 0.6)
    assert class_penalty(w, ClassPartition((x1, x2)), 0.6) == pytest.approx(expected, abs=1e-10)


def test_class_penalty_dimension_mismatch():
    """W must have as many columns as the class batches have rows."""
    with pytest.raises(DimensionError):
        class_penalty(np.ones((2, 3)), ClassPartition((np.eye(4),)), 1.0)


def test_partition_from_labels():
    """Columns are grouped by label in order of first appearance."""
    x = np.arange(12.0).reshape(2, 6)
    part = ClassPartition.from_labels(x, ["b", "a", "b", "a", "c", "b"])
    assert part.labels == ("b", "a", "c")
    np.testing.assert_array_equal(part.batches[0], x[:, [0, 2, 5]])
    assert part.n_samples == 6 and part.n_classes == 3 and part.feature_dim == 2


def test_block_soft_threshold():
    """tau = 0 is the identity, full shrinkage zeroes a row, partial shrinkage scales it."""
    a = np.array([[3.0, 4.0], [0.0, 0.0]])
    np.testing.assert_array_equal(block_soft_threshold(a, 0.0), a)
    np.testing.assert_array_equal(block_soft_threshold(a, 5.0), np.zeros_like(a))
    np.testing.assert_allclose(block_soft_threshold(a, 1.0)[0], [2.4, 3.2], atol=1e-15)


def test_prox_zero_lambda_returns_input(rng):
    """With lambda = 0 the prox is the identity."""
    a = rng.standard_normal((4, 3))
    out = prox_l2p(a, ClassPartition((rng.standard_normal((3, 5)),)), ProxConfig(lam=0.0, eta=0.5, p=0.5))
    np.testing.assert_array_equal(out.w, a)
    assert out.converged


def test_prox_matches_block_soft_threshold(rng):
    """p = 1 with one identity class agrees with the closed form on 50 random inputs."""
    for _ in range(50):
        d = int(rng.integers(2, 8))
        a = rng.standard_normal((int(rng.integers(1, 6)), d))
        cfg = ProxConfig(lam=float(rng.uniform(0.01, 2.0)), eta=float(rng.uniform(0.05, 1.0)), p=1.0)
        out = prox_l2p(a, ClassPartition((np.eye(d),)), cfg)
        np.testing.assert_allclose(out.w, block_soft_threshold(a, cfg.lam * cfg.eta), atol=1e-6)


def test_prox_full_shrinkage(rng):
    """lambda * eta at or above the largest row norm gives the zero matrix."""
    a = rng.standard_normal((4, 3))
    cfg = ProxConfig(lam=float(np.max(row_group_norms(a))) / 0.5, eta=0.5, p=1.0)
    np.testing.assert_array_equal(prox_l2p(a, ClassPartition((np.eye(3),)), cfg).w, np.zeros_like(a))


@pytest.mark.parametrize("p", [0.2, 0.4, 0.6, 0.8, 1.0])
def test_prox_never_worse_than_start(rng, p):
    """F(out) <= F(A) and the recorded trace never increases, over 20 instances per p."""
    for _ in range(20):
        d = int(rng.integers(2, 7))
        a = rng.standard_normal((int(rng.integers(1, 6)), d))
        n_classes = int(rng.integers(1, 4))
        part = ClassPartition(tuple(rng.standard_normal((d, int(rng.integers(1, 5)))) for _ in range(n_classes)))
        cfg = ProxConfig(lam=float(rng.uniform(0.01, 1.0)), eta=float(rng.uniform(0.05, 1.0)), p=p)
        out = prox_l2p(a, part, cfg)
        assert prox_objective(out.w, a, part, cfg) <= prox_objective(a, a, part, cfg) + 1e-12
        trace = np.array(out.trace)
        assert np.all(np.diff(trace) <= 1e-12 * np.maximum(1.0, np.abs(trace[:-1])))


def test_prox_orthogonal_lp_path(rng):
    """p < 1 with an identity class uses the scalar threshold solver and lowers F."""
    a = rng.standard_normal((5, 4))
    part = ClassPartition((np.eye(4),))
    cfg = ProxConfig(lam=0.5, eta=0.5, p=0.5)
    out = prox_l2p(a, part, cfg)
    assert out.method == "newton-lp-threshold"
    assert prox_objective(out.w, a, part, cfg) < prox_objective(a, a, part, cfg)


def test_prox_general_path_is_majorize_minimize(rng):
    """Two classes route to the majorize-minimize solver."""
    part = ClassPartition((rng.standard_normal((3, 4)), rng.standard_normal((3, 2))))
    out = prox_l2p(rng.standard_normal((2, 3)), part, ProxConfig(lam=0.3, eta=0.2, p=0.8))
    assert out.method == "majorize-minimize"


def test_prox_rejects_nan():
    """NaN in A is a numerical error."""
    a = np.array([[np.nan, 1.0]])
    with pytest.raises(NumericalError):
        prox_l2p(a, ClassPartition((np.eye(2),)), ProxConfig())


def gradient_on_nonzero_rows(w, a, batches, lam, eta, p):
    """Row-by-row grad F of the prox objective, largest norm over nonzero rows."""
    grad = (w - a) / eta
    for xc in batches:
        proj = w @ xc
        r = np.linalg.norm(proj, axis=1)
        g = np.sum(r[r > 0] ** p) ** (1.0 / p)
        for i in range(w.shape[0]):
            if r[i] > 0:
                grad[i] += lam * g ** (1.0 - p) * r[i] ** (p - 2.0) * (proj[i] @ xc.T)
    rows = [np.linalg.norm(grad[i]) for i in range(w.shape[0]) if np.linalg.norm(w[i]) > 0]
    return max(rows, default=0.0)


@pytest.fixture
def two_class_instances():
    rng = np.random.default_rng(16)
    return [(rng.standard_normal((6, 5)), ClassPartition((rng.standard_normal((5, 7)), rng.standard_normal((5, 9)))))
            for _ in range(20)]


def test_prox_general_path_is_stationary(two_class_instances):
    """A converged two-class prox has grad F within tol on every nonzero row, checked independently."""
    cfg = ProxConfig(lam=0.5, eta=0.1, p=0.8, tol=1e-6, max_inner_iters=5000)
    for a, part in two_class_instances:
        out = prox_l2p(a, part, cfg)
        assert out.converged
        independent = gradient_on_nonzero_rows(out.w, a, part.batches, cfg.lam, cfg.eta, cfg.p)
        assert independent <= cfg.tol * (1.0 + 1e-6) + 1e-12
        assert out.residual == pytest.approx(independent, rel=1e-6, abs=1e-12)


def test_prox_reported_residual_is_honest(two_class_instances):
    """With a short iteration budget, converged is claimed only when the true residual is within tol."""
    cfg = ProxConfig(lam=0.5, eta=0.1, p=0.8, tol=1e-6, max_inner_iters=5)
    for a, part in two_class_instances:
        out = prox_l2p(a, part, cfg)
        independent = gradient_on_nonzero_rows(out.w, a, part.batches, cfg.lam, cfg.eta, cfg.p)
        assert out.converged == (out.residual <= cfg.tol)
        assert out.residual == pytest.approx(independent, rel=1e-6, abs=1e-12)
        assert stationarity_residual(out.w, a, part, cfg) == out.residual


def test_prox_collapsing_row_becomes_exact_zero():
    """A row of A far smaller than the rest ends exactly at zero, not stalled near it."""
    rng = np.random.default_rng(3)
    a = rng.standard_normal((6, 5))
    a[2] *= 1e-3
    part = ClassPartition((rng.standard_normal((5, 7)), rng.standard_normal((5, 9))))
    cfg = ProxConfig(lam=0.5, eta=0.1, p=0.8, tol=1e-6, max_inner_iters=5000)
    out = prox_l2p(a, part, cfg)
    assert out.converged
    np.testing.assert_array_equal(out.w[2], np.zeros(5))
    assert np.count_nonzero(row_group_norms(out.w)) < 6
    assert prox_objective(out.w, a, part, cfg) < prox_objective(a, a, part, cfg)


def test_prox_orthogonal_residual_in_gradient_units(rng):
    """The scalar threshold path reports the same residual as the general formula."""
    a = rng.standard_normal((5, 4))
    part = ClassPartition((np.eye(4),))
    cfg = ProxConfig(lam=0.5, eta=0.5, p=0.5, tol=1e-9, max_inner_iters=500)
    out = prox_l2p(a, part, cfg)
    assert out.residual == pytest.approx(stationarity_residual(out.w, a, part, cfg), rel=1e-5, abs=1e-9)
