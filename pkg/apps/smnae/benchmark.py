"""MNIST benchmark: stacked SMNAE features vs a plain autoencoder under the same budget.

Both encoders see the same seeded subset, widths, epochs and initial weights;
only lambda and beta differ. A one-vs-rest RBF SVM head is trained on each
encoding and the test error of both is reported.
"""
from __future__ import annotations

import logging
import time
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from .config import MnistBenchmarkConfig, SvmConfig, TrainConfig
from .data import find_mnist_files, load_mnist_idx
from .errors import ValidationError
from .layer import StackedSmnae, supervision_from_labels, train_stacked
from .mixed_norm import ClassPartition
from .numerics import Matrix, derive_seed
from .schemas import MnistReport
from .svm import SvmModel, decision_values, kernel_matrix, train_svm

logger = logging.getLogger(__name__)


def _subset(x: Matrix, labels: np.ndarray, n: int, seed: int, split: str) -> tuple[Matrix, np.ndarray]:
    if n > x.shape[1]:
        raise ValidationError(f"requested {n} {split} images, only {x.shape[1]} available")
    idx = np.sort(np.random.default_rng(seed).choice(x.shape[1], size=n, replace=False))
    return x[:, idx], labels[idx]


def load_split(mnist_dir: str | Path, split: str) -> tuple[Matrix, np.ndarray]:
    files = find_mnist_files(mnist_dir, split)
    if files is None:
        raise ValidationError(f"MNIST {split} files not found in {mnist_dir}")
    return load_mnist_idx(*files)


def train_one_vs_rest(features: Matrix, labels: Sequence[int], cfg: SvmConfig) -> list[tuple[int, SvmModel]]:
    """One binary SVM per class, all sharing one precomputed kernel."""
    y = np.asarray(labels)
    classes = [int(c) for c in np.unique(y)]
    if len(classes) < 2:
        raise ValidationError("one-vs-rest needs at least two classes")
    gamma = cfg.gamma if cfg.gamma is not None else 1.0 / features.shape[0]
    k = kernel_matrix(features, features, gamma)
    return [(c, train_svm(features, np.where(y == c, 1, -1), cfg.c, gamma, cfg.tol, cfg.max_iter, kernel=k))
            for c in classes]


def predict_one_vs_rest(heads: Sequence[tuple[int, SvmModel]], x: Matrix) -> np.ndarray:
    scores = np.vstack([decision_values(model, x) for _, model in heads])
    classes = np.array([c for c, _ in heads])
    return classes[np.argmax(scores, axis=0)]


def heldout_error_pct(encoder: StackedSmnae, train: tuple[Matrix, np.ndarray], test: tuple[Matrix, np.ndarray],
                      cfg: SvmConfig) -> float:
    heads = train_one_vs_rest(encoder.encode(train[0]), train[1], cfg)
    predicted = predict_one_vs_rest(heads, encoder.encode(test[0]))
    return 100.0 * float(np.mean(predicted != test[1]))


def mnist_benchmark(cfg: MnistBenchmarkConfig, mnist_dir: str | Path) -> MnistReport:
    t0 = time.time()
    train = _subset(*load_split(mnist_dir, "train"), cfg.n_train, derive_seed(cfg.seed, 0), "train")
    test = _subset(*load_split(mnist_dir, "test"), cfg.n_test, derive_seed(cfg.seed, 1), "test")
    x, labels = train
    logger.info(f"MNIST benchmark: n_train={cfg.n_train}, n_test={cfg.n_test}, widths={list(cfg.widths)}, p={cfg.p}")

    # class labels drive both the mixed-norm groups and the supervision matrix
    label_list = [int(v) for v in labels]
    part = ClassPartition.from_labels(x, label_list)
    lap = supervision_from_labels(label_list)
    st = cfg.stage
    train_cfg = TrainConfig(lam=st.lam, beta=st.beta, p=cfg.p, eta0=st.eta0, max_epochs=st.max_epochs,
                            rel_tol=st.rel_tol, min_step=st.min_step, seed=derive_seed(cfg.seed, 2),
                            prox_tol=cfg.prox.tol, prox_max_inner_iters=cfg.prox.max_inner_iters)
    plain_cfg = train_cfg.model_copy(update={"lam": 0.0, "beta": 0.0})

    smnae = train_stacked(x, part, lap, cfg.widths, train_cfg)
    plain = train_stacked(x, part, lap, cfg.widths, plain_cfg)
    smnae_err = heldout_error_pct(smnae, train, test, cfg.svm)
    plain_err = heldout_error_pct(plain, train, test, cfg.svm)
    logger.info(f"MNIST benchmark complete: smnae_error={smnae_err:.2f}%, plain_error={plain_err:.2f}%, "
                f"duration={time.time() - t0:.2f}s")
    return MnistReport(n_train=cfg.n_train, n_test=cfg.n_test, widths=list(cfg.widths), p=cfg.p, seed=cfg.seed,
                       smnae_error_pct=smnae_err, plain_error_pct=plain_err)
