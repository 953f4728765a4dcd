"""Three-stage vidlet pipeline: training, forward pass and fused pair scoring.

    stage 1  frame pairs [a_k; b_k]                 -> spatial encodings
    stage 2  [pivot; neighbour] stage-1 encodings   -> pivot-neighbour encodings
    stage 3  2z stage-2 encodings, concatenated     -> vidlet encoding -> SVM
"""
from __future__ import annotations

import logging
import time
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .config import Fusion, PipelineConfig
from .errors import DimensionError, ValidationError
from .layer import StackedSmnae, supervision_from_labels, train_stacked
from .mixed_norm import ClassPartition
from .numerics import Matrix, derive_seed
from .schemas import ScoreReport, SymmetricScore
from .svm import SvmModel, fit_classifier, probabilities
from .vidlets import (
    VideoSequence,
    Vidlet,
    cycle_align,
    extract_vidlets,
    stage1_input,
    stage2_input,
    stage3_input,
)

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

LabeledPair = tuple[VideoSequence, VideoSequence, bool]


@dataclass(frozen=True, eq=False)
class PipelineModel:
    stage1: StackedSmnae
    stage2: StackedSmnae
    stage3: StackedSmnae
    classifier: SvmModel
    z: int
    fusion: Fusion
    config: PipelineConfig
    format_version: int = FORMAT_VERSION

    def __post_init__(self) -> None:
        if self.stage1.input_dim % 2:
            raise DimensionError(f"stage-1 input {self.stage1.input_dim} is not two stacked frames")
        if self.stage2.input_dim != 2 * self.stage1.output_dim:
            raise DimensionError(
                f"stage-2 input {self.stage2.input_dim} != 2 x stage-1 output {self.stage1.output_dim}"
            )
        if self.stage3.input_dim != 2 * self.z * self.stage2.output_dim:
            raise DimensionError(
                f"stage-3 input {self.stage3.input_dim} != 2z x stage-2 output {self.stage2.output_dim} (z={self.z})"
            )
        if self.classifier.dim != self.stage3.output_dim:
            raise DimensionError(
                f"classifier dimension {self.classifier.dim} != stage-3 output {self.stage3.output_dim}"
            )

    @property
    def frame_dim(self) -> int:
        return self.stage1.input_dim // 2


@dataclass(frozen=True, eq=False)
class FrameModel:
    """Stage-1 encoder with an SVM on per-frame-pair encodings."""

    stage1: StackedSmnae
    classifier: SvmModel
    config: PipelineConfig
    format_version: int = FORMAT_VERSION

    @property
    def frame_dim(self) -> int:
        return self.stage1.input_dim // 2


def vidlet_pairs(a: VideoSequence, b: VideoSequence, z: int) -> list[tuple[Vidlet, Vidlet]]:
    if a.frame_dim != b.frame_dim:
        raise DimensionError(f"videos have different frame dimensions: {a.frame_dim} vs {b.frame_dim}")
    a, b = cycle_align(a, b)
    return list(zip(extract_vidlets(a, z), extract_vidlets(b, z)))


def _stage1_batch(pairs: Sequence[tuple[Vidlet, Vidlet]]) -> Matrix:
    return np.hstack([stage1_input(vi, vj) for vi, vj in pairs])


def _stage2_batch(h1: Matrix, z: int) -> Matrix:
    width = 2 * z + 1
    return np.hstack([stage2_input(h1[:, k:k + width], z) for k in range(0, h1.shape[1], width)])


def _stage3_batch(h2: Matrix, z: int) -> Matrix:
    width = 2 * z
    return np.hstack([stage3_input(h2[:, k:k + width], z) for k in range(0, h2.shape[1], width)])


def vidlet_features(model: PipelineModel, pairs: Sequence[tuple[Vidlet, Vidlet]]) -> Matrix:
    """Stage-3 encodings, one column per vidlet pair."""
    h1 = model.stage1.encode(_stage1_batch(pairs))
    h2 = model.stage2.encode(_stage2_batch(h1, model.z))
    return model.stage3.encode(_stage3_batch(h2, model.z))


def fuse(probs: Sequence[float], fusion: Fusion) -> tuple[float, float]:
    """Return (fused score, default decision threshold)."""
    if not len(probs):
        raise ValidationError("cannot fuse an empty list of probabilities")
    if fusion == "sum":
        return float(np.sum(probs)), 0.5 * len(probs)
    return float(np.max(probs)), 0.5


def _report(probs: np.ndarray, fusion: Fusion, unit: str = "vidlet") -> ScoreReport:
    fused, threshold = fuse(probs, fusion)
    return ScoreReport(per_vidlet_probs=[float(v) for v in probs], fused_score=fused,
                       decision="kin" if fused >= threshold else "non-kin", threshold=threshold,
                       fusion=fusion, n_vidlets=len(probs), unit=unit)


def _require_both_classes(pairs: Sequence[LabeledPair]) -> None:
    labels = [bool(lab) for _, _, lab in pairs]
    if not any(labels) or all(labels):
        raise ValidationError("training needs at least one kin and one non-kin pair")


def _train_stage(x: Matrix, labels: list[bool], cfg: PipelineConfig, stage: int) -> tuple[StackedSmnae, Matrix]:
    t0 = time.time()
    part = ClassPartition.from_labels(x, labels)
    lap = supervision_from_labels(labels)
    hidden = cfg.hidden_sizes(stage)
    logger.info(f"Stage {stage} training: input={x.shape[0]}, n={x.shape[1]}, hidden={list(hidden)}")
    stack = train_stacked(x, part, lap, hidden, cfg.train_config(stage, derive_seed(cfg.seed, stage)))
    h = stack.encode(x)
    logger.info(f"Stage {stage} trained: output={stack.output_dim}, duration={time.time() - t0:.2f}s")
    return stack, h


def train_pipeline(train_pairs: Sequence[LabeledPair], cfg: PipelineConfig) -> PipelineModel:
    """Train the three stacked autoencoders stage by stage, then the SVM on vidlet encodings."""
    _require_both_classes(train_pairs)
    z = cfg.z
    all_pairs: list[tuple[Vidlet, Vidlet]] = []
    vidlet_labels: list[bool] = []
    for a, b, label in train_pairs:
        vp = vidlet_pairs(a, b, z)
        all_pairs.extend(vp)
        vidlet_labels.extend([bool(label)] * len(vp))
    if len(set(vidlet_labels)) < 2:
        raise ValidationError("training vidlets need both kin and non-kin examples")
    logger.info(f"Pipeline training: pairs={len(train_pairs)}, vidlets={len(all_pairs)}, z={z}, p={cfg.p}, "
                f"variant={cfg.variant}, scale={cfg.scale}")

    x1 = _stage1_batch(all_pairs)
    stage1, h1 = _train_stage(x1, [lab for lab in vidlet_labels for _ in range(2 * z + 1)], cfg, 1)
    x2 = _stage2_batch(h1, z)
    stage2, h2 = _train_stage(x2, [lab for lab in vidlet_labels for _ in range(2 * z)], cfg, 2)
    x3 = _stage3_batch(h2, z)
    stage3, h3 = _train_stage(x3, vidlet_labels, cfg, 3)

    y = np.where(np.asarray(vidlet_labels), 1, -1)
    classifier = fit_classifier(h3, y, cfg.svm)
    return PipelineModel(stage1=stage1, stage2=stage2, stage3=stage3, classifier=classifier, z=z,
                         fusion=cfg.fusion, config=cfg)


def _check_frame_dim(model: PipelineModel | FrameModel, a: VideoSequence, b: VideoSequence) -> None:
    if a.frame_dim != model.frame_dim or b.frame_dim != model.frame_dim:
        raise DimensionError(
            f"model expects frame_dim {model.frame_dim}, videos have {a.frame_dim} and {b.frame_dim}"
        )


def pair_probabilities(model: PipelineModel | FrameModel, a: VideoSequence, b: VideoSequence) -> np.ndarray:
    """Classifier probability per vidlet pair (per aligned frame pair for a FrameModel), order-sensitive."""
    _check_frame_dim(model, a, b)
    if isinstance(model, FrameModel):
        a, b = cycle_align(a, b)
        return probabilities(model.classifier, model.stage1.encode(np.vstack([a.frames, b.frames])))
    return probabilities(model.classifier, vidlet_features(model, vidlet_pairs(a, b, model.z)))


def score_video_pair(model: PipelineModel, a: VideoSequence, b: VideoSequence,
                     fusion: Fusion | None = None) -> ScoreReport:
    """Order-sensitive score of (a, b): per-vidlet probabilities fused by `fusion` (model default)."""
    return _report(pair_probabilities(model, a, b), fusion or model.fusion)


def average_orders(forward: ScoreReport, backward: ScoreReport) -> SymmetricScore:
    fused = 0.5 * (forward.fused_score + backward.fused_score)
    threshold = forward.threshold
    return SymmetricScore(forward=forward, backward=backward, fused_score=fused, threshold=threshold,
                          decision="kin" if fused >= threshold else "non-kin")


def score_symmetric(model: PipelineModel, a: VideoSequence, b: VideoSequence,
                    fusion: Fusion | None = None) -> SymmetricScore:
    return average_orders(score_video_pair(model, a, b, fusion), score_video_pair(model, b, a, fusion))


def train_frame_model(train_pairs: Sequence[LabeledPair], cfg: PipelineConfig) -> FrameModel:
    """Frame-level protocol: stage-1 encoder and SVM on every aligned frame pair."""
    _require_both_classes(train_pairs)
    columns: list[Matrix] = []
    labels: list[bool] = []
    for a, b, label in train_pairs:
        if a.frame_dim != b.frame_dim:
            raise DimensionError(f"videos have different frame dimensions: {a.frame_dim} vs {b.frame_dim}")
        a, b = cycle_align(a, b)
        columns.append(np.vstack([a.frames, b.frames]))
        labels.extend([bool(label)] * a.n_frames)
    logger.info(f"Frame model training: pairs={len(train_pairs)}, frame_pairs={len(labels)}, p={cfg.p}")
    stage1, h1 = _train_stage(np.hstack(columns), labels, cfg, 1)
    classifier = fit_classifier(h1, np.where(np.asarray(labels), 1, -1), cfg.svm)
    return FrameModel(stage1=stage1, classifier=classifier, config=cfg)


def score_frame_pairs(model: FrameModel, a: VideoSequence, b: VideoSequence,
                      fusion: Fusion | None = None) -> ScoreReport:
    return _report(pair_probabilities(model, a, b), fusion or model.config.fusion, unit="frame")
