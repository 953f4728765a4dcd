"""Tests for the three-stage pipeline, fused scoring and the binary model container."""
import numpy as np
import pytest

from apps.smnae.config import PipelineConfig, StageConfig, SvmConfig, SyntheticConfig, WidthsConfig
from apps.smnae.data import gen_synthetic_kin, partition_subject_disjoint
from apps.smnae.errors import DataFormatError, DimensionError, ValidationError
from apps.smnae.evaluation import evaluate, load_labeled_pairs, pooled_score
from apps.smnae.pipeline import (
    FrameModel,
    PipelineModel,
    average_orders,
    fuse,
    pair_probabilities,
    score_frame_pairs,
    score_symmetric,
    score_video_pair,
    train_frame_model,
    train_pipeline,
    vidlet_features,
    vidlet_pairs,
)
from apps.smnae.serialization import dumps_model, load_model, loads_model, save_model
from apps.smnae.svm import decision_values, probabilities
from apps.smnae.vidlets import VideoSequence, stage1_input, stage2_input, stage3_input

QUICK_STAGE = StageConfig(max_epochs=5)


@pytest.fixture
def quick_config():
    return PipelineConfig(z=1, widths=WidthsConfig(stage1=(6,), stage2=(4,), stage3=(3,)),
                          stage1=QUICK_STAGE, stage2=QUICK_STAGE, stage3=QUICK_STAGE, seed=4)


@pytest.fixture
def labeled_pairs(tmp_path):
    cfg = SyntheticConfig(families=4, members_per_family=2, frame_dim=16, frames_per_video=3, seed=2)
    records = gen_synthetic_kin(cfg, tmp_path)
    return load_labeled_pairs(records, tmp_path)


@pytest.fixture
def trained(labeled_pairs, quick_config):
    return train_pipeline(labeled_pairs, quick_config)


def test_fuse_rules():
    """Sum adds probabilities with threshold n/2; max takes the largest with threshold 1/2."""
    assert fuse([0.2, 0.9], "sum") == (pytest.approx(1.1), 1.0)
    assert fuse([0.2, 0.9], "max") == (0.9, 0.5)
    with pytest.raises(ValidationError):
        fuse([], "sum")


def test_widths_scale():
    """Default widths divided by 64."""
    scaled = WidthsConfig().scaled(64)
    assert scaled.stage1 == (128, 64, 32)
    assert scaled.stage2 == (36, 16)
    assert scaled.stage3 == (48, 32)


def test_variant_switches_regularizers():
    """plain drops both terms, l2p keeps only the mixed norm."""
    assert PipelineConfig(variant="plain").train_config(1, 0).lam == 0.0
    l2p = PipelineConfig(variant="l2p").train_config(2, 0)
    assert l2p.beta == 0.0 and l2p.lam > 0.0


def test_pipeline_shapes(trained):
    """Stage widths chain and the classifier sees stage-3 encodings."""
    assert isinstance(trained, PipelineModel)
    assert trained.frame_dim == 16
    assert trained.stage1.output_dim == 6
    assert trained.stage2.input_dim == 12 and trained.stage2.output_dim == 4
    assert trained.stage3.input_dim == 8 and trained.stage3.output_dim == 3
    assert trained.classifier.dim == 3


def test_score_video_pair(trained, labeled_pairs):
    """One vidlet per 3-frame video at z = 1; the decision follows the threshold."""
    a, b, _ = labeled_pairs[0]
    report = score_video_pair(trained, a, b)
    assert report.n_vidlets == 1 and report.fusion == "sum" and report.unit == "vidlet"
    assert 0.0 < report.per_vidlet_probs[0] < 1.0
    assert report.decision == ("kin" if report.fused_score >= report.threshold else "non-kin")
    assert score_video_pair(trained, a, b, "max").threshold == 0.5


def test_short_partner_is_cycled(trained, labeled_pairs):
    """A one-frame video is repeated to match its partner."""
    a, b, _ = labeled_pairs[0]
    short = VideoSequence(b.frames[:, :1], b.subject_id, b.family_id)
    assert score_video_pair(trained, a, short).n_vidlets == 1


def test_symmetric_score_averages_orders(trained, labeled_pairs):
    """The symmetric score is the mean of both orders."""
    a, b, _ = labeled_pairs[0]
    sym = score_symmetric(trained, a, b)
    assert sym.fused_score == pytest.approx(0.5 * (sym.forward.fused_score + sym.backward.fused_score))
    assert average_orders(sym.forward, sym.backward) == sym


def test_frame_dimension_mismatch(trained):
    """Videos must match the model's frame dimension."""
    v = VideoSequence.from_frames([np.zeros(9)] * 3)
    with pytest.raises(DimensionError):
        score_video_pair(trained, v, v)


def test_training_needs_both_classes(labeled_pairs, quick_config):
    """All-kin training data is rejected."""
    kin_only = [p for p in labeled_pairs if p[2]]
    with pytest.raises(ValidationError):
        train_pipeline(kin_only, quick_config)


def test_training_is_reproducible(labeled_pairs, quick_config, trained):
    """Same data and seed serialize to identical bytes."""
    again = train_pipeline(labeled_pairs, quick_config)
    assert dumps_model(again) == dumps_model(trained)


def test_model_round_trip(trained, labeled_pairs, tmp_path):
    """Weights reload bit for bit and scores are unchanged."""
    path = tmp_path / "model.bin"
    save_model(trained, path)
    loaded = load_model(path)
    assert isinstance(loaded, PipelineModel)
    for s_old, s_new in ((trained.stage1, loaded.stage1), (trained.stage2, loaded.stage2),
                         (trained.stage3, loaded.stage3)):
        for l_old, l_new in zip(s_old.layers, s_new.layers):
            np.testing.assert_array_equal(l_old.w_enc, l_new.w_enc)
            np.testing.assert_array_equal(l_old.w_dec, l_new.w_dec)
    assert loaded.config == trained.config and loaded.z == trained.z
    a, b, _ = labeled_pairs[1]
    assert score_video_pair(loaded, a, b) == score_video_pair(trained, a, b)


def test_corrupt_model_is_rejected(trained):
    """A flipped byte fails the checksum; a foreign file fails the magic check."""
    data = bytearray(dumps_model(trained))
    data[20] ^= 0xFF
    with pytest.raises(DataFormatError, match="checksum"):
        loads_model(bytes(data))
    with pytest.raises(DataFormatError, match="SMNAE1"):
        loads_model(b"P5 not a model")


def test_frame_model(labeled_pairs, quick_config):
    """Frame protocol scores every aligned frame pair and round-trips through the container."""
    model = train_frame_model(labeled_pairs, quick_config)
    assert isinstance(model, FrameModel)
    a, b, _ = labeled_pairs[0]
    report = score_frame_pairs(model, a, b)
    assert report.unit == "frame" and report.n_vidlets == 3
    loaded = loads_model(dumps_model(model))
    assert isinstance(loaded, FrameModel)
    assert score_frame_pairs(loaded, a, b) == report


@pytest.mark.slow
def test_synthetic_end_to_end(tmp_path):
    """Scaled-down pipeline on the default synthetic set verifies unseen families at 85% or better."""
    records = gen_synthetic_kin(SyntheticConfig(), tmp_path)
    train_records, test_records = partition_subject_disjoint(records, 0.5, seed=0)
    stage = StageConfig(max_epochs=100)
    cfg = PipelineConfig(z=2, scale=64, stage1=stage, stage2=stage, stage3=stage, seed=0)
    model = train_pipeline(load_labeled_pairs(train_records, tmp_path), cfg)
    report = evaluate(model, test_records, tmp_path)
    assert report.accuracy_pct >= 85.0
    assert set(report.results) == {"sum", "max"}
    sum_acc, max_acc = report.results["sum"].accuracy_pct, report.results["max"].accuracy_pct
    assert 0.0 <= max_acc <= 100.0
    print(f"sum rule {sum_acc:.2f}%, max rule {max_acc:.2f}%, sum ahead: {sum_acc >= max_acc}")


def repeat_frames(video, times):
    return VideoSequence(np.hstack([video.frames] * times), video.subject_id, video.family_id)


def test_sum_fusion_decomposes_over_vidlets(trained, labeled_pairs):
    """The sum score is the total of independently scored vidlet pairs; the pooled score is their mean."""
    a, b, _ = labeled_pairs[0]
    a, b = repeat_frames(a, 3), repeat_frames(b, 4)
    report = score_video_pair(trained, a, b, "sum")
    pairs = vidlet_pairs(a, b, trained.z)
    assert report.n_vidlets == len(pairs) == 4
    singles = [float(probabilities(trained.classifier, vidlet_features(trained, [p]))[0]) for p in pairs]
    assert report.fused_score == pytest.approx(sum(singles), rel=1e-12)
    assert report.threshold == 0.5 * len(pairs)
    pooled = pooled_score(np.array(report.per_vidlet_probs), "sum")
    assert pooled == pytest.approx(np.mean(singles), rel=1e-12)
    assert pooled == pytest.approx(report.fused_score / report.n_vidlets, rel=1e-12)


def test_forward_shapes_on_random_lengths(trained):
    """Random video lengths flow through all three stages with the expected shapes."""
    rng = np.random.default_rng(9)
    width = 2 * trained.z + 1
    for _ in range(15):
        na, nb = (int(v) for v in rng.integers(width, 5 * width, size=2))
        a = VideoSequence(rng.uniform(size=(trained.frame_dim, na)))
        b = VideoSequence(rng.uniform(size=(trained.frame_dim, nb)))
        pairs = vidlet_pairs(a, b, trained.z)
        assert len(pairs) == max(na, nb) // width
        feats = vidlet_features(trained, pairs)
        assert feats.shape == (trained.stage3.output_dim, len(pairs))
        for k, (vi, vj) in enumerate(pairs):
            s1 = stage1_input(vi, vj)
            assert s1.shape == (2 * trained.frame_dim, width)
            h1 = trained.stage1.encode(s1)
            s2 = stage2_input(h1, trained.z)
            assert s2.shape == (trained.stage2.input_dim, 2 * trained.z)
            s3 = stage3_input(trained.stage2.encode(s2), trained.z)
            assert s3.shape == (trained.stage3.input_dim, 1)
            np.testing.assert_allclose(trained.stage3.encode(s3)[:, 0], feats[:, k], rtol=0, atol=1e-14)
        assert pair_probabilities(trained, a, b).shape == (len(pairs),)


def test_svm_fits_identical_latent_families(tmp_path, quick_config):
    """Kin pairs of noise-free families are separated from non-kin pairs on the training vectors."""
    cfg = SyntheticConfig(families=10, members_per_family=2, frame_dim=16, frames_per_video=3,
                          kin_noise=0.0, drift=0.0, seed=8)
    pairs = load_labeled_pairs(gen_synthetic_kin(cfg, tmp_path), tmp_path)
    model = train_pipeline(pairs, quick_config.model_copy(update={"svm": SvmConfig(c=1000.0, gamma=1e8)}))
    feats, labels = [], []
    for a, b, label in pairs:
        vp = vidlet_pairs(a, b, model.z)
        feats.append(vidlet_features(model, vp))
        labels.extend([1 if label else -1] * len(vp))
    predicted = np.sign(decision_values(model.classifier, np.hstack(feats)))
    assert np.mean(predicted == np.array(labels)) >= 0.95
