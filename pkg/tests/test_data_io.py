"""Tests for frames, video directories, pair lists, the synthetic generator and MNIST IDX files."""
import gzip
import logging
import struct

import numpy as np
import pytest
from pydantic import ValidationError as PydanticValidationError

from apps.smnae.config import SyntheticConfig
from apps.smnae.data import (
    PAIRS_FILE,
    PairRecord,
    family_of,
    find_mnist_files,
    gen_synthetic_kin,
    load_mnist_idx,
    load_pair_list,
    load_video_dir,
    partition_subject_disjoint,
    read_pgm,
    write_pair_list,
    write_pgm,
    write_video_dir,
)
from apps.smnae.data.videos import natural_key
from apps.smnae.errors import DataFormatError, ValidationError


@pytest.fixture
def small_synthetic():
    return SyntheticConfig(families=4, members_per_family=2, frame_dim=16, frames_per_video=3, seed=3)


def idx_images(pixels: np.ndarray) -> bytes:
    count, rows, cols = pixels.shape
    return struct.pack(">4I", 0x00000803, count, rows, cols) + pixels.astype(np.uint8).tobytes()


def idx_labels(labels) -> bytes:
    return struct.pack(">2I", 0x00000801, len(labels)) + bytes(labels)


# --- PGM -------------------------------------------------------------------

def test_pgm_round_trip(tmp_path):
    """8-bit and 16-bit rasters survive a write/read cycle."""
    pixels = np.arange(12, dtype=np.uint8).reshape(3, 4)
    write_pgm(tmp_path / "a.pgm", pixels)
    back, maxval = read_pgm(tmp_path / "a.pgm")
    assert maxval == 255
    np.testing.assert_array_equal(back, pixels)
    wide = np.array([[0, 1000], [40000, 65535]])
    write_pgm(tmp_path / "b.pgm", wide, maxval=65535)
    back, maxval = read_pgm(tmp_path / "b.pgm")
    assert maxval == 65535
    np.testing.assert_array_equal(back, wide)


def test_pgm_header_comments(tmp_path):
    """Comment lines inside the header are skipped."""
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# made by hand\n2 1\n# depth\n255\n" + bytes([7, 9]))
    pixels, _ = read_pgm(path)
    np.testing.assert_array_equal(pixels, [[7, 9]])


def test_pgm_errors(tmp_path):
    """Wrong magic, a short raster and a missing file are format errors."""
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(DataFormatError, match="P5"):
        read_pgm(bad)
    short = tmp_path / "short.pgm"
    short.write_bytes(b"P5\n4 4\n255\n" + bytes(5))
    with pytest.raises(DataFormatError, match="truncated"):
        read_pgm(short)
    with pytest.raises(DataFormatError):
        read_pgm(tmp_path / "missing.pgm")


# --- video directories -------------------------------------------------------

def test_natural_key_orders_numbers():
    """frame_2 sorts before frame_10."""
    assert sorted(["frame_10.pgm", "frame_2.pgm", "frame_1.pgm"], key=natural_key) == [
        "frame_1.pgm", "frame_2.pgm", "frame_10.pgm"]


def test_load_video_dir_natural_order(tmp_path):
    """Frames load in natural order, scaled by maxval, family taken from the parent directory."""
    video = tmp_path / "F001" / "S00"
    video.mkdir(parents=True)
    for k in (10, 2, 1):
        write_pgm(video / f"frame_{k}.pgm", np.full((2, 2), k * 20, dtype=np.uint8))
    seq = load_video_dir(video)
    assert seq.n_frames == 3 and seq.frame_dim == 4
    np.testing.assert_allclose(seq.frames[0], [20 / 255, 40 / 255, 200 / 255])
    assert seq.subject_id == "S00" and seq.family_id == "F001"


def test_load_video_dir_mixed_dimensions(tmp_path):
    """A frame of a different size is named in the error."""
    write_pgm(tmp_path / "frame_0.pgm", np.zeros((2, 2), dtype=np.uint8))
    write_pgm(tmp_path / "frame_1.pgm", np.zeros((3, 2), dtype=np.uint8))
    with pytest.raises(DataFormatError, match="frame_1.pgm"):
        load_video_dir(tmp_path)


def test_load_video_dir_missing_or_empty(tmp_path):
    """A missing directory or one without frames is a format error."""
    with pytest.raises(DataFormatError):
        load_video_dir(tmp_path / "nope")
    with pytest.raises(DataFormatError):
        load_video_dir(tmp_path)


def test_write_video_dir_names(tmp_path):
    """Frames are written as zero-padded frame_XXXX.pgm files."""
    write_video_dir(tmp_path / "v", [np.zeros((2, 2), dtype=np.uint8)] * 2)
    assert sorted(p.name for p in (tmp_path / "v").iterdir()) == ["frame_0000.pgm", "frame_0001.pgm"]


# --- pair lists ---------------------------------------------------------------

def test_pair_list_round_trip(tmp_path):
    """Relations are kept when present; the family is the first path component."""
    pairs = [PairRecord("F1/S1", "F1/S2", True, "FS"), PairRecord("F1/S1", "F2/S1", False, "")]
    path = tmp_path / "pairs.csv"
    write_pair_list(path, pairs)
    assert path.read_text().splitlines()[0] == "video_a,video_b,label,relation"
    assert load_pair_list(path) == pairs
    assert pairs[1].families == ("F1", "F2")
    assert family_of("F9\\S3") == "F9"


def test_pair_list_header_and_line_errors(tmp_path):
    """A wrong header, a bad label and a short row report their line."""
    path = tmp_path / "p.csv"
    path.write_text("a,b,label\nx,y,1\n")
    with pytest.raises(DataFormatError, match="line 1"):
        load_pair_list(path)
    path.write_text("video_a,video_b,label\nF1/S1,F1/S2,1\nF1/S1,F2/S1,yes\n")
    with pytest.raises(DataFormatError, match="line 3"):
        load_pair_list(path)
    path.write_text("video_a,video_b,label\nF1/S1,1\n")
    with pytest.raises(DataFormatError, match="line 2"):
        load_pair_list(path)


def test_pair_list_skips_blank_lines(tmp_path):
    """Blank lines are ignored."""
    path = tmp_path / "p.csv"
    path.write_text("video_a,video_b,label\n\nF1/S1,F1/S2,1\n\n")
    assert len(load_pair_list(path)) == 1


def test_partition_is_family_disjoint(small_synthetic, tmp_path):
    """No family crosses the split, linked families stay together and each side has both labels."""
    pairs = gen_synthetic_kin(small_synthetic, tmp_path)
    train, test = partition_subject_disjoint(pairs, 0.5, seed=1)
    train_fams = {f for p in train for f in p.families}
    test_fams = {f for p in test for f in p.families}
    assert not train_fams & test_fams
    assert len(test_fams) == 2
    assert len(train) + len(test) == len(pairs)
    again = partition_subject_disjoint(pairs, 0.5, seed=1)
    assert again == (train, test)


def test_partition_rejects_bad_fraction(small_synthetic, tmp_path):
    """The fraction must lie strictly inside (0, 1)."""
    pairs = gen_synthetic_kin(small_synthetic, tmp_path)
    for frac in (0.0, 1.0):
        with pytest.raises(ValidationError):
            partition_subject_disjoint(pairs, frac, seed=0)


# --- synthetic data -----------------------------------------------------------

def test_synthetic_layout_and_pairs(small_synthetic, tmp_path):
    """Videos land under Fxxx/Sxx; pairs are balanced and non-kin pairs stay inside a block."""
    pairs = gen_synthetic_kin(small_synthetic, tmp_path)
    assert (tmp_path / "F000" / "S00" / "frame_0000.pgm").is_file()
    assert len(list((tmp_path / "F003" / "S01").iterdir())) == 3
    assert sum(p.label for p in pairs) == 4
    assert len(pairs) == 8
    assert all(p.families[0] == p.families[1] for p in pairs if p.label)
    assert all(p.families[0] != p.families[1] for p in pairs if not p.label)
    assert load_pair_list(tmp_path / PAIRS_FILE) == pairs
    assert (tmp_path / PAIRS_FILE).read_text().splitlines()[0] == "video_a,video_b,label"
    video = load_video_dir(tmp_path / "F002" / "S00")
    assert video.frame_dim == 16 and video.n_frames == 3


def test_synthetic_is_deterministic(small_synthetic, tmp_path):
    """The same config produces byte-identical trees."""
    gen_synthetic_kin(small_synthetic, tmp_path / "a")
    gen_synthetic_kin(small_synthetic, tmp_path / "b")
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    assert files_a == files_b
    for rel in files_a:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_synthetic_config_requires_square_frames():
    """frame_dim must be a perfect square."""
    with pytest.raises(PydanticValidationError):
        SyntheticConfig(frame_dim=20)


# --- MNIST IDX ----------------------------------------------------------------

def test_mnist_idx_parse(tmp_path):
    """Pixels become columns in [0, 1]; labels are integers."""
    pixels = np.arange(2 * 2 * 3, dtype=np.uint8).reshape(2, 2, 3) * 20
    (tmp_path / "train-images-idx3-ubyte").write_bytes(idx_images(pixels))
    (tmp_path / "train-labels-idx1-ubyte").write_bytes(idx_labels([3, 7]))
    images, labels = load_mnist_idx(tmp_path / "train-images-idx3-ubyte", tmp_path / "train-labels-idx1-ubyte")
    assert images.shape == (6, 2)
    np.testing.assert_allclose(images[:, 1], pixels[1].ravel() / 255.0)
    np.testing.assert_array_equal(labels, [3, 7])


def test_mnist_gzip_and_dotted_names(tmp_path):
    """Gzipped files under dotted names are found and read."""
    pixels = np.zeros((1, 2, 2), dtype=np.uint8)
    (tmp_path / "t10k-images.idx3-ubyte.gz").write_bytes(gzip.compress(idx_images(pixels)))
    (tmp_path / "t10k-labels.idx1-ubyte.gz").write_bytes(gzip.compress(idx_labels([5])))
    found = find_mnist_files(tmp_path, "test")
    assert found is not None
    images, labels = load_mnist_idx(*found)
    assert images.shape == (4, 1) and labels.tolist() == [5]
    assert find_mnist_files(tmp_path, "train") is None


def test_mnist_errors(tmp_path):
    """Bad magic, truncation and a count mismatch are format errors with byte counts."""
    img, lab = tmp_path / "img", tmp_path / "lab"
    img.write_bytes(struct.pack(">4I", 0x00000801, 1, 2, 2) + bytes(4))
    lab.write_bytes(idx_labels([1]))
    with pytest.raises(DataFormatError, match="magic"):
        load_mnist_idx(img, lab)
    img.write_bytes(struct.pack(">4I", 0x00000803, 1, 2, 2) + bytes(3))
    with pytest.raises(DataFormatError, match="expected 20 bytes, got 19"):
        load_mnist_idx(img, lab)
    img.write_bytes(idx_images(np.zeros((2, 2, 2), dtype=np.uint8)))
    with pytest.raises(DataFormatError, match="labels"):
        load_mnist_idx(img, lab)


def test_partition_ten_families(tmp_path):
    """Ten families at fraction 0.6 put six families on the test side."""
    pairs = gen_synthetic_kin(SyntheticConfig(families=10, members_per_family=2, frame_dim=4, frames_per_video=1,
                                              seed=5), tmp_path)
    train, test = partition_subject_disjoint(pairs, 0.6, seed=2)
    assert len({f for p in test for f in p.families}) == 6
    assert len({f for p in train for f in p.families}) == 4


def test_partition_warns_when_short_of_target(caplog):
    """Linked families that cannot fill the target are reported with the achieved count."""
    pairs = [
        PairRecord("F0/S0", "F0/S1", True),
        PairRecord("F0/S0", "F1/S0", False),
        PairRecord("F1/S0", "F2/S0", False),
        PairRecord("F2/S0", "F2/S1", True),
        PairRecord("F3/S0", "F3/S1", True),
        PairRecord("F3/S0", "F3/S2", False),
    ]
    with caplog.at_level(logging.WARNING, logger="apps.smnae.data.pairs"):
        train, test = partition_subject_disjoint(pairs, 0.5, seed=0)
    assert {f for p in test for f in p.families} == {"F3"}
    assert len(train) == 4
    assert "target=2, achieved=1" in caplog.text


def test_pair_list_rejects_unknown_relation(tmp_path):
    """Relation tags outside the seven kin relations are rejected with their line."""
    path = tmp_path / "p.csv"
    path.write_text("video_a,video_b,label,relation\nF1/S1,F1/S2,1,FS\nF1/S1,F1/S3,1,XY\n")
    with pytest.raises(DataFormatError, match="line 3"):
        load_pair_list(path)


def test_synthetic_kin_frames_are_closer(tmp_path):
    """Under the default config kin videos are nearer frame by frame than non-kin videos."""
    pairs = gen_synthetic_kin(SyntheticConfig(), tmp_path)
    kin, nonkin = [], []
    for p in pairs:
        a = load_video_dir(tmp_path / p.video_a).frames
        b = load_video_dir(tmp_path / p.video_b).frames
        (kin if p.label else nonkin).append(float(np.mean(np.linalg.norm(a - b, axis=0))))
    assert np.mean(kin) < np.mean(nonkin)
