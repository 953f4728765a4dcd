"""MNIST IDX files.

    images: u32 magic 0x00000803 | u32 count | u32 rows | u32 cols | u8 pixels, row-wise
    labels: u32 magic 0x00000801 | u32 count | u8 labels
All header integers are big-endian. Files may be gzip-compressed (.gz).
"""
from __future__ import annotations

import gzip
import struct
from pathlib import Path

import numpy as np

from ..errors import DataFormatError
from ..numerics import Matrix

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

SPLIT_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


def _read_bytes(path: Path) -> bytes:
    try:
        if path.suffix == ".gz":
            with gzip.open(path, "rb") as f:
                return f.read()
        return path.read_bytes()
    except OSError as e:
        raise DataFormatError(f"{path}: cannot read IDX file: {e}") from e


def _parse(path: Path, magic: int, n_dims: int) -> tuple[tuple[int, ...], np.ndarray]:
    data = _read_bytes(path)
    header_len = 4 * (1 + n_dims)
    if len(data) < header_len:
        raise DataFormatError(f"{path}: truncated IDX header, expected {header_len} bytes, got {len(data)}")
    found, *dims = struct.unpack(f">{1 + n_dims}I", data[:header_len])
    if found != magic:
        raise DataFormatError(f"{path}: bad IDX magic 0x{found:08x}, expected 0x{magic:08x}")
    expected = header_len + int(np.prod(dims))
    if len(data) != expected:
        kind = "truncated" if len(data) < expected else "oversized"
        raise DataFormatError(f"{path}: {kind} IDX file, expected {expected} bytes, got {len(data)}")
    return tuple(dims), np.frombuffer(data, dtype=np.uint8, offset=header_len)


def load_mnist_idx(images_path: str | Path, labels_path: str | Path) -> tuple[Matrix, np.ndarray]:
    """Images as (rows*cols) x count in [0, 1], one column per image, with integer labels."""
    (count, rows, cols), pixels = _parse(Path(images_path), IMAGE_MAGIC, 3)
    (n_labels,), labels = _parse(Path(labels_path), LABEL_MAGIC, 1)
    if n_labels != count:
        raise DataFormatError(f"{images_path} holds {count} images but {labels_path} holds {n_labels} labels")
    if labels.size and labels.max() > 9:
        raise DataFormatError(f"{labels_path}: label {int(labels.max())} outside 0-9")
    images = pixels.reshape(count, rows * cols).T.astype(np.float64) / 255.0
    return images, labels.astype(np.int64)


def find_mnist_files(directory: str | Path, split: str) -> tuple[Path, Path] | None:
    """Locate the IDX pair for `split` under the usual file names, dotted or dashed, optionally gzipped."""
    base = Path(directory)
    found = []
    for name in SPLIT_FILES[split]:
        stem, kind = name.split("-idx")
        candidates = [base / f"{stem}-idx{kind}", base / f"{stem}.idx{kind}"]
        candidates += [c.with_name(c.name + ".gz") for c in candidates]
        hit = next((c for c in candidates if c.is_file()), None)
        if hit is None:
            return None
        found.append(hit)
    return found[0], found[1]
