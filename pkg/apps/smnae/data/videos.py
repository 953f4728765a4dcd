from __future__ import annotations

import logging
import re
from pathlib import Path

import numpy as np

from ..errors import DataFormatError
from ..vidlets import VideoSequence
from .pgm import read_pgm, write_pgm

logger = logging.getLogger(__name__)

FRAME_SUFFIX = ".pgm"


def natural_key(name: str) -> list:
    """Sort key treating digit runs as numbers: frame_2 < frame_10."""
    return [int(tok) if tok.isdigit() else tok for tok in re.split(r"(\d+)", name)]


def load_video_dir(path: str | Path, family_id: str | None = None) -> VideoSequence:
    """Read every PGM frame of a subject directory, scaled to [0, 1], one column per frame."""
    path = Path(path)
    if not path.is_dir():
        raise DataFormatError(f"{path}: video directory not found")
    files = sorted((f for f in path.iterdir() if f.suffix.lower() == FRAME_SUFFIX), key=lambda f: natural_key(f.name))
    if not files:
        raise DataFormatError(f"{path}: no {FRAME_SUFFIX} frames")

    frames: list[np.ndarray] = []
    shapes: dict[str, tuple[int, int]] = {}
    for f in files:
        pixels, maxval = read_pgm(f)
        shapes[f.name] = pixels.shape
        frames.append(pixels.astype(np.float64).ravel() / maxval)
    if len(set(shapes.values())) > 1:
        first = shapes[files[0].name]
        offenders = ", ".join(f"{name} {s[1]}x{s[0]}" for name, s in shapes.items() if s != first)
        raise DataFormatError(f"{path}: frames have mixed dimensions, expected {first[1]}x{first[0]}: {offenders}")

    family = family_id if family_id is not None else path.parent.name
    return VideoSequence(np.stack(frames, axis=1), subject_id=path.name, family_id=family)


def write_video_dir(path: str | Path, frames: list[np.ndarray], maxval: int = 255) -> None:
    """Write 2-D integer frames as frame_0000.pgm, frame_0001.pgm, ..."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for k, pixels in enumerate(frames):
        write_pgm(path / f"frame_{k:04d}{FRAME_SUFFIX}", pixels, maxval)
