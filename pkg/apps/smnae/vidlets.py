"""Vidlets and the per-stage input builders.

A vidlet is a non-overlapping window of 2z+1 consecutive frames; its centre
frame is the pivot. Frames are stored column-wise, one column per frame.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ValidationError
from .numerics import Matrix, as_matrix


@dataclass(frozen=True, eq=False)
class VideoSequence:
    frames: Matrix  # frame_dim x n_frames, values in [0, 1]
    subject_id: str = ""
    family_id: str = ""

    def __post_init__(self) -> None:
        if self.frames.ndim != 2 or self.frames.shape[1] < 1:
            raise ValidationError(f"video {self.subject_id or '?'} needs at least one frame")

    @classmethod
    def from_frames(cls, frames, subject_id: str = "", family_id: str = "") -> VideoSequence:
        """Build from a sequence of flat frame vectors."""
        vectors = [np.asarray(f, dtype=np.float64).ravel() for f in frames]
        if not vectors:
            raise ValidationError(f"video {subject_id or '?'} needs at least one frame")
        dims = {v.size for v in vectors}
        if len(dims) != 1:
            raise DimensionError(f"frames of video {subject_id or '?'} have mixed dimensions: {sorted(dims)}")
        return cls(as_matrix(np.stack(vectors, axis=1), "frames"), subject_id, family_id)

    @property
    def frame_dim(self) -> int:
        return self.frames.shape[0]

    @property
    def n_frames(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True, eq=False)
class Vidlet:
    frames: Matrix  # frame_dim x (2z+1)
    source_offset: int

    @property
    def z(self) -> int:
        return (self.frames.shape[1] - 1) // 2

    @property
    def pivot_index(self) -> int:
        return self.z

    @property
    def pivot(self) -> np.ndarray:
        return self.frames[:, self.pivot_index]


def extract_vidlets(video: VideoSequence, z: int) -> list[Vidlet]:
    if z < 1:
        raise ValidationError(f"z must be >= 1, got {z}")
    width = 2 * z + 1
    if video.n_frames < width:
        raise ValidationError(
            f"video {video.subject_id or '?'} has {video.n_frames} frames, fewer than one vidlet "
            f"(2z+1 = {width}); cycle it against its partner with cycle_align first"
        )
    count = video.n_frames // width
    return [Vidlet(frames=video.frames[:, k * width:(k + 1) * width], source_offset=k * width)
            for k in range(count)]


def cycle_align(a: VideoSequence, b: VideoSequence) -> tuple[VideoSequence, VideoSequence]:
    """Repeat the shorter video's frames from its start until both lengths match."""
    n = max(a.n_frames, b.n_frames)

    def cycled(v: VideoSequence) -> VideoSequence:
        if v.n_frames == n:
            return v
        idx = np.arange(n) % v.n_frames
        return VideoSequence(v.frames[:, idx], v.subject_id, v.family_id)

    return cycled(a), cycled(b)


def stage1_input(vi: Vidlet, vj: Vidlet) -> Matrix:
    """Column k stacks frame k of `vi` over frame k of `vj`."""
    if vi.frames.shape != vj.frames.shape:
        raise DimensionError(f"vidlet shapes differ: {vi.frames.shape} vs {vj.frames.shape}")
    return np.vstack([vi.frames, vj.frames])


def _neighbours(z: int) -> list[int]:
    return [k for k in range(2 * z + 1) if k != z]


def stage2_input(h: Matrix, z: int) -> Matrix:
    """Pivot encoding stacked over each neighbour's encoding, neighbours left to right."""
    if h.shape[1] != 2 * z + 1:
        raise DimensionError(f"stage-2 input needs 2z+1 = {2 * z + 1} encodings, got {h.shape[1]}")
    nb = _neighbours(z)
    pivot = np.repeat(h[:, [z]], len(nb), axis=1)
    return np.vstack([pivot, h[:, nb]])


def stage3_input(s2: Matrix, z: int) -> Matrix:
    """The 2z stage-2 encodings concatenated into one column."""
    if s2.shape[1] != 2 * z:
        raise DimensionError(f"stage-3 input needs 2z = {2 * z} encodings, got {s2.shape[1]}")
    return s2.reshape(-1, 1, order="F")
