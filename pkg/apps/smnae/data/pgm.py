"""Binary PGM (P5) frames."""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from ..errors import DataFormatError

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _header_fields(data: bytes, path: Path) -> tuple[list[int], int]:
    """Parse magic, width, height, maxval; returns them with the offset of the pixel data."""
    if not data.startswith(b"P5"):
        raise DataFormatError(f"{path}: not a binary PGM (P5) file")
    pos = 2
    values: list[int] = []
    for _ in range(3):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise DataFormatError(f"{path}: truncated PGM header")
        try:
            values.append(int(m.group(1)))
        except ValueError as e:
            raise DataFormatError(f"{path}: bad PGM header field {m.group(1)!r}") from e
        pos = m.end()
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise DataFormatError(f"{path}: missing separator after PGM header")
    return values, pos + 1


def read_pgm(path: str | Path) -> tuple[np.ndarray, int]:
    """Return (pixels as height x width integers, maxval)."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise DataFormatError(f"{path}: cannot read frame: {e}") from e
    (width, height, maxval), offset = _header_fields(data, path)
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise DataFormatError(f"{path}: invalid PGM dimensions {width}x{height} maxval {maxval}")
    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    expected = width * height * dtype.itemsize
    raster = data[offset:offset + expected]
    if len(raster) < expected:
        raise DataFormatError(f"{path}: truncated PGM raster, expected {expected} bytes, got {len(raster)}")
    return np.frombuffer(raster, dtype=dtype).reshape(height, width), maxval


def write_pgm(path: str | Path, pixels: np.ndarray, maxval: int = 255) -> None:
    pixels = np.asarray(pixels)
    if pixels.ndim != 2:
        raise DataFormatError(f"{path}: PGM frames must be 2-D, got shape {pixels.shape}")
    height, width = pixels.shape
    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + pixels.astype(dtype).tobytes())
