"""Binary model container.

    b"SMNAE1" | u32 format version | sections... | sha256 of all preceding bytes

Each section is a 4-byte tag, a u64 payload length and the payload. Integers
are little-endian; matrices are u64 rows, u64 cols and row-major '<f8' values,
so a load reproduces every weight bit for bit.

    META  orjson object: kind, z, fusion, frame_dim, config
    STG1  stacked autoencoder: u32 layer count, then encoder/decoder matrices
    STG2  (pipeline models only)
    STG3  (pipeline models only)
    SVM_  gamma, c, bias, platt a/b (f64), converged (u8), iterations (u64),
          support vectors (matrix), signed alphas (1 x n matrix)
"""
from __future__ import annotations

import hashlib
import io
import logging
import struct
from pathlib import Path

import numpy as np
import orjson

from .config import PipelineConfig
from .errors import DataFormatError
from .layer import SmnaeLayer, StackedSmnae
from .pipeline import FORMAT_VERSION, FrameModel, PipelineModel
from .svm import SvmModel

logger = logging.getLogger(__name__)

MAGIC = b"SMNAE1"
DIGEST_SIZE = 32

Model = PipelineModel | FrameModel


def _matrix(buf: io.BytesIO, m: np.ndarray) -> None:
    m = np.ascontiguousarray(m, dtype="<f8")
    buf.write(struct.pack("<QQ", *m.shape))
    buf.write(m.tobytes(order="C"))


def _stack(s: StackedSmnae) -> bytes:
    buf = io.BytesIO()
    buf.write(struct.pack("<I", len(s.layers)))
    for layer in s.layers:
        _matrix(buf, layer.w_enc)
        _matrix(buf, layer.w_dec)
    return buf.getvalue()


def _svm(model: SvmModel) -> bytes:
    buf = io.BytesIO()
    a = np.nan if model.platt_a is None else model.platt_a
    b = np.nan if model.platt_b is None else model.platt_b
    buf.write(struct.pack("<5dBQ", model.gamma, model.c, model.bias, a, b, int(model.converged), model.iterations))
    _matrix(buf, model.support_vectors)
    _matrix(buf, model.alphas.reshape(1, -1))
    return buf.getvalue()


def dumps_model(model: Model) -> bytes:
    kind = "pipeline" if isinstance(model, PipelineModel) else "frame"
    meta = {
        "kind": kind,
        "format_version": model.format_version,
        "frame_dim": model.frame_dim,
        "z": model.z if isinstance(model, PipelineModel) else 0,
        "fusion": model.fusion if isinstance(model, PipelineModel) else model.config.fusion,
        "config": model.config.model_dump(mode="json", by_alias=True),
    }
    sections = [(b"META", orjson.dumps(meta, option=orjson.OPT_SORT_KEYS)), (b"STG1", _stack(model.stage1))]
    if isinstance(model, PipelineModel):
        sections += [(b"STG2", _stack(model.stage2)), (b"STG3", _stack(model.stage3))]
    sections.append((b"SVM_", _svm(model.classifier)))

    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    for tag, payload in sections:
        buf.write(tag)
        buf.write(struct.pack("<Q", len(payload)))
        buf.write(payload)
    body = buf.getvalue()
    return body + hashlib.sha256(body).digest()


class _Reader:
    def __init__(self, data: bytes, where: str):
        self._data = data
        self._pos = 0
        self._where = where

    def take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise DataFormatError(f"{self._where}: truncated model data at byte {self._pos}")
        chunk = self._data[self._pos:self._pos + n]
        self._pos += n
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def matrix(self) -> np.ndarray:
        rows, cols = self.unpack("<QQ")
        return np.frombuffer(self.take(8 * rows * cols), dtype="<f8").reshape(rows, cols).astype(np.float64)

    @property
    def done(self) -> bool:
        return self._pos == len(self._data)


def _read_stack(payload: bytes, where: str) -> StackedSmnae:
    r = _Reader(payload, where)
    (n_layers,) = r.unpack("<I")
    layers = tuple(SmnaeLayer(w_enc=r.matrix(), w_dec=r.matrix()) for _ in range(n_layers))
    if not r.done:
        raise DataFormatError(f"{where}: trailing bytes in stack section")
    return StackedSmnae(layers)


def _read_svm(payload: bytes, where: str) -> SvmModel:
    r = _Reader(payload, where)
    gamma, c, bias, a, b, converged, iterations = r.unpack("<5dBQ")
    sv = r.matrix()
    alphas = r.matrix().ravel()
    if not r.done:
        raise DataFormatError(f"{where}: trailing bytes in SVM section")
    return SvmModel(support_vectors=sv, alphas=alphas, bias=bias, gamma=gamma, c=c,
                    platt_a=None if np.isnan(a) else a, platt_b=None if np.isnan(b) else b,
                    converged=bool(converged), iterations=iterations)


def loads_model(data: bytes, where: str = "<bytes>") -> Model:
    if not data.startswith(MAGIC):
        raise DataFormatError(f"{where}: not an SMNAE1 model file")
    if len(data) < len(MAGIC) + 4 + DIGEST_SIZE:
        raise DataFormatError(f"{where}: truncated model file")
    body, digest = data[:-DIGEST_SIZE], data[-DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        raise DataFormatError(f"{where}: checksum mismatch")

    r = _Reader(body, where)
    r.take(len(MAGIC))
    (version,) = r.unpack("<I")
    if version > FORMAT_VERSION:
        raise DataFormatError(f"{where}: format version {version} is newer than supported {FORMAT_VERSION}")
    sections: dict[bytes, bytes] = {}
    while not r.done:
        tag = r.take(4)
        (length,) = r.unpack("<Q")
        sections[tag] = r.take(length)

    missing = [t.decode() for t in (b"META", b"STG1", b"SVM_") if t not in sections]
    if missing:
        raise DataFormatError(f"{where}: missing sections {missing}")
    try:
        meta = orjson.loads(sections[b"META"])
        config = PipelineConfig.model_validate(meta["config"])
    except (orjson.JSONDecodeError, KeyError, ValueError) as e:
        raise DataFormatError(f"{where}: bad META section: {e}") from e

    stage1 = _read_stack(sections[b"STG1"], where)
    classifier = _read_svm(sections[b"SVM_"], where)
    if meta.get("kind") == "frame":
        return FrameModel(stage1=stage1, classifier=classifier, config=config, format_version=version)
    for t in (b"STG2", b"STG3"):
        if t not in sections:
            raise DataFormatError(f"{where}: missing section {t.decode()}")
    return PipelineModel(stage1=stage1, stage2=_read_stack(sections[b"STG2"], where),
                         stage3=_read_stack(sections[b"STG3"], where), classifier=classifier,
                         z=int(meta["z"]), fusion=meta["fusion"], config=config, format_version=version)


def save_model(model: Model, path: str | Path) -> None:
    data = dumps_model(model)
    Path(path).write_bytes(data)
    logger.info(f"Model saved: path={path}, bytes={len(data)}")


def load_model(path: str | Path) -> Model:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise DataFormatError(f"{path}: cannot read model: {e}") from e
    return loads_model(data, str(path))
