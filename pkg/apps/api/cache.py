from __future__ import annotations
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

from apps.smnae.config import settings
from apps.smnae.errors import DataFormatError
from apps.smnae.serialization import Model, load_model

logger = logging.getLogger(__name__)


@dataclass
class _Entry:
    model: Model
    mtime_ns: int
    expires_at: float


class ModelCache:
    """Trained models keyed by resolved path; an entry is stale once its file's mtime changes or its TTL runs out."""

    def __init__(self, ttl_s: Optional[int] = None, max_size: int = 4):
        self._entries: Dict[Path, _Entry] = {}
        self._ttl = ttl_s or settings.model_cache_ttl_s
        self._max_size = max_size
        self.loads = 0

    def load(self, path: str | Path) -> Model:
        path = Path(path)
        try:
            mtime = path.stat().st_mtime_ns
        except OSError as e:
            raise DataFormatError(f"{path}: model not found: {e}") from e
        key = path.resolve()
        entry = self._entries.get(key)
        now = time.time()
        if entry is not None and entry.mtime_ns == mtime and now <= entry.expires_at:
            return entry.model
        if entry is not None:
            reason = "rewritten" if entry.mtime_ns != mtime else "expired"
            logger.info(f"Model cache entry dropped: path={path}, reason={reason}")
            del self._entries[key]

        t0 = time.time()
        model = load_model(path)
        self.loads += 1
        self._evict(now)
        self._entries[key] = _Entry(model, mtime, now + self._ttl)
        logger.info(f"Model loaded: path={path}, duration={time.time() - t0:.2f}s")
        return model

    def _evict(self, now: float) -> None:
        self._evict_expired(now)
        while len(self._entries) >= self._max_size:
            oldest = min(self._entries, key=lambda k: self._entries[k].expires_at)
            del self._entries[oldest]

    def clear(self) -> None:
        self._entries.clear()

    def size(self) -> int:
        self._evict_expired(time.time())
        return len(self._entries)

    def _evict_expired(self, now: float) -> None:
        for k in [k for k, e in self._entries.items() if now > e.expires_at]:
            del self._entries[k]
