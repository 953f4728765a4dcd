from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from prometheus_client import Counter, Histogram, generate_latest, CONTENT_TYPE_LATEST
from starlette.responses import Response
from pathlib import Path
import asyncio
import time
import logging
from apps.smnae.config import settings
from apps.smnae.data import load_video_dir
from apps.smnae.errors import SmnaeError, ValidationError
from apps.smnae.pipeline import FrameModel, average_orders, score_frame_pairs, score_video_pair
from apps.smnae.vidlets import VideoSequence
from .cache import ModelCache
from .schemas import ReadyResponse, ScoreRequest

# Configure structured logging
logging.basicConfig(
    level=settings.log_level.upper(),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

app = FastAPI(title=settings.app_name)

# CORS: parse comma-separated origins from config
raw_origins = settings.app_origin or "http://localhost:3000,http://127.0.0.1:3000"
cors_origins = [o.strip() for o in raw_origins.split(",") if o.strip()]

# Fallback to dev defaults if empty
if not cors_origins:
    cors_origins = ["http://localhost:3000", "http://127.0.0.1:3000"]

app.add_middleware(
    CORSMiddleware,
    allow_origins=cors_origins,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Prometheus metrics
smnae_requests_total = Counter("smnae_requests_total", "Total API requests", ["endpoint", "status"])
smnae_score_duration = Histogram("smnae_score_duration_seconds", "Pair scoring duration", ["fusion"])
smnae_units_scored_total = Counter("smnae_units_scored_total", "Vidlet or frame pairs scored", ["unit"])

model_cache = ModelCache()


def _resolve_video(rel: str) -> Path:
    """Video directory under the data root; paths escaping the root are rejected."""
    root = Path(settings.data_root).resolve()
    path = (root / rel).resolve()
    if path != root and root not in path.parents:
        raise ValidationError(f"video path escapes the data root: {rel}")
    return path


def _score_one_way(model, a: VideoSequence, b: VideoSequence, fusion):
    if isinstance(model, FrameModel):
        return score_frame_pairs(model, a, b, fusion)
    return score_video_pair(model, a, b, fusion)


@app.get("/health")
def health():
    smnae_requests_total.labels(endpoint="health", status="200").inc()
    return {"ok": True, "app": settings.app_name}


@app.get("/ready", response_model=ReadyResponse)
async def ready():
    """Ready when the configured model file loads."""
    try:
        model = await asyncio.to_thread(model_cache.load, settings.model_path)
    except SmnaeError as e:
        smnae_requests_total.labels(endpoint="ready", status="503").inc()
        logger.warning(f"Model unavailable: path={settings.model_path}, error={e}")
        raise HTTPException(503, f"Model unavailable: {e}")
    smnae_requests_total.labels(endpoint="ready", status="200").inc()
    is_frame = isinstance(model, FrameModel)
    return ReadyResponse(ok=True, model=settings.model_path, kind="frame" if is_frame else "pipeline",
                         frame_dim=model.frame_dim, z=0 if is_frame else model.z,
                         fusion=model.config.fusion if is_frame else model.fusion)


@app.get("/metrics")
def metrics():
    """Prometheus metrics endpoint."""
    return Response(generate_latest(), media_type=CONTENT_TYPE_LATEST)


@app.post("/api/score")
async def score(req: ScoreRequest, request: Request):
    """Score one video pair; with symmetric=true both orders run concurrently and are averaged."""
    t0 = time.time()
    client = request.client.host if request.client else "unknown"
    logger.info(f"Score request: video_a={req.video_a}, video_b={req.video_b}, symmetric={req.symmetric}, "
                f"client={client}")
    try:
        model = await asyncio.to_thread(model_cache.load, settings.model_path)
    except SmnaeError as e:
        smnae_requests_total.labels(endpoint="score", status="503").inc()
        logger.warning(f"Model unavailable: path={settings.model_path}, error={e}")
        raise HTTPException(503, f"Model unavailable: {e}")
    try:
        a, b = await asyncio.gather(
            asyncio.to_thread(load_video_dir, _resolve_video(req.video_a)),
            asyncio.to_thread(load_video_dir, _resolve_video(req.video_b)),
        )
        if req.symmetric:
            forward, backward = await asyncio.gather(
                asyncio.to_thread(_score_one_way, model, a, b, req.fusion),
                asyncio.to_thread(_score_one_way, model, b, a, req.fusion),
            )
            result = average_orders(forward, backward)
            fusion, unit, units = forward.fusion, forward.unit, forward.n_vidlets + backward.n_vidlets
        else:
            result = await asyncio.to_thread(_score_one_way, model, a, b, req.fusion)
            fusion, unit, units = result.fusion, result.unit, result.n_vidlets
    except SmnaeError as e:
        smnae_requests_total.labels(endpoint="score", status=str(e.http_status)).inc()
        if e.http_status >= 500:
            logger.error(f"Score error after {time.time() - t0:.2f}s: {e}", exc_info=True)
        else:
            logger.warning(f"Score rejected: {e}")
        raise HTTPException(e.http_status, str(e))
    except Exception as e:
        smnae_requests_total.labels(endpoint="score", status="500").inc()
        logger.error(f"Score error after {time.time() - t0:.2f}s: {str(e)}", exc_info=True)
        raise HTTPException(500, str(e))

    duration = time.time() - t0
    smnae_requests_total.labels(endpoint="score", status="200").inc()
    smnae_score_duration.labels(fusion=fusion).observe(duration)
    smnae_units_scored_total.labels(unit=unit).inc(units)
    logger.info(f"Score success: duration={duration:.2f}s, fused={result.fused_score:.4f}, "
                f"decision={result.decision}")
    return result.model_dump()
