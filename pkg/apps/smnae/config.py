from __future__ import annotations

from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator
from pydantic import ValidationError as PydanticValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from .errors import ValidationError

# Find project root (where .env is located)
BASE_DIR = Path(__file__).resolve().parent.parent.parent
ENV_FILE = BASE_DIR / ".env"

MAX_SEED = 2**64 - 1


class Settings(BaseSettings):
    app_name: str = Field("SMNAE kin-verify", alias="SMNAE_APP_NAME")
    app_origin: str = Field("http://localhost:3000", alias="SMNAE_APP_ORIGIN")
    log_level: str = Field("INFO", alias="SMNAE_LOG_LEVEL")

    data_root: str = Field("data", alias="SMNAE_DATA_ROOT")
    model_path: str = Field("model.bin", alias="SMNAE_MODEL_PATH")
    mnist_dir: str = Field("", alias="SMNAE_MNIST_DIR")

    # thread count for scoring video pairs; 1 keeps everything on the caller's thread
    workers: int = Field(1, alias="SMNAE_WORKERS")
    model_cache_ttl_s: int = Field(1800, alias="SMNAE_MODEL_CACHE_TTL_S")

    model_config = SettingsConfigDict(
        env_file=str(ENV_FILE) if ENV_FILE.exists() else None,
        env_file_encoding='utf-8',
        extra='ignore',
        case_sensitive=False
    )


settings = Settings()


class _Strict(BaseModel):
    """Immutable config record; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class ProxConfig(_Strict):
    lam: float = Field(1e-3, alias="lambda", ge=0)
    eta: float = Field(0.1, gt=0)
    p: float = Field(0.8, gt=0, le=1)
    tol: float = Field(1e-8, gt=0)
    max_inner_iters: int = Field(100, ge=1)


class TrainConfig(_Strict):
    lam: float = Field(1e-3, alias="lambda", ge=0)
    beta: float = Field(1e-3, ge=0)
    p: float = Field(0.8, gt=0, le=1)
    eta0: float = Field(0.1, gt=0)
    max_epochs: int = Field(500, ge=1)
    rel_tol: float = Field(1e-6, gt=0)
    min_step: float = Field(1e-10, gt=0)
    seed: int = Field(0, ge=0, le=MAX_SEED)
    prox_tol: float = Field(1e-8, gt=0)
    prox_max_inner_iters: int = Field(100, ge=1)

    def prox_config(self, eta: float) -> ProxConfig:
        return ProxConfig(lam=self.lam, eta=eta, p=self.p, tol=self.prox_tol,
                          max_inner_iters=self.prox_max_inner_iters)


class StageConfig(_Strict):
    """Per-stage regularization constants: (lambda, beta), (alpha, gamma) or (zeta, kappa)."""

    lam: float = Field(1e-3, alias="lambda", ge=0)
    beta: float = Field(1e-3, ge=0)
    eta0: float = Field(0.1, gt=0)
    max_epochs: int = Field(500, ge=1)
    rel_tol: float = Field(1e-6, gt=0)
    min_step: float = Field(1e-10, gt=0)


class ProxSettings(_Strict):
    tol: float = Field(1e-8, gt=0)
    max_inner_iters: int = Field(100, ge=1)


class SvmConfig(_Strict):
    c: float = Field(1.0, gt=0)
    # None means 1 / feature_dim
    gamma: float | None = Field(None, gt=0)
    tol: float = Field(1e-3, gt=0)
    max_iter: int = Field(100_000, ge=1)
    grid_search: bool = False
    c_grid: tuple[float, ...] = (0.1, 1.0, 10.0, 100.0)
    # multipliers applied to 1 / feature_dim
    gamma_scales: tuple[float, ...] = (0.25, 0.5, 1.0, 2.0, 4.0)
    folds: int = Field(3, ge=2)


Variant = Literal["smnae", "l2p", "plain"]
Fusion = Literal["sum", "max"]


class WidthsConfig(_Strict):
    # hidden widths for 128x128 frames
    stage1: tuple[int, ...] = (8192, 4096, 2048)
    stage2: tuple[int, ...] = (2304, 1024)
    stage3: tuple[int, ...] = (3072, 2048)

    @field_validator("stage1", "stage2", "stage3")
    @classmethod
    def _nonempty(cls, v: tuple[int, ...]) -> tuple[int, ...]:
        if not v or any(w < 1 for w in v):
            raise ValueError("widths must be a nonempty list of positive counts")
        return v

    def scaled(self, scale: float) -> WidthsConfig:
        def div(ws: tuple[int, ...]) -> tuple[int, ...]:
            return tuple(max(1, round(w / scale)) for w in ws)
        return WidthsConfig(stage1=div(self.stage1), stage2=div(self.stage2), stage3=div(self.stage3))


class PipelineConfig(_Strict):
    z: int = Field(2, ge=1)
    p: float = Field(0.8, gt=0, le=1)
    fusion: Fusion = "sum"
    scale: float = Field(1.0, gt=0)
    variant: Variant = "smnae"
    widths: WidthsConfig = WidthsConfig()
    stage1: StageConfig = StageConfig()
    stage2: StageConfig = StageConfig()
    stage3: StageConfig = StageConfig()
    svm: SvmConfig = SvmConfig()
    prox: ProxSettings = ProxSettings()
    seed: int = Field(0, ge=0, le=MAX_SEED)

    def hidden_sizes(self, stage: int) -> tuple[int, ...]:
        scaled = self.widths.scaled(self.scale)
        return (scaled.stage1, scaled.stage2, scaled.stage3)[stage - 1]

    def train_config(self, stage: int, seed: int) -> TrainConfig:
        """TrainConfig for stage 1, 2 or 3 with the autoencoder variant applied."""
        sc = (self.stage1, self.stage2, self.stage3)[stage - 1]
        lam, beta = apply_variant(self.variant, sc.lam, sc.beta)
        return TrainConfig(lam=lam, beta=beta, p=self.p, eta0=sc.eta0, max_epochs=sc.max_epochs,
                           rel_tol=sc.rel_tol, min_step=sc.min_step, seed=seed,
                           prox_tol=self.prox.tol, prox_max_inner_iters=self.prox.max_inner_iters)


def apply_variant(variant: Variant, lam: float, beta: float) -> tuple[float, float]:
    if variant == "l2p":
        return lam, 0.0
    if variant == "plain":
        return 0.0, 0.0
    return lam, beta


class SyntheticConfig(_Strict):
    families: int = Field(20, ge=2)
    members_per_family: int = Field(3, ge=2)
    latent_dim: int = Field(6, ge=1)
    frame_dim: int = Field(256, ge=1)
    frames_per_video: int = Field(10, ge=1)
    kin_noise: float = Field(0.15, ge=0)
    nonkin_gap: float = Field(1.0, gt=0)
    drift: float = Field(0.05, ge=0)
    seed: int = Field(7, ge=0, le=MAX_SEED)

    @field_validator("frame_dim")
    @classmethod
    def _square(cls, v: int) -> int:
        side = round(v ** 0.5)
        if side * side != v:
            raise ValueError("frame_dim must be a perfect square (frames are written as square PGM images)")
        return v

    @property
    def frame_side(self) -> int:
        return round(self.frame_dim ** 0.5)


class MnistBenchmarkConfig(_Strict):
    n_train: int = Field(2000, ge=10)
    n_test: int = Field(1000, ge=10)
    widths: tuple[int, ...] = (256, 128)
    p: float = Field(0.8, gt=0, le=1)
    stage: StageConfig = StageConfig(beta=1e-4, max_epochs=60)
    prox: ProxSettings = ProxSettings(max_inner_iters=5)
    svm: SvmConfig = SvmConfig(c=10.0)
    seed: int = Field(0, ge=0, le=MAX_SEED)


def load_config(model: type[_Strict], path: str | Path) -> _Strict:
    """Parse a JSON config file into `model`, rejecting unknown keys."""
    p = Path(path)
    try:
        return model.model_validate_json(p.read_bytes())
    except FileNotFoundError as e:
        raise ValidationError(f"Config file not found: {p}") from e
    except PydanticValidationError as e:
        raise ValidationError(f"Invalid config {p}: {e}") from e


def load_pipeline_config(path: str | Path) -> PipelineConfig:
    cfg = load_config(PipelineConfig, path)
    assert isinstance(cfg, PipelineConfig)
    return cfg
