from pydantic import BaseModel, Field
from typing import Literal, Optional


class ScoreRequest(BaseModel):
    """Two video directories, relative to SMNAE_DATA_ROOT."""
    video_a: str = Field(..., min_length=1)
    video_b: str = Field(..., min_length=1)
    # None uses the fusion rule stored with the model
    fusion: Optional[Literal["sum", "max"]] = None
    symmetric: bool = True


class ReadyResponse(BaseModel):
    ok: bool
    model: str
    kind: Literal["pipeline", "frame"]
    frame_dim: int
    z: int
    fusion: Literal["sum", "max"]
