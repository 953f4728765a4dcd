from pydantic import BaseModel, Field
from typing import Dict, List, Literal, Optional

Decision = Literal["kin", "non-kin"]


class ScoreReport(BaseModel):
    """Fused classifier output for one ordered video pair."""
    per_vidlet_probs: List[float]
    fused_score: float
    decision: Decision
    threshold: float
    fusion: Literal["sum", "max"]
    n_vidlets: int
    unit: Literal["vidlet", "frame"] = "vidlet"


class SymmetricScore(BaseModel):
    """Both orders of a pair and their averaged fused score."""
    forward: ScoreReport
    backward: ScoreReport
    fused_score: float
    decision: Decision
    threshold: float


class RocPoint(BaseModel):
    far: float
    frr: float
    threshold: float


class PairScore(BaseModel):
    video_a: str
    video_b: str
    label: bool
    relation: Optional[str] = None
    score: float
    score_ab: float
    score_ba: float
    n_units: int


class RelationResult(BaseModel):
    eer: float
    accuracy_pct: float
    n_pos: int
    n_neg: int


class FusionReport(BaseModel):
    fusion: Literal["sum", "max"]
    eer: float
    accuracy_pct: float
    n_pos: int
    n_neg: int
    roc: List[RocPoint] = Field(default_factory=list)
    pairs: List[PairScore] = Field(default_factory=list)
    per_relation: Dict[str, RelationResult] = Field(default_factory=dict)


class EvalReport(BaseModel):
    version: str
    protocol: Literal["vidlet", "frame"] = "vidlet"
    model: str
    z: int
    p: float
    variant: Literal["smnae", "l2p", "plain"]
    fusion: Literal["sum", "max"]
    eer: float
    accuracy_pct: float
    results: Dict[str, FusionReport]


class MnistReport(BaseModel):
    n_train: int
    n_test: int
    widths: List[int]
    p: float
    seed: int
    smnae_error_pct: float
    plain_error_pct: float


class SweepRow(BaseModel):
    value: float
    eer: float
    accuracy_pct: float
    sum_accuracy_pct: Optional[float] = None
    max_accuracy_pct: Optional[float] = None


class SweepReport(BaseModel):
    parameter: Literal["p", "z"]
    rows: List[SweepRow] = Field(default_factory=list)


_ROC_POINT = {
    "type": "object",
    "properties": {
        "far": {"type": "number", "minimum": 0, "maximum": 1},
        "frr": {"type": "number", "minimum": 0, "maximum": 1},
        "threshold": {"type": "number"},
    },
    "required": ["far", "frr", "threshold"],
    "additionalProperties": False,
}

_PAIR_SCORE = {
    "type": "object",
    "properties": {
        "video_a": {"type": "string", "minLength": 1},
        "video_b": {"type": "string", "minLength": 1},
        "label": {"type": "boolean"},
        "relation": {"type": ["string", "null"]},
        "score": {"type": "number"},
        "score_ab": {"type": "number"},
        "score_ba": {"type": "number"},
        "n_units": {"type": "integer", "minimum": 1},
    },
    "required": ["video_a", "video_b", "label", "score", "score_ab", "score_ba", "n_units"],
    "additionalProperties": False,
}

_RELATION_RESULT = {
    "type": "object",
    "properties": {
        "eer": {"type": "number", "minimum": 0, "maximum": 1},
        "accuracy_pct": {"type": "number", "minimum": 0, "maximum": 100},
        "n_pos": {"type": "integer", "minimum": 1},
        "n_neg": {"type": "integer", "minimum": 1},
    },
    "required": ["eer", "accuracy_pct", "n_pos", "n_neg"],
    "additionalProperties": False,
}

_FUSION_REPORT = {
    "type": "object",
    "properties": {
        "fusion": {"type": "string", "enum": ["sum", "max"]},
        "eer": {"type": "number", "minimum": 0, "maximum": 1},
        "accuracy_pct": {"type": "number", "minimum": 0, "maximum": 100},
        "n_pos": {"type": "integer", "minimum": 1},
        "n_neg": {"type": "integer", "minimum": 1},
        "roc": {"type": "array", "items": _ROC_POINT},
        "pairs": {"type": "array", "items": _PAIR_SCORE},
        "per_relation": {"type": "object", "additionalProperties": _RELATION_RESULT},
    },
    "required": ["fusion", "eer", "accuracy_pct", "n_pos", "n_neg", "roc", "pairs", "per_relation"],
    "additionalProperties": False,
}

# JSON Schema for report files written by `smnae eval` / `smnae frame-protocol`
REPORT_JSON_SCHEMA = {
    "name": "eval_report",
    "schema": {
        "type": "object",
        "properties": {
            "version": {"type": "string"},
            "protocol": {"type": "string", "enum": ["vidlet", "frame"]},
            "model": {"type": "string"},
            "z": {"type": "integer", "minimum": 0},
            "p": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            "variant": {"type": "string", "enum": ["smnae", "l2p", "plain"]},
            "fusion": {"type": "string", "enum": ["sum", "max"]},
            "eer": {"type": "number", "minimum": 0, "maximum": 1},
            "accuracy_pct": {"type": "number", "minimum": 0, "maximum": 100},
            "results": {
                "type": "object",
                "properties": {"sum": _FUSION_REPORT, "max": _FUSION_REPORT},
                "minProperties": 1,
                "additionalProperties": False,
            },
        },
        "required": ["version", "protocol", "model", "z", "p", "variant", "fusion", "eer", "accuracy_pct", "results"],
        "additionalProperties": False,
    },
}
