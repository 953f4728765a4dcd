"""Verification metrics (ROC, EER) and evaluation reports over a pair list.

Scores are kin-probabilities: a pair is accepted as kin when its score is at
or above the threshold. For a threshold t

    FAR(t) = #{non-kin scores >= t} / n_neg
    FRR(t) = #{kin scores < t} / n_pos
"""
from __future__ import annotations

import asyncio
import csv
import logging
import time
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np
import orjson
from pydantic import ValidationError as PydanticValidationError

from . import __version__
from .config import Fusion, PipelineConfig, settings
from .data import PairRecord, load_video_dir
from .errors import DataFormatError, ValidationError
from .pipeline import FrameModel, LabeledPair, PipelineModel, fuse, pair_probabilities, train_pipeline
from .schemas import (
    REPORT_JSON_SCHEMA,
    EvalReport,
    FusionReport,
    PairScore,
    RelationResult,
    RocPoint,
    SweepReport,
    SweepRow,
)
from .vidlets import VideoSequence

logger = logging.getLogger(__name__)

FUSIONS: tuple[Fusion, ...] = ("sum", "max")
ROC_FIELDS = ("fusion", "threshold", "far", "frr")

Model = PipelineModel | FrameModel


@dataclass(frozen=True, eq=False)
class EvalResult:
    eer: float
    accuracy_pct: float
    roc: tuple[tuple[float, float, float], ...]  # (far, frr, threshold), thresholds ascending
    n_pos: int
    n_neg: int
    threshold: float  # operating point of the EER crossing


def _split_scores(scores: Sequence[float], labels: Sequence[bool]) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=bool).ravel()
    if s.size != y.size:
        raise ValidationError(f"{s.size} scores for {y.size} labels")
    if not np.all(np.isfinite(s)):
        raise ValidationError("scores must be finite")
    pos, neg = s[y], s[~y]
    if pos.size == 0 or neg.size == 0:
        raise ValidationError(f"EER needs both classes: n_pos={pos.size}, n_neg={neg.size}")
    return pos, neg


def roc_points(scores: Sequence[float], labels: Sequence[bool]) -> list[tuple[float, float, float]]:
    """One (far, frr, threshold) per distinct score, plus one threshold above the maximum."""
    pos, neg = _split_scores(scores, labels)
    distinct = np.unique(np.concatenate([pos, neg]))
    thresholds = np.append(distinct, np.nextafter(distinct[-1], np.inf))
    pos_sorted, neg_sorted = np.sort(pos), np.sort(neg)
    # searchsorted(left) counts scores strictly below t
    far = (neg.size - np.searchsorted(neg_sorted, thresholds, side="left")) / neg.size
    frr = np.searchsorted(pos_sorted, thresholds, side="left") / pos.size
    return [(float(a), float(r), float(t)) for a, r, t in zip(far, frr, thresholds)]


def compute_eer(scores: Sequence[float], labels: Sequence[bool]) -> EvalResult:
    """EER at the first operating point with FRR >= FAR, interpolated linearly from the previous one."""
    pos, neg = _split_scores(scores, labels)
    roc = roc_points(scores, labels)
    far = np.array([r[0] for r in roc])
    frr = np.array([r[1] for r in roc])
    thr = np.array([r[2] for r in roc])
    d = far - frr
    # d starts at 1 (everything accepted) and ends at -1 (everything rejected)
    k = int(np.argmax(d <= 0.0))
    if d[k] == 0.0:
        eer, threshold = float(far[k]), float(thr[k])
    else:
        w = d[k - 1] / (d[k - 1] - d[k])
        eer = float(far[k - 1] + w * (far[k] - far[k - 1]))
        threshold = float(thr[k - 1] + w * (thr[k] - thr[k - 1]))
    return EvalResult(eer=eer, accuracy_pct=100.0 * (1.0 - eer), roc=tuple(roc), n_pos=int(pos.size),
                      n_neg=int(neg.size), threshold=threshold)


def pooled_score(probs: np.ndarray, fusion: Fusion) -> float:
    """Fused score comparable across pairs: the sum rule is divided by the unit count."""
    fused, _ = fuse(probs, fusion)
    return fused / len(probs) if fusion == "sum" else fused


def load_videos(paths: Iterable[str], data_root: str | Path) -> dict[str, VideoSequence]:
    root = Path(data_root)
    return {p: load_video_dir(root / p) for p in dict.fromkeys(paths)}


def load_labeled_pairs(records: Sequence[PairRecord], data_root: str | Path) -> list[LabeledPair]:
    """Resolve pair records against `data_root`; each video directory is read once."""
    videos = load_videos([p for r in records for p in (r.video_a, r.video_b)], data_root)
    return [(videos[r.video_a], videos[r.video_b], r.label) for r in records]


def _score_record(model: Model, a: VideoSequence, b: VideoSequence) -> tuple[np.ndarray, np.ndarray]:
    return pair_probabilities(model, a, b), pair_probabilities(model, b, a)


async def score_pairs_async(model: Model, records: Sequence[PairRecord], data_root: str | Path,
                            workers: int | None = None) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per-unit probabilities of both orders for every record, in input order."""
    workers = workers or settings.workers
    sem = asyncio.Semaphore(max(1, workers))
    root = Path(data_root)
    paths = list(dict.fromkeys(p for r in records for p in (r.video_a, r.video_b)))

    async def _load(path: str) -> VideoSequence:
        async with sem:
            return await asyncio.to_thread(load_video_dir, root / path)

    loaded = await asyncio.gather(*[_load(p) for p in paths])
    videos = dict(zip(paths, loaded))

    async def _score(r: PairRecord) -> tuple[np.ndarray, np.ndarray]:
        async with sem:
            return await asyncio.to_thread(_score_record, model, videos[r.video_a], videos[r.video_b])

    return list(await asyncio.gather(*[_score(r) for r in records]))


def _relations_present(records: Sequence[PairRecord]) -> bool:
    return any(r.relation for r in records)


def fusion_report(fusion: Fusion, records: Sequence[PairRecord],
                  probs: Sequence[tuple[np.ndarray, np.ndarray]]) -> FusionReport:
    pairs: list[PairScore] = []
    for r, (ab, ba) in zip(records, probs):
        s_ab, s_ba = pooled_score(ab, fusion), pooled_score(ba, fusion)
        pairs.append(PairScore(video_a=r.video_a, video_b=r.video_b, label=r.label, relation=r.relation or None,
                               score=0.5 * (s_ab + s_ba), score_ab=s_ab, score_ba=s_ba, n_units=len(ab)))
    scores = [p.score for p in pairs]
    labels = [p.label for p in pairs]
    result = compute_eer(scores, labels)

    per_relation: dict[str, RelationResult] = {}
    if _relations_present(records):
        neg = [p.score for p in pairs if not p.label]
        for rel in sorted({p.relation for p in pairs if p.label and p.relation}):
            pos = [p.score for p in pairs if p.label and p.relation == rel]
            sub = compute_eer(pos + neg, [True] * len(pos) + [False] * len(neg))
            per_relation[rel] = RelationResult(eer=sub.eer, accuracy_pct=sub.accuracy_pct, n_pos=sub.n_pos,
                                               n_neg=sub.n_neg)

    return FusionReport(fusion=fusion, eer=result.eer, accuracy_pct=result.accuracy_pct, n_pos=result.n_pos,
                        n_neg=result.n_neg, roc=[RocPoint(far=a, frr=r, threshold=t) for a, r, t in result.roc],
                        pairs=pairs, per_relation=per_relation)


def _model_fields(model: Model) -> tuple[str, int, PipelineConfig, Fusion]:
    if isinstance(model, PipelineModel):
        return "vidlet", model.z, model.config, model.fusion
    return "frame", 0, model.config, model.config.fusion


async def evaluate_async(model: Model, records: Sequence[PairRecord], data_root: str | Path,
                         fusions: Sequence[Fusion] = FUSIONS, model_name: str = "",
                         workers: int | None = None) -> EvalReport:
    if not fusions:
        raise ValidationError("at least one fusion rule is required")
    t0 = time.time()
    protocol, z, cfg, default_fusion = _model_fields(model)
    probs = await score_pairs_async(model, records, data_root, workers)
    results = {f: fusion_report(f, records, probs) for f in dict.fromkeys(fusions)}
    headline = default_fusion if default_fusion in results else next(iter(results))
    report = EvalReport(version=__version__, protocol=protocol, model=model_name, z=z, p=cfg.p, variant=cfg.variant,
                        fusion=headline, eer=results[headline].eer, accuracy_pct=results[headline].accuracy_pct,
                        results=results)
    summary = ", ".join(f"{f}_acc={r.accuracy_pct:.2f}" for f, r in results.items())
    logger.info(f"Evaluation complete: pairs={len(records)}, protocol={protocol}, {summary}, "
                f"duration={time.time() - t0:.2f}s")
    return report


def evaluate(model: Model, records: Sequence[PairRecord], data_root: str | Path,
             fusions: Sequence[Fusion] = FUSIONS, model_name: str = "", workers: int | None = None) -> EvalReport:
    """Score every record in both orders and build the report; pairs are reported in input order."""
    return asyncio.run(evaluate_async(model, records, data_root, fusions, model_name, workers))


def validate_report(data: dict) -> None:
    try:
        jsonschema.validate(instance=data, schema=REPORT_JSON_SCHEMA["schema"])
    except jsonschema.ValidationError as e:
        raise DataFormatError(f"report does not match {REPORT_JSON_SCHEMA['name']}: {e.message}") from e


def report_bytes(report: EvalReport) -> bytes:
    data = report.model_dump(mode="json")
    validate_report(data)
    return orjson.dumps(data, option=orjson.OPT_INDENT_2)


def write_report(report: EvalReport, path: str | Path) -> None:
    Path(path).write_bytes(report_bytes(report))
    logger.info(f"Report written: path={path}, fusions={list(report.results)}")


def read_report(path: str | Path) -> EvalReport:
    path = Path(path)
    try:
        data = orjson.loads(path.read_bytes())
    except (OSError, orjson.JSONDecodeError) as e:
        raise DataFormatError(f"{path}: cannot read report: {e}") from e
    validate_report(data)
    return EvalReport.model_validate(data)


def write_roc_csv(report: EvalReport, path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(ROC_FIELDS)
        for fusion, result in report.results.items():
            for pt in result.roc:
                writer.writerow([fusion, repr(pt.threshold), repr(pt.far), repr(pt.frr)])


def sweep(train_pairs: Sequence[LabeledPair], records: Sequence[PairRecord], data_root: str | Path,
          cfg: PipelineConfig, parameter: str, values: Sequence[float]) -> SweepReport:
    """Train and evaluate once per value of `p` or `z`; every other setting is held fixed."""
    if parameter not in ("p", "z"):
        raise ValidationError(f"sweep parameter must be p or z, got {parameter}")
    rows: list[SweepRow] = []
    for value in values:
        update = {"z": int(value)} if parameter == "z" else {"p": float(value)}
        try:
            run_cfg = PipelineConfig.model_validate({**cfg.model_dump(), **update})
        except PydanticValidationError as e:
            raise ValidationError(f"invalid {parameter}={value}: {e}") from e
        model = train_pipeline(train_pairs, run_cfg)
        report = evaluate(model, records, data_root, FUSIONS)
        rows.append(SweepRow(value=float(value), eer=report.eer, accuracy_pct=report.accuracy_pct,
                             sum_accuracy_pct=report.results["sum"].accuracy_pct,
                             max_accuracy_pct=report.results["max"].accuracy_pct))
        logger.info(f"Sweep point: {parameter}={value}, accuracy={report.accuracy_pct:.2f}")
    return SweepReport(parameter=parameter, rows=rows)
