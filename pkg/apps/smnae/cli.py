"""Command-line entry point: `smnae <command> [flags]`.

Exit status is 0 on success, 2 on invalid input, 3 on numerical failure and 1
on anything unexpected.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import TypeVar

import orjson
import uvicorn
from pydantic import BaseModel
from pydantic import ValidationError as PydanticValidationError

from .benchmark import mnist_benchmark
from .config import (
    MnistBenchmarkConfig,
    PipelineConfig,
    SyntheticConfig,
    load_config,
    load_pipeline_config,
    settings,
)
from .data import (
    PAIRS_FILE,
    gen_synthetic_kin,
    load_pair_list,
    load_video_dir,
    partition_subject_disjoint,
    write_pair_list,
)
from .errors import EXIT_OK, SmnaeError, ValidationError
from .evaluation import FUSIONS, evaluate, load_labeled_pairs, sweep, write_report, write_roc_csv
from .gradcheck import DEFAULT_STEP, DEFAULT_TOLERANCE, assert_gradients, run_gradcheck
from .layer import write_trace_csv
from .pipeline import (
    FrameModel,
    PipelineModel,
    average_orders,
    score_frame_pairs,
    score_video_pair,
    train_frame_model,
    train_pipeline,
)
from .serialization import load_model, save_model

logger = logging.getLogger(__name__)

ConfigT = TypeVar("ConfigT", bound=BaseModel)

TRAIN_FILE = "train.csv"
TEST_FILE = "test.csv"


def _write_json(model: BaseModel, path: str | Path | None) -> None:
    data = orjson.dumps(model.model_dump(mode="json"), option=orjson.OPT_INDENT_2)
    if path is None:
        sys.stdout.write(data.decode() + "\n")
    else:
        Path(path).write_bytes(data)


def _pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = load_pipeline_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    return cfg


def _override(cfg: ConfigT, overrides: dict) -> ConfigT:
    """Copy of `cfg` with command-line overrides applied and re-validated."""
    if not overrides:
        return cfg
    try:
        return type(cfg).model_validate({**cfg.model_dump(), **overrides})
    except PydanticValidationError as e:
        raise ValidationError(f"invalid {type(cfg).__name__}: {e}") from e


def _fusions(choice: str) -> tuple:
    return FUSIONS if choice == "both" else (choice,)


def cmd_gen_synthetic(args: argparse.Namespace) -> None:
    base = load_config(SyntheticConfig, args.config) if args.config else SyntheticConfig()
    overrides = {k: v for k, v in {
        "families": args.families,
        "members_per_family": args.members,
        "frame_dim": args.frame_dim,
        "frames_per_video": args.frames,
        "seed": args.seed,
    }.items() if v is not None}
    cfg = _override(base, overrides)
    out = Path(args.out)
    pairs = gen_synthetic_kin(cfg, out)
    if args.test_fraction > 0:
        train, test = partition_subject_disjoint(pairs, args.test_fraction, cfg.seed)
        write_pair_list(out / TRAIN_FILE, train, with_relation=False)
        write_pair_list(out / TEST_FILE, test, with_relation=False)
    print(f"wrote {len(pairs)} pairs to {out / PAIRS_FILE}")


def _write_traces(model: PipelineModel | FrameModel, trace_dir: str) -> None:
    out = Path(trace_dir)
    out.mkdir(parents=True, exist_ok=True)
    stages = [model.stage1] if isinstance(model, FrameModel) else [model.stage1, model.stage2, model.stage3]
    for s, stack in enumerate(stages, start=1):
        for k, layer in enumerate(stack.layers, start=1):
            write_trace_csv(layer.trace, out / f"stage{s}_layer{k}.csv")


def cmd_train(args: argparse.Namespace) -> None:
    cfg = _pipeline_config(args)
    records = load_pair_list(args.pairs)
    pairs = load_labeled_pairs(records, args.data)
    model: PipelineModel | FrameModel = train_frame_model(pairs, cfg) if args.frame else train_pipeline(pairs, cfg)
    save_model(model, args.model_out)
    if args.trace_dir:
        _write_traces(model, args.trace_dir)
    print(f"model written to {args.model_out}")


def cmd_eval(args: argparse.Namespace) -> None:
    model = load_model(args.model)
    report = evaluate(model, load_pair_list(args.pairs), args.data, _fusions(args.fusion),
                      model_name=str(args.model), workers=args.workers)
    write_report(report, args.report)
    if args.roc_csv:
        write_roc_csv(report, args.roc_csv)
    for fusion, result in report.results.items():
        print(f"{fusion}: eer={result.eer:.4f} accuracy={result.accuracy_pct:.2f}%")


def cmd_score(args: argparse.Namespace) -> None:
    model = load_model(args.model)
    root = Path(args.data)
    a, b = load_video_dir(root / args.video_a), load_video_dir(root / args.video_b)
    fusion = None if args.fusion == "model" else args.fusion

    def one_way(x, y):
        if isinstance(model, FrameModel):
            return score_frame_pairs(model, x, y, fusion)
        return score_video_pair(model, x, y, fusion)

    forward = one_way(a, b)
    _write_json(forward if args.one_way else average_orders(forward, one_way(b, a)), None)


def cmd_mnist(args: argparse.Namespace) -> None:
    cfg = load_config(MnistBenchmarkConfig, args.config) if args.config else MnistBenchmarkConfig()
    overrides = {k: v for k, v in {"n_train": args.n_train, "n_test": args.n_test, "seed": args.seed}.items()
                 if v is not None}
    cfg = _override(cfg, overrides)
    mnist_dir = args.mnist_dir or settings.mnist_dir
    if not mnist_dir:
        raise ValidationError("no MNIST directory: pass --mnist-dir or set SMNAE_MNIST_DIR")
    report = mnist_benchmark(cfg, mnist_dir)
    _write_json(report, args.report)
    print(f"smnae error={report.smnae_error_pct:.2f}% plain error={report.plain_error_pct:.2f}%")


def cmd_gradcheck(args: argparse.Namespace) -> None:
    report = run_gradcheck(instances=args.instances, seed=args.seed or 0, step=args.step)
    print(f"max relative error: {report.max_rel_error:.3e}")
    assert_gradients(report, args.tolerance)


def _split_pairs(args: argparse.Namespace, cfg: PipelineConfig):
    if args.test_pairs:
        return load_pair_list(args.train_pairs), load_pair_list(args.test_pairs)
    return partition_subject_disjoint(load_pair_list(args.train_pairs), args.test_fraction, cfg.seed)


def cmd_frame_protocol(args: argparse.Namespace) -> None:
    cfg = _pipeline_config(args)
    train_records, test_records = _split_pairs(args, cfg)
    model = train_frame_model(load_labeled_pairs(train_records, args.data), cfg)
    if args.model_out:
        save_model(model, args.model_out)
    report = evaluate(model, test_records, args.data, FUSIONS, model_name=str(args.model_out or ""),
                      workers=args.workers)
    write_report(report, args.report)
    for fusion, result in report.results.items():
        print(f"frame {fusion}: eer={result.eer:.4f} accuracy={result.accuracy_pct:.2f}%")


def cmd_sweep(args: argparse.Namespace) -> None:
    cfg = _pipeline_config(args)
    train_records, test_records = _split_pairs(args, cfg)
    report = sweep(load_labeled_pairs(train_records, args.data), test_records, args.data, cfg,
                   args.param, args.values)
    _write_json(report, args.report)
    for row in report.rows:
        print(f"{args.param}={row.value:g}: accuracy={row.accuracy_pct:.2f}%")


def cmd_serve(args: argparse.Namespace) -> None:
    uvicorn.run("apps.api.main:app", host=args.host, port=args.port, log_level=settings.log_level.lower())


def _add_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; unknown keys are rejected")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")


def _add_split(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", default=settings.data_root, help="dataset root (family/subject/frame_XXXX.pgm)")
    p.add_argument("--train-pairs", required=True, help="training pairs CSV, or all pairs when --test-pairs is absent")
    p.add_argument("--test-pairs", help="test pairs CSV")
    p.add_argument("--test-fraction", type=float, default=0.5, help="family-disjoint test share without --test-pairs")
    p.add_argument("--workers", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smnae", description="Supervised mixed-norm autoencoder kin verification")
    parser.add_argument("--log-level", default=settings.log_level)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write a synthetic kin-video dataset and pair lists")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--families", type=int)
    p.add_argument("--members", type=int)
    p.add_argument("--frame-dim", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--test-fraction", type=float, default=0.5,
                   help="also write family-disjoint train.csv/test.csv; 0 disables")
    p.set_defaults(handler=cmd_gen_synthetic)

    p = sub.add_parser("train", help="train a model on a pair list")
    _add_config(p)
    p.add_argument("--data", default=settings.data_root)
    p.add_argument("--pairs", required=True)
    p.add_argument("--model-out", required=True)
    p.add_argument("--trace-dir", help="write per-layer loss traces as CSV")
    p.add_argument("--frame", action="store_true", help="frame-level model (stage 1 and SVM only)")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="score a pair list and write an EER report")
    p.add_argument("--model", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--data", default=settings.data_root)
    p.add_argument("--report", required=True)
    p.add_argument("--roc-csv")
    p.add_argument("--fusion", choices=["sum", "max", "both"], default="both")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("score", help="score one video pair")
    p.add_argument("--model", required=True)
    p.add_argument("--data", default=settings.data_root)
    p.add_argument("video_a")
    p.add_argument("video_b")
    p.add_argument("--fusion", choices=["sum", "max", "model"], default="model")
    p.add_argument("--one-way", action="store_true", help="score (a, b) only instead of averaging both orders")
    p.set_defaults(handler=cmd_score)

    p = sub.add_parser("mnist", help="SMNAE vs plain autoencoder on an MNIST subset")
    p.add_argument("--mnist-dir")
    p.add_argument("--config")
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--report")
    p.set_defaults(handler=cmd_mnist)

    p = sub.add_parser("gradcheck", help="finite-difference check of the autoencoder gradients")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=DEFAULT_STEP)
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    p.set_defaults(handler=cmd_gradcheck)

    p = sub.add_parser("frame-protocol", help="train and evaluate the frame-level protocol")
    _add_config(p)
    _add_split(p)
    p.add_argument("--model-out")
    p.add_argument("--report", required=True)
    p.set_defaults(handler=cmd_frame_protocol)

    p = sub.add_parser("sweep", help="train and evaluate once per value of p or z")
    _add_config(p)
    _add_split(p)
    p.add_argument("--param", choices=["p", "z"], required=True)
    p.add_argument("--values", type=float, nargs="+", required=True)
    p.add_argument("--report")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("serve", help="run the HTTP scoring service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(handler=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=args.log_level.upper(),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    try:
        args.handler(args)
    except SmnaeError as e:
        logger.error(f"Command failed: command={args.command}, error={e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected error: command={args.command}, error={e}", exc_info=True)
        print(f"unexpected error: {e}", file=sys.stderr)
        return 1
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
