"""Command-line harness: gen | train | eval | sweep | gradcheck.

Exit codes: 0 ok, 1 user error (bad arguments, malformed files,
incompatible inputs), 2 internal error (bugs, diverged training).

FRAMELOC_LOG_DIR, when set, hosts default output files (training log,
report); explicit paths always win.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from .config import ConfigError, TrainConfig, apply_overrides, config_hash, load_config
from .data import (CorpusFormatError, GenerationError, SyntheticSpec,
                   generate_corpus, load_corpus, save_corpus)
from .metrics import write_report_csv
from .model import CheckpointError, load_checkpoint, save_checkpoint
from .inference import write_detections_csv, write_segments_csv
from .training import (evaluate_params, run_gradcheck, run_training,
                       sweep_parameter, write_training_log)

SWEEP_COLUMNS = ["mAP@hit", "mAP@0.1", "mAP@0.3", "mAP@0.5", "mAP@0.6",
                 "mAP@0.7", "AVG(0.1:0.7)"]


class UserError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UserError(f"{self.prog}: {message}")


def _out_dir() -> str:
    return os.environ.get("FRAMELOC_LOG_DIR", ".")


def _default_path(name: str) -> str:
    return os.path.join(_out_dir(), name)


def _load_cfg(args) -> TrainConfig:
    cfg = TrainConfig()
    if getattr(args, "config", None):
        cfg = load_config(args.config)
    if getattr(args, "set", None):
        cfg = apply_overrides(cfg, args.set)
    return cfg.validate()


def cmd_gen(args) -> int:
    spec = SyntheticSpec()
    if args.spec:
        from .config import parse_kv_text
        with open(args.spec) as f:
            spec = parse_kv_text(f.read(), spec)
    if args.set:
        spec = apply_overrides(spec, args.set)
    corpus = generate_corpus(spec)
    save_corpus(corpus, args.out)
    histogram = {}
    for seg in corpus.segments():
        histogram[seg.label] = histogram.get(seg.label, 0) + 1
    print(f"wrote {args.out}")
    print(f"videos: {len(corpus.split('train'))} train, {len(corpus.split('test'))} test")
    print(f"segments: {len(corpus.segments())} "
          f"(per class: {dict(sorted(histogram.items()))})")
    print(f"feature dim: {corpus.dim}, classes: {corpus.num_classes}")
    return 0


def cmd_train(args) -> int:
    corpus = load_corpus(args.corpus)
    cfg = _load_cfg(args)
    every = max(1, cfg.iterations // 10)

    def progress(iteration, breakdown):
        if iteration == 1 or iteration % every == 0:
            print(f"iter {iteration:5d}  total {breakdown.total:.4f}  "
                  f"frame {breakdown.frame_total:.4f}  video {breakdown.video:.4f}  "
                  f"act {breakdown.actionness:.4f}")

    result = run_training(corpus, cfg, progress=progress)
    save_checkpoint(args.checkpoint, result.params, result.dims, cfg.seed,
                    config_hash(cfg))
    log_path = args.log or _default_path("train_log.csv")
    write_training_log(result.log, log_path)
    print(f"wrote checkpoint {args.checkpoint} and log {log_path}")
    return 0


def cmd_eval(args) -> int:
    corpus = load_corpus(args.corpus)
    params, meta = load_checkpoint(args.checkpoint)
    cfg = _load_cfg(args)
    report, segments, detections = evaluate_params(corpus, params, cfg,
                                                   split=args.split)
    report_path = args.report or _default_path("report.csv")
    write_report_csv(report, report_path)
    if args.segments:
        write_segments_csv(segments, args.segments)
    if args.detections:
        write_detections_csv(detections, args.detections)
    for name, value in report.items():
        print(f"{name:>16}  {value:.4f}")
    print(f"wrote {report_path}")
    return 0


def cmd_sweep(args) -> int:
    corpus = load_corpus(args.corpus)
    cfg = _load_cfg(args)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip() != ""]
    except ValueError as e:
        raise UserError(f"--values must be comma-separated numbers: {e}") from e
    if not values:
        raise UserError("--values is empty")
    rows = sweep_parameter(corpus, cfg, args.param, values)
    with open(args.out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["param", "value"] + SWEEP_COLUMNS)
        for value, report in rows:
            writer.writerow([args.param, f"{value:g}"]
                            + [f"{report[c]:.6f}" for c in SWEEP_COLUMNS])
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 0


def cmd_gradcheck(args) -> int:
    result, passed = run_gradcheck(
        n=args.videos, t=args.frames, d=args.dim, num_classes=args.classes,
        hidden=args.hidden, conv_width=args.conv_width, seed=args.seed,
        tolerance=args.tolerance, corrupt=args.corrupt)
    for name in sorted(result.per_param):
        print(f"{name:>8}  max rel err {result.per_param[name]:.3e}")
    print(f"checked {result.entries_checked} entries; "
          f"max rel err {result.max_rel_err:.3e} (tolerance {args.tolerance:g})")
    if passed:
        print("PASS")
        return 0
    print(f"FAIL: worst parameter {result.worst_param}{list(result.worst_index)}")
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="frameloc",
                     description="Single-frame supervised temporal action localization")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic feature corpus")
    p.add_argument("--spec", help="key=value file of generator settings")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a generator setting")
    p.add_argument("--out", required=True, help="corpus file to write")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--config", help="key=value training config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field")
    p.add_argument("--checkpoint", default="model.ckpt", help="checkpoint to write")
    p.add_argument("--log", help="training-log CSV (default: FRAMELOC_LOG_DIR)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a corpus split")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", help="key=value training config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--split", default="test", choices=["train", "test"])
    p.add_argument("--report", help="metric CSV (default: FRAMELOC_LOG_DIR/report.csv)")
    p.add_argument("--segments", help="optional segment prediction CSV")
    p.add_argument("--detections", help="optional frame detection CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="retrain/evaluate across one parameter")
    p.add_argument("--corpus", required=True)
    p.add_argument("--config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--param", required=True, choices=["eta", "alpha", "beta", "theta"])
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out", required=True, help="result table CSV")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference check of the objective")
    p.add_argument("--videos", type=int, default=2)
    p.add_argument("--frames", type=int, default=12)
    p.add_argument("--dim", type=int, default=6)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--hidden", type=int, default=8)
    p.add_argument("--conv-width", type=int, default=3)
    p.add_argument("--seed", type=int, default=26)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--corrupt", action="store_true",
                   help="sabotage one gradient entry to prove the check bites")
    p.set_defaults(func=cmd_gradcheck)
    return parser


USER_ERRORS = (UserError, ConfigError, CorpusFormatError, GenerationError,
               CheckpointError, FileNotFoundError, IsADirectoryError,
               PermissionError, ValueError)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except USER_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - last-resort guard for exit code 2
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
