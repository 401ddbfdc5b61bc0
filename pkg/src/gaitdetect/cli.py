"""Command-line entry point: ingest, synth, train, evaluate, predict.

Exit codes: 0 success, 1 data/validation error, 2 usage error.
Diagnostics go to stderr; data goes to stdout or the ``--out`` file.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import MODEL_KINDS, ConfigError, PipelineConfig, load_config
from .evaluation import EvaluationError, cross_validate
from .ingest import (DEFAULT_RATE_HZ, GaitLabel, IngestError, assemble_dataset, check_length,
                     dataset_to_csv, parse_recording, read_canonical_csv, read_recording_file,
                     trim_transitions)
from .pipeline import (BundleError, bundle_to_dict, dataset_fingerprint, dumps_bundle, fit_pipeline,
                       load_bundle)
from .synthgen import generate_benchmark
from .windowing import window_recordings, windows_to_csv

log = logging.getLogger("gaitdetect")


class UsageError(Exception):
    pass


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_bytes(text.encode("utf-8"))
    else:
        sys.stdout.write(text)


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg.validate()


def _data_path(args, cfg: PipelineConfig) -> Path:
    path = args.data or cfg.paths.data
    if not path:
        raise UsageError("no data path given (use --data or paths.data in the config)")
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"data file {path} does not exist")
    return path


def _manifest_entries(args):
    entries = []
    for label, files in ((GaitLabel.NORMAL, args.normal), (GaitLabel.ABNORMAL, args.abnormal)):
        for f in files or ():
            entries.append((Path(f), Path(f).stem, label))
    if args.manifest:
        with open(args.manifest, newline="", encoding="utf-8") as fh:
            for lineno, row in enumerate(csv.DictReader(fh), start=2):
                try:
                    path = Path(row["path"])
                    if not path.is_absolute():
                        path = Path(args.manifest).parent / path
                    entries.append((path, row.get("subject_id") or path.stem, GaitLabel.parse(row["label"])))
                except (KeyError, IngestError) as exc:
                    raise IngestError(f"{args.manifest}:{lineno}: bad manifest row ({exc})") from None
    if not entries:
        raise UsageError("no input files (use --normal/--abnormal or --manifest)")
    return entries


def cmd_ingest(args) -> int:
    cfg = _config(args)
    rate = cfg.sample_rate_hz
    recs = []
    for path, sid, label in _manifest_entries(args):
        rec = parse_recording(path, sid, label, rate)
        rec = trim_transitions(rec, cfg.trim.head_s, cfg.trim.tail_s)
        if not (cfg.trim.allow_variable_length or args.allow_variable_length):
            check_length(rec, cfg.trim.recording_s)
        recs.append(rec)
    dataset = assemble_dataset(recs, provenance=[str(p) for p, _, _ in _manifest_entries(args)])
    _emit(dataset_to_csv(dataset), args.out)
    counts = dataset.rows_per_label()
    log.info("ingested %d recordings: %d rows (%d normal, %d abnormal)", len(dataset), dataset.n_rows,
             counts[GaitLabel.NORMAL], counts[GaitLabel.ABNORMAL])
    if args.windows_out:
        ws = window_recordings(list(dataset.recordings), cfg.window.plan())
        Path(args.windows_out).write_text(windows_to_csv(ws), encoding="utf-8")
    return 0


def cmd_synth(args) -> int:
    seed = 42 if args.seed is None else args.seed
    dataset = generate_benchmark(args.n_normal, args.n_abnormal, seed, args.duration, args.rate)
    if args.raw_dir:
        raw = Path(args.raw_dir)
        raw.mkdir(parents=True, exist_ok=True)
        manifest = ["path,subject_id,label"]
        for rec in dataset.recordings:
            lines = [",".join(repr(float(v)) for v in row) for row in rec.samples]
            (raw / f"{rec.subject_id}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
            manifest.append(f"{rec.subject_id}.csv,{rec.subject_id},{rec.label.text}")
        (raw / "manifest.csv").write_text("\n".join(manifest) + "\n", encoding="utf-8")
    _emit(dataset_to_csv(dataset), args.out)
    return 0


def _apply_model_override(cfg: PipelineConfig, kind: str | None) -> PipelineConfig:
    if kind and kind != cfg.model.kind:
        cfg = cfg.with_model(kind)
    return cfg


def cmd_train(args) -> int:
    cfg = _config(args)
    cfg = _apply_model_override(cfg, args.model)
    path = _data_path(args, cfg)
    dataset = read_canonical_csv(path, cfg.sample_rate_hz)
    fitted = fit_pipeline(dataset, cfg)
    bundle = bundle_to_dict(fitted, dataset_fingerprint(dataset))
    _emit(dumps_bundle(bundle), args.out or cfg.paths.out)
    if args.loss_history and cfg.model.kind == "cnn":
        rows = ["epoch,loss"] + [f"{i + 1},{loss!r}" for i, loss in enumerate(fitted.model.loss_history)]
        Path(args.loss_history).write_text("\n".join(rows) + "\n", encoding="utf-8")
    log.info("trained %s on %d windows (feature dim %d)", cfg.model.kind, fitted.n_train_windows,
             fitted.feature_dim)
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    if args.mode or args.protocol:
        split = dataclasses.replace(cfg.split, mode=args.mode or cfg.split.mode,
                                    protocol=args.protocol or cfg.split.protocol)
        cfg = dataclasses.replace(cfg, split=split).validate()
    path = _data_path(args, cfg)
    dataset = read_canonical_csv(path, cfg.sample_rate_hz)
    if args.models:
        kinds = list(MODEL_KINDS) if args.models == "all" else [k.strip() for k in args.models.split(",")]
    else:
        kinds = [cfg.model.kind]
    report = cross_validate(dataset, cfg, models=kinds)
    print(f"# protocol={report.protocol} mode={report.mode} windows={report.n_windows}", file=sys.stderr)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    sys.stdout.write(report.table())
    out = args.out or cfg.paths.out
    if out:
        Path(out).write_text(report.to_json(), encoding="utf-8")
    return 0


def cmd_predict(args) -> int:
    if not args.bundle:
        raise UsageError("predict needs --bundle")
    if not Path(args.bundle).is_file():
        raise UsageError(f"bundle {args.bundle} does not exist")
    if not Path(args.recording).is_file():
        raise UsageError(f"recording {args.recording} does not exist")
    fitted = load_bundle(args.bundle)
    rec = read_recording_file(args.recording, fitted.config.sample_rate_hz)
    if args.trim:
        rec = trim_transitions(rec, fitted.config.trim.head_s, fitted.config.trim.tail_s)
    ws, labels, verdict = fitted.predict_recording(rec)
    result = {
        "recording": str(args.recording),
        "windows": [{"window_id": i, "start_index": int(s), "label": GaitLabel(int(l)).text}
                    for i, (s, l) in enumerate(zip(ws.start_indices, labels))],
        "votes": {"normal": int((labels == 0).sum()), "abnormal": int((labels == 1).sum())},
        "verdict": verdict.text,
    }
    _emit(json.dumps(result, indent=1) + "\n", args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config JSON")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="gaitdetect", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="merge raw per-subject logs into the canonical CSV")
    p.add_argument("--normal", nargs="+", metavar="FILE", help="raw logs of normal-gait subjects")
    p.add_argument("--abnormal", nargs="+", metavar="FILE", help="raw logs of abnormal-gait subjects")
    p.add_argument("--manifest", help="CSV with columns path,subject_id,label")
    p.add_argument("--allow-variable-length", action="store_true",
                   help="accept recordings that are not exactly 60 s after trimming")
    p.add_argument("--windows-out", help="also write the windowed rows (debug CSV)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", parents=[common], help="generate the seeded synthetic benchmark")
    p.add_argument("--n-normal", type=int, default=14)
    p.add_argument("--n-abnormal", type=int, default=9)
    p.add_argument("--duration", type=float, default=60.0, help="seconds per recording")
    p.add_argument("--rate", type=int, default=DEFAULT_RATE_HZ)
    p.add_argument("--raw-dir", help="also write one raw 6-column log per subject plus manifest.csv")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="fit the pipeline on a dataset and write a model bundle")
    p.add_argument("--data", help="canonical dataset CSV")
    p.add_argument("--model", choices=MODEL_KINDS, help="override model.kind")
    p.add_argument("--loss-history", help="CNN only: write epoch,loss CSV")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="cross-validate and print the metrics table")
    p.add_argument("--data", help="canonical dataset CSV")
    p.add_argument("--models", help="comma-separated model kinds, or 'all'")
    p.add_argument("--mode", choices=("window", "subject"), help="override split.mode")
    p.add_argument("--protocol", choices=("kfold", "holdout"), help="override split.protocol")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", parents=[common], help="label the windows of one recording")
    p.add_argument("--bundle", help="model bundle from 'train'")
    p.add_argument("recording", help="canonical CSV (one subject) or raw 6-column log")
    p.add_argument("--trim", action="store_true", help="drop the configured transition seconds first")
    p.set_defaults(func=cmd_predict)
    return parser


DATA_ERRORS = (IngestError, ConfigError, EvaluationError, BundleError, ValueError, RuntimeError, OSError)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"gaitdetect {args.command}: {exc}", file=sys.stderr)
        return 2
    except DATA_ERRORS as exc:
        print(f"gaitdetect {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
