"""Command-line interface: synth, segment, train, classify, evaluate, annotate."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


from . import config as cfgmod
from .annotate import to_frame_track, write_track_csv
from .errors import ConfigError, ManeuverSegError
from .metrics import evaluate, evaluate_segmentation
from .models import cnn_train, model_load, model_save, rf_train_pipeline
from .pipeline import label_trip, scored_predictions, segment_trip, training_set
from .synth import generate_corpus, read_corpus, read_truth_jsonl, write_corpus
from .telemetry import LabeledEvent, Segment, read_trip


class CliError(Exception):
    pass


def write_jsonl(path, records, meta: dict) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        f.write(json.dumps({"_meta": meta}, sort_keys=True) + "\n")
        for rec in records:
            f.write(json.dumps(rec) + "\n")


def read_jsonl(path) -> tuple[dict, list[dict]]:
    meta, records = {}, []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}") from None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CliError(f"{path} line {lineno}: {exc}") from None
        if "_meta" in obj:
            meta = obj["_meta"]
        else:
            records.append(obj)
    return meta, records


def _trip_paths(path) -> list[Path]:
    p = Path(path)
    if p.is_dir():
        paths = sorted(p.glob("*.csv")) + sorted(p.glob("*.jsonl"))
        paths = [q for q in paths if q.name != "truth.jsonl"]
        if not paths:
            raise CliError(f"no trip files in {p}")
        return paths
    if not p.exists():
        raise CliError(f"input not found: {p}")
    return [p]


def _fixed_window(cfg) -> float | None:
    w = cfg.segment.fixed_window_s
    return w if w > 0 else None


def _meta(cfg, kind: str, **extra) -> dict:
    return {"config_hash": cfg.config_hash(), "kind": kind, **extra}


# ---------------------------------------------------------------- commands


def cmd_synth(args, cfg) -> int:
    corpus = generate_corpus(cfg.synth_config(), cfg.corpus.n_trips)
    write_corpus(corpus, args.out)
    n_events = sum(len(t.events) for _, t in corpus)
    print(f"wrote {len(corpus)} trips ({n_events} truth events) to {args.out}")
    return 0


def cmd_segment(args, cfg) -> int:
    records, rates = [], {}
    for path in _trip_paths(args.input):
        trip = read_trip(path)
        rates[trip.trip_id] = trip.sample_rate_hz
        seg = segment_trip(trip, cfg.ema, cfg.preprocess.smoothing_window_s, _fixed_window(cfg))
        for s in seg.events:
            records.append({"trip_id": trip.trip_id, **s.to_json()})
    write_jsonl(args.output, records, _meta(cfg, "segments", sample_rate_hz=rates))
    print(f"wrote {len(records)} segments to {args.output}")
    return 0


def _split(corpus, fraction: float):
    corpus = sorted(corpus, key=lambda pair: pair[0].trip_id)
    n = max(1, int(round(fraction * len(corpus))))
    return corpus[:n]


def cmd_train(args, cfg) -> int:
    corpus = read_corpus(args.corpus)
    if not corpus:
        raise CliError(f"no trips in {args.corpus}")
    train = _split(corpus, cfg.corpus.train_fraction)
    x, y = training_set(
        train, cfg.preprocess.smoothing_window_s, args.augment_mirror, _fixed_window(cfg)
    )
    if args.kind == "cnn":
        model, report = cnn_train(x, y, cfg.seed, cfg.cnn)
    else:
        model, report = rf_train_pipeline(x, y, cfg.seed, cfg.rf)
    model.meta["config_hash"] = cfg.config_hash()
    model.meta["fixed_window_s"] = cfg.segment.fixed_window_s
    model_save(model, args.output)
    if args.report:
        out = {"_meta": _meta(cfg, "train_report", model_kind=args.kind), **report.to_json()}
        Path(args.report).write_text(json.dumps(out, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"trained {args.kind} on {len(y)} events; train accuracy {report.train_accuracy:.4f}")
    return 0


def cmd_classify(args, cfg) -> int:
    paths = args.model or list(cfg.models.paths)
    if not paths:
        raise CliError("classify needs at least one --model")
    models = []
    for p in paths:
        if not Path(p).exists():
            raise CliError(f"model not found: {p}")
        models.append(model_load(p))
    records, rates = [], {}
    for path in _trip_paths(args.input):
        trip = read_trip(path)
        rates[trip.trip_id] = trip.sample_rate_hz
        labeled = label_trip(
            trip, models, cfg.ema, cfg.heuristics, cfg.preprocess.smoothing_window_s, _fixed_window(cfg)
        )
        records.extend({"trip_id": trip.trip_id, **ev.to_json()} for ev in labeled)
    write_jsonl(args.output, records, _meta(cfg, "events", sample_rate_hz=rates, n_models=len(models)))
    print(f"wrote {len(records)} labeled spans to {args.output}")
    return 0


def cmd_evaluate(args, cfg) -> int:
    meta, records = read_jsonl(args.events)
    if not Path(args.truth).exists():
        raise CliError(f"truth file not found: {args.truth}")
    truth = read_truth_jsonl(args.truth)
    default_sr = cfg.synth.sample_rate_hz
    rates = {t: meta.get("sample_rate_hz", {}).get(t, default_sr) for t in truth}
    by_trip: dict = {t: [] for t in truth}
    labeled = bool(records) and all("label" in r for r in records)
    for r in records:
        by_trip.setdefault(r["trip_id"], [])
        rates.setdefault(r["trip_id"], default_sr)
        seg = Segment.from_json(r)
        by_trip[r["trip_id"]].append(LabeledEvent.from_json(r) if labeled else seg)
    iou_min, clamp = cfg.metrics.iou_min, cfg.metrics.duration_clamp_s
    if labeled:
        rows = [
            (t, list(truth[t].events) if t in truth else [], scored_predictions(preds))
            for t, preds in sorted(by_trip.items())
        ]
        report = evaluate(rows, iou_min, clamp, rates)
        out = report.to_json()
        print(report.table())
        if args.confusion_csv:
            Path(args.confusion_csv).write_text(report.confusion_csv(), encoding="utf-8")
    else:
        rows = [
            (t, list(truth[t].events) if t in truth else [], segs)
            for t, segs in sorted(by_trip.items())
        ]
        out = evaluate_segmentation(rows, iou_min, clamp, rates)
        for name, row in out["per_class"].items():
            print(f"{name:<20} DS {row['duration_score']:.4f}  recall {row['recall']:.4f}  n {row['n_truth']}")
        print(f"false positives: {out['false_positives']} of {out['n_predicted']} segments")
    out["_meta"] = _meta(cfg, "report", mode="labeled" if labeled else "segmentation")
    if args.output:
        Path(args.output).write_text(json.dumps(out, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return 0


def cmd_annotate(args, cfg) -> int:
    _, records = read_jsonl(args.events)
    by_trip: dict = {}
    for r in records:
        by_trip.setdefault(r.get("trip_id"), []).append(LabeledEvent.from_json(r))
    paths = _trip_paths(args.input)
    out = Path(args.output)
    if len(paths) > 1 or Path(args.input).is_dir():
        out.mkdir(parents=True, exist_ok=True)
    for path in paths:
        trip = read_trip(path)
        events = by_trip.get(trip.trip_id, by_trip.get(None, []))
        track = to_frame_track(trip, events, cfg.annotate.fps)
        target = out / f"{trip.trip_id}.frames.csv" if out.is_dir() else out
        write_track_csv(track, target, cfg.config_hash())
    print(f"wrote frame tracks for {len(paths)} trip(s) to {out}")
    return 0


# ---------------------------------------------------------------- argument parsing


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML config file (defaults below)")
    p.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config key; repeatable, wins over --config",
    )
    p.add_argument("--seed", type=int, help="master seed (config key: seed)")


def _fixed_window_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--fixed-window",
        type=float,
        choices=[3.0, 5.0],
        help="use the fixed-window baseline of this many seconds (segment.fixed_window_s)",
    )


def build_parser() -> argparse.ArgumentParser:
    keys = cfgmod.describe_keys()
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(
        prog="maneuverseg",
        description="Segment, classify and evaluate driving maneuvers in yaw-rate telemetry.",
        epilog=keys,
        formatter_class=fmt,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus", epilog=keys, formatter_class=fmt)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-trips", type=int, help="number of trips (corpus.n_trips)")
    p.add_argument("--noise-sigma", type=float, help="yaw-rate noise (synth.noise_sigma)")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("segment", help="write candidate event segments", epilog=keys, formatter_class=fmt)
    p.add_argument("--input", required=True, help="trip CSV/JSONL or a directory of trips")
    p.add_argument("--output", required=True, help="segments JSONL")
    _fixed_window_arg(p)
    _add_common(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("train", help="train a classifier on a corpus", epilog=keys, formatter_class=fmt)
    p.add_argument("--corpus", required=True, help="corpus directory with truth.jsonl")
    p.add_argument("--kind", required=True, choices=["cnn", "rf"])
    p.add_argument("--output", required=True, help="model file")
    p.add_argument("--report", help="training report JSON")
    p.add_argument("--augment-mirror", action="store_true", help="add left/right mirrored copies")
    p.add_argument("--train-fraction", type=float, help="share of trips used (corpus.train_fraction)")
    _fixed_window_arg(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="label every span of each trip", epilog=keys, formatter_class=fmt)
    p.add_argument("--input", required=True, help="trip CSV/JSONL or a directory of trips")
    p.add_argument(
        "--model", action="append", help="model file; repeat for a majority-vote ensemble (models.paths)"
    )
    p.add_argument("--output", required=True, help="events JSONL")
    _fixed_window_arg(p)
    _add_common(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", help="score events against truth", epilog=keys, formatter_class=fmt)
    p.add_argument("--events", required=True, help="events or segments JSONL")
    p.add_argument("--truth", required=True, help="truth JSONL")
    p.add_argument("--output", help="report JSON")
    p.add_argument("--confusion-csv", help="per-class tp/fp/fn CSV")
    p.add_argument("--iou-min", type=float, help="matching threshold (metrics.iou_min)")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("annotate", help="write per-frame label tracks", epilog=keys, formatter_class=fmt)
    p.add_argument("--input", required=True, help="trip CSV/JSONL or a directory of trips")
    p.add_argument("--events", required=True, help="events JSONL")
    p.add_argument("--fps", type=float, help="video frame rate (annotate.fps)")
    p.add_argument("--output", required=True, help="track CSV, or a directory for several trips")
    _add_common(p)
    p.set_defaults(func=cmd_annotate)
    return parser


_FLAG_KEYS = {
    "n_trips": "corpus.n_trips",
    "noise_sigma": "synth.noise_sigma",
    "fixed_window": "segment.fixed_window_s",
    "train_fraction": "corpus.train_fraction",
    "iou_min": "metrics.iou_min",
    "fps": "annotate.fps",
    "seed": "seed",
}


def resolve_config(args) -> cfgmod.PipelineConfig:
    cfg = cfgmod.load(args.config) if args.config else cfgmod.PipelineConfig()
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        overrides[key.strip()] = cfgmod.parse_value(value.strip())
    for attr, key in _FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    return cfg.with_overrides(overrides) if overrides else cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except (ManeuverSegError, CliError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        name = exc.filename if exc.filename is not None else ""
        print(f"error: {exc.strerror or exc}: {name}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
