"""``mstool``: the pipeline stages as subcommands.

Every subcommand writes its outputs plus a ``<output>.prov.json`` provenance
record (inputs with hashes, effective configuration, seeds, version) that is
sufficient to re-run the command bit-identically. Flags win over the JSON
config file given with ``--config``; the effective values are echoed into
provenance. All randomness flows from explicit seeds, and batches over
multiple recordings are processed in sorted order so ``--jobs`` never
changes the output bytes.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__, features as ft, io as eio
from . import microstate as ms, preprocess as pp, promptgen as pg
from . import plotting, synthquality as sq, evalmetrics as em
from .backfit import backfit, gev, save_gev_report, save_labels_csv, smooth_labels
from .errors import MstoolError, ValidationError

CONFIG_SECTIONS = ("preprocess", "segment", "backfit", "prompts", "synth", "eval")


# ---------------------------------------------------------------------------
# config and provenance
# ---------------------------------------------------------------------------

def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValidationError("config file must hold a JSON object")
    validate_config(doc)
    return doc


def validate_config(doc: dict) -> None:
    """Check every config field against its module's preconditions."""
    unknown = set(doc) - set(CONFIG_SECTIONS) - {"seed"}
    if unknown:
        raise ValidationError(f"unknown config sections: {sorted(unknown)}")
    pre = doc.get("preprocess", {})
    if pre:
        spec = pp.FilterSpec(
            low_hz=float(pre.get("low_hz", pp.DEFAULT_LOW_HZ)),
            high_hz=float(pre.get("high_hz", pp.DEFAULT_HIGH_HZ)),
            order=int(pre.get("order", pp.DEFAULT_ORDER)),
        )
        if spec.order < 1 or not 0 < spec.low_hz < spec.high_hz:
            raise ValidationError("config preprocess: invalid filter spec")
    seg = doc.get("segment", {})
    if int(seg.get("k", ms.DEFAULT_K)) < 1:
        raise ValidationError("config segment.k must be >= 1")
    if int(seg.get("n_init", ms.DEFAULT_N_INIT)) < 1:
        raise ValidationError("config segment.n_init must be >= 1")
    if int(seg.get("max_iter", ms.DEFAULT_MAX_ITER)) < 1:
        raise ValidationError("config segment.max_iter must be >= 1")
    if float(seg.get("tol", ms.DEFAULT_TOL)) <= 0:
        raise ValidationError("config segment.tol must be > 0")
    if float(seg.get("min_peak_distance_ms", 0.0)) < 0:
        raise ValidationError("config segment.min_peak_distance_ms must be >= 0")
    if float(doc.get("backfit", {}).get("min_duration_ms", 0.0)) < 0:
        raise ValidationError("config backfit.min_duration_ms must be >= 0")
    pr = doc.get("prompts", {})
    if "train_fraction" in pr and not 0 < float(pr["train_fraction"]) < 1:
        raise ValidationError("config prompts.train_fraction must be in (0, 1)")
    sy = doc.get("synth", {})
    if int(sy.get("bins", sq.DEFAULT_BINS)) < 2:
        raise ValidationError("config synth.bins must be >= 2")
    if "weights" in sy:
        sq.composite_score((0.0, 0.0, 0.0), tuple(float(w) for w in sy["weights"]))
    if not 0 < float(sy.get("variance_threshold", sq.DEFAULT_VARIANCE_THRESHOLD)) <= 1:
        raise ValidationError("config synth.variance_threshold must be in (0, 1]")
    ev = doc.get("eval", {})
    if ev.get("positive_class", em.DEFAULT_POSITIVE) not in em.CLASSES:
        raise ValidationError(f"config eval.positive_class must be one of {em.CLASSES}")


def resolve(flag_value, config: dict, section: str, key: str, default):
    if flag_value is not None:
        return flag_value
    return config.get(section, {}).get(key, default)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_provenance(output: Path, subcommand: str, effective: dict,
                     inputs: list[Path]) -> None:
    record = {
        "artifact": "mstool",
        "version": __version__,
        "command": subcommand,
        "effective_config": effective,
        "inputs": [{"path": str(p), "sha256": _sha256(p)} for p in sorted(inputs)],
        "output": str(output),
    }
    prov = Path(str(output) + ".prov.json")
    with open(prov, "w", encoding="utf-8") as fh:
        json.dump(record, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _parallel(fn, items, jobs: int):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _infer_format(path: Path, flag: str | None) -> str:
    if flag:
        return flag
    return "csv" if path.suffix.lower() == ".csv" else "raw_f64"


def _load(path: Path, fmt_flag: str | None) -> eio.EegRecording:
    return eio.load_recording(path, format=_infer_format(path, fmt_flag))


def _out_dir(args) -> Path:
    out = Path(args.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_preprocess(args, config: dict) -> int:
    out_dir = _out_dir(args)
    spec = pp.FilterSpec(
        low_hz=float(resolve(args.low_hz, config, "preprocess", "low_hz", pp.DEFAULT_LOW_HZ)),
        high_hz=float(resolve(args.high_hz, config, "preprocess", "high_hz", pp.DEFAULT_HIGH_HZ)),
        order=int(resolve(args.order, config, "preprocess", "order", pp.DEFAULT_ORDER)),
    )
    ref = resolve(args.reference, config, "preprocess", "reference", pp.DEFAULT_REFERENCE)
    if ref == "avg":
        ref = pp.COMMON_AVERAGE
    elif ref == "fz":
        ref = "Fz"
    effective = {"low_hz": spec.low_hz, "high_hz": spec.high_hz, "order": spec.order,
                 "reference": ref}
    paths = sorted(Path(p) for p in args.recordings)

    def one(path: Path):
        rec = _load(path, args.format)
        rec = pp.rereference(rec, ref)
        rec = pp.bandpass(rec, spec)
        return path, rec

    for path, rec in _parallel(one, paths, args.jobs):
        out = out_dir / (path.stem + ".raw")
        eio.save_recording(rec, out, format="raw_f64")
        write_provenance(out, "preprocess", effective, [path, eio.sidecar_path(path)])
        print(f"preprocess: {path} -> {out}")
    return 0


def cmd_segment(args, config: dict) -> int:
    out_dir = _out_dir(args)
    seed = args.seed if args.seed is not None else config.get("seed")
    if seed is None:
        raise ValidationError("segment needs an explicit --seed (or config seed)")
    k = int(resolve(args.k, config, "segment", "k", ms.DEFAULT_K))
    n_init = int(resolve(args.n_init, config, "segment", "n_init", ms.DEFAULT_N_INIT))
    max_iter = int(resolve(args.max_iter, config, "segment", "max_iter", ms.DEFAULT_MAX_ITER))
    tol = float(resolve(args.tol, config, "segment", "tol", ms.DEFAULT_TOL))
    min_dist = float(resolve(args.min_peak_distance_ms, config, "segment",
                             "min_peak_distance_ms", 0.0))
    full = bool(resolve(args.use_full_signal or None, config, "segment",
                        "use_full_signal", False))
    effective = {"k": k, "n_init": n_init, "max_iter": max_iter, "tol": tol,
                 "min_peak_distance_ms": min_dist, "use_full_signal": full,
                 "seed": int(seed)}
    paths = sorted(Path(p) for p in args.recordings)

    def one(path: Path):
        rec = _load(path, args.format)
        if full:
            samples = rec.data
        else:
            series = ms.gfp(rec)
            peaks = ms.find_gfp_peaks(series, min_distance_ms=min_dist)
            if peaks.shape[0] < k:
                raise ValidationError(
                    f"{path}: only {peaks.shape[0]} GFP peaks for k={k}"
                )
            samples = rec.data[:, peaks]
        model = ms.mod_kmeans(samples, k=k, n_init=n_init, max_iter=max_iter,
                              tol=tol, seed=int(seed))
        return path, ms.order_maps(model, rec)

    for path, model in _parallel(one, paths, args.jobs):
        out = out_dir / (path.stem + ".model.json")
        ms.save_model(model, out)
        write_provenance(out, "segment", effective, [path, eio.sidecar_path(path)])
        print(f"segment: {path} -> {out} (gev_total={model.gev_total:.4f})")
    return 0


def _model_for(path: Path, args) -> Path:
    if args.model:
        return Path(args.model)
    if args.models_dir:
        cand = Path(args.models_dir) / (path.stem + ".model.json")
        if not cand.exists():
            raise ValidationError(f"no model file {cand} for recording {path}")
        return cand
    raise ValidationError("give either --model or --models-dir")


def cmd_backfit(args, config: dict) -> int:
    out_dir = _out_dir(args)
    min_dur = float(resolve(args.min_duration_ms, config, "backfit", "min_duration_ms", 0.0))
    effective = {"min_duration_ms": min_dur}
    paths = sorted(Path(p) for p in args.recordings)

    def one(path: Path):
        rec = _load(path, args.format)
        model_path = _model_for(path, args)
        model = ms.load_model(model_path)
        seq = backfit(rec, model)
        if min_dur > 0:
            seq = smooth_labels(seq, min_dur)
        report = gev(rec, model, seq)
        return path, model_path, model, seq, report

    for path, model_path, model, seq, report in _parallel(one, paths, args.jobs):
        labels_out = out_dir / (path.stem + ".labels.csv")
        gev_out = out_dir / (path.stem + ".gev.json")
        save_labels_csv(seq, model, labels_out)
        save_gev_report(report, gev_out)
        inputs = [path, eio.sidecar_path(path), model_path]
        write_provenance(labels_out, "backfit", effective, inputs)
        write_provenance(gev_out, "backfit", effective, inputs)
        print(f"backfit: {path} -> {labels_out} (gev={report.total:.4f})")
    return 0


def cmd_features(args, config: dict) -> int:
    out_dir = _out_dir(args)
    min_dur = float(resolve(args.min_duration_ms, config, "backfit", "min_duration_ms", 0.0))
    effective = {"min_duration_ms": min_dur}
    paths = sorted(Path(p) for p in args.recordings)

    def one(path: Path):
        rec = _load(path, args.format)
        model_path = _model_for(path, args)
        model = ms.load_model(model_path)
        seq = backfit(rec, model)
        if min_dur > 0:
            seq = smooth_labels(seq, min_dur)
        return path, model_path, ft.extract_features(rec, model, seq)

    tables = []
    results = _parallel(one, paths, args.jobs)
    for path, model_path, table in results:
        out = out_dir / (path.stem + ".features.json")
        ft.save_feature_table(table, out)
        write_provenance(out, "features", effective,
                         [path, eio.sidecar_path(path), model_path])
        tables.append(table)
        print(f"features: {path} -> {out}")

    csv_out = out_dir / "features.csv"
    ft.write_features_csv(tables, csv_out)
    all_inputs = [p for path, mp, _ in results
                  for p in (path, eio.sidecar_path(path), mp)]
    write_provenance(csv_out, "features", effective, all_inputs)
    print(f"features: merged table -> {csv_out}")
    return 0


def cmd_prompts(args, config: dict) -> int:
    out_dir = _out_dir(args)
    seed = args.seed if args.seed is not None else config.get("seed")
    if seed is None:
        raise ValidationError("prompts needs an explicit --seed (or config seed)")
    fraction = float(resolve(args.train_fraction, config, "prompts", "train_fraction", 0.9))
    stratify = bool(args.stratify or config.get("prompts", {}).get("stratify", False))
    effective = {"train_fraction": fraction, "seed": int(seed), "stratify": stratify}

    inputs: list[Path]
    if args.import_jsonl:
        if args.features:
            raise ValidationError("give feature files or --import, not both")
        inputs = [Path(args.import_jsonl)]
        records = pg.read_dataset(inputs[0])
    else:
        if not args.features:
            raise ValidationError("no feature files given (and no --import)")
        inputs = sorted(Path(p) for p in args.features)
        tables = [ft.load_feature_table(p) for p in inputs]
        tables.sort(key=lambda t: (t.subject.subject_id, t.subject.condition))
        records = [pg.render_prompt(t) for t in tables]

    summary = pg.write_dataset(records, fraction, int(seed), out_dir, stratify=stratify)
    for name in ("train.jsonl", "test.jsonl", "summary.json"):
        write_provenance(out_dir / name, "prompts", effective, inputs)
    print(f"prompts: {summary['n_train']} train / {summary['n_test']} test -> {out_dir}")
    return 0


def cmd_synth_gen(args, config: dict) -> int:
    out_dir = _out_dir(args)
    seed = args.seed if args.seed is not None else config.get("seed")
    if seed is None:
        raise ValidationError("synth-gen needs an explicit --seed (or config seed)")
    table = sq.read_table(args.table)
    synth = sq.baseline_synthesize(table, n=args.n, seed=int(seed))
    out = Path(args.out) if args.out else out_dir / "synthetic.csv"
    sq.write_table(synth, out)
    write_provenance(out, "synth-gen", {"n": args.n, "seed": int(seed)}, [Path(args.table)])
    print(f"synth-gen: {args.n} rows -> {out}")
    return 0


def cmd_synth_score(args, config: dict) -> int:
    out_dir = _out_dir(args)
    bins = int(resolve(args.bins, config, "synth", "bins", sq.DEFAULT_BINS))
    threshold = float(resolve(args.variance_threshold, config, "synth",
                              "variance_threshold", sq.DEFAULT_VARIANCE_THRESHOLD))
    if args.weights:
        weights = tuple(float(w) for w in args.weights.split(","))
        if len(weights) != 3:
            raise ValidationError("--weights needs exactly 3 comma-separated values")
    else:
        weights = tuple(config.get("synth", {}).get("weights", sq.EQUAL_WEIGHTS))
    effective = {"bins": bins, "weights": list(weights), "variance_threshold": threshold}

    orig = sq.read_table(args.original)
    synth = sq.read_table(args.synthetic)
    report = sq.score_tables(orig, synth, bins=bins, weights=weights,
                             variance_threshold=threshold)
    out = Path(args.out) if args.out else out_dir / "quality_report.json"
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    write_provenance(out, "synth-score", effective,
                     [Path(args.original), Path(args.synthetic)])
    print(f"synth-score: composite {sq.display_percentage(report.composite)}% -> {out}")
    return 0


_ANSWER_TO_CLASS = {pg.ANSWER_REST: "Rest", pg.ANSWER_LOAD: "Load"}


def _read_predictions(path: Path) -> list[tuple[str, str]]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "user,prediction":
            raise ValidationError(
                f"{path}: predictions file must start with 'user,prediction'"
            )
        for line_no, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ValidationError(f"{path}: malformed line {line_no}: {line!r}")
            rows.append((parts[0], parts[1]))
    return rows


def _paired_labels(truth_records, pred_rows, pred_path: Path):
    if len(pred_rows) != len(truth_records):
        raise ValidationError(
            f"{pred_path}: {len(pred_rows)} predictions for {len(truth_records)} "
            "truth records"
        )
    truth, preds = [], []
    for i, (record, (user, label)) in enumerate(zip(truth_records, pred_rows)):
        if user != record.user:
            raise ValidationError(
                f"{pred_path}: row {i + 2} is for user {user!r}, expected {record.user!r}"
            )
        if record.answer not in _ANSWER_TO_CLASS:
            raise ValidationError(f"unknown answer text in truth record {i}: "
                                  f"{record.answer!r}")
        truth.append(_ANSWER_TO_CLASS[record.answer])
        preds.append(label)
    return preds, truth


def cmd_eval(args, config: dict) -> int:
    out_dir = _out_dir(args)
    positive = resolve(args.positive_class, config, "eval", "positive_class",
                       em.DEFAULT_POSITIVE)
    effective = {"positive_class": positive}
    truth_records = pg.read_dataset(args.truth)

    preds, truth = _paired_labels(truth_records, _read_predictions(Path(args.pred)),
                                  Path(args.pred))
    after = em.metrics(em.confusion(preds, truth, positive_class=positive))
    doc = {"after": after.to_dict(), "before": None, "comparison": None}
    inputs = [Path(args.truth), Path(args.pred)]

    if args.pred_before:
        preds_b, truth_b = _paired_labels(
            truth_records, _read_predictions(Path(args.pred_before)), Path(args.pred_before))
        before = em.metrics(em.confusion(preds_b, truth_b, positive_class=positive))
        doc["before"] = before.to_dict()
        doc["comparison"] = em.compare_reports(before, after)
        inputs.append(Path(args.pred_before))

    out = Path(args.out) if args.out else out_dir / "metrics_report.json"
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")
    write_provenance(out, "eval", effective, inputs)
    print(f"eval: accuracy {doc['after']['accuracy']:.2f}% -> {out}")
    return 0


def cmd_plot(args, config: dict) -> int:
    rec = _load(Path(args.recording), args.format)
    series = ms.gfp(rec)
    if args.kind == "gfp":
        min_dist = float(resolve(args.min_peak_distance_ms, config, "segment",
                                 "min_peak_distance_ms", 0.0))
        peaks = ms.find_gfp_peaks(series, min_distance_ms=min_dist)
        svg = plotting.render_gfp_svg(series, peaks, args.start, args.end,
                                      title=f"GFP: {rec.meta.subject_id} "
                                            f"({rec.meta.condition})")
        inputs = [Path(args.recording), eio.sidecar_path(Path(args.recording))]
        effective = {"kind": "gfp", "min_peak_distance_ms": min_dist,
                     "start": args.start, "end": args.end}
    else:
        if not args.model:
            raise ValidationError("segmentation plots need --model")
        model = ms.load_model(args.model)
        seq = backfit(rec, model)
        min_dur = float(resolve(args.min_duration_ms, config, "backfit",
                                "min_duration_ms", 0.0))
        if min_dur > 0:
            seq = smooth_labels(seq, min_dur)
        svg = plotting.render_segmentation_svg(
            series, seq, model.labels, args.start, args.end,
            title=f"Segmentation: {rec.meta.subject_id} ({rec.meta.condition})")
        inputs = [Path(args.recording), eio.sidecar_path(Path(args.recording)),
                  Path(args.model)]
        effective = {"kind": "segmentation", "min_duration_ms": min_dur,
                     "start": args.start, "end": args.end}

    out = Path(args.out)
    out.write_text(svg, encoding="utf-8")
    write_provenance(out, "plot", effective, inputs)
    print(f"plot: {args.kind} -> {out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mstool",
        description="EEG microstate segmentation, features, prompt datasets, "
                    "synthetic-data scoring and classifier evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"mstool {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file with module defaults")
    common.add_argument("--out-dir", help="directory for outputs (default: cwd)")
    common.add_argument("--seed", type=int, help="seed for all randomness")
    common.add_argument("--jobs", type=int, default=1,
                        help="parallel workers for multi-recording batches")
    common.add_argument("--format", choices=list(eio.FORMATS),
                        help="recording format (default: inferred from extension)")

    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("preprocess", parents=[common],
                       help="re-reference and bandpass filter recordings")
    p.add_argument("recordings", nargs="+")
    p.add_argument("--low-hz", type=float)
    p.add_argument("--high-hz", type=float)
    p.add_argument("--order", type=int)
    p.add_argument("--reference",
                   help="'fz', 'avg' or any channel label (default Fz)")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("segment", parents=[common],
                       help="fit microstate archetypes with modified K-means")
    p.add_argument("recordings", nargs="+")
    p.add_argument("--k", type=int)
    p.add_argument("--n-init", type=int)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--min-peak-distance-ms", type=float)
    p.add_argument("--use-full-signal", action="store_true",
                   help="cluster every sample instead of GFP peaks")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("backfit", parents=[common],
                       help="label every sample with its best archetype")
    p.add_argument("recordings", nargs="+")
    p.add_argument("--model", help="model JSON fitted for these recordings")
    p.add_argument("--models-dir", help="directory of <stem>.model.json files")
    p.add_argument("--min-duration-ms", type=float)
    p.set_defaults(func=cmd_backfit)

    p = sub.add_parser("features", parents=[common],
                       help="extract per-state microstate features")
    p.add_argument("recordings", nargs="+")
    p.add_argument("--model")
    p.add_argument("--models-dir")
    p.add_argument("--min-duration-ms", type=float)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("prompts", parents=[common],
                       help="render prompts and write a split JSONL dataset")
    p.add_argument("features", nargs="*")
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--stratify", action="store_true")
    p.add_argument("--import", dest="import_jsonl",
                   help="ingest an existing JSONL prompt dataset instead of "
                        "rendering feature tables")
    p.set_defaults(func=cmd_prompts)

    p = sub.add_parser("synth-gen", parents=[common],
                       help="baseline Gaussian-copula synthesizer")
    p.add_argument("table", help="original table CSV (name:kind header)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth_gen)

    p = sub.add_parser("synth-score", parents=[common],
                       help="score synthetic table quality against an original")
    p.add_argument("original")
    p.add_argument("synthetic")
    p.add_argument("--bins", type=int)
    p.add_argument("--weights", help="three comma-separated weights summing to 1")
    p.add_argument("--variance-threshold", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth_score)

    p = sub.add_parser("eval", parents=[common],
                       help="score a predictions file against a truth JSONL")
    p.add_argument("--truth", required=True, help="test split JSONL")
    p.add_argument("--pred", required=True, help="CSV: user,prediction")
    p.add_argument("--pred-before", help="second predictions file to compare against")
    p.add_argument("--positive-class", choices=list(em.CLASSES))
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", parents=[common],
                       help="deterministic SVG of a GFP trace or segmentation")
    p.add_argument("recording")
    p.add_argument("--kind", choices=["gfp", "segmentation"], required=True)
    p.add_argument("--model")
    p.add_argument("--min-peak-distance-ms", type=float)
    p.add_argument("--min-duration-ms", type=float)
    p.add_argument("--start", type=float, help="window start in seconds")
    p.add_argument("--end", type=float, help="window end in seconds")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        return args.func(args, config)
    except (MstoolError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
