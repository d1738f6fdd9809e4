"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error.

A JSON config file (``--config``, or the path in ``RPPGKIT_CONFIG``) overrides
command-line flags. Top-level keys apply to every subcommand that has the
option; a key named after the subcommand holds its own overrides, e.g.
``{"seed": 3, "synth": {"hr": 80}}``. Keys are option names with dashes
replaced by underscores.
"""
import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .bench import bench_inference
from .biomarkers import MODEL_TARGETS, parse_stats_csv
from .errors import InvalidConfig, RppgError
from .evaluation import (constant_baseline, constant_hr_mae, constant_predictions,
                         evaluate_suite, hr_from_ppg)
from .filtering import design_cheby2_bandpass, filtfilt, format_sections
from .io import (atomic_write, find_manifests, load_recording, parse_clock_file, parse_ppg_file,
                 parse_trace_file, read_manifest, write_ppg_file, write_trace_file)
from .model import (ModelConfig, StandardScaler, TrainConfig, fit_scaler, load_checkpoint,
                    make_example, predict_recording, save_checkpoint, train)
from .pipeline import ppg_shift, reconstruct_traces
from .roi import DEFAULT_ROIS, extract_traces, read_mask_file, scale_masks
from .sync import gaussian_kde, shift_report
from .synth import SynthConfig, generate_synthetic_recording, random_config, write_recording

CONFIG_ENV = "RPPGKIT_CONFIG"
EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------- helpers

def _fmt_float(v):
    return repr(float(v)) if v is not None else ""


def _emit(records, fmt, out=None, fields=None):
    """Write records as CSV or JSON lines to ``out`` (atomically) or stdout."""
    if fmt == "jsonl":
        text = "".join(json.dumps(r) + "\n" for r in records)
    else:
        fields = fields or (list(records[0]) if records else [])
        lines = [",".join(fields)]
        for r in records:
            cells = []
            for f in fields:
                v = r.get(f)
                cells.append(_fmt_float(v) if isinstance(v, float) else ("" if v is None else str(v)))
            lines.append(",".join(cells))
        text = "\n".join(lines) + "\n"
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _pool_map(fn, items, workers):
    """Ordered map over a process pool (in-process when ``workers <= 1``)."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _manifest_paths(inputs):
    out = []
    for p in inputs:
        out.extend(find_manifests(p))
    return out


def _recording_id(manifest_path):
    return Path(manifest_path).parent.name


def _load_frames(path, width=None, height=None):
    path = Path(path)
    if path.suffix == ".npy":
        frames = np.load(path)
    else:
        if not (width and height):
            raise UsageError("raw planar frames need --width and --height")
        raw = np.fromfile(path, dtype=np.uint8)
        per = 3 * width * height
        if raw.size % per:
            raise RppgError(f"{path}: size {raw.size} is not a multiple of 3*W*H = {per}")
        # planar: each frame is the R plane, then G, then B
        frames = raw.reshape(-1, 3, height, width).transpose(0, 2, 3, 1)
    if frames.ndim != 4 or frames.shape[3] != 3:
        raise RppgError(f"frames must be T x H x W x 3, got {frames.shape}")
    return frames


def _require_out(args):
    if not args.out:
        raise UsageError(f"{args.command} needs --out")


# ---------------------------------------------------------------- subcommands

def cmd_extract(args):
    _require_out(args)
    frames = _load_frames(args.frames, args.width, args.height)
    polys = read_mask_file(args.masks) if args.masks else DEFAULT_ROIS
    masks = scale_masks(polys, frames.shape[2], frames.shape[1])
    ts = args.t0 + np.arange(frames.shape[0]) / args.fps
    write_trace_file(args.out, extract_traces(frames, ts, masks))


def _load_traces(path):
    path = Path(path)
    if path.suffix == ".csv":
        return parse_trace_file(path)
    return load_recording(find_manifests(path)[0])[1]


def _rppg_one(job):
    path, method, model_path, out = job
    model = scaler = None
    if model_path:
        model, scaler, _ = load_checkpoint(model_path)
    write_ppg_file(out, reconstruct_traces(_load_traces(path), method, model, scaler))
    return str(out)


def cmd_rppg(args):
    _require_out(args)
    if args.method == "model" and not args.model:
        raise UsageError("--method model needs --model")
    if len(args.inputs) == 1 and Path(args.inputs[0]).suffix == ".csv":
        jobs = [(args.inputs[0], args.method, args.model, args.out)]
    else:
        paths = _manifest_paths(args.inputs)
        if len(paths) == 1 and Path(args.out).suffix == ".csv":
            jobs = [(paths[0], args.method, args.model, args.out)]
        else:
            names = [_recording_id(p) for p in paths]
            if len(set(names)) != len(names):
                raise RppgError("recording directory names must be unique")
            jobs = [(p, args.method, args.model, Path(args.out) / f"{n}.{args.method}.csv")
                    for p, n in zip(paths, names)]
    _pool_map(_rppg_one, jobs, args.workers)


def cmd_filter(args):
    _require_out(args)
    signal = parse_ppg_file(args.input)
    filt = design_cheby2_bandpass(args.order, args.low, min(args.high, 0.45 * signal.sample_rate_hz),
                                  args.atten, signal.sample_rate_hz)
    write_ppg_file(args.out, filtfilt(filt, signal))
    if args.sections:
        atomic_write(args.sections, format_sections(filt))


def _hr_one(job):
    path, band, prefilter = job
    est = hr_from_ppg(parse_ppg_file(path), tuple(band), prefilter)
    return {"path": str(path), "bpm": est.bpm, "peak_power_fraction": est.peak_power_fraction}


def cmd_hr(args):
    recs = _pool_map(_hr_one, [(p, args.band, args.prefilter) for p in args.inputs], args.workers)
    if args.format == "text":
        for r in recs:
            prefix = f"{r['path']}\t" if len(recs) > 1 else ""
            sys.stdout.write(f"{prefix}{r['bpm']:.2f}\n")
    else:
        _emit(recs, args.format, args.out, ["path", "bpm", "peak_power_fraction"])


def _clock_streams(inputs):
    """``(session, stream)`` pairs from clock CSVs or recording manifests."""
    out = []
    for p in inputs:
        p = Path(p)
        if p.suffix == ".csv":
            out.append(("default", parse_clock_file(p)))
            continue
        for mp in find_manifests(p):
            m = read_manifest(mp, validate=False)
            if not m.clock_label_path:
                continue
            stream = parse_clock_file(mp.parent / m.clock_label_path, m.camera_id)
            out.append((f"{m.subject_id}/{m.state}", stream))
    if not out:
        raise RppgError("no clock-label streams found")
    return out


def cmd_sync_video(args):
    sessions = {}
    for session, stream in _clock_streams(args.inputs):
        sessions.setdefault(session, []).append(stream)
    records = []
    per_camera = {}
    n_total = n_excluded = 0
    for session in sorted(sessions):
        rep = shift_report(sessions[session], cleanse=not args.no_cleanse)
        n_total += rep["total"]
        n_excluded += rep["excluded"]
        for cam in sorted(rep["cameras"]):
            c = rep["cameras"][cam]
            records.append({"kind": "shift", "session": session, "camera": cam,
                            "status": c["status"], "value_s": c.get("shift_s"),
                            "num_transitions": c.get("num_transitions")})
            if c["status"] == "ok":
                per_camera.setdefault(cam, []).append(c["shift_s"])
        for pair in sorted(rep["pairwise_deltas"]):
            records.append({"kind": "delta", "session": session, "camera": pair, "status": "ok",
                            "value_s": rep["pairwise_deltas"][pair], "num_transitions": None})
    records.append({"kind": "summary", "session": "", "camera": "", "status": "",
                    "value_s": n_excluded / n_total if n_total else 0.0,
                    "num_transitions": n_excluded})
    _emit(records, args.format, args.out,
          ["kind", "session", "camera", "status", "value_s", "num_transitions"])
    if args.kde_out:
        grid = np.linspace(args.kde_range[0], args.kde_range[1], args.kde_points)
        cols = {"shift_s": grid}
        for cam in sorted(per_camera):
            if len(per_camera[cam]) >= 2 and np.ptp(per_camera[cam]) > 0:
                cols[cam] = gaussian_kde(per_camera[cam], grid)
        lines = [",".join(cols)]
        for i in range(grid.size):
            lines.append(",".join(repr(float(c[i])) for c in cols.values()))
        atomic_write(args.kde_out, "\n".join(lines) + "\n")


def _sync_ppg_one(job):
    mp, method, max_shift = job
    _, traces, reference = load_recording(mp)
    a = ppg_shift(traces, reference, method, max_shift)
    return {"recording": _recording_id(mp), "shift_samples": a.shift,
            "shift_s": a.shift / reference.sample_rate_hz, "correlation": a.correlation}


def cmd_sync_ppg(args):
    jobs = [(p, args.method, args.max_shift) for p in _manifest_paths(args.inputs)]
    recs = _pool_map(_sync_ppg_one, jobs, args.workers)
    _emit(recs, args.format, args.out, ["recording", "shift_samples", "shift_s", "correlation"])


def _load_training_set(paths):
    recs = []
    for mp in paths:
        m, traces, ppg = load_recording(mp)
        recs.append((m, traces, ppg))
    return recs


def cmd_train(args):
    _require_out(args)
    recs = _load_training_set(_manifest_paths(args.inputs))
    targets = tuple(args.targets) if args.targets else MODEL_TARGETS
    if args.stats:
        with open(args.stats) as fh:
            stats = parse_stats_csv(fh.read())
        missing = [t for t in targets if t not in stats]
        if missing:
            raise InvalidConfig(f"stats file lacks {missing}")
        scaler = StandardScaler.from_stats(stats, targets)
    else:
        scaler = fit_scaler([m.biomarker_values() for m, _, _ in recs], names=targets)
    examples = [make_example(t, p, m.biomarker_values(), scaler, m.fps) for m, t, p in recs]
    mc = ModelConfig(in_channels=examples[0].traces.shape[0], num_stages=args.stages,
                     base_width=args.base_width, pyramid_width=args.pyramid_width,
                     targets=targets)
    cfg = TrainConfig(window_s=args.window_s, learning_rate=args.lr, batch_size=args.batch_size,
                      epochs=args.epochs, seed=args.seed)
    model, history = train(examples, cfg, model_config=mc, log_path=args.log)
    save_checkpoint(args.out, model, scaler, {"epochs": len(history)})


def _eval_one(job):
    mp, method, model_path = job
    m, traces, reference = load_recording(mp)
    model = scaler = None
    if model_path:
        model, scaler, _ = load_checkpoint(model_path)
    pred = {"id": _recording_id(mp)}
    if method == "model":
        out = predict_recording(model, scaler, traces)
        pred["ppg"], pred["biomarkers"] = out["ppg"], out["biomarkers"]
    else:
        pred["ppg"] = reconstruct_traces(traces, method)
    ref = {"id": pred["id"], "ppg": reference, "biomarkers": m.biomarker_values()}
    return pred, ref


def cmd_eval(args):
    if args.method == "model" and not args.model:
        raise UsageError("--method model needs --model")
    paths = _manifest_paths(args.inputs)
    pairs = _pool_map(_eval_one, [(p, args.method, args.model) for p in paths], args.workers)
    preds = [p for p, _ in pairs]
    refs = [r for _, r in pairs]
    targets = tuple(args.targets) if args.targets else MODEL_TARGETS
    name = args.name or args.method
    reports = [evaluate_suite(preds, refs, targets if args.method == "model" else (), name,
                              args.dataset, prefilter=args.prefilter)]
    if args.baseline_from:
        train_vals = [read_manifest(p, validate=False).biomarker_values()
                      for p in _manifest_paths([args.baseline_from])]
        table = {t: [v.get(t) for v in train_vals] for t in targets + ("heart_rate",)}
        base = constant_baseline({t: v for t, v in table.items()
                                  if any(x is not None for x in v)})
        reports.append(_constant_report(base, refs, targets, args.dataset))
    records = [r for rep in reports for r in rep.records()]
    _emit(records, args.format, args.out,
          ["model", "dataset", "target", "metric", "value", "unit", "count"])
    failures = [f for rep in reports for f in rep.failures]
    for f in failures:
        sys.stderr.write(f"warning: {f['id']}: {f['error']}: {f['message']}\n")


def _constant_report(base, refs, targets, dataset):
    """Constant predictor scored on biomarkers and on per-segment HR."""
    rep = evaluate_suite(constant_predictions(base, len(refs)), refs, targets, "constant",
                         dataset)
    if "heart_rate" in base:
        mae, n = constant_hr_mae(base["heart_rate"], [r["ppg"] for r in refs])
        if n:
            rep.hr_mae, rep.num_segments = mae, n
    return rep


def cmd_bench(args):
    res = bench_inference(args.model, args.segment_s, args.fps, args.repetitions, args.warmup,
                          args.seed)
    text = json.dumps(res, sort_keys=True) + "\n"
    if args.out:
        atomic_write(args.out, text)
    sys.stdout.write(text)


def cmd_synth(args):
    _require_out(args)
    base = SynthConfig(duration_s=args.duration, fps=args.fps, ppg_rate_hz=args.ppg_rate,
                       hr_bpm=args.hr, hrv_bpm=args.hrv, noise_snr_db=args.snr,
                       injected_video_shift_s=args.video_shift,
                       injected_ppg_shift_samples=args.ppg_shift,
                       label_dropout=args.label_dropout, seed=args.seed,
                       subject_id=args.subject, camera_id=args.camera, state=args.state)
    if args.count == 1:
        write_recording(generate_synthetic_recording(base), args.out)
        return
    rng = np.random.default_rng(args.seed)
    for i in range(args.count):
        kw = {"subject_id": f"{args.subject}{i:04d}"}
        if args.random_shifts:
            kw["injected_video_shift_s"] = float(rng.uniform(-3.0, 2.0))
            kw["injected_ppg_shift_samples"] = int(rng.integers(-50, 51))
        cfg = random_config(rng, base, tuple(args.hr_range), **kw)
        write_recording(generate_synthetic_recording(cfg), Path(args.out) / f"rec{i:04d}")


# ---------------------------------------------------------------- parser

def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help=f"JSON config overriding flags (default: ${CONFIG_ENV})")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--out", help="output file or directory")

    p = _Parser(prog="rppgkit", description="Remote-PPG signal processing toolkit.")
    p.add_argument("--version", action="version", version=f"rppgkit {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    def add(name, func, help_):
        sp = sub.add_parser(name, parents=[common], help=help_, description=help_)
        sp.set_defaults(func=func)
        return sp

    sp = add("extract", cmd_extract, "Frames (.npy T x H x W x 3 or raw planar RGB) to ROI traces.")
    sp.add_argument("frames")
    sp.add_argument("--masks", help="ROI polygon file (normalised coordinates)")
    sp.add_argument("--fps", type=float, default=30.0)
    sp.add_argument("--t0", type=float, default=0.0)
    sp.add_argument("--width", type=int)
    sp.add_argument("--height", type=int)

    sp = add("rppg", cmd_rppg, "Reconstruct a pulse signal from traces.")
    sp.add_argument("inputs", nargs="+", help="trace CSV, manifest, or directory of recordings")
    sp.add_argument("--method", choices=("pos", "chrom", "pbv", "omit", "model"), default="pos")
    sp.add_argument("--model", help="checkpoint for --method model")

    sp = add("filter", cmd_filter, "Zero-phase Chebyshev II band-pass of a PPG file.")
    sp.add_argument("input")
    sp.add_argument("--low", type=float, default=0.4)
    sp.add_argument("--high", type=float, default=8.0)
    sp.add_argument("--order", type=int, default=4)
    sp.add_argument("--atten", type=float, default=30.0)
    sp.add_argument("--sections", help="also write the second-order sections here")

    sp = add("hr", cmd_hr, "Heart rate from the spectral peak of PPG files.")
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("--band", type=float, nargs=2, default=(0.5, 3.0), metavar=("LOW", "HIGH"))
    sp.add_argument("--prefilter", action="store_true")
    sp.add_argument("--format", choices=("text", "csv", "jsonl"), default="text")

    sp = add("sync-video", cmd_sync_video, "Record time shifts from clock labels.")
    sp.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    sp.add_argument("inputs", nargs="+", help="clock-label CSVs, manifests or directories")
    sp.add_argument("--no-cleanse", action="store_true")
    sp.add_argument("--kde-out", help="write per-camera shift densities (CSV)")
    sp.add_argument("--kde-range", type=float, nargs=2, default=(-4.0, 2.0))
    sp.add_argument("--kde-points", type=int, default=601)

    sp = add("sync-ppg", cmd_sync_ppg, "Lag between reconstructed and reference PPG.")
    sp.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("--method", choices=("pos", "chrom", "pbv", "omit"), default="pos")
    sp.add_argument("--max-shift", type=int, help="search range in reference samples")

    sp = add("train", cmd_train, "Train the feature-pyramid model.")
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("--epochs", type=int, default=40)
    sp.add_argument("--batch-size", type=int, default=8)
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--window-s", type=float, default=20.0)
    sp.add_argument("--stages", type=int, default=4)
    sp.add_argument("--base-width", type=int, default=16)
    sp.add_argument("--pyramid-width", type=int, default=32)
    sp.add_argument("--targets", nargs="+")
    sp.add_argument("--stats", help="scale targets with this statistics CSV instead of fitting")
    sp.add_argument("--log", help="per-epoch JSON lines log")

    sp = add("eval", cmd_eval, "Score predictions against references.")
    sp.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("--method", choices=("pos", "chrom", "pbv", "omit", "model"), default="model")
    sp.add_argument("--model")
    sp.add_argument("--targets", nargs="+")
    sp.add_argument("--baseline-from", help="training recordings for the constant baseline")
    sp.add_argument("--name", help="model name in the report")
    sp.add_argument("--dataset", default="dataset")
    sp.add_argument("--prefilter", action="store_true")

    sp = add("bench", cmd_bench, "Time sequential forward passes of a checkpoint.")
    sp.add_argument("--model", required=True)
    sp.add_argument("--segment-s", type=float, default=20.0)
    sp.add_argument("--fps", type=float, default=30.0)
    sp.add_argument("--repetitions", type=int, default=200)
    sp.add_argument("--warmup", type=int, default=10)

    sp = add("synth", cmd_synth, "Write synthetic recordings with known ground truth.")
    sp.add_argument("--hr", type=float, default=72.0)
    sp.add_argument("--hrv", type=float, default=0.0)
    sp.add_argument("--duration", type=float, default=20.0)
    sp.add_argument("--fps", type=float, default=30.0)
    sp.add_argument("--ppg-rate", type=float, default=100.0)
    sp.add_argument("--snr", type=float, help="per-channel SNR in dB (default: noiseless)")
    sp.add_argument("--video-shift", type=float, default=0.0)
    sp.add_argument("--ppg-shift", type=int, default=0)
    sp.add_argument("--label-dropout", type=float, default=0.0)
    sp.add_argument("--subject", default="synthetic")
    sp.add_argument("--camera", default="cam1")
    sp.add_argument("--state", default="rest")
    sp.add_argument("--count", type=int, default=1)
    sp.add_argument("--hr-range", type=float, nargs=2, default=(48.0, 160.0))
    sp.add_argument("--random-shifts", action="store_true")
    return p


def _apply_config(parser, args):
    path = args.config or os.environ.get(CONFIG_ENV)
    if not path:
        return args
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise InvalidConfig(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{path}: invalid JSON ({exc.msg})") from None
    if not isinstance(cfg, dict):
        raise InvalidConfig(f"{path}: expected a JSON object")
    subparsers = parser._subparsers._group_actions[0].choices
    known_anywhere = {a.dest for sp in subparsers.values() for a in sp._actions}
    section = cfg.get(args.command, {})
    if not isinstance(section, dict):
        raise InvalidConfig(f"{path}: section {args.command!r} must be an object")
    # shared keys apply where the subcommand has the option; section keys must exist
    values = {}
    for key, value in cfg.items():
        if key in subparsers:
            continue
        key = key.replace("-", "_")
        if key not in known_anywhere:
            raise InvalidConfig(f"{path}: unknown option {key!r}")
        if hasattr(args, key):
            values[key] = value
    for key, value in section.items():
        key = key.replace("-", "_")
        if not hasattr(args, key):
            raise InvalidConfig(f"{path}: unknown option {key!r} for {args.command}")
        values[key] = value
    for key, value in values.items():
        if key in ("config", "func", "command", "help"):
            raise InvalidConfig(f"{path}: option {key!r} cannot be set from a config file")
        setattr(args, key, value)
    return args


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        args = _apply_config(parser, args)
        if args.workers < 1:
            raise UsageError("--workers must be >= 1")
        args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except (RppgError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
