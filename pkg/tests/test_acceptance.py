"""One test per acceptance criterion; each prints a single PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``. The latency threshold
is only enforced with ``RPPGKIT_PERF=1``; otherwise the number and the
hardware are reported.
"""
import math
import os
import time

import numpy as np
import pytest

from cli_cases import make_inputs, rerun_all
from conftest import sine
from rppgkit.bench import bench_inference, hardware_info
from rppgkit.biomarkers import MODEL_TARGETS
from rppgkit.evaluation import (constant_baseline, constant_hr_mae, hr_from_ppg, hr_mae,
                                ppg_mae, segment_hr)
from rppgkit.filtering import bandpass, design_cheby2_bandpass, frequency_response
from rppgkit.model import (FpnModel, ModelConfig, TrainConfig, backward_step, fit_scaler,
                           forward, loss_and_gradients, make_example, predict_recording,
                           save_checkpoint, train)
from rppgkit.pipeline import ppg_shift
from rppgkit.signal_core import PpgSignal
from rppgkit.sync import (ClockLabelStream, cleanse_labels, format_clock_label,
                          pairwise_camera_delta, record_time_shift)
from rppgkit.synth import SynthConfig, generate_synthetic_recording, random_config
from rppgkit.unsupervised import METHODS, RgbTrace, reconstruct
from test_model import naive_forward

STOP_30DB = 10 ** (-30 / 20)
HALF_POWER = 10 ** (-3 / 20)


@pytest.fixture
def check(capsys):
    """``check(n, ok, detail, elapsed, limit)``: print the verdict line, then assert."""
    def _check(n, ok, detail, elapsed=None, limit=None, enforce=True):
        timing = ""
        if elapsed is not None:
            timing = f" [{elapsed:.1f} s"
            if limit is not None:
                timing += f" / limit {limit:g} s"
                ok = ok and elapsed < limit
            timing += "]"
        with capsys.disabled():
            print(f"\nACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} - {detail}{timing}")
        if enforce:
            assert ok, detail
    return _check


def test_criterion_1_filter(check):
    t0 = time.perf_counter()
    f = design_cheby2_bandpass(4, 0.4, 8.0, 30.0, 100.0)

    def direct(fz):
        # expanded numerator / denominator polynomials in z^-1
        b, a = np.array([1.0]), np.array([1.0])
        for b0, b1, b2, a1, a2 in f.second_order_sections:
            b, a = np.convolve(b, [b0, b1, b2]), np.convolve(a, [1.0, a1, a2])
        zinv = np.exp(-2j * np.pi * fz / 100.0)
        return abs(np.polyval(b[::-1], zinv) / np.polyval(a[::-1], zinv))

    h_dc, h20, h2 = (abs(frequency_response(f, [x])[0]) for x in (0.0, 20.0, 2.0))
    agree = all(abs(direct(x) - h) < 1e-6 for x, h in ((0.0, h_dc), (20.0, h20), (2.0, h2)))
    # |H(0)| sits on the -30 dB stopband edge; 1e-9 covers rounding in the product
    ok = (h_dc <= STOP_30DB * (1 + 1e-9) and h20 <= STOP_30DB and h2 >= HALF_POWER
          and f.is_stable() and agree)
    check(1, ok, f"|H(0)|={20 * np.log10(h_dc):.4f} dB, |H(20)|={20 * np.log10(h20):.2f} dB, "
                 f"|H(2)|={20 * np.log10(h2):.2f} dB, max pole radius "
                 f"{f.pole_radii().max():.4f}, direct evaluation agrees={agree}",
          time.perf_counter() - t0, 1)


def test_criterion_2_unsupervised_recovery(check):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    recs = [generate_synthetic_recording(random_config(rng, SynthConfig(noise_snr_db=10.0)))
            for _ in range(50)]
    maes = {}
    for m in sorted(METHODS):
        errs = []
        for r in recs:
            rgb = RgbTrace.from_array(r.traces.mean_rgb(), r.traces.fps)
            pulse = bandpass(PpgSignal(reconstruct(rgb, m).samples, r.traces.fps))
            errs += [abs(p - q) for p, q in segment_hr(pulse, r.reference_ppg)]
        maes[m] = float(np.mean(errs))
    ok = all(v <= 3.0 for v in maes.values())
    check(2, ok, "segment HR MAE " + ", ".join(f"{k}={v:.3f}" for k, v in maes.items())
          + " bpm (limit 3)", time.perf_counter() - t0, 30)


def test_criterion_3_sync_recovery(check):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    video_ok = ppg_ok = 0
    for _ in range(100):
        cfg = random_config(rng, SynthConfig(noise_snr_db=10.0, hrv_bpm=5.0),
                            injected_video_shift_s=float(rng.uniform(-3.0, 2.0)),
                            injected_ppg_shift_samples=int(rng.integers(-50, 51)))
        rec = generate_synthetic_recording(cfg)
        est = record_time_shift(cleanse_labels(rec.clock_labels)).shift_s
        video_ok += abs(est - cfg.injected_video_shift_s) <= 0.5 / cfg.fps
        lag = ppg_shift(rec.traces, rec.reference_ppg, "pos", 50).shift
        ppg_ok += abs(lag - cfg.injected_ppg_shift_samples) <= 1
    check(3, video_ok >= 95 and ppg_ok >= 95,
          f"video shift within half a frame {video_ok}/100, PPG lag within 1 sample "
          f"{ppg_ok}/100", time.perf_counter() - t0, 20)


def _camera(rng, shift):
    fps = float(rng.choice([24.0, 30.0]))
    ts = 43200.0 + rng.uniform(0, 1) + np.arange(int(3 * fps)) / fps
    return ClockLabelStream(ts, [format_clock_label(math.floor(t + shift)) for t in ts])


def test_criterion_4_delta_identity(check):
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    bad = 0
    for _ in range(1000):
        e = [record_time_shift(_camera(rng, s)) for s in rng.uniform(-3.0, 2.0, 3)]
        cycle = (pairwise_camera_delta(e[0], e[1]) + pairwise_camera_delta(e[1], e[2])
                 + pairwise_camera_delta(e[2], e[0]))
        bad += cycle != 0.0
    check(4, bad == 0, f"{1000 - bad}/1000 camera triples sum to exactly 0",
          time.perf_counter() - t0)


def test_criterion_5_model(check):
    t0 = time.perf_counter()
    # (a) finite-difference gradient check on the tiny model
    tiny = ModelConfig(in_channels=3, num_stages=2, base_width=4, stage_widths=(4, 4),
                       pyramid_width=4, targets=("a", "b"))
    model = FpnModel.initialize(tiny, seed=3)
    rng = np.random.default_rng(4)
    for k in model.params:
        if k.endswith(".b"):
            model.params[k] = 0.1 * rng.standard_normal(model.params[k].shape)
    x, tp, tb = rng.standard_normal((2, 3, 64)), rng.standard_normal((2, 64)), \
        rng.standard_normal((2, 2))
    _, grads = loss_and_gradients(model, x, tp, tb)
    worst, eps = 0.0, 1e-4
    for name, p in model.params.items():
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + eps
            up = loss_and_gradients(model, x, tp, tb)[0]
            p[idx] = orig - eps
            down = loss_and_gradients(model, x, tp, tb)[0]
            p[idx] = orig
            fd, g = (up - down) / (2 * eps), grads[name][idx]
            worst = max(worst, abs(g - fd) / max(abs(g), abs(fd), 1e-3))
    # (b) output length
    full = FpnModel.initialize(ModelConfig(), seed=0)
    lengths = [forward(full, np.random.default_rng(t).standard_normal((21, t)))["ppg"].size
               for t in (240, 600, 2048)]
    # (c) overfit one sample
    cfg = ModelConfig(in_channels=3, targets=("a", "b"))
    m = FpnModel.initialize(cfg, seed=0)
    r = np.random.default_rng(0)
    batch = {"x": r.standard_normal((1, 3, 128)), "ppg": np.sin(np.arange(128) / 3.0)[None],
             "biomarkers": r.standard_normal((1, 2))}
    m, first, state = backward_step(m, batch, TrainConfig())
    for _ in range(199):
        m, last, state = backward_step(m, batch, TrainConfig(), state)
    drop = 1 - last / first
    # (d) naive convolution oracle
    ocfg = ModelConfig(in_channels=6, stage_widths=(8, 8, 16, 16), base_width=8, pyramid_width=8)
    om = FpnModel.initialize(ocfg, seed=0)
    xo = np.random.default_rng(1).standard_normal((6, 256))
    ppg, bio = naive_forward(om.params, ocfg, xo)
    out = forward(om, xo)
    rel = max(np.max(np.abs(out["ppg"] - ppg)) / np.max(np.abs(ppg)),
              np.max(np.abs(out["biomarkers"] - bio)) / np.max(np.abs(bio)))
    ok = worst <= 1e-3 and lengths == [240, 600, 2048] and drop >= 0.9 and rel <= 1e-5
    check(5, ok, f"(a) worst gradient rel err {worst:.2e}; (b) lengths {lengths}; "
                 f"(c) overfit loss drop {drop:.1%}; (d) oracle rel err {rel:.1e}",
          time.perf_counter() - t0, 120)


def _dataset(seed, n):
    rng = np.random.default_rng(seed)
    base = SynthConfig(noise_snr_db=10.0)
    return [generate_synthetic_recording(random_config(rng, base)) for _ in range(n)]


@pytest.mark.slow
def test_criterion_6_end_to_end_learning(check):
    t0 = time.perf_counter()
    train_set, test_set = _dataset(100, 200), _dataset(200, 50)
    scaler = fit_scaler([r.ground_truth["biomarkers"] for r in train_set], names=MODEL_TARGETS)
    examples = [make_example(r.traces, r.reference_ppg, r.ground_truth["biomarkers"], scaler,
                             r.manifest.fps) for r in train_set]
    t_train = time.perf_counter()
    model, history = train(examples, TrainConfig(epochs=30, seed=0, time_budget_s=270.0))
    t_train = time.perf_counter() - t_train

    preds = [predict_recording(model, scaler, r.traces) for r in test_set]
    model_hr = float(np.mean([hr_mae(p["ppg"], r.reference_ppg) for p, r in zip(preds, test_set)]))
    const = constant_baseline({"heart_rate": [r.ground_truth["hr_bpm"] for r in train_set],
                               **{t: [r.ground_truth["biomarkers"][t] for r in train_set]
                                  for t in ("systolic_pressure", "diastolic_pressure")}})
    const_hr, _ = constant_hr_mae(const["heart_rate"], [r.reference_ppg for r in test_set])
    heads = {}
    for t in ("systolic_pressure", "diastolic_pressure"):
        truth = np.array([r.ground_truth["biomarkers"][t] for r in test_set])
        pred = np.array([p["biomarkers"][t] for p in preds])
        heads[t] = (float(np.mean(np.abs(pred - truth))), float(np.mean(np.abs(const[t] - truth))))
    beats = [t for t, (m, c) in heads.items() if m < c]
    ok = model_hr <= 5.0 and model_hr <= 0.5 * const_hr and len(beats) >= 1 and t_train <= 300
    detail = (f"HR MAE {model_hr:.2f} bpm vs constant {const_hr:.2f} "
              f"({1 - model_hr / const_hr:.0%} better); "
              + "; ".join(f"{t} {m:.2f} vs constant {c:.2f}" for t, (m, c) in heads.items())
              + f"; trained {len(history)} epochs in {t_train:.0f} s")
    check(6, ok, detail, time.perf_counter() - t0)


@pytest.mark.perf
def test_criterion_7_latency(check, tmp_path):
    path = tmp_path / "default.ckpt"
    save_checkpoint(path, FpnModel.initialize(ModelConfig(), seed=0))
    res = bench_inference(path, segment_s=20.0, fps=30.0, repetitions=200)
    hw = hardware_info()
    enforce = os.environ.get("RPPGKIT_PERF") == "1"
    detail = (f"mean {res['mean_ms']:.2f} ms, p50 {res['p50_ms']:.2f} ms, p95 "
              f"{res['p95_ms']:.2f} ms per 20 s @ 30 fps segment (limit 150 ms"
              f"{'' if enforce else ', not enforced'}); "
              f"{hw.get('cpu_model', hw['machine'])}, {hw['cpu_count']} CPUs, "
              f"numpy {hw['numpy']}")
    check(7, res["mean_ms"] <= 150.0, detail, enforce=enforce)


def test_criterion_8_metric_sanity(check):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    normal = ppg_mae(PpgSignal(rng.standard_normal(100_000), 100.0),
                     PpgSignal(rng.standard_normal(100_000), 100.0))
    hr = hr_from_ppg(PpgSignal(sine(1.2, 10.0, 100.0), 100.0)).bpm
    grid_ok = 0
    for _ in range(100):
        vals = rng.normal(0, 10, rng.integers(1, 12))
        base = constant_baseline({"x": vals})["x"]
        best = min(np.mean(np.abs(vals - c)) for c in np.linspace(-40, 40, 8001))
        grid_ok += np.mean(np.abs(vals - base)) <= best + 1e-12
    ok = abs(normal - 2 / math.sqrt(math.pi)) <= 0.02 and abs(hr - 72.0) <= 0.5 and grid_ok == 100
    check(8, ok, f"normal-pair PPG MAE {normal:.4f} (target {2 / math.sqrt(math.pi):.4f}), "
                 f"HR {hr:.3f} bpm, median beats grid {grid_ok}/100",
          time.perf_counter() - t0)


def test_criterion_9_cli_determinism(check, tmp_path):
    t0 = time.perf_counter()
    make_inputs(tmp_path)
    names, differing = rerun_all(tmp_path, tmp_path)
    check(9, not differing and len(names) == 10,
          f"{len(names) - len(differing)}/{len(names)} subcommands byte-identical on rerun"
          + (f" (differ: {differing})" if differing else ""), time.perf_counter() - t0)
