"""Seeded synthetic recordings with known ground truth.

The pulse is a unit fundamental at the instantaneous heart rate plus a
0.3-amplitude second harmonic. Each ROI's RGB trace is
``baseline * (1 + amplitude * gain * pulse(t)) + noise``; the reference PPG is
the same pulse sampled at the PPG rate, leading the video by the injected
number of samples. Clock labels show ``floor(timestamp + video_shift)``.
"""
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .biomarkers import COHORT_STATS, MODEL_TARGETS, SEX
from .errors import InvalidConfig
from .io import (RecordingManifest, atomic_write, biomarker_entry, write_clock_file,
                 write_manifest, write_ppg_file, write_trace_file)
from .roi import DEFAULT_ROIS
from .signal_core import PpgSignal, RoiTraceSet
from .sync import ClockLabelStream, format_clock_label
from .unsupervised import PBV_SIGNATURE

_GRID_HZ = 1000.0
_N_HRV_TONES = 8


@dataclass(frozen=True)
class SynthConfig:
    duration_s: float = 20.0
    fps: float = 30.0
    ppg_rate_hz: float = 100.0
    hr_bpm: float = 72.0
    hr_drift_bpm_per_min: float = 0.0
    hrv_bpm: float = 0.0
    pulse_gain_rgb: tuple = PBV_SIGNATURE
    baseline_rgb: tuple = (0.7, 0.5, 0.4)
    pixel_scale: float = 255.0
    pulse_amplitude: float = 0.01
    noise_snr_db: float = None
    injected_video_shift_s: float = 0.0
    injected_ppg_shift_samples: int = 0
    roi_names: tuple = tuple(DEFAULT_ROIS)
    roi_variation: float = 0.1
    label_dropout: float = 0.0
    start_time_s: float = None
    state: str = "rest"
    subject_id: str = "synthetic"
    camera_id: str = "cam1"
    seed: int = 0
    allowed_fps: tuple = (24.0, 30.0)

    def validate(self):
        if not 30.0 <= self.hr_bpm <= 180.0:
            raise InvalidConfig(f"hr_bpm must lie in [30, 180], got {self.hr_bpm}")
        if self.allowed_fps and self.fps not in self.allowed_fps:
            raise InvalidConfig(f"fps must be one of {self.allowed_fps}, got {self.fps}")
        if not (self.duration_s > 0 and self.ppg_rate_hz > 0):
            raise InvalidConfig("duration and PPG rate must be positive")
        if len(self.pulse_gain_rgb) != 3 or len(self.baseline_rgb) != 3:
            raise InvalidConfig("gain and baseline need three channels")
        if min(self.baseline_rgb) <= 0:
            raise InvalidConfig("baseline must be positive")
        if not 0.0 <= self.label_dropout <= 1.0:
            raise InvalidConfig("label_dropout must lie in [0, 1]")
        if not self.roi_names:
            raise InvalidConfig("need at least one ROI")
        return self


@dataclass
class SyntheticRecording:
    traces: RoiTraceSet
    reference_ppg: PpgSignal
    clock_labels: ClockLabelStream
    manifest: RecordingManifest
    ground_truth: dict = field(default_factory=dict)


def _hr_series(cfg, t, rng):
    hr = cfg.hr_bpm + cfg.hr_drift_bpm_per_min * t / 60.0
    if cfg.hrv_bpm > 0:
        freqs = rng.uniform(0.05, 0.4, _N_HRV_TONES)
        phases = rng.uniform(0.0, 2 * np.pi, _N_HRV_TONES)
        z = np.sqrt(2.0 / _N_HRV_TONES) * np.cos(
            2 * np.pi * freqs[None, :] * t[:, None] + phases[None, :]).sum(axis=1)
        hr = hr + cfg.hrv_bpm * z
    return np.clip(hr, 30.0, 200.0)


def pulse_waveform(phase):
    return np.sin(phase) + 0.3 * np.sin(2.0 * phase)


def synthetic_biomarkers(hr_bpm, baseline_rgb, rng):
    """Targets for the model heads.

    Systolic and diastolic pressure are deterministic in heart rate and skin
    baseline; the rest are drawn independently from the cohort statistics.
    """
    out = {}
    for name in MODEL_TARGETS:
        if name == SEX:
            out[name] = float(rng.random() < 0.45)
            continue
        s = COHORT_STATS[name]
        out[name] = float(np.clip(rng.normal(s.mean, s.std), s.min, s.max))
    out["systolic_pressure"] = 80.0 + 0.5 * hr_bpm + 20.0 * (baseline_rgb[0] - 0.7)
    out["diastolic_pressure"] = 50.0 + 0.25 * hr_bpm + 10.0 * (baseline_rgb[1] - 0.5)
    out["heart_rate"] = float(hr_bpm)
    return out


def generate_synthetic_recording(config):
    cfg = config.validate()
    rng = np.random.default_rng(cfg.seed)
    t_start = (43200.0 + rng.uniform(0.0, 3600.0)) if cfg.start_time_s is None else cfg.start_time_s

    # instantaneous phase on a fine grid with margin for the PPG shift
    margin = 2.0 + abs(cfg.injected_ppg_shift_samples) / cfg.ppg_rate_hz
    grid = np.arange(-margin, cfg.duration_s + margin, 1.0 / _GRID_HZ)
    hr = _hr_series(cfg, grid, rng)
    phase = 2 * np.pi * np.cumsum(hr / 60.0) / _GRID_HZ
    phase0 = rng.uniform(0.0, 2 * np.pi)
    phase = phase - np.interp(0.0, grid, phase) + phase0

    n_frames = int(round(cfg.duration_s * cfg.fps))
    t_rel = np.arange(n_frames) / cfg.fps
    pulse_v = pulse_waveform(np.interp(t_rel, grid, phase))

    gain = np.asarray(cfg.pulse_gain_rgb, dtype=np.float64)
    base = np.asarray(cfg.baseline_rgb, dtype=np.float64)
    rows = []
    for _ in cfg.roi_names:
        roi_base = base * (1.0 + cfg.roi_variation * rng.uniform(-1, 1, 3)) * cfg.pixel_scale
        roi_scale = 1.0 + min(5.0 * cfg.roi_variation, 0.9) * rng.uniform(-1, 1)
        pulsatile = roi_base[:, None] * cfg.pulse_amplitude * roi_scale * gain[:, None] * pulse_v
        x = roi_base[:, None] + pulsatile
        if cfg.noise_snr_db is not None:
            p_sig = pulsatile.var(axis=1)
            sd = np.sqrt(p_sig / 10.0 ** (cfg.noise_snr_db / 10.0))
            x = x + sd[:, None] * rng.standard_normal(x.shape)
        rows.append(np.clip(x, 0.0, None))
    traces = RoiTraceSet(np.vstack(rows), t_start + t_rel, cfg.roi_names)

    n_ppg = int(round(cfg.duration_s * cfg.ppg_rate_hz))
    t_ppg = np.arange(n_ppg) / cfg.ppg_rate_hz + cfg.injected_ppg_shift_samples / cfg.ppg_rate_hz
    reference = PpgSignal(pulse_waveform(np.interp(t_ppg, grid, phase)), cfg.ppg_rate_hz, t_start)

    labels = []
    for t in traces.frame_timestamps_s:
        if cfg.label_dropout and rng.random() < cfg.label_dropout:
            labels.append(None)
        else:
            labels.append(format_clock_label(np.floor(t + cfg.injected_video_shift_s)))
    clock = ClockLabelStream(traces.frame_timestamps_s, labels, cfg.camera_id)

    mean_hr = float(np.mean(np.interp(t_rel, grid, hr)))
    biomarkers = synthetic_biomarkers(mean_hr, base, rng)
    manifest = RecordingManifest(
        subject_id=cfg.subject_id, state=cfg.state, camera_id=cfg.camera_id,
        trace_path="traces.csv", reference_ppg_path="reference_ppg.csv",
        clock_label_path="clock_labels.csv", fps=float(cfg.fps),
        biomarkers={k: biomarker_entry(k, v) for k, v in biomarkers.items()},
        notes=f"synthetic seed={cfg.seed}")
    truth = {
        "hr_bpm": mean_hr,
        "video_shift_s": float(cfg.injected_video_shift_s),
        "ppg_shift_samples": int(cfg.injected_ppg_shift_samples),
        "start_time_s": float(t_start),
        "biomarkers": biomarkers,
        "config": _jsonable(asdict(cfg)),
    }
    return SyntheticRecording(traces, reference, clock, manifest, truth)


def _jsonable(d):
    out = {}
    for k, v in d.items():
        out[k] = list(v) if isinstance(v, tuple) else v
    return out


def write_recording(rec, out_dir):
    """Write all files of a recording plus ``manifest.json`` and ``ground_truth.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trace_file(out / rec.manifest.trace_path, rec.traces)
    write_ppg_file(out / rec.manifest.reference_ppg_path, rec.reference_ppg)
    write_clock_file(out / rec.manifest.clock_label_path, rec.clock_labels)
    write_manifest(out / "manifest.json", rec.manifest)
    atomic_write(out / "ground_truth.json", json.dumps(rec.ground_truth, indent=2, sort_keys=True) + "\n")
    return out / "manifest.json"


def random_config(rng, base=None, hr_range=(48.0, 160.0), **overrides):
    """Draw a config with uniform heart rate and skin baseline jitter."""
    base = base or SynthConfig()
    hr = float(rng.uniform(*hr_range))
    baseline = tuple(float(v) for v in np.asarray(base.baseline_rgb) * rng.uniform(0.85, 1.15, 3))
    seed = int(rng.integers(0, 2 ** 31 - 1))
    return replace(base, hr_bpm=hr, baseline_rgb=baseline, seed=seed, **overrides)
