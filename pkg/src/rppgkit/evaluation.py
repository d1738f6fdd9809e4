"""Heart-rate and waveform metrics, the constant baseline, and report assembly."""
import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .biomarkers import SEX, unit_of
from .errors import (ConstantSignal, InsufficientData, LengthMismatch, NoSegments, RppgError,
                     SignalTooShort)
from .filtering import bandpass
from .signal_core import CONSTANT_EPS, PpgSignal, resample_linear, standardize

HR_BAND_HZ = (0.5, 3.0)
MIN_HR_DURATION_S = 4.0
SEGMENT_S = 10.0
REPORT_FIELDS = ("model", "dataset", "target", "metric", "value", "unit", "count")


@dataclass(frozen=True)
class HrEstimate:
    bpm: float
    peak_power_fraction: float


def _periodogram(x, rate):
    x = x - x.mean()
    n = 1 << int(math.ceil(math.log2(x.size)))
    power = np.abs(np.fft.rfft(x * np.hanning(x.size), n)) ** 2
    return np.fft.rfftfreq(n, 1.0 / rate), power


def hr_from_ppg(signal, band_hz=HR_BAND_HZ, prefilter=False):
    """Strongest periodogram frequency inside ``band_hz``, in beats per minute.

    The peak bin is refined by a parabola through the log power of its
    neighbours. ``peak_power_fraction`` is the power of the peak bin and its two
    neighbours over all non-DC power, so an out-of-band pulse scores near 0.
    """
    low, high = band_hz
    if not 0 < low < high:
        raise RppgError(f"bad band {band_hz}")
    if signal.duration_s < MIN_HR_DURATION_S:
        raise SignalTooShort(f"need >= {MIN_HR_DURATION_S} s, got {signal.duration_s:.3g} s")
    if signal.samples.std() < CONSTANT_EPS:
        raise ConstantSignal("cannot estimate HR from a constant signal")
    if prefilter:
        signal = bandpass(signal)
    freqs, power = _periodogram(signal.samples, signal.sample_rate_hz)
    in_band = np.flatnonzero((freqs >= low) & (freqs <= high))
    if in_band.size == 0:
        raise SignalTooShort("no periodogram bin inside the band")
    k = int(in_band[np.argmax(power[in_band])])
    f = freqs[k]
    if 0 < k < power.size - 1:
        a, b, c = np.log(np.maximum(power[k - 1:k + 2], 1e-300))
        denom = a - 2 * b + c
        if denom < 0:
            f += 0.5 * (a - c) / denom * (freqs[1] - freqs[0])
    f = min(max(f, low), high)
    total = power[1:].sum()
    frac = power[max(k - 1, 1):k + 2].sum() / total if total > 0 else 0.0
    return HrEstimate(60.0 * float(f), float(min(frac, 1.0)))


def _common_rate(a, b):
    """Resample the slower signal to the faster one's rate."""
    if a.sample_rate_hz == b.sample_rate_hz:
        return a, b
    if a.sample_rate_hz < b.sample_rate_hz:
        return resample_linear(a, b.sample_rate_hz), b
    return a, resample_linear(b, a.sample_rate_hz)


def segment_hr(predicted, reference, segment_s=SEGMENT_S, band_hz=HR_BAND_HZ, prefilter=False):
    """Per-segment ``(predicted_bpm, reference_bpm)`` over non-overlapping segments."""
    predicted, reference = _common_rate(predicted, reference)
    rate = reference.sample_rate_hz
    if abs(predicted.duration_s - reference.duration_s) > segment_s:
        raise LengthMismatch(
            f"durations differ by more than one segment ({predicted.duration_s:.3g} s vs "
            f"{reference.duration_s:.3g} s)")
    seg = int(round(segment_s * rate))
    n_seg = min(len(predicted), len(reference)) // seg if seg > 0 else 0
    if n_seg == 0:
        raise NoSegments(f"signals shorter than one {segment_s} s segment")
    out = []
    for i in range(n_seg):
        sl = slice(i * seg, (i + 1) * seg)
        p = hr_from_ppg(PpgSignal(predicted.samples[sl], rate), band_hz, prefilter)
        r = hr_from_ppg(PpgSignal(reference.samples[sl], rate), band_hz, prefilter)
        out.append((p.bpm, r.bpm))
    return out


def hr_mae(predicted, reference, segment_s=SEGMENT_S, band_hz=HR_BAND_HZ, prefilter=False):
    pairs = segment_hr(predicted, reference, segment_s, band_hz, prefilter)
    return float(np.mean([abs(p - r) for p, r in pairs]))


def ppg_mae(predicted, reference):
    """Mean absolute difference of two equal-length signals on a common grid.

    Callers standardise both first (see :func:`compare_ppg`).
    """
    p = predicted.samples if isinstance(predicted, PpgSignal) else np.asarray(predicted, float)
    r = reference.samples if isinstance(reference, PpgSignal) else np.asarray(reference, float)
    if p.shape != r.shape:
        raise LengthMismatch(f"lengths differ: {p.size} vs {r.size}")
    if isinstance(predicted, PpgSignal) and isinstance(reference, PpgSignal) and \
            predicted.sample_rate_hz != reference.sample_rate_hz:
        raise LengthMismatch("sample rates differ; resample first")
    return float(np.mean(np.abs(p - r)))


def compare_ppg(predicted, reference):
    """Resample the prediction onto the reference grid, crop, standardise, then :func:`ppg_mae`."""
    if predicted.sample_rate_hz != reference.sample_rate_hz:
        predicted = resample_linear(predicted, reference.sample_rate_hz)
    n = min(len(predicted), len(reference))
    p = standardize(PpgSignal(predicted.samples[:n], reference.sample_rate_hz))
    r = standardize(PpgSignal(reference.samples[:n], reference.sample_rate_hz))
    return ppg_mae(p, r)


def _present(values):
    v = np.array([np.nan if x is None else float(x) for x in values], dtype=np.float64)
    return v[np.isfinite(v)]


def constant_baseline(train_targets):
    """Best constant per target: the median, or the majority class for sex.

    ``train_targets`` maps target name to a sequence of values; None and NaN
    are missing. A tied sex vote predicts 0.
    """
    out = {}
    for name, values in train_targets.items():
        v = _present(values)
        if v.size == 0:
            raise InsufficientData(f"no values for {name!r}")
        if name == SEX:
            out[name] = 1.0 if np.sum(v >= 0.5) > np.sum(v < 0.5) else 0.0
        else:
            out[name] = float(np.median(v))
    return out


def sex_accuracy(predicted, actual):
    p = np.asarray(predicted, dtype=np.float64) >= 0.5
    a = np.asarray(actual, dtype=np.float64) >= 0.5
    if p.size == 0:
        raise InsufficientData("no sex labels to score")
    return float(np.mean(p == a))


@dataclass
class MetricReport:
    model: str = "model"
    dataset: str = "dataset"
    hr_mae: float = None
    ppg_mae: float = None
    target_mae: dict = field(default_factory=dict)
    sex_accuracy: float = None
    sex_count: int = 0
    num_segments: int = 0
    num_recordings: int = 0
    failures: list = field(default_factory=list)

    def records(self):
        """One flat record per (model, dataset, target), in a fixed order."""
        recs = []

        def add(target, metric, value, unit, count):
            recs.append({"model": self.model, "dataset": self.dataset, "target": target,
                         "metric": metric, "value": value, "unit": unit, "count": count})

        add("heart_rate", "hr_mae", self.hr_mae, "bpm", self.num_segments)
        add("ppg", "ppg_mae", self.ppg_mae, "", self.num_recordings)
        for name in sorted(self.target_mae):
            mae, count = self.target_mae[name]
            add(name, "mae", mae, unit_of(name), count)
        if self.sex_count:
            add(SEX, "accuracy", self.sex_accuracy, "", self.sex_count)
        return recs

    def to_jsonl(self):
        return "".join(json.dumps(r, sort_keys=False) + "\n" for r in self.records())

    def to_csv(self):
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=REPORT_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in self.records():
            w.writerow({k: ("" if v is None else (repr(v) if isinstance(v, float) else v))
                        for k, v in r.items()})
        return buf.getvalue()


def evaluate_suite(predictions, references, targets=(), model="model", dataset="dataset",
                   segment_s=SEGMENT_S, prefilter=False):
    """Aggregate metrics over aligned prediction and reference records.

    Each record is a dict with optional ``ppg`` (PpgSignal), ``biomarkers``
    (name -> value, None for missing) and ``id``. HR MAE averages over all
    segments of all recordings; PPG MAE averages over recordings. A recording
    whose signals cannot be scored is listed in ``failures`` and skipped.
    """
    if len(predictions) != len(references):
        raise LengthMismatch(f"{len(predictions)} predictions for {len(references)} references")
    report = MetricReport(model=model, dataset=dataset)
    hr_err, ppg_err = [], []
    per_target = {t: ([], []) for t in targets}
    for i, (pred, ref) in enumerate(zip(predictions, references)):
        rid = ref.get("id", pred.get("id", str(i)))
        if pred.get("ppg") is not None and ref.get("ppg") is not None:
            try:
                pairs = segment_hr(pred["ppg"], ref["ppg"], segment_s, prefilter=prefilter)
                err = compare_ppg(pred["ppg"], ref["ppg"])
            except RppgError as exc:
                report.failures.append({"id": rid, "error": type(exc).__name__,
                                        "message": str(exc)})
            else:
                hr_err.extend(abs(p - r) for p, r in pairs)
                ppg_err.append(err)
                report.num_recordings += 1
        pb, rb = pred.get("biomarkers") or {}, ref.get("biomarkers") or {}
        for t in targets:
            p, r = pb.get(t), rb.get(t)
            if p is None or r is None or not (np.isfinite(p) and np.isfinite(r)):
                continue
            per_target[t][0].append(float(p))
            per_target[t][1].append(float(r))
    report.num_segments = len(hr_err)
    if hr_err:
        report.hr_mae = float(np.mean(hr_err))
    if ppg_err:
        report.ppg_mae = float(np.mean(ppg_err))
    for t in targets:
        p, r = per_target[t]
        if t == SEX:
            report.sex_count = len(p)
            if p:
                report.sex_accuracy = sex_accuracy(p, r)
            continue
        mae = float(np.mean(np.abs(np.subtract(p, r)))) if p else None
        report.target_mae[t] = (mae, len(p))
    return report


def constant_hr_mae(bpm, references, segment_s=SEGMENT_S, band_hz=HR_BAND_HZ):
    """``(mae, segments)`` of a fixed HR against each reference's per-segment HR.

    References that cannot be segmented are skipped.
    """
    errs = []
    for ref in references:
        seg = int(round(segment_s * ref.sample_rate_hz))
        for i in range(len(ref) // seg):
            sl = slice(i * seg, (i + 1) * seg)
            try:
                r = hr_from_ppg(PpgSignal(ref.samples[sl], ref.sample_rate_hz), band_hz)
            except RppgError:
                continue
            errs.append(abs(bpm - r.bpm))
    return (float(np.mean(errs)) if errs else None), len(errs)


def constant_predictions(baseline, n):
    """``n`` prediction records carrying only the baseline constants."""
    return [{"biomarkers": dict(baseline)} for _ in range(n)]
