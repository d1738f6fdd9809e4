"""Stream synchronisation from clock labels and PPG cross-correlation.

Camera side: each frame carries a camera timestamp and, when readable, the
wall clock shown in the frame at one-second resolution. Every frame pair
across which the displayed second changes brackets the tick, so the label
minus the pair's mid-timestamp estimates the record time shift to within half
a frame; averaging over all ticks refines it.

PPG side: the integer lag maximising the Pearson correlation between a
reconstructed and a reference pulse signal.
"""
import bisect
import re
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import kernels
from .errors import (ConstantSignal, InsufficientData, InsufficientOverlap, InvalidBandwidth,
                     NoTransitions, NonMonotoneTimestamps, RppgError)
from .signal_core import PpgSignal

DAY_S = 86400.0
HALF_DAY_S = 43200.0
# shifts are stored on a 2**-20 s grid (~1 us) so differences and their sums are exact
SHIFT_QUANTUM_S = 2.0 ** -20

_LABEL_RE = re.compile(r"^\s*(\d{1,2})[:.](\d{2})[:.](\d{2})\s*$")


def parse_clock_label(text):
    """Seconds of day for ``HH:MM:SS`` / ``HH.MM.SS``; None if unparseable."""
    if text is None:
        return None
    m = _LABEL_RE.match(str(text))
    if not m:
        return None
    h, mi, s = (int(g) for g in m.groups())
    if h > 23 or mi > 59 or s > 59:
        return None
    return float(h * 3600 + mi * 60 + s)


def format_clock_label(seconds_of_day):
    s = int(np.floor(seconds_of_day)) % 86400
    return f"{s // 3600:02d}:{(s // 60) % 60:02d}:{s % 60:02d}"


def wrap_day(x):
    """Map a time difference into ``[-12 h, 12 h)``."""
    return (x + HALF_DAY_S) % DAY_S - HALF_DAY_S


def quantize_shift(x):
    return round(x / SHIFT_QUANTUM_S) * SHIFT_QUANTUM_S


@dataclass(frozen=True)
class ClockLabelStream:
    """Per-frame ``(timestamp_s, label)``; label is raw text or None."""

    timestamps_s: tuple
    labels: tuple
    camera_id: str = "cam"

    def __post_init__(self):
        ts = tuple(float(t) for t in self.timestamps_s)
        labels = tuple(None if (lab is None or str(lab).strip() == "") else str(lab).strip()
                       for lab in self.labels)
        if len(ts) != len(labels):
            raise RppgError(f"{len(ts)} timestamps but {len(labels)} labels")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise NonMonotoneTimestamps(f"camera {self.camera_id}: timestamps must increase")
        object.__setattr__(self, "timestamps_s", ts)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "camera_id", str(self.camera_id))

    def __len__(self):
        return len(self.timestamps_s)

    @property
    def entries(self):
        return list(zip(self.timestamps_s, self.labels))

    def label_seconds(self):
        return [parse_clock_label(lab) for lab in self.labels]


@dataclass(frozen=True)
class ShiftEstimate:
    shift_s: float
    num_transitions: int
    per_transition_shifts: tuple
    camera_id: str = "cam"


def pairwise_consistent(t_i, l_i, t_j, l_j, tolerance_s=0.1):
    """Whether two readings (``t_i < t_j``) can come from one ticking clock."""
    d_label = wrap_day(l_j - l_i)
    d_time = t_j - t_i
    return d_label >= 0 and abs(d_label - d_time) < 1.0 + tolerance_s


def _lex_smallest_lnds(values):
    """Positions of the lexicographically first longest non-decreasing subsequence."""
    n = len(values)
    if n == 0:
        return []
    # suf[i]: longest non-decreasing run starting at i (non-increasing when read backwards)
    suf = [0] * n
    tails = []
    for i in range(n - 1, -1, -1):
        v = -values[i]
        k = bisect.bisect_right(tails, v)
        if k == len(tails):
            tails.append(v)
        else:
            tails[k] = v
        suf[i] = k + 1
    need = max(suf)
    picked = []
    last = -np.inf
    for i in range(n):
        if need == 0:
            break
        if suf[i] == need and values[i] >= last:
            picked.append(i)
            last = values[i]
            need -= 1
    return picked


def consistent_label_indices(timestamps, label_secs, tolerance_s=0.1):
    """Largest set of readings that are pairwise consistent (ties: earliest indices).

    Readings are consistent when their label offsets ``label - timestamp`` lie
    within ``1 + tolerance_s`` of each other and labels never run backwards.
    """
    idx = [i for i, lab in enumerate(label_secs) if lab is not None]
    if not idx:
        return []
    ts = np.array([timestamps[i] for i in idx])
    offs = wrap_day(np.array([label_secs[i] for i in idx]) - ts)
    width = 1.0 + tolerance_s
    order = np.argsort(offs, kind="stable")
    sorted_offs = offs[order]
    # window [o, o + width) anchored at each distinct offset
    starts = np.unique(sorted_offs)
    counts = np.searchsorted(sorted_offs, starts + width, side="left") - \
        np.searchsorted(sorted_offs, starts, side="left")
    best = None
    for w in np.argsort(-counts, kind="stable"):
        if best is not None and counts[w] < len(best):
            break
        lo = starts[w]
        members = [k for k in range(len(idx)) if lo <= offs[k] < lo + width]
        # unwrapped label times along frame order
        values = [float(np.round(offs[k] + ts[k])) for k in members]
        chosen = tuple(idx[members[p]] for p in _lex_smallest_lnds(values))
        if best is None or len(chosen) > len(best) or (len(chosen) == len(best) and chosen < best):
            best = chosen
    return list(best)


def cleanse_labels(stream, tolerance_s=0.1):
    """Blank unparseable labels and readings inconsistent with a ticking clock."""
    secs = stream.label_seconds()
    keep = set(consistent_label_indices(stream.timestamps_s, secs, tolerance_s))
    labels = [format_clock_label(secs[i]) if i in keep else None for i in range(len(stream))]
    return ClockLabelStream(stream.timestamps_s, labels, stream.camera_id)


def record_time_shift(stream):
    """Mean over clock ticks of ``label - (t_i + t_{i+1}) / 2``."""
    secs = stream.label_seconds()
    ts = stream.timestamps_s
    shifts = []
    for i in range(len(ts) - 1):
        a, b = secs[i], secs[i + 1]
        if a is None or b is None or a == b:
            continue
        shifts.append(float(wrap_day(b - (ts[i] + ts[i + 1]) / 2.0)))
    if not shifts:
        raise NoTransitions(f"camera {stream.camera_id}: no clock transitions found")
    mean = quantize_shift(float(np.mean(shifts)))
    return ShiftEstimate(mean, len(shifts), tuple(shifts), stream.camera_id)


def pairwise_camera_delta(a, b):
    """``a.shift_s - b.shift_s``."""
    return a.shift_s - b.shift_s


def shift_report(streams, cleanse=True):
    """Per-camera estimates, pairwise deltas and exclusion counts as a dict."""
    cameras = {}
    estimates = {}
    for s in streams:
        try:
            est = record_time_shift(cleanse_labels(s) if cleanse else s)
        except NoTransitions as exc:
            cameras[s.camera_id] = {"status": "excluded", "reason": str(exc)}
            continue
        estimates[s.camera_id] = est
        cameras[s.camera_id] = {"status": "ok", "shift_s": est.shift_s,
                                "num_transitions": est.num_transitions}
    deltas = {}
    for a, b in combinations(sorted(estimates), 2):
        deltas[f"{b}-{a}"] = pairwise_camera_delta(estimates[b], estimates[a])
    excluded = sum(1 for c in cameras.values() if c["status"] != "ok")
    return {
        "cameras": cameras,
        "pairwise_deltas": deltas,
        "total": len(cameras),
        "excluded": excluded,
        "excluded_fraction": excluded / len(cameras) if cameras else 0.0,
    }


@dataclass(frozen=True)
class Alignment:
    shift: int
    correlation: float


def default_max_shift(sample_rate_hz):
    return int(round(0.5 * sample_rate_hz))


def align_ppg(reference, reconstructed, max_shift_samples=None, min_overlap_s=2.0):
    """Integer lag ``k`` maximising ``corr(reference[n], reconstructed[n + k])``.

    A positive shift means the reconstructed signal lags the reference by
    ``k`` samples and must be advanced to match it. Ties go to the smallest
    ``|k|``, then to the negative lag.
    """
    if abs(reference.sample_rate_hz - reconstructed.sample_rate_hz) > 1e-9 * reference.sample_rate_hz:
        raise RppgError("resample both signals to a common rate before aligning")
    rate = reference.sample_rate_hz
    k_max = default_max_shift(rate) if max_shift_samples is None else int(max_shift_samples)
    if k_max < 0:
        raise RppgError("max shift must be non-negative")
    ref, rec = reference.samples, reconstructed.samples
    if ref.std() < 1e-12 or rec.std() < 1e-12:
        raise ConstantSignal("cannot align a constant signal")
    corr, counts = kernels.shift_correlations(ref, rec, k_max)
    if counts.min() < min_overlap_s * rate:
        raise InsufficientOverlap(
            f"overlap of {counts.min()} samples at the extreme lag is below {min_overlap_s} s")
    if np.all(np.isnan(corr)):
        raise ConstantSignal("every overlap is constant")
    best = np.nanmax(corr)
    for k in sorted(range(-k_max, k_max + 1), key=lambda k: (abs(k), k)):
        if corr[k + k_max] == best:
            return Alignment(int(k), float(best))
    raise AssertionError("unreachable")


def silverman_bandwidth(values):
    x = np.asarray(values, dtype=np.float64)
    if x.size < 2:
        raise InsufficientData("need at least two values")
    sd = x.std(ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return 0.9 * spread * x.size ** -0.2


def gaussian_kde(values, grid, bandwidth=None):
    """Gaussian kernel density of ``values`` evaluated on ``grid``."""
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    if x.size < 2:
        raise InsufficientData("KDE needs at least two values")
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if not (np.isfinite(h) and h > 0):
        raise InvalidBandwidth(f"bandwidth must be positive, got {h}")
    return kernels.gaussian_kde_eval(x, np.asarray(grid, dtype=np.float64).reshape(-1), h)


def align_to_reference(reference, reconstructed, max_shift_samples=None, min_overlap_s=2.0):
    """Interpolate ``reconstructed`` onto the reference grid over their common
    time span, then :func:`align_ppg`."""
    t_ref, t_rec = reference.times, reconstructed.times
    lo, hi = max(t_ref[0], t_rec[0]), min(t_ref[-1], t_rec[-1])
    sel = (t_ref >= lo) & (t_ref <= hi)
    if sel.sum() < 2:
        raise InsufficientOverlap("signals do not overlap in time")
    rec = np.interp(t_ref[sel], t_rec, reconstructed.samples)
    rate = reference.sample_rate_hz
    return align_ppg(PpgSignal(reference.samples[sel], rate), PpgSignal(rec, rate),
                     max_shift_samples, min_overlap_s)
