"""Uniformly sampled signal types and the numerics shared by every module."""
from dataclasses import dataclass, field

import numpy as np

from .errors import (ConstantSignal, InvalidRate, LengthMismatch,
                     NonMonotoneTimestamps, RppgError, WindowTooLong)

CONSTANT_EPS = 1e-12


def _frozen(values, ndim):
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise RppgError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PpgSignal:
    """A uniformly sampled scalar waveform starting at ``t0_s`` seconds."""

    samples: np.ndarray
    sample_rate_hz: float
    t0_s: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "samples", _frozen(self.samples, 1))
        if not self.sample_rate_hz > 0:
            raise InvalidRate(f"sample rate must be positive, got {self.sample_rate_hz}")
        if self.samples.size < 1:
            raise RppgError("signal needs at least one sample")
        if not np.all(np.isfinite(self.samples)):
            raise RppgError("signal contains NaN or Inf")
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))
        object.__setattr__(self, "t0_s", float(self.t0_s))

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self):
        return self.samples.size / self.sample_rate_hz

    @property
    def times(self):
        return self.t0_s + np.arange(self.samples.size) / self.sample_rate_hz

    def with_samples(self, samples):
        return PpgSignal(samples, self.sample_rate_hz, self.t0_s)


@dataclass(frozen=True)
class RoiTraceSet:
    """Per-frame channel means: ``traces`` has one row per (roi, channel)."""

    traces: np.ndarray
    frame_timestamps_s: np.ndarray
    roi_names: tuple

    def __post_init__(self):
        traces = _frozen(self.traces, 2)
        ts = _frozen(self.frame_timestamps_s, 1)
        names = tuple(str(n) for n in self.roi_names)
        if traces.shape[0] != 3 * len(names):
            raise RppgError(
                f"{traces.shape[0]} trace rows for {len(names)} ROIs (need 3 per ROI)")
        if traces.shape[1] != ts.size:
            raise LengthMismatch(
                f"{traces.shape[1]} frames but {ts.size} timestamps")
        if ts.size > 1 and np.any(np.diff(ts) <= 0):
            raise NonMonotoneTimestamps("frame timestamps must be strictly increasing")
        if np.any(traces < 0) or not np.all(np.isfinite(traces)):
            raise RppgError("trace values must be finite and non-negative")
        object.__setattr__(self, "traces", traces)
        object.__setattr__(self, "frame_timestamps_s", ts)
        object.__setattr__(self, "roi_names", names)

    @property
    def num_frames(self):
        return self.traces.shape[1]

    @property
    def fps(self):
        """Mean frame rate implied by the timestamps."""
        ts = self.frame_timestamps_s
        if ts.size < 2:
            raise RppgError("need two frames to infer a frame rate")
        return (ts.size - 1) / (ts[-1] - ts[0])

    def roi(self, name):
        """``(3, T)`` RGB block for one ROI."""
        i = self.roi_names.index(name)
        return self.traces[3 * i:3 * i + 3]

    def mean_rgb(self):
        """Average RGB trace over all ROIs, shape ``(3, T)``."""
        return self.traces.reshape(len(self.roi_names), 3, -1).mean(axis=0)


@dataclass(frozen=True)
class FrameTimebase:
    nominal_fps: float = 30.0
    resolution: tuple = field(default=(640, 480))

    def __post_init__(self):
        if not self.nominal_fps > 0:
            raise InvalidRate(f"fps must be positive, got {self.nominal_fps}")


def _as_array(x):
    if isinstance(x, PpgSignal):
        return x.samples
    return np.asarray(x, dtype=np.float64)


def standardize(signal):
    """Zero mean, unit population standard deviation."""
    x = signal.samples
    if x.size < 2:
        raise RppgError("standardize needs at least two samples")
    sd = x.std()
    if sd < CONSTANT_EPS:
        raise ConstantSignal("cannot standardize a constant signal")
    return signal.with_samples((x - x.mean()) / sd)


def resample_linear(signal, target_rate_hz):
    """Linear interpolation onto a ``target_rate_hz`` grid starting at ``t0_s``."""
    if not target_rate_hz > 0:
        raise InvalidRate(f"target rate must be positive, got {target_rate_hz}")
    x = signal.samples
    if x.size < 2:
        raise RppgError("resampling needs at least two samples")
    n_out = max(1, int(round(x.size * target_rate_hz / signal.sample_rate_hz)))
    t_in = np.arange(x.size) / signal.sample_rate_hz
    t_out = np.arange(n_out) / target_rate_hz
    return PpgSignal(np.interp(t_out, t_in, x), target_rate_hz, signal.t0_s)


def pearson_correlation(x, y):
    x = _as_array(x)
    y = _as_array(y)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise LengthMismatch(f"need equal-length 1-d inputs (>=2), got {x.shape} and {y.shape}")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.sqrt(np.dot(dx, dx) / x.size)
    sy = np.sqrt(np.dot(dy, dy) / y.size)
    if sx < CONSTANT_EPS or sy < CONSTANT_EPS:
        raise ConstantSignal("correlation undefined for a constant input")
    r = np.dot(dx, dy) / (x.size * sx * sy)
    return float(np.clip(r, -1.0, 1.0))


def sliding_windows(signal, window_s, hop_s):
    """Fixed-length windows; a trailing remainder shorter than one window is dropped."""
    if not (window_s > 0 and hop_s > 0):
        raise RppgError("window and hop must be positive")
    rate = signal.sample_rate_hz
    n_win = int(round(window_s * rate))
    n_hop = int(round(hop_s * rate))
    if n_win < 1 or n_hop < 1:
        raise RppgError("window or hop shorter than one sample")
    x = signal.samples
    if x.size < n_win:
        raise WindowTooLong(
            f"signal of {x.size} samples is shorter than a {n_win}-sample window")
    return [PpgSignal(x[s:s + n_win], rate, signal.t0_s + s / rate)
            for s in range(0, x.size - n_win + 1, n_hop)]
