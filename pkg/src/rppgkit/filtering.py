"""Chebyshev type II band-pass design and zero-phase application.

Design path: analog low-pass prototype (stopband edge at 1 rad/s), low-pass to
band-pass substitution on pre-warped edges, bilinear transform, then pairing of
conjugate poles and zeros into biquads. The band edges are the frequencies
where the stopband attenuation is first reached, so the response is at or below
``-stop_atten_db`` outside ``[low_hz, high_hz]``.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (DesignFailure, InvalidBand, InvalidFrequency, RppgError,
                     SchemaError, SignalTooShort)

DEFAULT_STOP_ATTEN_DB = 30.0


@dataclass(frozen=True)
class IirFilter:
    """Cascade of biquads; each row is ``(b0, b1, b2, a1, a2)`` with ``a0 = 1``."""

    second_order_sections: np.ndarray
    design_meta: dict

    def __post_init__(self):
        sos = np.array(self.second_order_sections, dtype=np.float64)
        if sos.ndim != 2 or sos.shape[1] != 5 or sos.shape[0] < 1:
            raise RppgError(f"sections must have shape (n, 5), got {sos.shape}")
        sos.setflags(write=False)
        object.__setattr__(self, "second_order_sections", sos)
        object.__setattr__(self, "design_meta", dict(self.design_meta))

    @property
    def n_sections(self):
        return self.second_order_sections.shape[0]

    @property
    def sample_rate_hz(self):
        return self.design_meta.get("sample_rate_hz")

    def pole_radii(self):
        """Largest pole magnitude of each section."""
        out = []
        for _, _, _, a1, a2 in self.second_order_sections:
            out.append(np.max(np.abs(np.roots([1.0, a1, a2]))) if a2 != 0 or a1 != 0 else 0.0)
        return np.array(out)

    def is_stable(self):
        return bool(np.all(self.pole_radii() < 1.0))


def _cheby2_prototype(order, stop_atten_db):
    """Zeros, poles and gain of the analog prototype, stopband edge at 1 rad/s."""
    eps = 1.0 / np.sqrt(10.0 ** (stop_atten_db / 10.0) - 1.0)
    mu = np.arcsinh(1.0 / eps) / order
    theta = np.pi * (2 * np.arange(1, order + 1) - 1) / (2 * order)
    # type I poles for the inverse problem, reflected through the unit circle
    p1 = -np.sinh(mu) * np.sin(theta) + 1j * np.cosh(mu) * np.cos(theta)
    poles = 1.0 / p1
    cos_t = np.cos(theta)
    keep = np.abs(cos_t) > 1e-12  # odd orders have one zero at infinity
    zeros = 1j / cos_t[keep]
    gain = np.real(np.prod(-poles) / np.prod(-zeros))
    return zeros, poles, gain


def _lp_to_bp(zeros, poles, gain, w0, bw):
    def expand(roots):
        r = roots * bw / 2.0
        disc = np.sqrt(r * r - w0 * w0)
        return np.concatenate([r + disc, r - disc])

    z_bp = expand(zeros)
    p_bp = expand(poles)
    degree = len(poles) - len(zeros)
    z_bp = np.concatenate([z_bp, np.zeros(degree)])
    return z_bp, p_bp, gain * bw ** degree


def _bilinear(zeros, poles, gain, fs):
    fs2 = 2.0 * fs
    z_d = (fs2 + zeros) / (fs2 - zeros)
    p_d = (fs2 + poles) / (fs2 - poles)
    z_d = np.concatenate([z_d, -np.ones(len(poles) - len(zeros))])
    k_d = gain * np.real(np.prod(fs2 - zeros) / np.prod(fs2 - poles))
    return z_d, p_d, k_d


def _conjugate_pairs(roots, what):
    """Representatives with ``imag >= 0`` of conjugate pairs (real roots paired up)."""
    roots = np.asarray(roots)
    tol = 1e-9 * max(1.0, np.max(np.abs(roots)))
    upper = roots[roots.imag > tol]
    lower = roots[roots.imag < -tol]
    real = np.sort(roots[np.abs(roots.imag) <= tol].real)
    if len(upper) != len(lower):
        raise DesignFailure(f"{what} are not in conjugate pairs")
    for r in upper:
        if np.min(np.abs(lower - np.conj(r))) > 1e-6 * max(1.0, abs(r)):
            raise DesignFailure(f"unmatched complex {what[:-1]} {r}")
    if len(real) % 2:
        raise DesignFailure(f"odd number of real {what}")
    pairs = [(r, np.conj(r)) for r in upper]
    pairs += [(complex(real[i]), complex(real[i + 1])) for i in range(0, len(real), 2)]
    return pairs


def _zpk_to_sos(zeros, poles, gain):
    pole_pairs = _conjugate_pairs(poles, "poles")
    zero_pairs = _conjugate_pairs(zeros, "zeros")
    if len(pole_pairs) != len(zero_pairs):
        raise DesignFailure("pole and zero counts differ")
    # poles nearest the unit circle are matched first with their nearest zeros
    pole_pairs.sort(key=lambda pp: -abs(pp[0]))
    sections = []
    remaining = list(zero_pairs)
    for pp in pole_pairs:
        j = int(np.argmin([abs(zp[0] - pp[0]) for zp in remaining]))
        zp = remaining.pop(j)
        b = np.real(np.poly(zp))
        a = np.real(np.poly(pp))
        sections.append([b[0], b[1], b[2], a[1], a[2]])
    # reverse so the section with poles furthest from the circle runs first
    sos = np.array(sections[::-1])
    sos[0, :3] *= gain
    return sos


def design_cheby2_bandpass(order=4, low_hz=0.4, high_hz=8.0,
                           stop_atten_db=DEFAULT_STOP_ATTEN_DB, sample_rate_hz=100.0):
    """Band-pass with an ``order``-th order prototype; yields ``order`` biquads."""
    nyq = sample_rate_hz / 2.0
    if not (sample_rate_hz > 0 and 0 < low_hz < high_hz < nyq):
        raise InvalidBand(
            f"need 0 < low ({low_hz}) < high ({high_hz}) < Nyquist ({nyq})")
    if order < 2 or order % 2:
        raise InvalidBand(f"order must be even and >= 2, got {order}")
    if not stop_atten_db > 0:
        raise InvalidBand("stopband attenuation must be positive")

    z, p, k = _cheby2_prototype(order, stop_atten_db)
    fs = float(sample_rate_hz)
    w1 = 2.0 * fs * np.tan(np.pi * low_hz / fs)
    w2 = 2.0 * fs * np.tan(np.pi * high_hz / fs)
    z, p, k = _lp_to_bp(z, p, k, np.sqrt(w1 * w2), w2 - w1)
    z, p, k = _bilinear(z, p, k, fs)
    sos = _zpk_to_sos(z, p, k)
    meta = {"order": int(order), "family": "chebyshev2", "low_hz": float(low_hz),
            "high_hz": float(high_hz), "stop_atten_db": float(stop_atten_db),
            "sample_rate_hz": fs}
    filt = IirFilter(sos, meta)
    if not filt.is_stable():
        raise DesignFailure("designed filter has poles on or outside the unit circle")
    return filt


def frequency_response(filt, freqs_hz):
    """Complex response at each frequency (Hz), product over sections."""
    freqs = np.asarray(freqs_hz, dtype=np.float64).reshape(-1)
    if freqs.size == 0:
        return np.zeros(0, dtype=complex)
    fs = filt.sample_rate_hz
    if fs is None:
        raise InvalidFrequency("filter has no sample rate")
    if np.any(freqs < 0) or np.any(freqs >= fs / 2.0):
        raise InvalidFrequency(f"frequencies must lie in [0, {fs / 2.0})")
    zinv = np.exp(-2j * np.pi * freqs / fs)
    h = np.ones_like(zinv)
    for b0, b1, b2, a1, a2 in filt.second_order_sections:
        h *= (b0 + b1 * zinv + b2 * zinv ** 2) / (1.0 + a1 * zinv + a2 * zinv ** 2)
    return h


def sos_steady_state(sos):
    """Initial states putting the cascade at rest under a unit step input."""
    zi = np.zeros((sos.shape[0], 2))
    level = 1.0
    for s, (b0, b1, b2, a1, a2) in enumerate(sos):
        y = level * (b0 + b1 + b2) / (1.0 + a1 + a2)
        z1 = level * b2 - a2 * y
        z0 = level * b1 - a1 * y + z1
        zi[s] = z0, z1
        level = y
    return zi


def min_length(filt):
    """Shortest input accepted by :func:`filtfilt`: three times the state count."""
    return 3 * 2 * filt.n_sections


def padlen(filt):
    """Mirror-padding length: three time constants of the slowest pole.

    The 0.4 Hz poles ring for ~1 s at 100 Hz, far longer than the state count,
    so padding by state count alone leaks edge transients into the output.
    """
    r = float(np.max(filt.pole_radii()))
    if r <= 0.0:
        return min_length(filt)
    tau = -1.0 / np.log(r)
    return max(min_length(filt), int(np.ceil(3.0 * tau)))


def filtfilt_array(filt, x):
    x = np.asarray(x, dtype=np.float64)
    n_min = min_length(filt)
    if x.ndim != 1 or x.size <= n_min:
        raise SignalTooShort(
            f"need more than {n_min} samples for zero-phase filtering, got {x.size}")
    n_pad = padlen(filt)
    sos = filt.second_order_sections
    ext = np.pad(x, n_pad, mode="symmetric")
    zi = sos_steady_state(sos)
    y, _ = kernels.sosfilt(sos, ext, zi * ext[0])
    y = y[::-1].copy()
    y, _ = kernels.sosfilt(sos, y, zi * y[0])
    return y[::-1][n_pad:-n_pad].copy()


def filtfilt(filt, signal):
    """Forward-backward filtering: zero phase, same length as the input."""
    rate = filt.sample_rate_hz
    if rate is not None and abs(rate - signal.sample_rate_hz) > 1e-9 * rate:
        raise RppgError(
            f"filter designed for {rate} Hz applied to a {signal.sample_rate_hz} Hz signal")
    return signal.with_samples(filtfilt_array(filt, signal.samples))


def bandpass(signal, low_hz=0.4, high_hz=8.0, order=4, stop_atten_db=DEFAULT_STOP_ATTEN_DB):
    """Design for the signal's rate and apply zero-phase; the high edge is
    clipped below Nyquist for low frame rates."""
    nyq = signal.sample_rate_hz / 2.0
    high = min(high_hz, 0.9 * nyq)
    filt = design_cheby2_bandpass(order, low_hz, high, stop_atten_db, signal.sample_rate_hz)
    return filtfilt(filt, signal)


def format_sections(filt):
    """Plain-text export: a ``#`` metadata line then one section per line."""
    meta = " ".join(f"{k}={v}" for k, v in filt.design_meta.items())
    lines = [f"# {meta}"]
    for row in filt.second_order_sections:
        lines.append(" ".join(f"{c:.17g}" for c in row))
    return "\n".join(lines) + "\n"


def parse_sections(text):
    meta = {}
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for item in line[1:].split():
                key, _, value = item.partition("=")
                try:
                    meta[key] = int(value) if key == "order" else float(value)
                except ValueError:
                    meta[key] = value
            continue
        parts = line.split()
        if len(parts) != 5:
            raise SchemaError(f"expected 5 coefficients, got {len(parts)}", lineno)
        rows.append([float(p) for p in parts])
    return IirFilter(np.array(rows), meta)


def write_filter(path, filt):
    with open(path, "w") as fh:
        fh.write(format_sections(filt))


def read_filter(path):
    with open(path) as fh:
        return parse_sections(fh.read())


def identity_filter(sample_rate_hz=100.0):
    return IirFilter(np.array([[1.0, 0.0, 0.0, 0.0, 0.0]]),
                     {"family": "identity", "sample_rate_hz": float(sample_rate_hz)})
