"""Classical pulse reconstruction from RGB traces: POS, CHROM, PBV and OMIT.

All methods return a mean-removed :class:`PpgSignal` at the trace rate. Their
polarity is fixed so the output correlates non-negatively with the green
channel's normalised variation (the channel carrying most pulse energy); the
projections themselves leave the sign arbitrary.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (DegenerateTrace, DegenerateWindow, RppgError, SingularCovariance,
                     TraceTooShort)
from .signal_core import PpgSignal

POS_WINDOW_S = 1.6
PBV_SIGNATURE = (0.33, 0.77, 0.53)
_EPS = 1e-12


@dataclass(frozen=True)
class RgbTrace:
    r: np.ndarray
    g: np.ndarray
    b: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        chans = [np.array(c, dtype=np.float64) for c in (self.r, self.g, self.b)]
        if not (chans[0].ndim == 1 and chans[0].shape == chans[1].shape == chans[2].shape):
            raise RppgError("r, g, b must be equal-length 1-d sequences")
        for name, c in zip("rgb", chans):
            if np.any(c < 0) or not np.all(np.isfinite(c)):
                raise RppgError(f"channel {name} has negative or non-finite values")
            c.setflags(write=False)
            object.__setattr__(self, name, c)
        if not self.sample_rate_hz > 0:
            raise RppgError("sample rate must be positive")

    @classmethod
    def from_array(cls, rgb, sample_rate_hz):
        rgb = np.asarray(rgb, dtype=np.float64)
        if rgb.ndim != 2 or rgb.shape[0] != 3:
            raise RppgError(f"expected a (3, T) array, got {rgb.shape}")
        return cls(rgb[0], rgb[1], rgb[2], sample_rate_hz)

    def as_array(self):
        return np.vstack([self.r, self.g, self.b])

    def __len__(self):
        return self.r.size

    def scaled(self, a):
        return RgbTrace(self.r * a, self.g * a, self.b * a, self.sample_rate_hz)


def pos_window(sample_rate_hz):
    return int(math.ceil(POS_WINDOW_S * sample_rate_hz))


def _normalized(rgb):
    means = rgb.mean(axis=1)
    if np.any(means < _EPS):
        raise DegenerateWindow("a colour channel has (near) zero mean")
    return rgb / means[:, None]


def _orient(h, green_norm):
    h = h - h.mean()
    if np.dot(h, green_norm - green_norm.mean()) < 0:
        h = -h
    return h


def _signal(h, trace):
    return PpgSignal(h, trace.sample_rate_hz)


def pos(trace):
    """Plane-orthogonal-to-skin projection with 1.6 s overlap-add."""
    rgb = trace.as_array()
    win = pos_window(trace.sample_rate_hz)
    if rgb.shape[1] < win:
        raise TraceTooShort(f"POS needs >= {win} samples, got {rgb.shape[1]}")
    h, ok = kernels.pos_overlap_add(rgb, win)
    if not ok:
        raise DegenerateWindow("a colour channel has (near) zero mean inside a window")
    return _signal(_orient(h, _normalized(rgb)[1]), trace)


def chrom(trace):
    """Chrominance projection over the whole trace."""
    rgb = trace.as_array()
    win = pos_window(trace.sample_rate_hz)
    if rgb.shape[1] < max(win, 2):
        raise TraceTooShort(f"CHROM needs >= {win} samples, got {rgb.shape[1]}")
    rn, gn, bn = _normalized(rgb)
    xs = 3.0 * rn - 2.0 * gn
    ys = 1.5 * rn + gn - 1.5 * bn
    sy = ys.std()
    alpha = xs.std() / sy if sy > _EPS else 0.0
    return _signal(_orient(xs - alpha * ys, gn), trace)


def pbv(trace, signature=PBV_SIGNATURE):
    """Blood-volume-pulse signature projection."""
    rgb = trace.as_array()
    if rgb.shape[1] < 2:
        raise TraceTooShort("PBV needs at least 2 samples")
    cn = _normalized(rgb) - 1.0
    q = cn @ cn.T / cn.shape[1]
    cond = np.linalg.cond(q)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularCovariance(f"normalised colour covariance is singular (cond={cond:.3g})")
    p = np.asarray(signature, dtype=np.float64)
    p = p / np.linalg.norm(p)
    qp = np.linalg.solve(q, p)
    w = qp / (p @ qp)
    return _signal(_orient(w @ cn, cn[1]), trace)


def omit(trace):
    """Orthogonal projection away from the dominant colour direction.

    The mean colour leads the QR basis; after removing it, the output is the
    projected component of largest variance.
    """
    x = trace.as_array()
    if x.shape[1] < 3:
        raise TraceTooShort("OMIT needs at least 3 samples")
    sv = np.linalg.svd(x, compute_uv=False)
    if sv[0] < _EPS or sv[1] <= 1e-10 * sv[0]:
        raise DegenerateTrace("trace matrix has rank < 2")
    mu = x.mean(axis=1)
    q, _ = np.linalg.qr(np.column_stack([mu, x[:, :3]]))
    q0 = q[:, :1]
    y = (np.eye(3) - q0 @ q0.T) @ x
    yc = y - y.mean(axis=1, keepdims=True)
    u, _, _ = np.linalg.svd(yc, full_matrices=False)
    h = u[:, 0] @ yc
    means = np.where(mu > _EPS, mu, 1.0)
    return _signal(_orient(h, x[1] / means[1]), trace)


METHODS = {"pos": pos, "chrom": chrom, "pbv": pbv, "omit": omit}


def reconstruct(trace, method):
    try:
        fn = METHODS[method]
    except KeyError:
        raise RppgError(f"unknown method {method!r}; choose from {sorted(METHODS)}") from None
    return fn(trace)
