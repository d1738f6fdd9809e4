"""Hot inner loops, each with a numba and a pure-numpy implementation.

The public functions dispatch on :func:`rppgkit._accel.numba_enabled` at call
time. Both paths are kept numerically equivalent (tests compare them) so the
numpy path doubles as a readable reference.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._accel import njit, numba_enabled

__all__ = ["sosfilt", "shift_correlations", "pos_overlap_add", "gaussian_kde_eval"]


# --------------------------------------------------------------------------
# cascaded biquads, transposed direct form II
# --------------------------------------------------------------------------

def _sosfilt_numpy(sos, x, zi):
    y = np.array(x, dtype=np.float64)
    z = np.array(zi, dtype=np.float64)
    for s in range(sos.shape[0]):
        b0, b1, b2, a1, a2 = sos[s]
        z0, z1 = z[s]
        out = np.empty_like(y)
        for n in range(y.shape[0]):
            xn = y[n]
            yn = b0 * xn + z0
            z0 = b1 * xn - a1 * yn + z1
            z1 = b2 * xn - a2 * yn
            out[n] = yn
        z[s, 0] = z0
        z[s, 1] = z1
        y = out
    return y, z


@njit
def _sosfilt_numba(sos, x, zi):
    y = x.copy()
    z = zi.copy()
    for s in range(sos.shape[0]):
        b0 = sos[s, 0]
        b1 = sos[s, 1]
        b2 = sos[s, 2]
        a1 = sos[s, 3]
        a2 = sos[s, 4]
        z0 = z[s, 0]
        z1 = z[s, 1]
        for n in range(y.shape[0]):
            xn = y[n]
            yn = b0 * xn + z0
            z0 = b1 * xn - a1 * yn + z1
            z1 = b2 * xn - a2 * yn
            y[n] = yn
        z[s, 0] = z0
        z[s, 1] = z1
    return y, z


def sosfilt(sos, x, zi=None):
    """Run ``x`` through biquads ``sos`` (rows ``b0 b1 b2 a1 a2``).

    Returns ``(y, zf)``; ``zi`` has shape ``(n_sections, 2)``.
    """
    sos = np.ascontiguousarray(sos, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    if zi is None:
        zi = np.zeros((sos.shape[0], 2))
    zi = np.ascontiguousarray(zi, dtype=np.float64)
    if numba_enabled():
        return _sosfilt_numba(sos, x, zi)
    return _sosfilt_numpy(sos, x, zi)


# --------------------------------------------------------------------------
# Pearson correlation for every integer lag
# --------------------------------------------------------------------------

def _shift_correlations_numpy(ref, rec, max_shift):
    n_ref, n_rec = ref.shape[0], rec.shape[0]
    out = np.full(2 * max_shift + 1, np.nan)
    counts = np.zeros(2 * max_shift + 1, dtype=np.int64)
    for i, k in enumerate(range(-max_shift, max_shift + 1)):
        lo = max(0, -k)
        hi = min(n_ref, n_rec - k)
        if hi - lo < 2:
            continue
        a = ref[lo:hi]
        b = rec[lo + k:hi + k]
        a = a - a.mean()
        b = b - b.mean()
        counts[i] = hi - lo
        saa = np.dot(a, a)
        sbb = np.dot(b, b)
        if saa < 1e-300 or sbb < 1e-300:
            continue
        out[i] = np.dot(a, b) / np.sqrt(saa * sbb)
    return out, counts


@njit
def _shift_correlations_numba(ref, rec, max_shift):
    n_ref = ref.shape[0]
    n_rec = rec.shape[0]
    m = 2 * max_shift + 1
    out = np.full(m, np.nan)
    counts = np.zeros(m, dtype=np.int64)
    for i in range(m):
        k = i - max_shift
        lo = max(0, -k)
        hi = min(n_ref, n_rec - k)
        n = hi - lo
        if n < 2:
            continue
        counts[i] = n
        ma = 0.0
        mb = 0.0
        for j in range(lo, hi):
            ma += ref[j]
            mb += rec[j + k]
        ma /= n
        mb /= n
        sab = 0.0
        saa = 0.0
        sbb = 0.0
        for j in range(lo, hi):
            da = ref[j] - ma
            db = rec[j + k] - mb
            sab += da * db
            saa += da * da
            sbb += db * db
        if saa < 1e-300 or sbb < 1e-300:
            continue
        out[i] = sab / np.sqrt(saa * sbb)
    return out, counts


def shift_correlations(ref, rec, max_shift):
    """Correlation of ``ref[n]`` with ``rec[n + k]`` for ``k = -max_shift..max_shift``.

    Returns ``(corr, overlap_counts)``; ``corr`` is NaN where either overlapping
    segment has zero variance or fewer than two samples overlap.
    """
    ref = np.ascontiguousarray(ref, dtype=np.float64)
    rec = np.ascontiguousarray(rec, dtype=np.float64)
    if numba_enabled():
        return _shift_correlations_numba(ref, rec, int(max_shift))
    return _shift_correlations_numpy(ref, rec, int(max_shift))


# --------------------------------------------------------------------------
# POS overlap-add
# --------------------------------------------------------------------------
# rows of the fixed projection: S1 = G - B, S2 = -2R + G + B

_EPS = 1e-12


def _pos_numpy(rgb, win):
    t = rgb.shape[1]
    windows = sliding_window_view(rgb, win, axis=1)  # (3, nwin, win)
    means = windows.mean(axis=2)
    if np.any(means < _EPS):
        return np.zeros(t), False
    cn = windows / means[:, :, None]
    s1 = cn[1] - cn[2]
    s2 = -2.0 * cn[0] + cn[1] + cn[2]
    sd1 = s1.std(axis=1)
    sd2 = s2.std(axis=1)
    alpha = np.where(sd2 > _EPS, sd1 / np.where(sd2 > _EPS, sd2, 1.0), 0.0)
    h = s1 + alpha[:, None] * s2
    h -= h.mean(axis=1, keepdims=True)
    out = np.zeros(t)
    nwin = h.shape[0]
    for j in range(win):
        out[j:j + nwin] += h[:, j]
    return out, True


@njit
def _pos_numba(rgb, win):
    t = rgb.shape[1]
    out = np.zeros(t)
    s1 = np.empty(win)
    s2 = np.empty(win)
    for m in range(t - win + 1):
        mr = 0.0
        mg = 0.0
        mb = 0.0
        for j in range(win):
            mr += rgb[0, m + j]
            mg += rgb[1, m + j]
            mb += rgb[2, m + j]
        mr /= win
        mg /= win
        mb /= win
        if mr < _EPS or mg < _EPS or mb < _EPS:
            return np.zeros(t), False
        a1 = 0.0
        a2 = 0.0
        for j in range(win):
            r = rgb[0, m + j] / mr
            g = rgb[1, m + j] / mg
            b = rgb[2, m + j] / mb
            s1[j] = g - b
            s2[j] = -2.0 * r + g + b
            a1 += s1[j]
            a2 += s2[j]
        a1 /= win
        a2 /= win
        v1 = 0.0
        v2 = 0.0
        for j in range(win):
            v1 += (s1[j] - a1) ** 2
            v2 += (s2[j] - a2) ** 2
        sd1 = np.sqrt(v1 / win)
        sd2 = np.sqrt(v2 / win)
        alpha = sd1 / sd2 if sd2 > _EPS else 0.0
        hm = a1 + alpha * a2
        for j in range(win):
            out[m + j] += s1[j] + alpha * s2[j] - hm
    return out, True


def pos_overlap_add(rgb, win):
    """Plane-orthogonal-to-skin overlap-add over every length-``win`` window.

    ``rgb`` is ``(3, T)``. Returns ``(h, ok)``; ``ok`` is False when some
    window has a channel mean below 1e-12.
    """
    rgb = np.ascontiguousarray(rgb, dtype=np.float64)
    if numba_enabled():
        return _pos_numba(rgb, int(win))
    return _pos_numpy(rgb, int(win))


# --------------------------------------------------------------------------
# Gaussian kernel density
# --------------------------------------------------------------------------

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _kde_numpy(values, grid, bandwidth):
    out = np.zeros(grid.shape[0])
    step = max(1, 2_000_000 // max(values.shape[0], 1))
    for start in range(0, grid.shape[0], step):
        g = grid[start:start + step]
        z = (g[:, None] - values[None, :]) / bandwidth
        out[start:start + step] = np.exp(-0.5 * z * z).sum(axis=1)
    return out * _INV_SQRT_2PI / (values.shape[0] * bandwidth)


@njit
def _kde_numba(values, grid, bandwidth):
    out = np.zeros(grid.shape[0])
    n = values.shape[0]
    for i in range(grid.shape[0]):
        acc = 0.0
        for j in range(n):
            z = (grid[i] - values[j]) / bandwidth
            acc += np.exp(-0.5 * z * z)
        out[i] = acc
    return out * _INV_SQRT_2PI / (n * bandwidth)


def gaussian_kde_eval(values, grid, bandwidth):
    values = np.ascontiguousarray(values, dtype=np.float64)
    grid = np.ascontiguousarray(grid, dtype=np.float64)
    if numba_enabled():
        return _kde_numba(values, grid, float(bandwidth))
    return _kde_numpy(values, grid, float(bandwidth))
