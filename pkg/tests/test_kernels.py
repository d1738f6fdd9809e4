import numpy as np
import pytest
from scipy import signal as sps
from scipy.stats import gaussian_kde as scipy_kde

from rppgkit import kernels
from rppgkit._accel import HAVE_NUMBA, numba_enabled
from rppgkit.filtering import design_cheby2_bandpass

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


def test_env_flag(monkeypatch):
    monkeypatch.setenv("RPPGKIT_DISABLE_NUMBA", "1")
    assert not numba_enabled()
    monkeypatch.setenv("RPPGKIT_DISABLE_NUMBA", "0")
    assert numba_enabled() == HAVE_NUMBA


def brute_shift_corr(ref, rec, max_shift):
    out = []
    for k in range(-max_shift, max_shift + 1):
        pairs = [(ref[n], rec[n + k]) for n in range(len(ref)) if 0 <= n + k < len(rec)]
        if len(pairs) < 2:
            out.append(np.nan)
            continue
        a, b = np.array(pairs).T
        out.append(np.corrcoef(a, b)[0, 1] if a.std() > 0 and b.std() > 0 else np.nan)
    return np.array(out)


def brute_pos(rgb, win):
    t = rgb.shape[1]
    out = np.zeros(t)
    proj = np.array([[0.0, 1.0, -1.0], [-2.0, 1.0, 1.0]])
    for m in range(t - win + 1):
        c = rgb[:, m:m + win]
        s = proj @ (c / c.mean(axis=1, keepdims=True))
        h = s[0] + s[0].std() / s[1].std() * s[1]
        out[m:m + win] += h - h.mean()
    return out


def test_sosfilt_matches_scipy(backend, rng):
    f = design_cheby2_bandpass(sample_rate_hz=30.0, high_hz=8.0)
    sos = f.second_order_sections
    x = rng.standard_normal(500)
    y, zf = kernels.sosfilt(sos, x)
    full = np.column_stack([sos[:, :3], np.ones(len(sos)), sos[:, 3:]])
    y_ref, zf_ref = sps.sosfilt(full, x, zi=np.zeros((len(sos), 2)))
    np.testing.assert_allclose(y, y_ref, atol=1e-12)
    np.testing.assert_allclose(zf, zf_ref, atol=1e-12)


def test_shift_correlations_brute_force(backend, rng):
    ref = rng.standard_normal(40)
    rec = rng.standard_normal(33)
    corr, counts = kernels.shift_correlations(ref, rec, 45)
    np.testing.assert_allclose(corr, brute_shift_corr(ref, rec, 45), atol=1e-12)
    assert counts[45] == 33
    assert counts[0] == 0 and np.isnan(corr[0])


def test_shift_correlations_constant_segment_is_nan(backend):
    corr, _ = kernels.shift_correlations(np.ones(20), np.arange(20.0), 2)
    assert np.all(np.isnan(corr))


def test_pos_brute_force(backend, rng):
    rgb = 50.0 + rng.random((3, 120))
    h, ok = kernels.pos_overlap_add(rgb, 16)
    assert ok
    np.testing.assert_allclose(h, brute_pos(rgb, 16), atol=1e-12)


def test_pos_reports_zero_mean_window(backend, rng):
    rgb = 50.0 + rng.random((3, 100))
    rgb[2, 40:70] = 0.0
    _, ok = kernels.pos_overlap_add(rgb, 20)
    assert not ok


def test_kde_matches_scipy(backend, rng):
    vals = rng.standard_normal(300)
    grid = np.linspace(-4, 4, 81)
    bw = 0.35
    ref = scipy_kde(vals, bw_method=bw / vals.std(ddof=1))(grid)
    np.testing.assert_allclose(kernels.gaussian_kde_eval(vals, grid, bw), ref, rtol=1e-10)


@needs_numba
@pytest.mark.parametrize("name", ["sosfilt", "shift_correlations", "pos", "kde"])
def test_backends_agree(name, rng):
    sos = design_cheby2_bandpass(sample_rate_hz=100.0).second_order_sections
    cases = {
        "sosfilt": (kernels._sosfilt_numpy, kernels._sosfilt_numba,
                    (sos, rng.standard_normal(3000), rng.standard_normal((4, 2)))),
        "shift_correlations": (kernels._shift_correlations_numpy,
                               kernels._shift_correlations_numba,
                               (rng.standard_normal(300), rng.standard_normal(280), 30)),
        "pos": (kernels._pos_numpy, kernels._pos_numba, (100.0 + rng.random((3, 400)), 48)),
        "kde": (kernels._kde_numpy, kernels._kde_numba,
                (rng.standard_normal(200), np.linspace(-3, 3, 101), 0.4)),
    }
    f_np, f_nb, args = cases[name]
    a, b = f_np(*args), f_nb(*args)
    for x, y in zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)):
        np.testing.assert_allclose(x, y, rtol=1e-10, atol=1e-12)
