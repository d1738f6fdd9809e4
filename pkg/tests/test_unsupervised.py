import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rppgkit.errors import (DegenerateTrace, DegenerateWindow, RppgError, SingularCovariance,
                            TraceTooShort)
from rppgkit.evaluation import hr_from_ppg
from rppgkit.filtering import bandpass
from rppgkit.signal_core import PpgSignal, pearson_correlation
from rppgkit.unsupervised import (METHODS, PBV_SIGNATURE, RgbTrace, chrom, omit, pbv, pos,
                                  pos_window, reconstruct)

FS = 30.0
BASE = np.array([0.7, 0.5, 0.4])
GAIN = np.array(PBV_SIGNATURE)


def pulse(f_hz, n, fs=FS):
    t = np.arange(n) / fs
    return np.sin(2 * np.pi * f_hz * t) + 0.3 * np.sin(4 * np.pi * f_hz * t)


def skin_trace(f_hz=1.2, duration=20.0, snr_db=None, seed=0, amplitude=0.01):
    """Baseline colour modulated by the pulse with per-channel gains."""
    n = int(duration * FS)
    p = pulse(f_hz, n)
    puls = 255 * BASE[:, None] * amplitude * GAIN[:, None] * p
    x = 255 * BASE[:, None] + puls
    if snr_db is not None:
        sd = np.sqrt(puls.var(axis=1) / 10 ** (snr_db / 10))
        x = x + sd[:, None] * np.random.default_rng(seed).standard_normal(x.shape)
    return RgbTrace.from_array(x, FS), p


def dominant_hz(x, fs=FS):
    """Oracle: plain rfft argmax, DC excluded."""
    spec = np.abs(np.fft.rfft(x - np.mean(x)))
    spec[0] = 0
    return np.fft.rfftfreq(len(x), 1 / fs)[np.argmax(spec)]


def constant_trace(n=300):
    return RgbTrace.from_array(np.tile([[70.0], [50.0], [40.0]], (1, n)), FS)


@pytest.mark.parametrize("method", ["pos", "chrom", "omit"])
def test_skin_trace_dominant_frequency(method, backend):
    tr, _ = skin_trace()
    assert dominant_hz(reconstruct(tr, method).samples) == pytest.approx(1.2, abs=0.1)


def test_pbv_noiseless_skin_trace_is_rank_one():
    # every channel is baseline * (1 + gain * pulse): one direction after normalisation
    with pytest.raises(SingularCovariance):
        pbv(skin_trace()[0])


def test_pbv_skin_trace_with_sensor_noise():
    tr, _ = skin_trace(snr_db=40.0)
    assert dominant_hz(pbv(tr).samples) == pytest.approx(1.2, abs=0.1)


@pytest.mark.parametrize("method", ["pos", "chrom"])
def test_constant_trace_gives_zeros(method):
    out = reconstruct(constant_trace(), method)
    np.testing.assert_allclose(out.samples, 0.0, atol=1e-12)
    assert len(out) == 300


def test_constant_trace_pbv_singular():
    with pytest.raises(SingularCovariance):
        pbv(constant_trace())


def test_constant_trace_omit_degenerate():
    with pytest.raises(DegenerateTrace):
        omit(constant_trace())


def test_pos_noise_robust_over_seeds():
    hits = sum(abs(dominant_hz(pos(skin_trace(snr_db=10.0, seed=s)[0]).samples) - 1.2) <= 0.1
               for s in range(100))
    assert hits >= 95


def test_pos_too_short_and_degenerate():
    with pytest.raises(TraceTooShort):
        pos(RgbTrace.from_array(np.ones((3, pos_window(FS) - 1)), FS))
    x = 100.0 + np.random.default_rng(1).random((3, 200))
    x[0, 50:120] = 0.0
    with pytest.raises(DegenerateWindow):
        pos(RgbTrace.from_array(x, FS))


def test_pos_window_length():
    assert pos_window(30.0) == 48
    assert pos_window(24.0) == 39


def test_chrom_pure_green_modulation():
    n = 600
    x = np.vstack([np.full(n, 180.0), 130.0 * (1 + 0.01 * pulse(1.5, n)), np.full(n, 100.0)])
    out = chrom(RgbTrace.from_array(x, FS)).samples
    assert np.std(out) > 0
    assert dominant_hz(out) == pytest.approx(1.5, abs=0.1)


def test_pbv_recovers_variation_along_signature():
    # variation along p in normalised colour space; a little independent noise
    # keeps the colour covariance invertible
    n = 600
    p = pulse(1.1, n)
    rng = np.random.default_rng(3)
    cn = 0.01 * (GAIN / np.linalg.norm(GAIN))[:, None] * p + 1e-4 * rng.standard_normal((3, n))
    x = 255 * BASE[:, None] * (1 + cn)
    out = pbv(RgbTrace.from_array(x, FS)).samples
    assert pearson_correlation(out, p) >= 0.99


def test_omit_orthogonal_wiggle():
    n = 600
    base = 255 * BASE
    v = np.cross(base, [1.0, 0.0, 0.0])
    v /= np.linalg.norm(v)
    t = np.arange(n) / FS
    x = base[:, None] + 0.05 * v[:, None] * np.sin(2 * np.pi * 2.0 * t)
    assert dominant_hz(omit(RgbTrace.from_array(x, FS)).samples) == pytest.approx(2.0, abs=0.1)


@pytest.mark.parametrize("method", sorted(METHODS))
@pytest.mark.parametrize("bpm", [48, 72, 120, 160])
def test_pearson_against_injected_pulse(method, bpm):
    tr, p = skin_trace(bpm / 60.0, snr_db=20.0, seed=bpm)
    out = bandpass(reconstruct(tr, method))
    assert pearson_correlation(out.samples, p) >= 0.8


@pytest.mark.parametrize("method", sorted(METHODS))
def test_polarity_follows_green(method):
    tr, p = skin_trace(snr_db=30.0)
    assert pearson_correlation(reconstruct(tr, method).samples, p) > 0


@pytest.mark.parametrize("method", sorted(METHODS))
@settings(max_examples=15, deadline=None)
@given(a=st.floats(0.01, 100.0), seed=st.integers(0, 1000))
def test_gain_invariance_of_hr(method, a, seed):
    tr, _ = skin_trace(1.3, snr_db=15.0, seed=seed)
    h1 = hr_from_ppg(reconstruct(tr, method)).bpm
    h2 = hr_from_ppg(reconstruct(tr.scaled(a), method)).bpm
    assert h2 == pytest.approx(h1, abs=1e-6)


@pytest.mark.parametrize("method", sorted(METHODS))
@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 31))
def test_zero_mean(method, seed):
    x = 20.0 + 200.0 * np.random.default_rng(seed).random((3, 120))
    out = reconstruct(RgbTrace.from_array(x, FS), method).samples
    assert abs(out.mean()) < 1e-9
    assert out.size == 120


def test_output_is_ppg_signal_at_trace_rate():
    tr, _ = skin_trace()
    out = chrom(tr)
    assert isinstance(out, PpgSignal) and out.sample_rate_hz == FS


def test_trace_validation():
    with pytest.raises(RppgError):
        RgbTrace([1, 2], [1, 2, 3], [1, 2], FS)
    with pytest.raises(RppgError):
        RgbTrace([1, -2], [1, 2], [1, 2], FS)
    with pytest.raises(RppgError):
        reconstruct(constant_trace(), "ica")
