import numpy as np
import pytest

from rppgkit._accel import HAVE_NUMBA

BACKENDS = ["numpy"] + (["numba"] if HAVE_NUMBA else [])


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run a test once per kernel backend."""
    if request.param == "numpy":
        monkeypatch.setenv("RPPGKIT_DISABLE_NUMBA", "1")
    else:
        monkeypatch.delenv("RPPGKIT_DISABLE_NUMBA", raising=False)
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def sine(freq_hz, duration_s, rate_hz, amp=1.0, phase=0.0):
    t = np.arange(int(round(duration_s * rate_hz))) / rate_hz
    return amp * np.sin(2 * np.pi * freq_hz * t + phase)
