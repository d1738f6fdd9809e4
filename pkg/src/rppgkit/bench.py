"""Sequential CPU inference timing for a saved model."""
import os
import platform
import time

import numpy as np

from .errors import InvalidRepetitions
from .model import forward, load_checkpoint, standardize_channels

WARMUP = 10


def hardware_info():
    info = {
        "machine": platform.machine(),
        "processor": platform.processor() or "",
        "python": platform.python_version(),
        "numpy": np.__version__,
        "cpu_count": os.cpu_count(),
    }
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.startswith("model name"):
                    info["cpu_model"] = line.split(":", 1)[1].strip()
                    break
    except OSError:
        pass
    return info


def time_forward(model, segment_s=20.0, fps=30.0, repetitions=200, warmup=WARMUP, seed=0):
    """Per-segment forward latency in ms over ``repetitions`` timed runs.

    Inputs are pre-generated random traces; each timed run standardises one
    segment and pushes it through the network.
    """
    if repetitions < 1:
        raise InvalidRepetitions(f"need at least one timed repetition, got {repetitions}")
    n = int(round(segment_s * fps))
    rng = np.random.default_rng(seed)
    inputs = 100.0 + rng.random((warmup + repetitions, model.config.in_channels, n))
    for x in inputs[:warmup]:
        forward(model, standardize_channels(x))
    times = np.empty(repetitions)
    for i, x in enumerate(inputs[warmup:]):
        t0 = time.perf_counter()
        forward(model, standardize_channels(x))
        times[i] = (time.perf_counter() - t0) * 1e3
    return {
        "mean_ms": float(times.mean()),
        "p50_ms": float(np.percentile(times, 50)),
        "p95_ms": float(np.percentile(times, 95)),
        "repetitions": int(repetitions),
        "segment_s": float(segment_s),
        "fps": float(fps),
        "num_parameters": model.num_parameters(),
    }


def bench_inference(model_path, segment_s=20.0, fps=30.0, repetitions=200, warmup=WARMUP,
                    seed=0):
    model, _, _ = load_checkpoint(model_path)
    out = time_forward(model, segment_s, fps, repetitions, warmup, seed)
    out["hardware"] = hardware_info()
    return out
