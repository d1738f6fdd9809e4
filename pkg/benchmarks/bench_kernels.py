"""Time each hot kernel under numba and under plain numpy.

    python benchmarks/bench_kernels.py [--repeat 20] [--json out.json]

Both backends are called through the private implementations so one process
measures both; the first numba call (compilation) is excluded.
"""
import argparse
import json
import time

import numpy as np

from rppgkit import kernels
from rppgkit._accel import HAVE_NUMBA
from rppgkit.filtering import design_cheby2_bandpass


def _cases(rng):
    sos = design_cheby2_bandpass(sample_rate_hz=100.0).second_order_sections
    x = rng.standard_normal(6000)
    zi = np.zeros((sos.shape[0], 2))
    ref, rec = rng.standard_normal(2000), rng.standard_normal(2000)
    rgb = 100.0 + rng.random((3, 1800))
    vals, grid = rng.standard_normal(500), np.linspace(-4, 4, 601)
    return {
        "sosfilt (60 s @ 100 Hz)": (kernels._sosfilt_numpy, kernels._sosfilt_numba, (sos, x, zi)),
        "shift_correlations (+-50)": (kernels._shift_correlations_numpy,
                                      kernels._shift_correlations_numba, (ref, rec, 50)),
        "pos_overlap_add (60 s @ 30 fps)": (kernels._pos_numpy, kernels._pos_numba, (rgb, 48)),
        "gaussian_kde (500 x 601)": (kernels._kde_numpy, kernels._kde_numba, (vals, grid, 0.3)),
    }


def _time(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best * 1e3


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    rows = []
    for name, (f_np, f_nb, fargs) in _cases(rng).items():
        t_np = _time(f_np, fargs, args.repeat)
        t_nb = None
        if HAVE_NUMBA:
            f_nb(*fargs)  # compile
            t_nb = _time(f_nb, fargs, args.repeat)
        rows.append({"kernel": name, "numpy_ms": t_np, "numba_ms": t_nb,
                     "speedup": t_np / t_nb if t_nb else None})
    print(f"{'kernel':34s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for r in rows:
        nb = f"{r['numba_ms']:10.3f}" if r["numba_ms"] is not None else f"{'n/a':>10s}"
        sp = f"{r['speedup']:8.1f}" if r["speedup"] is not None else f"{'n/a':>8s}"
        print(f"{r['kernel']:34s} {r['numpy_ms']:10.3f} {nb} {sp}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
