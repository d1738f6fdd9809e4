"""Fixed invocations of every CLI subcommand, shared by the determinism checks."""
import json

import numpy as np

from rppgkit.cli import main


def run(*argv):
    return main([str(a) for a in argv])


def make_inputs(root):
    """Recordings, a frame stack and a small checkpoint under ``root``."""
    assert run("synth", "--count", 4, "--duration", 12, "--snr", 10, "--hrv", 3,
               "--random-shifts", "--seed", 5, "--out", root / "set") == 0
    assert run("synth", "--hr", 72, "--out", root / "one") == 0
    np.save(root / "frames.npy",
            np.random.default_rng(1).integers(0, 256, (5, 12, 12, 3)).astype(np.uint8))
    assert run("train", root / "set", "--epochs", 1, "--window-s", 6, "--stages", 2,
               "--base-width", 4, "--pyramid-width", 4, "--out", root / "model.ckpt") == 0


def commands(data, out):
    """``(argv, output paths)`` for each subcommand."""
    one, model = data / "one", data / "model.ckpt"
    return [
        (["synth", "--count", 2, "--duration", 8, "--random-shifts", "--snr", 5, "--seed", 9,
          "--out", out / "synth"], [out / "synth"]),
        (["extract", data / "frames.npy", "--out", out / "traces.csv"], [out / "traces.csv"]),
        (["rppg", one, "--method", "omit", "--out", out / "omit.csv"], [out / "omit.csv"]),
        (["filter", one / "reference_ppg.csv", "--out", out / "f.csv", "--sections",
          out / "sos.txt"], [out / "f.csv", out / "sos.txt"]),
        (["hr", one / "reference_ppg.csv", "--format", "csv", "--out", out / "hr.csv"],
         [out / "hr.csv"]),
        (["sync-video", data / "set", "--out", out / "sv.csv", "--kde-out", out / "kde.csv"],
         [out / "sv.csv", out / "kde.csv"]),
        (["sync-ppg", data / "set", "--out", out / "sp.csv"], [out / "sp.csv"]),
        (["train", data / "set", "--epochs", 2, "--window-s", 6, "--stages", 2, "--base-width", 4,
          "--pyramid-width", 4, "--seed", 3, "--log", out / "log.jsonl", "--out",
          out / "m.ckpt"], [out / "m.ckpt", out / "log.jsonl"]),
        (["eval", data / "set", "--model", model, "--baseline-from", data / "set",
          "--out", out / "eval.csv"], [out / "eval.csv"]),
        (["bench", "--model", model, "--segment-s", 1, "--repetitions", 2, "--warmup", 1,
          "--out", out / "bench.json"], [out / "bench.json"]),
    ]


def read_outputs(path):
    """File bytes, or every file under a directory; bench timings are dropped."""
    if path.is_dir():
        return {str(p.relative_to(path)): p.read_bytes()
                for p in sorted(path.rglob("*")) if p.is_file()}
    if path.name == "bench.json":
        return {k: v for k, v in json.loads(path.read_text()).items() if not k.endswith("_ms")}
    return path.read_bytes()


def rerun_all(data, tmp):
    """Run every command twice into separate directories; return names of differing ones."""
    runs = []
    for rep in ("a", "b"):
        out = tmp / rep
        out.mkdir()
        outputs = {}
        for argv, files in commands(data, out):
            if run(*argv) != 0:
                raise AssertionError(f"{argv[0]} failed")
            outputs[argv[0]] = [read_outputs(f) for f in files]
        runs.append(outputs)
    return sorted(runs[0]), [name for name in runs[0] if runs[0][name] != runs[1][name]]
