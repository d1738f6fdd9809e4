import json
import shutil

import numpy as np
import pytest

from cli_cases import make_inputs, rerun_all, run
from rppgkit.io import parse_ppg_file, parse_trace_file


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    """Six short noisy recordings with random shifts, plus one single recording."""
    root = tmp_path_factory.mktemp("data")
    assert run("synth", "--count", 6, "--duration", 12, "--snr", 10, "--hrv", 3,
               "--random-shifts", "--seed", 5, "--out", root / "set") == 0
    assert run("synth", "--hr", 72, "--out", root / "one") == 0
    return root


# --- exit codes ---------------------------------------------------------------------

def test_unknown_subcommand(capsys):
    assert run("frobnicate") == 1
    assert "usage" in capsys.readouterr().err


def test_no_subcommand():
    assert run() == 1


def test_bad_flag():
    assert run("hr", "--nope", "x.csv") == 1


def test_missing_out():
    assert run("synth") == 1


def test_missing_file(tmp_path, capsys):
    assert run("hr", tmp_path / "missing.csv") == 2
    assert "error" in capsys.readouterr().err


def test_malformed_file(tmp_path):
    (tmp_path / "p.csv").write_text("time,value\n0,1\n")
    assert run("hr", tmp_path / "p.csv") == 2


def test_model_method_needs_checkpoint(dataset, tmp_path):
    assert run("rppg", dataset / "one", "--method", "model", "--out", tmp_path / "x.csv") == 1


# --- end to end -----------------------------------------------------------------------

def test_synth_then_hr(dataset, capsys):
    capsys.readouterr()
    assert run("hr", dataset / "one" / "reference_ppg.csv") == 0
    assert float(capsys.readouterr().out) == pytest.approx(72.0, abs=0.5)


def test_rppg_output_parseable_by_hr(dataset, tmp_path, capsys):
    out = tmp_path / "pos.csv"
    assert run("rppg", dataset / "one", "--method", "pos", "--out", out) == 0
    assert len(parse_ppg_file(out)) == 600
    capsys.readouterr()
    assert run("hr", out, "--format", "jsonl") == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["bpm"] == pytest.approx(72.0, abs=1.0)


def test_rppg_workers_match_serial(dataset, tmp_path):
    assert run("rppg", dataset / "set", "--method", "chrom", "--out", tmp_path / "a") == 0
    assert run("rppg", dataset / "set", "--method", "chrom", "--workers", 2,
               "--out", tmp_path / "b") == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert len(names) == 6
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()


def test_extract_npy_and_raw(tmp_path):
    rng = np.random.default_rng(0)
    frames = rng.integers(0, 256, (4, 16, 20, 3)).astype(np.uint8)
    np.save(tmp_path / "f.npy", frames)
    frames.transpose(0, 3, 1, 2).tofile(tmp_path / "f.rgb")
    assert run("extract", tmp_path / "f.npy", "--out", tmp_path / "a.csv") == 0
    assert run("extract", tmp_path / "f.rgb", "--width", 20, "--height", 16,
               "--out", tmp_path / "b.csv") == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert parse_trace_file(tmp_path / "a.csv").traces.shape == (21, 4)
    assert run("extract", tmp_path / "f.rgb", "--out", tmp_path / "c.csv") == 1


def test_sync_ppg_recovers_injected_shifts(dataset, tmp_path):
    out = tmp_path / "s.jsonl"
    assert run("sync-ppg", dataset / "set", "--format", "jsonl", "--out", out) == 0
    recs = [json.loads(l) for l in out.read_text().splitlines()]
    truth = [json.loads((dataset / "set" / r["recording"] / "ground_truth.json").read_text())
             for r in recs]
    hits = sum(abs(r["shift_samples"] - t["ppg_shift_samples"]) <= 1 for r, t in zip(recs, truth))
    assert hits >= 5


def test_sync_video_reports_shifts(dataset, tmp_path):
    out = tmp_path / "v.jsonl"
    assert run("sync-video", dataset / "set", "--format", "jsonl", "--out", out,
               "--kde-out", tmp_path / "kde.csv") == 0
    recs = [json.loads(l) for l in out.read_text().splitlines()]
    shifts = [r for r in recs if r["kind"] == "shift"]
    assert len(shifts) == 6
    for r in shifts:
        subj = r["session"].split("/")[0]
        truth = json.loads((dataset / "set" / f"rec{subj[-4:]}" / "ground_truth.json").read_text())
        assert r["value_s"] == pytest.approx(truth["video_shift_s"], abs=0.5 / 30)
    assert recs[-1]["kind"] == "summary"


def test_config_overrides_flags(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"format": "csv", "synth": {"hr": 90}}))
    assert run("synth", "--hr", 72, "--config", cfg, "--out", tmp_path / "r") == 0
    capsys.readouterr()
    assert run("hr", tmp_path / "r" / "reference_ppg.csv", "--config", cfg) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "path,bpm,peak_power_fraction"
    assert float(lines[1].split(",")[1]) == pytest.approx(90.0, abs=0.5)
    monkeypatch.setenv("RPPGKIT_CONFIG", str(cfg))
    assert run("synth", "--out", tmp_path / "r2") == 0
    gt = json.loads((tmp_path / "r2" / "ground_truth.json").read_text())
    assert gt["hr_bpm"] == pytest.approx(90.0)


@pytest.mark.parametrize("cfg", [{"bogus": 1}, {"synth": {"format": "csv"}}, {"synth": 3},
                                 "not json"])
def test_bad_config(tmp_path, cfg):
    p = tmp_path / "c.json"
    p.write_text(cfg if isinstance(cfg, str) else json.dumps(cfg))
    assert run("synth", "--config", p, "--out", tmp_path / "r") == 2


# --- determinism ------------------------------------------------------------------------

def test_every_subcommand_is_deterministic(tmp_path):
    make_inputs(tmp_path)
    names, differing = rerun_all(tmp_path, tmp_path)
    assert len(names) == 10
    assert differing == []
