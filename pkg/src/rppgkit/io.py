"""Text file formats and the per-recording manifest.

Formats (all comma-separated with a header row):

* traces: ``timestamp_s,<roi>.r,<roi>.g,<roi>.b,...``
* PPG: ``timestamp_s,ppg`` on a uniform grid (rate inferred from timestamps)
* clock labels: ``frame_index,timestamp_s,label`` (label may be empty)

Files are written atomically (temporary file, then rename).
"""
import csv
import io as _io
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .biomarkers import COHORT_STATS, SEX, unit_of
from .errors import (BiomarkerOutOfBounds, InvalidConfig, NonMonotoneTimestamps, RppgError,
                     SchemaError)
from .signal_core import PpgSignal, RoiTraceSet
from .sync import ClockLabelStream

SESSION_STATES = ("rest", "post_exercise")
_TS_FMT = "%.6f"
_VAL_FMT = "%.9g"


def atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_rows(path):
    try:
        with open(path, newline="") as fh:
            return list(csv.reader(fh))
    except FileNotFoundError:
        raise SchemaError(f"{path}: no such file") from None


# ---------------------------------------------------------------- traces

def format_traces(ts_set):
    buf = _io.StringIO()
    header = ["timestamp_s"] + [f"{n}.{c}" for n in ts_set.roi_names for c in "rgb"]
    buf.write(",".join(header) + "\n")
    cols = np.vstack([ts_set.frame_timestamps_s[None, :], ts_set.traces]).T
    for row in cols:
        buf.write(_TS_FMT % row[0] + "," + ",".join(_VAL_FMT % v for v in row[1:]) + "\n")
    return buf.getvalue()


def write_trace_file(path, ts_set):
    atomic_write(path, format_traces(ts_set))


def parse_trace_file(path):
    rows = _read_rows(path)
    if not rows:
        raise SchemaError(f"{path}: empty file", 1)
    header = [h.strip() for h in rows[0]]
    if header[0] != "timestamp_s" or (len(header) - 1) % 3 or len(header) < 4:
        raise SchemaError("header must be timestamp_s then <roi>.r,<roi>.g,<roi>.b triplets", 1)
    names = []
    for i in range(1, len(header), 3):
        trip = header[i:i + 3]
        roi = trip[0].rsplit(".", 1)[0]
        if trip != [f"{roi}.r", f"{roi}.g", f"{roi}.b"] or not roi:
            raise SchemaError(f"bad channel triplet {trip}", 1)
        names.append(roi)
    data = []
    for lineno, row in enumerate(rows[1:], 2):
        if not row:
            continue
        if len(row) != len(header):
            raise SchemaError(f"expected {len(header)} fields, got {len(row)}", lineno)
        try:
            vals = [float(v) for v in row]
        except ValueError:
            raise SchemaError("non-numeric field", lineno) from None
        if not np.all(np.isfinite(vals)) or min(vals[1:]) < 0:
            raise SchemaError("trace values must be finite and non-negative", lineno)
        if data and vals[0] <= data[-1][0]:
            raise NonMonotoneTimestamps(f"line {lineno}: timestamp does not increase")
        data.append(vals)
    if not data:
        raise SchemaError("no frames", 2)
    arr = np.array(data)
    return RoiTraceSet(arr[:, 1:].T, arr[:, 0], names)


# ---------------------------------------------------------------- PPG

def format_ppg(signal):
    buf = _io.StringIO()
    buf.write("timestamp_s,ppg\n")
    for t, v in zip(signal.times, signal.samples):
        buf.write(_TS_FMT % t + "," + _VAL_FMT % v + "\n")
    return buf.getvalue()


def write_ppg_file(path, signal):
    atomic_write(path, format_ppg(signal))


def parse_ppg_file(path):
    rows = _read_rows(path)
    if not rows or [h.strip() for h in rows[0]] != ["timestamp_s", "ppg"]:
        raise SchemaError("header must be timestamp_s,ppg", 1)
    ts, vals = [], []
    for lineno, row in enumerate(rows[1:], 2):
        if not row:
            continue
        if len(row) != 2:
            raise SchemaError(f"expected 2 fields, got {len(row)}", lineno)
        try:
            t, v = float(row[0]), float(row[1])
        except ValueError:
            raise SchemaError("non-numeric field", lineno) from None
        if not (np.isfinite(t) and np.isfinite(v)):
            raise SchemaError("non-finite value", lineno)
        if ts and t <= ts[-1]:
            raise NonMonotoneTimestamps(f"line {lineno}: timestamp does not increase")
        ts.append(t)
        vals.append(v)
    if len(ts) < 2:
        raise SchemaError("need at least two samples", len(rows))
    ts = np.array(ts)
    rate = (ts.size - 1) / (ts[-1] - ts[0])
    step_err = np.abs(np.diff(ts) - 1.0 / rate).max()
    # 6-decimal timestamps carry up to 1e-6 s of rounding per sample
    if step_err > max(1e-3 / rate, 2e-6):
        raise SchemaError(f"timestamps are not uniformly spaced (max step error {step_err:.3g} s)")
    return PpgSignal(np.array(vals), _snap_rate(ts, rate), ts[0])


def _snap_rate(ts, rate):
    """Shortest decimal rate that reproduces every timestamp to microsecond precision."""
    i = np.arange(ts.size)
    for decimals in range(7):
        r = float(np.round(rate, decimals))
        if r > 0 and np.abs(ts - (ts[0] + i / r)).max() <= 1.01e-6:
            return r
    return float(rate)


# ---------------------------------------------------------------- clock labels

def format_clock_labels(stream):
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["frame_index", "timestamp_s", "label"])
    for i, (t, lab) in enumerate(stream.entries):
        w.writerow([i, _TS_FMT % t, "" if lab is None else lab])
    return buf.getvalue()


def write_clock_file(path, stream):
    atomic_write(path, format_clock_labels(stream))


def parse_clock_file(path, camera_id=None):
    rows = _read_rows(path)
    if not rows or [h.strip() for h in rows[0]] != ["frame_index", "timestamp_s", "label"]:
        raise SchemaError("header must be frame_index,timestamp_s,label", 1)
    ts, labels = [], []
    for lineno, row in enumerate(rows[1:], 2):
        if not row:
            continue
        if len(row) not in (2, 3):
            raise SchemaError(f"expected 3 fields, got {len(row)}", lineno)
        try:
            int(row[0])
            t = float(row[1])
        except ValueError:
            raise SchemaError("bad frame index or timestamp", lineno) from None
        if ts and t <= ts[-1]:
            raise NonMonotoneTimestamps(f"line {lineno}: timestamp does not increase")
        ts.append(t)
        labels.append(row[2] if len(row) == 3 else "")
    return ClockLabelStream(ts, labels, camera_id or Path(path).stem)


# ---------------------------------------------------------------- manifest

@dataclass
class RecordingManifest:
    subject_id: str
    state: str
    camera_id: str
    trace_path: str
    reference_ppg_path: str
    fps: float
    clock_label_path: str = None
    biomarkers: dict = field(default_factory=dict)
    notes: str = ""

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        missing = {"subject_id", "state", "camera_id", "trace_path", "reference_ppg_path",
                   "fps"} - set(d)
        if missing:
            raise SchemaError(f"manifest missing fields {sorted(missing)}")
        extra = set(d) - known
        if extra:
            raise SchemaError(f"manifest has unknown fields {sorted(extra)}")
        return cls(**d)

    def biomarker_values(self):
        return {k: float(v["value"]) for k, v in self.biomarkers.items()}

    def validate(self, base_dir=None, check_files=True):
        """Raise on bad state, out-of-range biomarkers, or unreadable files."""
        if self.state not in SESSION_STATES:
            raise InvalidConfig(f"state must be one of {SESSION_STATES}, got {self.state!r}")
        if not self.fps > 0:
            raise InvalidConfig("fps must be positive")
        for name, entry in self.biomarkers.items():
            if not isinstance(entry, dict) or "value" not in entry:
                raise SchemaError(f"biomarker {name!r} needs a value")
            value = float(entry["value"])
            unit = entry.get("unit", "")
            if name == SEX:
                if value not in (0.0, 1.0):
                    raise BiomarkerOutOfBounds(f"sex must be 0 or 1, got {value}")
                continue
            if name not in COHORT_STATS:
                raise SchemaError(f"unknown biomarker {name!r}")
            if unit != unit_of(name):
                raise SchemaError(f"biomarker {name!r} unit {unit!r}, expected {unit_of(name)!r}")
            lo, hi = COHORT_STATS[name].sanity_bounds()
            if not lo <= value <= hi:
                raise BiomarkerOutOfBounds(
                    f"{name}={value} {unit} outside sanity bounds [{lo:.4g}, {hi:.4g}]")
        if check_files:
            base = Path(base_dir or ".")
            parse_trace_file(base / self.trace_path)
            parse_ppg_file(base / self.reference_ppg_path)
            if self.clock_label_path:
                parse_clock_file(base / self.clock_label_path, self.camera_id)
        return self


def biomarker_entry(name, value):
    return {"value": float(value), "unit": unit_of(name)}


def write_manifest(path, manifest):
    atomic_write(path, manifest.to_json())


def read_manifest(path, validate=True):
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc.msg})", exc.lineno) from None
    except FileNotFoundError:
        raise SchemaError(f"{path}: no such file") from None
    m = RecordingManifest.from_dict(d)
    if validate:
        m.validate(Path(path).parent)
    return m


def load_recording(manifest_path):
    """``(manifest, traces, reference_ppg)`` with paths resolved next to the manifest."""
    manifest_path = Path(manifest_path)
    m = read_manifest(manifest_path, validate=False)
    m.validate(manifest_path.parent, check_files=False)
    base = manifest_path.parent
    return m, parse_trace_file(base / m.trace_path), parse_ppg_file(base / m.reference_ppg_path)


def find_manifests(root):
    root = Path(root)
    if root.is_file():
        return [root]
    found = sorted(root.glob("**/manifest.json"))
    if not found:
        raise RppgError(f"no manifest.json under {root}")
    return found
