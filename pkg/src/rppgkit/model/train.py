"""Adam training, example preparation and inference in physical units."""
import json
import time
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidConfig, NonFiniteLoss, ShapeMismatch
from ..io import atomic_write
from ..signal_core import PpgSignal, RoiTraceSet
from .fpn import FpnModel, ModelConfig, f32, forward, loss_and_gradients


@dataclass(frozen=True)
class TrainConfig:
    window_s: float = 20.0
    learning_rate: float = 1e-3
    batch_size: int = 8
    epochs: int = 40
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    time_budget_s: float = None

    def validate(self):
        if not self.window_s > 0:
            raise InvalidConfig("window_s must be positive")
        if not self.learning_rate >= 0:
            raise InvalidConfig("learning_rate must be non-negative")
        if self.batch_size < 1 or self.epochs < 0:
            raise InvalidConfig("batch_size >= 1 and epochs >= 0 required")
        return self


class AdamState:
    def __init__(self, params):
        self.step = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}


def standardize_channels(x):
    """Zero mean, unit std per channel along time; flat channels are only centred."""
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean(axis=-1, keepdims=True)
    sd = x.std(axis=-1, keepdims=True)
    return (x - mu) / np.where(sd > 1e-12, sd, 1.0)


def backward_step(model, batch, config, state=None):
    """One Adam update in place; returns ``(model, loss, state)``.

    ``batch`` holds ``x`` (B, C, T), ``ppg`` (B, T) and optionally
    ``biomarkers`` (B, K, NaN = missing) and ``mask``.
    """
    state = state or AdamState(model.params)
    total, grads = loss_and_gradients(model, batch["x"], batch["ppg"],
                                      batch.get("biomarkers"), batch.get("mask"))
    if not np.isfinite(total):
        bad = sorted(k for k, g in grads.items() if not np.all(np.isfinite(g)))
        raise NonFiniteLoss(f"loss is {total} at step {state.step + 1}; "
                            f"non-finite gradients in {bad or 'none'}")
    state.step += 1
    b1, b2, lr = config.beta1, config.beta2, config.learning_rate
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for k, p in model.params.items():
        g = grads[k]
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * g * g
        update = lr * (state.m[k] / c1) / (np.sqrt(state.v[k] / c2) + config.eps)
        model.params[k] = f32(p - update)
    return model, total, state


@dataclass
class Example:
    """One recording ready for training: raw traces, PPG on the frame grid, scaled targets."""
    traces: np.ndarray
    ppg: np.ndarray
    biomarkers: np.ndarray
    fps: float


def make_example(traces, reference_ppg, biomarkers=None, scaler=None, fps=None):
    """Put the reference PPG on the frame timestamps and scale the targets.

    ``fps`` defaults to the rate implied by the frame timestamps.
    """
    frame_t = traces.frame_timestamps_s
    ppg = np.interp(frame_t, reference_ppg.times, reference_ppg.samples)
    if scaler is not None:
        bio = scaler.transform(biomarkers or {})
    else:
        bio = np.zeros(0)
    return Example(np.asarray(traces.traces, dtype=np.float64), ppg, bio,
                   float(fps or traces.fps))


def _window(ex, start, length):
    x = standardize_channels(ex.traces[:, start:start + length])
    y = standardize_channels(ex.ppg[start:start + length])
    return x, y


def _batches(examples, cfg, rng, length):
    order = rng.permutation(len(examples))
    for i in range(0, len(order), cfg.batch_size):
        idx = order[i:i + cfg.batch_size]
        xs, ys, bs = [], [], []
        for j in idx:
            ex = examples[j]
            start = int(rng.integers(0, ex.traces.shape[1] - length + 1))
            x, y = _window(ex, start, length)
            xs.append(x)
            ys.append(y)
            bs.append(ex.biomarkers)
        batch = {"x": np.stack(xs), "ppg": np.stack(ys)}
        if bs and bs[0].size:
            batch["biomarkers"] = np.stack(bs)
        yield batch


def train(examples, config=None, model=None, model_config=None, log_path=None):
    """Fit a model on prepared examples; returns ``(model, history)``.

    Windows of ``window_s`` seconds are cropped at random offsets each epoch
    (all examples must share one frame rate). ``history`` holds one record per
    epoch, also written as JSON lines to ``log_path``. Training stops early
    once ``time_budget_s`` is exceeded.
    """
    cfg = (config or TrainConfig()).validate()
    if not examples:
        raise InvalidConfig("no training examples")
    fps = examples[0].fps
    if any(abs(ex.fps - fps) > 1e-4 * fps for ex in examples):
        raise ShapeMismatch(f"examples mix frame rates {sorted({ex.fps for ex in examples})}")
    length = min([int(round(cfg.window_s * fps))] + [ex.traces.shape[1] for ex in examples])
    if model is None:
        mc = model_config or ModelConfig(in_channels=examples[0].traces.shape[0],
                                         targets=ModelConfig().targets)
        model = FpnModel.initialize(mc, seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    state = AdamState(model.params)
    history = []
    t_start = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        losses = []
        for batch in _batches(examples, cfg, rng, length):
            _, value, state = backward_step(model, batch, cfg, state)
            losses.append(value)
        history.append({"epoch": epoch, "loss": float(np.mean(losses)), "steps": state.step})
        if cfg.time_budget_s is not None and time.perf_counter() - t_start > cfg.time_budget_s:
            break
    if log_path is not None:
        atomic_write(log_path, "".join(json.dumps(h) + "\n" for h in history))
    return model, history


def predict_recording(model, scaler, traces):
    """PPG on the frame grid plus biomarkers in physical units.

    ``traces`` is a :class:`RoiTraceSet`; each channel is standardised over
    the whole recording before the forward pass.
    """
    if not isinstance(traces, RoiTraceSet):
        raise ShapeMismatch("expected a RoiTraceSet")
    out = forward(model, standardize_channels(traces.traces))
    ppg = PpgSignal(out["ppg"], traces.fps, traces.frame_timestamps_s[0])
    raw = out["biomarkers"]
    if scaler is None:
        values = raw
        names = model.config.targets
    else:
        if tuple(scaler.names) != tuple(model.config.targets):
            raise ShapeMismatch("scaler targets differ from model heads")
        values = scaler.inverse_transform(raw)
        names = scaler.names
    return {"ppg": ppg, "biomarkers": {n: float(v) for n, v in zip(names, values)},
            "raw_biomarkers": raw}
