"""Fully convolutional 1-D feature pyramid with a PPG head and biomarker heads.

Layout (``S`` encoder stages)::

    x --stem(k7)--> f0 --stage1(k3,s2)--> f1 ... --stageS--> fS      (ReLU after each)
    p_S = lat_S(f_S);  p_i = lat_i(f_i) + up2(p_{i+1})              (1x1 laterals)
    ppg = head(p_0)                                                  (full resolution)
    biomarkers = dense(mean_t p_S)                                   (one output per target)

Inputs whose length is not a multiple of ``2**S`` are right-padded by
reflection and the PPG output is cropped back. Parameters are kept at float32
precision (they are rounded after every update) while arithmetic runs in
float64.
"""
from dataclasses import asdict, dataclass, field

import numpy as np

from ..biomarkers import MODEL_TARGETS
from ..errors import InputTooShort, ShapeMismatch
from . import layers


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 21
    num_stages: int = 4
    stem_kernel: int = 7
    kernel: int = 3
    base_width: int = 16
    pyramid_width: int = 32
    stage_widths: tuple = None
    targets: tuple = MODEL_TARGETS

    def __post_init__(self):
        if self.stage_widths is None:
            widths = tuple(self.base_width * 2 ** (1 + i // 2) for i in range(self.num_stages))
            object.__setattr__(self, "stage_widths", widths)
        object.__setattr__(self, "stage_widths", tuple(int(w) for w in self.stage_widths))
        object.__setattr__(self, "targets", tuple(self.targets))
        if len(self.stage_widths) != self.num_stages:
            raise ShapeMismatch("need one width per encoder stage")
        if self.num_stages < 1 or self.stem_kernel % 2 == 0 or self.kernel % 2 == 0:
            raise ShapeMismatch("need >= 1 stage and odd kernel sizes")

    @property
    def min_length(self):
        return 2 ** self.num_stages

    def to_dict(self):
        d = asdict(self)
        d["stage_widths"] = list(self.stage_widths)
        d["targets"] = list(self.targets)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["stage_widths"] = tuple(d["stage_widths"])
        d["targets"] = tuple(d["targets"])
        return cls(**d)


def f32(a):
    """Round to the nearest float32 value, stored as float64."""
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def parameter_shapes(cfg):
    """Ordered ``(name, shape)`` list; this order is also the checkpoint order."""
    shapes = [("stem.w", (cfg.base_width, cfg.in_channels, cfg.stem_kernel)),
              ("stem.b", (cfg.base_width,))]
    prev = cfg.base_width
    for i, w in enumerate(cfg.stage_widths, 1):
        shapes += [(f"stage{i}.w", (w, prev, cfg.kernel)), (f"stage{i}.b", (w,))]
        prev = w
    level_widths = (cfg.base_width,) + cfg.stage_widths
    for i, w in enumerate(level_widths):
        shapes += [(f"lateral{i}.w", (cfg.pyramid_width, w, 1)),
                   (f"lateral{i}.b", (cfg.pyramid_width,))]
    shapes += [("ppg_head.w", (1, cfg.pyramid_width, 1)), ("ppg_head.b", (1,)),
               ("bio_head.w", (len(cfg.targets), cfg.pyramid_width)),
               ("bio_head.b", (len(cfg.targets),))]
    return shapes


@dataclass
class FpnModel:
    config: ModelConfig
    params: dict = field(default_factory=dict)

    @classmethod
    def initialize(cls, config=None, seed=0):
        """He-normal weights, zero biases."""
        cfg = config or ModelConfig()
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in parameter_shapes(cfg):
            if name.endswith(".b"):
                params[name] = np.zeros(shape)
            else:
                fan_in = int(np.prod(shape[1:]))
                params[name] = f32(rng.standard_normal(shape) * np.sqrt(2.0 / fan_in))
        return cls(cfg, params)

    @classmethod
    def zeros(cls, config=None):
        cfg = config or ModelConfig()
        return cls(cfg, {n: np.zeros(s) for n, s in parameter_shapes(cfg)})

    def copy(self):
        return FpnModel(self.config, {k: v.copy() for k, v in self.params.items()})

    def num_parameters(self):
        return int(sum(v.size for v in self.params.values()))


def _check_input(model, x):
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    if x.ndim != 3 or x.shape[1] != model.config.in_channels:
        raise ShapeMismatch(
            f"expected ({model.config.in_channels}, T) input, got {np.shape(x)}")
    if x.shape[2] < model.config.min_length:
        raise InputTooShort(f"need T >= {model.config.min_length}, got {x.shape[2]}")
    return x, squeeze


def _pad_to_multiple(x, m):
    t = x.shape[2]
    extra = (-t) % m
    if extra:
        x = np.pad(x, ((0, 0), (0, 0), (0, extra)), mode="reflect")
    return x, t


def _forward(model, x):
    cfg, p = model.config, model.params
    cache = {}
    y, cache["stem"] = layers.conv1d(x, p["stem.w"], p["stem.b"], 1, cfg.stem_kernel // 2)
    feats = [layers.relu(y)]
    for i in range(1, cfg.num_stages + 1):
        y, cache[f"stage{i}"] = layers.conv1d(feats[-1], p[f"stage{i}.w"], p[f"stage{i}.b"],
                                              2, cfg.kernel // 2)
        feats.append(layers.relu(y))
    pyramid = [None] * len(feats)
    for i in range(len(feats) - 1, -1, -1):
        lat, cache[f"lateral{i}"] = layers.conv1d(feats[i], p[f"lateral{i}.w"],
                                                  p[f"lateral{i}.b"])
        if i < len(feats) - 1:
            lat = lat + layers.upsample2(pyramid[i + 1], lat.shape[2])
        pyramid[i] = lat
    ppg, cache["ppg_head"] = layers.conv1d(pyramid[0], p["ppg_head.w"], p["ppg_head.b"])
    pooled = pyramid[-1].mean(axis=2)
    bio = pooled @ p["bio_head.w"].T + p["bio_head.b"]
    cache.update(feats=feats, pyramid=pyramid, pooled=pooled)
    return ppg[:, 0, :], bio, cache


def forward(model, traces):
    """``{"ppg": (B, T) or (T,), "biomarkers": (B, K) or (K,)}`` in scaled units.

    ``traces`` is ``(channels, T)`` or ``(batch, channels, T)``.
    """
    x, squeeze = _check_input(model, traces)
    xp, t = _pad_to_multiple(x, model.config.min_length)
    ppg, bio, _ = _forward(model, xp)
    ppg = ppg[:, :t]
    if squeeze:
        return {"ppg": ppg[0], "biomarkers": bio[0]}
    return {"ppg": ppg, "biomarkers": bio}


def loss(pred, target_ppg, target_biomarkers=None, mask=None):
    """Mean over the batch of ``MSE(ppg) + sum_k mask_k * (bio_k - target_k)**2``.

    Missing targets (NaN, or ``mask == 0``) contribute nothing.
    """
    return _loss_and_grads(pred, target_ppg, target_biomarkers, mask)[0]


def _as_batch(a, ndim):
    a = np.asarray(a, dtype=np.float64)
    return a[None] if a.ndim == ndim - 1 else a


def _loss_and_grads(pred, target_ppg, target_bio, mask):
    p_ppg = _as_batch(pred["ppg"], 2)
    t_ppg = _as_batch(target_ppg, 2)
    if p_ppg.shape != t_ppg.shape:
        raise ShapeMismatch(f"PPG shapes differ: {p_ppg.shape} vs {t_ppg.shape}")
    b, t = p_ppg.shape
    err = p_ppg - t_ppg
    total = np.sum(err ** 2) / (b * t)
    d_ppg = 2.0 * err / (b * t)
    p_bio = _as_batch(pred["biomarkers"], 2)
    d_bio = np.zeros_like(p_bio)
    if target_bio is not None:
        t_bio = _as_batch(target_bio, 2)
        if t_bio.shape != p_bio.shape:
            raise ShapeMismatch(f"biomarker shapes differ: {p_bio.shape} vs {t_bio.shape}")
        m = np.isfinite(t_bio).astype(np.float64)
        if mask is not None:
            m_in = _as_batch(mask, 2)
            if m_in.shape != t_bio.shape:
                raise ShapeMismatch("mask shape differs from targets")
            m = m * m_in
        diff = np.where(m > 0, p_bio - np.nan_to_num(t_bio), 0.0)
        total += np.sum(m * diff ** 2) / b
        d_bio = 2.0 * m * diff / b
    return float(total), d_ppg, d_bio


def loss_and_gradients(model, x, target_ppg, target_bio=None, mask=None):
    """Loss and a dict of parameter gradients for a batch ``(B, C, T)``."""
    x, _ = _check_input(model, x)
    xp, t = _pad_to_multiple(x, model.config.min_length)
    ppg, bio, cache = _forward(model, xp)
    pred = {"ppg": ppg[:, :t], "biomarkers": bio}
    total, d_ppg, d_bio = _loss_and_grads(pred, target_ppg, target_bio, mask)
    d_full = np.zeros_like(ppg)
    d_full[:, :t] = d_ppg
    return total, _backward(model, cache, d_full, d_bio)


def _backward(model, cache, d_ppg, d_bio):
    cfg, p = model.config, model.params
    g = {}
    feats, pyramid, pooled = cache["feats"], cache["pyramid"], cache["pooled"]
    g["bio_head.w"] = d_bio.T @ pooled
    g["bio_head.b"] = d_bio.sum(axis=0)
    d_pyr = [None] * len(pyramid)
    top = pyramid[-1]
    d_pyr[-1] = np.repeat((d_bio @ p["bio_head.w"])[:, :, None] / top.shape[2], top.shape[2], axis=2)
    d_p0, g["ppg_head.w"], g["ppg_head.b"] = layers.conv1d_backward(d_ppg[:, None, :],
                                                                    cache["ppg_head"])
    d_pyr[0] = d_p0 if d_pyr[0] is None else d_pyr[0] + d_p0
    d_feats = [None] * len(feats)
    for i in range(len(pyramid)):
        if i < len(pyramid) - 1:
            up = layers.upsample2_backward(d_pyr[i], pyramid[i + 1].shape[2])
            d_pyr[i + 1] = up if d_pyr[i + 1] is None else d_pyr[i + 1] + up
        d_feats[i], g[f"lateral{i}.w"], g[f"lateral{i}.b"] = layers.conv1d_backward(
            d_pyr[i], cache[f"lateral{i}"])
    for i in range(cfg.num_stages, 0, -1):
        dy = layers.relu_backward(d_feats[i], feats[i])
        dx, g[f"stage{i}.w"], g[f"stage{i}.b"] = layers.conv1d_backward(dy, cache[f"stage{i}"])
        d_feats[i - 1] = d_feats[i - 1] + dx
    dy = layers.relu_backward(d_feats[0], feats[0])
    _, g["stem.w"], g["stem.b"] = layers.conv1d_backward(dy, cache["stem"])
    return g
