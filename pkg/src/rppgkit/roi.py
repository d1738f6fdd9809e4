"""Face ROI masks and per-frame mean colour extraction."""
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMask, RppgError, SchemaError
from .signal_core import RoiTraceSet

# Stand-in ROI set in normalised face-box coordinates (x right, y down).
# Configurable; not a claim about any particular published ROI layout.
DEFAULT_ROIS = {
    "forehead": [(0.30, 0.08), (0.70, 0.08), (0.72, 0.25), (0.28, 0.25)],
    "left_temple": [(0.08, 0.18), (0.24, 0.16), (0.24, 0.36), (0.10, 0.38)],
    "right_temple": [(0.76, 0.16), (0.92, 0.18), (0.90, 0.38), (0.76, 0.36)],
    "left_cheek": [(0.15, 0.45), (0.38, 0.45), (0.38, 0.68), (0.20, 0.70)],
    "right_cheek": [(0.62, 0.45), (0.85, 0.45), (0.80, 0.70), (0.62, 0.68)],
    "nose": [(0.44, 0.35), (0.56, 0.35), (0.60, 0.60), (0.40, 0.60)],
    "chin": [(0.38, 0.82), (0.62, 0.82), (0.58, 0.95), (0.42, 0.95)],
}


@dataclass(frozen=True)
class RoiMask:
    """A named region: polygon vertices in pixel coordinates, or a boolean mask."""

    name: str
    polygon: tuple = None
    mask: np.ndarray = None

    def __post_init__(self):
        if (self.polygon is None) == (self.mask is None):
            raise RppgError("give exactly one of polygon or mask")
        if self.polygon is not None:
            poly = tuple((float(x), float(y)) for x, y in self.polygon)
            if len(poly) < 3:
                raise RppgError(f"ROI {self.name!r}: polygon needs >= 3 vertices")
            object.__setattr__(self, "polygon", poly)
        else:
            m = np.asarray(self.mask, dtype=bool)
            if m.ndim != 2 or not m.any():
                raise EmptyMask(f"ROI {self.name!r}: mask selects no pixel")
            m.setflags(write=False)
            object.__setattr__(self, "mask", m)

    def rasterize(self, height, width):
        if self.mask is not None:
            if self.mask.shape != (height, width):
                raise RppgError(
                    f"mask shape {self.mask.shape} does not match frame {(height, width)}")
            return self.mask
        return rasterize_polygon(self.polygon, height, width)


def rasterize_polygon(polygon, height, width):
    """Even-odd fill; a pixel is inside when its centre ``(x+0.5, y+0.5)`` is."""
    px = np.arange(width) + 0.5
    py = np.arange(height) + 0.5
    gx, gy = np.meshgrid(px, py)
    inside = np.zeros((height, width), dtype=bool)
    pts = list(polygon)
    for (x1, y1), (x2, y2) in zip(pts, pts[1:] + pts[:1]):
        if y1 == y2:
            continue
        crosses = (y1 > gy) != (y2 > gy)
        x_at = x1 + (gy - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (gx < x_at)
    return inside


def roi_mean(frame, mask):
    """Mean of each colour channel over the pixels selected by ``mask``."""
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise RppgError(f"frame must be H x W x 3, got {frame.shape}")
    sel = mask.rasterize(frame.shape[0], frame.shape[1])
    if not sel.any():
        raise EmptyMask(f"ROI {mask.name!r} selects no pixel of this frame")
    return tuple(float(v) for v in frame[sel].astype(np.float64).mean(axis=0))


def scale_masks(normalized, width, height):
    """Normalised ``{name: [(x, y), ...]}`` polygons to pixel-space masks."""
    return [RoiMask(name, polygon=[(x * width, y * height) for x, y in pts])
            for name, pts in normalized.items()]


def extract_traces(frames, timestamps_s, masks):
    """Stack of ``T x H x W x 3`` frames to a :class:`RoiTraceSet`."""
    frames = np.asarray(frames)
    if frames.ndim != 4 or frames.shape[3] != 3:
        raise RppgError(f"frames must be T x H x W x 3, got {frames.shape}")
    h, w = frames.shape[1:3]
    rows = []
    for m in masks:
        sel = m.rasterize(h, w)
        if not sel.any():
            raise EmptyMask(f"ROI {m.name!r} selects no pixel of this frame size")
        # (T, n_sel, 3) -> (3, T)
        rows.append(frames[:, sel, :].astype(np.float64).mean(axis=1).T)
    return RoiTraceSet(np.vstack(rows), timestamps_s, [m.name for m in masks])


def format_mask_file(normalized):
    lines = []
    for name, pts in normalized.items():
        verts = " ".join(f"{x:.6f},{y:.6f}" for x, y in pts)
        lines.append(f"{name} {verts}")
    return "\n".join(lines) + "\n"


def parse_mask_file(text):
    """``name x,y x,y ...`` per line, coordinates in ``[0, 1]``."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        name, *verts = line.split()
        if len(verts) < 3:
            raise SchemaError(f"ROI {name!r} needs at least 3 vertices", lineno)
        pts = []
        for v in verts:
            try:
                x, y = (float(c) for c in v.split(","))
            except ValueError:
                raise SchemaError(f"bad vertex {v!r}", lineno) from None
            if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
                raise SchemaError(f"vertex {v!r} outside [0, 1]", lineno)
            pts.append((x, y))
        if name in out:
            raise SchemaError(f"duplicate ROI {name!r}", lineno)
        out[name] = pts
    if not out:
        raise SchemaError("no ROI records")
    return out


def read_mask_file(path):
    with open(path) as fh:
        return parse_mask_file(fh.read())
