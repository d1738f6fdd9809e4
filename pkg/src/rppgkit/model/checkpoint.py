"""Binary checkpoint container.

Byte layout (all integers little-endian)::

    0   8 bytes   magic b"RPPGFPN\\0"
    8   uint32    format version (1)
    12  uint32    header length H in bytes
    16  H bytes   UTF-8 JSON header: {"config", "parameters": [[name, shape], ...],
                  "scaler": {...} or null, "extra": {...}}
    16+H          float32 little-endian blobs, one per parameter in header order,
                  each C-ordered

Parameters are float32 on disk. Because the model keeps them at float32
precision in memory, save -> load is bit-exact.
"""
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError
from .fpn import FpnModel, ModelConfig, parameter_shapes
from .scaler import StandardScaler

MAGIC = b"RPPGFPN\0"
VERSION = 1


def to_bytes(model, scaler=None, extra=None):
    shapes = parameter_shapes(model.config)
    header = {
        "config": model.config.to_dict(),
        "parameters": [[n, list(s)] for n, s in shapes],
        "scaler": scaler.to_dict() if scaler is not None else None,
        "extra": extra or {},
    }
    hdr = json.dumps(header, sort_keys=True).encode("utf-8")
    blobs = [np.ascontiguousarray(model.params[n], dtype="<f4").tobytes() for n, _ in shapes]
    return MAGIC + struct.pack("<II", VERSION, len(hdr)) + hdr + b"".join(blobs)


def from_bytes(data):
    """``(model, scaler or None, extra)``."""
    if len(data) < 16 or data[:8] != MAGIC:
        raise CheckpointError("not a model checkpoint (bad magic)")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
        cfg = ModelConfig.from_dict(header["config"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    expected = [[n, list(s)] for n, s in parameter_shapes(cfg)]
    if header.get("parameters") != expected:
        raise CheckpointError("parameter manifest does not match the configured topology")
    params = {}
    off = 16 + hlen
    for name, shape in expected:
        n = int(np.prod(shape))
        chunk = data[off:off + 4 * n]
        if len(chunk) != 4 * n:
            raise CheckpointError(f"truncated checkpoint at parameter {name}")
        params[name] = np.frombuffer(chunk, dtype="<f4").astype(np.float64).reshape(shape)
        off += 4 * n
    if off != len(data):
        raise CheckpointError(f"{len(data) - off} trailing bytes after parameters")
    scaler = StandardScaler.from_dict(header["scaler"]) if header.get("scaler") else None
    return FpnModel(cfg, params), scaler, header.get("extra", {})


def save_checkpoint(path, model, scaler=None, extra=None):
    path = Path(path)
    data = to_bytes(model, scaler, extra)
    tmp = path.with_name(f".{path.name}.tmp")
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp.write_bytes(data)
    tmp.replace(path)
    return path


def load_checkpoint(path):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc.strerror}") from None
    return from_bytes(data)

