"""Per-target standardisation fitted on training targets only."""
from dataclasses import dataclass

import numpy as np

from ..errors import InsufficientData, ShapeMismatch


@dataclass(frozen=True)
class StandardScaler:
    names: tuple
    mean: tuple
    std: tuple

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "mean", tuple(float(v) for v in self.mean))
        object.__setattr__(self, "std", tuple(float(v) for v in self.std))
        if not len(self.names) == len(self.mean) == len(self.std):
            raise ShapeMismatch("names, mean and std must have equal length")
        if any(not s > 0 for s in self.std):
            raise InsufficientData("every fitted std must be positive")

    def _table(self, values):
        if isinstance(values, dict):
            return np.array([np.nan if values.get(n) is None else float(values[n])
                             for n in self.names])
        arr = np.asarray(values, dtype=np.float64)
        if arr.shape[-1] != len(self.names):
            raise ShapeMismatch(f"expected {len(self.names)} targets, got {arr.shape[-1]}")
        return arr

    def transform(self, values):
        """Scale a ``(..., K)`` array or a name->value dict; NaN stays NaN."""
        return (self._table(values) - np.array(self.mean)) / np.array(self.std)

    def inverse_transform(self, values):
        return self._table(values) * np.array(self.std) + np.array(self.mean)

    def to_dict(self):
        return {"names": list(self.names), "mean": list(self.mean), "std": list(self.std)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["names"], d["mean"], d["std"])

    @classmethod
    def from_stats(cls, stats, names=None):
        """Build from summary statistics (e.g. a parsed stats CSV)."""
        names = tuple(stats) if names is None else tuple(names)
        missing = [n for n in names if n not in stats]
        if missing:
            raise InsufficientData(f"no statistics for {missing}")
        return cls(names, [stats[n].mean for n in names], [stats[n].std for n in names])


def fit_scaler(targets, names=None):
    """Population mean and std per target over its non-missing values.

    ``targets`` is either a name -> sequence mapping or a list of per-recording
    name -> value dicts. None and NaN count as missing.
    """
    if isinstance(targets, dict):
        table = {k: list(v) for k, v in targets.items()}
    else:
        keys = names or sorted({k for rec in targets for k in rec})
        table = {k: [rec.get(k) for rec in targets] for k in keys}
    names = tuple(names) if names is not None else tuple(table)
    means, stds = [], []
    for n in names:
        v = np.array([np.nan if x is None else float(x) for x in table.get(n, [])])
        v = v[np.isfinite(v)]
        if v.size < 2:
            raise InsufficientData(f"{n!r}: need >= 2 values, got {v.size}")
        sd = v.std()
        if not sd > 1e-12 * max(1.0, abs(v.mean())):
            raise InsufficientData(f"{n!r}: zero variance")
        means.append(v.mean())
        stds.append(sd)
    return StandardScaler(names, means, stds)
