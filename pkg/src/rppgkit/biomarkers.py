"""Biomarker names, units and population statistics of the reference cohort."""
import csv
import io
from dataclasses import dataclass

from .errors import SchemaError


@dataclass(frozen=True)
class TargetStats:
    name: str
    unit: str
    mean: float
    std: float
    min: float
    max: float

    def sanity_bounds(self, margin=0.2):
        """Observed range widened by ``margin`` of its span on each side."""
        span = self.max - self.min
        return self.min - margin * span, self.max + margin * span


COHORT_STATS = {s.name: s for s in [
    TargetStats("weight", "kg", 65.92, 15.79, 43.00, 168.00),
    TargetStats("height", "cm", 169.75, 8.87, 147.00, 201.00),
    TargetStats("bmi", "kg/m^2", 22.73, 4.34, 15.39, 47.03),
    TargetStats("age", "years", 23.08, 10.90, 18.00, 83.00),
    TargetStats("systolic_pressure", "mm Hg", 122.45, 17.43, 80.00, 202.00),
    TargetStats("diastolic_pressure", "mm Hg", 73.79, 9.25, 50.00, 108.00),
    TargetStats("saturation", "%", 98.01, 1.29, 86.00, 99.00),
    TargetStats("temperature", "C", 36.56, 0.13, 36.00, 37.50),
    TargetStats("hemoglobin", "g/dL", 13.59, 1.66, 8.10, 17.30),
    TargetStats("glycated_hemoglobin", "%", 5.52, 0.69, 3.40, 13.02),
    TargetStats("cholesterol", "mmol/L", 4.16, 0.83, 0.90, 8.00),
    TargetStats("respiratory_rate", "rpm", 18.05, 1.71, 15.00, 24.00),
    TargetStats("heart_rate", "bpm", 91.93, 18.37, 49.00, 153.00),
    TargetStats("arterial_stiffness", "", 8.99, 3.04, 1.75, 34.02),
    TargetStats("stress", "PSM-25", 3.04, 1.46, 1.00, 7.52),
]}

# categorical; 1 = male, 0 = female
SEX = "sex"

# heads of the multitask model, in output order
MODEL_TARGETS = (
    "systolic_pressure", "diastolic_pressure", "glycated_hemoglobin", "cholesterol",
    "respiratory_rate", "arterial_stiffness", "age", "bmi", "stress", "saturation", SEX,
)

CATEGORICAL_TARGETS = frozenset({SEX})


def unit_of(name):
    if name == SEX:
        return ""
    return COHORT_STATS[name].unit


def format_stats_csv(stats=None):
    stats = COHORT_STATS if stats is None else stats
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["target", "unit", "mean", "std", "min", "max"])
    for s in stats.values():
        w.writerow([s.name, s.unit, s.mean, s.std, s.min, s.max])
    return buf.getvalue()


def parse_stats_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["target", "unit", "mean", "std", "min", "max"]:
        raise SchemaError("stats header must be target,unit,mean,std,min,max", 1)
    out = {}
    for lineno, row in enumerate(rows[1:], 2):
        if not row:
            continue
        if len(row) != 6:
            raise SchemaError(f"expected 6 columns, got {len(row)}", lineno)
        try:
            vals = [float(v) for v in row[2:]]
        except ValueError:
            raise SchemaError("non-numeric statistic", lineno) from None
        out[row[0]] = TargetStats(row[0], row[1], *vals)
    return out
