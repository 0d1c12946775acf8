"""Feature extraction: turns a student's weekly series into a flat numeric vector.

Per factor the derived features are (mean, slope, min, max, last), followed by
the raw weekly values when raw mode is enabled. Factors appear in code order,
so the schema is fully determined by the week count and the mode.
"""

from __future__ import annotations

from dataclasses import dataclass

from .domain import FactorId, StudentRecord
from .errors import ValidationError

DERIVED_FEATURES = ("mean", "slope", "min", "max", "last")
FEATURE_MODES = ("raw", "derived", "both")

#: Default |slope| below which a series counts as stable, in native units/week.
DEFAULT_TREND_TOLERANCE = 0.05


@dataclass(frozen=True)
class FeatureVector:
    values: tuple[float, ...]
    schema: tuple[tuple[FactorId, str], ...]

    def __len__(self) -> int:
        return len(self.values)


def ols_slope(values) -> float:
    """Least-squares slope of values against week index 1..W (0.0 for W == 1)."""
    n = len(values)
    if n == 1:
        return 0.0
    x_mean = (n + 1) / 2.0
    y_mean = sum(values) / n
    num = sum((i + 1 - x_mean) * (v - y_mean) for i, v in enumerate(values))
    den = sum((i + 1 - x_mean) ** 2 for i in range(n))
    return num / den


def feature_schema(weeks: int, mode: str = "both") -> tuple[tuple[FactorId, str], ...]:
    """The ordered (factor, feature-name) schema for a given week count and mode."""
    if mode not in FEATURE_MODES:
        raise ValidationError(f"unknown feature mode {mode!r}; expected one of {FEATURE_MODES}")
    schema = []
    for factor in FactorId:
        if mode in ("derived", "both"):
            schema.extend((factor, name) for name in DERIVED_FEATURES)
        if mode in ("raw", "both"):
            schema.extend((factor, f"week_{w}") for w in range(1, weeks + 1))
    return tuple(schema)


def extract_features(record: StudentRecord, mode: str = "both") -> FeatureVector:
    """Deterministic feature vector for a record; pure in its inputs."""
    if mode not in FEATURE_MODES:
        raise ValidationError(f"unknown feature mode {mode!r}; expected one of {FEATURE_MODES}")
    values: list[float] = []
    for factor in FactorId:
        series = record.series[factor]
        if mode in ("derived", "both"):
            values.append(sum(series) / len(series))
            values.append(ols_slope(series))
            values.append(min(series))
            values.append(max(series))
            values.append(series[-1])
        if mode in ("raw", "both"):
            values.extend(series)
    return FeatureVector(tuple(values), feature_schema(record.weeks, mode))


def trend_word(slope: float, tolerance: float = DEFAULT_TREND_TOLERANCE) -> str:
    """Map a slope to "increased" / "decreased" / "remained stable"."""
    if tolerance < 0:
        raise ValidationError("trend tolerance must be >= 0")
    if abs(slope) <= tolerance:
        return "remained stable"
    return "increased" if slope > 0 else "decreased"
