"""Weather-condition grouping and similarity weights.

Condition strings observed at an airport station are mapped into three
groups (Rainy, Cloudy, Fair) carrying similarity weights. Rainy intervals
dominate the usage-difference metric because cloud cover suppresses PV
output and makes solar and non-solar load profiles directly comparable.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import Calendar, WeatherObservations
from .errors import ConfigurationError, CoverageError, WeatherError

log = logging.getLogger(__name__)


class WeatherGroup(str, Enum):
    RAINY = "Rainy"
    CLOUDY = "Cloudy"
    FAIR = "Fair"


DEFAULT_WEIGHTS = {
    WeatherGroup.RAINY: 1.0,
    WeatherGroup.CLOUDY: 0.1,
    WeatherGroup.FAIR: 0.001,
}

#: Station vocabulary grouped by sky opacity. Keys are lowercased trimmed
#: condition strings; lookups are case-insensitive.
DEFAULT_GROUPS = {
    WeatherGroup.RAINY: (
        "heavy rain",
        "rain",
    ),
    WeatherGroup.CLOUDY: (
        "light rain",
        "mostly cloudy",
        "partly cloudy",
        "cloudy",
        "shallow fog",
        "patches of fog",
        "fog",
        "mist",
        "haze",
        "light drizzle",
        "wintry mix",
        "smoke",
        "heavy thunder-storm",
    ),
    WeatherGroup.FAIR: (
        "fair",
        "light snow",
        "windy",
        "thunder",
    ),
}


@dataclass
class WeatherTable:
    """Condition-string grouping plus per-group similarity weights."""

    mapping: dict[str, WeatherGroup] = field(default_factory=dict)
    weights: dict[WeatherGroup, float] = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))
    unknown_fallback: WeatherGroup | None = None
    unknown_count: int = 0

    def __post_init__(self):
        base = {
            cond: group
            for group, conds in DEFAULT_GROUPS.items()
            for cond in conds
        }
        base.update({k.strip().lower(): v for k, v in self.mapping.items()})
        self.mapping = base
        for group in WeatherGroup:
            w = self.weights.get(group)
            if w is None or w <= 0:
                raise ConfigurationError(f"weight for {group.value} must be positive, got {w}")
        if not (
            self.weights[WeatherGroup.RAINY]
            >= self.weights[WeatherGroup.CLOUDY]
            >= self.weights[WeatherGroup.FAIR]
        ):
            raise ConfigurationError(
                "weights must be non-increasing from Rainy to Fair, got "
                f"{[self.weights[g] for g in WeatherGroup]}"
            )

    def group_of(self, raw: str) -> WeatherGroup:
        key = raw.strip().lower()
        group = self.mapping.get(key)
        if group is None:
            if self.unknown_fallback is None:
                raise WeatherError(
                    f"unknown weather condition {raw.strip()!r} and no fallback group configured"
                )
            self.unknown_count += 1
            return self.unknown_fallback
        return group

    def weight_of(self, raw: str) -> float:
        return self.weights[self.group_of(raw)]


def map_condition(raw: str, table: WeatherTable) -> WeatherGroup:
    """Group for one raw condition string (case-insensitive, trimmed)."""
    return table.group_of(raw)


@dataclass(frozen=True)
class WeightSeries:
    """Per-interval similarity weight S_t plus the condition that produced it."""

    values: np.ndarray
    conditions: tuple[str, ...]

    def __post_init__(self):
        if self.values.shape != (len(self.conditions),):
            raise ConfigurationError("weight values and conditions lengths differ")
        object.__setattr__(self, "values", np.ascontiguousarray(self.values, dtype=np.float64))
        self.values.flags.writeable = False


@dataclass(frozen=True)
class DailyWeight:
    """Daily averaged similarity weight per calendar day."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.ascontiguousarray(self.values, dtype=np.float64))
        self.values.flags.writeable = False


def interval_weights(
    obs: WeatherObservations, calendar: Calendar, table: WeatherTable
) -> WeightSeries:
    """Assign every calendar interval the weight of its governing observation.

    Step-hold: each interval takes the most recent observation at or before
    its start; intervals before the first observation take the first one.
    Every calendar day must contain at least one observation.
    """
    times = calendar.timestamps
    obs_day = np.asarray((obs.times.normalize() - times[0].normalize()).days)
    covered = np.unique(obs_day)
    wanted = np.arange(calendar.n_days)
    missing = np.setdiff1d(wanted, covered)
    if missing.size:
        days = [str(calendar.day_dates[d]) for d in missing[:10]]
        raise CoverageError(
            f"{missing.size} calendar days without weather observations: {days}"
            + (" ..." if missing.size > 10 else "")
        )

    obs_weights = np.array([table.weight_of(c) for c in obs.conditions])
    pos = obs.times.searchsorted(times, side="right") - 1
    pos = np.clip(np.asarray(pos), 0, len(obs) - 1)
    conditions = tuple(obs.conditions[p] for p in pos)
    return WeightSeries(values=obs_weights[pos], conditions=conditions)


def daily_avg_weight(weights: WeightSeries, calendar: Calendar) -> DailyWeight:
    """Mean of S_t over the daytime intervals of each day."""
    if calendar.degenerate_days.size:
        days = [str(calendar.day_dates[d]) for d in calendar.degenerate_days[:10]]
        raise CoverageError(f"days with no daytime intervals: {days}")
    mask = calendar.daytime_mask
    sums = np.bincount(
        calendar.day_index[mask], weights=weights.values[mask], minlength=calendar.n_days
    )
    values = sums / calendar.daytime_counts
    log.debug("daily weights: min %.4g max %.4g mean %.4g",
              values.min(), values.max(), values.mean())
    return DailyWeight(values=values)
