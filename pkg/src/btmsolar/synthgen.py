"""Synthetic AMI dataset generator with known ground-truth generation.

Produces a feeder of archetype-shaped residential loads, a persistent
weather sequence, and PV systems whose output tracks weather clearness,
then derives the two net meters exactly the way a net-metering setup does:
consumption capped at zero on one channel, export on the other. Because
true native load and true total generation are retained, the whole
reconstruction pipeline can be validated end to end.

Random streams are numpy PCG64, one stream per customer spawned from
(seed, customer index), so generation order or parallelism cannot change
the output. The generator name and seed are recorded in emitted file
headers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .core import (
    Calendar,
    Channel,
    CustomerKind,
    CustomerRecord,
    Dataset,
    DaytimeSpec,
    DaytimeWindow,
    IntervalSeries,
    WeatherObservations,
    build_calendar,
)
from .errors import ConfigurationError, InputFileError
from .meterio import write_meter_csv, write_truth_csv, write_weather_csv
from .weather import WeatherGroup, WeatherTable

log = logging.getLogger(__name__)

#: Station-style vocabulary the generator draws from, per group.
CONDITION_VOCAB = {
    WeatherGroup.RAINY: ("Rain", "Heavy Rain"),
    WeatherGroup.CLOUDY: ("Cloudy", "Mostly Cloudy", "Partly Cloudy", "Light Rain"),
    WeatherGroup.FAIR: ("Fair", "Windy"),
}

GROUP_ORDER = (WeatherGroup.RAINY, WeatherGroup.CLOUDY, WeatherGroup.FAIR)

MORNING_WIDTH_H = 1.5
EVENING_WIDTH_H = 2.5
NOISE_FLOOR = 0.05


@dataclass(frozen=True)
class SynthArchetype:
    """Residential load shape: flat base plus two Gaussian peaks."""

    name: str
    base_kw: float
    morning_peak_kw: float
    morning_hour: float
    evening_peak_kw: float
    evening_hour: float
    weekend_mult: float
    noise_sigma: float

    def shape_kw(self, hour_of_day: np.ndarray) -> np.ndarray:
        morning = self.morning_peak_kw * np.exp(
            -0.5 * ((hour_of_day - self.morning_hour) / MORNING_WIDTH_H) ** 2
        )
        evening = self.evening_peak_kw * np.exp(
            -0.5 * ((hour_of_day - self.evening_hour) / EVENING_WIDTH_H) ** 2
        )
        return self.base_kw + morning + evening


DEFAULT_ARCHETYPES = (
    SynthArchetype("early_riser", 0.35, 1.6, 7.0, 1.2, 18.0, 1.15, 0.08),
    SynthArchetype("nine_to_five", 0.30, 0.9, 8.0, 2.0, 19.0, 1.25, 0.09),
    SynthArchetype("home_day", 0.55, 1.1, 9.5, 1.6, 20.0, 1.05, 0.07),
    SynthArchetype("night_owl", 0.40, 0.7, 10.0, 2.2, 21.5, 1.20, 0.10),
)


@dataclass(frozen=True)
class SynthWeatherParams:
    """Stationary group probabilities plus day-to-day persistence."""

    prob_rainy: float = 0.25
    prob_cloudy: float = 0.35
    prob_fair: float = 0.40
    persistence: float = 0.7
    within_day_jitter: float = 0.15
    start_group: WeatherGroup | None = None

    def __post_init__(self):
        total = self.prob_rainy + self.prob_cloudy + self.prob_fair
        if abs(total - 1.0) > 1e-9:
            raise ConfigurationError(f"group probabilities must sum to 1, got {total}")
        for p in (self.prob_rainy, self.prob_cloudy, self.prob_fair):
            if p < 0:
                raise ConfigurationError("group probabilities must be non-negative")
        if not (0.0 <= self.persistence <= 1.0):
            raise ConfigurationError(f"persistence must lie in [0, 1], got {self.persistence}")

    @property
    def probs(self) -> np.ndarray:
        return np.array([self.prob_rainy, self.prob_cloudy, self.prob_fair])


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 42
    n_nonsolar: int = 200
    n_solar: int = 40
    days: int = 365
    interval_minutes: int = 60
    start: str = "2021-01-01T00:00:00"
    spo_fraction: float = 0.2
    weather: SynthWeatherParams = field(default_factory=SynthWeatherParams)
    archetypes: tuple[SynthArchetype, ...] = DEFAULT_ARCHETYPES
    clearness: tuple[float, float, float] = (0.2, 0.5, 0.95)  # Rainy, Cloudy, Fair
    capacity_min_kw: float = 1.5
    capacity_max_kw: float = 4.0
    pv_noise_sigma: float = 0.05
    seasonal_amplitude: float = 0.15
    daytime: DaytimeWindow = field(default_factory=DaytimeWindow)

    def __post_init__(self):
        if self.n_nonsolar < 1 or self.n_solar < 1 or self.days < 1:
            raise ConfigurationError("customer and day counts must all be >= 1")
        rainy, cloudy, fair = self.clearness
        if not (0 < rainy < cloudy < fair <= 1.0):
            raise ConfigurationError(
                f"clearness must satisfy 0 < rainy < cloudy < fair <= 1, got {self.clearness}"
            )
        if not (0.0 <= self.spo_fraction <= 1.0):
            raise ConfigurationError(f"spo_fraction must lie in [0, 1], got {self.spo_fraction}")
        if self.capacity_min_kw < 0 or self.capacity_max_kw < self.capacity_min_kw:
            raise ConfigurationError(
                f"capacity range invalid: {self.capacity_min_kw}..{self.capacity_max_kw} kW"
            )
        if not self.archetypes:
            raise ConfigurationError("at least one archetype required")

    def clearness_of(self, group: WeatherGroup) -> float:
        return self.clearness[GROUP_ORDER.index(group)]


@dataclass(frozen=True)
class SolarTruth:
    """Ground truth for one solar customer."""

    customer_id: str
    capacity_kw: float
    native_load: np.ndarray       # kWh per interval, magnitude
    total_generation: np.ndarray  # kWh per interval
    u: np.ndarray                 # derived net consumption (<= 0)
    v: np.ndarray                 # derived net generation (>= 0)


@dataclass(frozen=True)
class SynthTruth:
    customers: dict[str, SolarTruth]
    day_groups: tuple[WeatherGroup, ...]


def nonsolar_id(k: int) -> str:
    return f"NS{k + 1:03d}"


def solar_id(k: int) -> str:
    return f"PV{k + 1:03d}"


def gen_weather(config: SynthConfig) -> tuple[WeatherObservations, tuple[WeatherGroup, ...]]:
    """Hourly condition observations plus the underlying per-day groups.

    Day groups follow a persistent chain: keep yesterday's group with the
    persistence probability, otherwise redraw from the stationary
    probabilities (so the long-run shares stay at the configured values for
    any persistence). Hourly conditions mostly repeat the day group, with
    occasional jitter drawn from the stationary distribution.
    """
    params = config.weather
    rng = np.random.default_rng([config.seed, 0])
    probs = params.probs

    groups = []
    for d in range(config.days):
        if d == 0:
            g = params.start_group or GROUP_ORDER[rng.choice(3, p=probs)]
        elif rng.random() < params.persistence:
            g = groups[-1]
        else:
            g = GROUP_ORDER[rng.choice(3, p=probs)]
        groups.append(g)

    times = pd.date_range(pd.Timestamp(config.start), periods=config.days * 24, freq="1h")
    conditions = []
    for d, day_group in enumerate(groups):
        for _ in range(24):
            g = day_group
            if params.within_day_jitter and rng.random() < params.within_day_jitter:
                g = GROUP_ORDER[rng.choice(3, p=probs)]
            vocab = CONDITION_VOCAB[g]
            conditions.append(vocab[rng.choice(len(vocab))])
    obs = WeatherObservations(times=times, conditions=tuple(conditions), daylight=None)
    return obs, tuple(groups)


def _clearsky_fraction(calendar: Calendar, window: DaytimeWindow) -> np.ndarray:
    """Half-sine irradiance profile over the daytime window, per interval."""
    ts = calendar.timestamps
    half_step = calendar.interval_hours * 30.0  # minutes
    midpoint = ts.hour.to_numpy() * 60 + ts.minute.to_numpy() + half_step
    frac = (midpoint - window.start_minute) / (window.end_minute - window.start_minute)
    out = np.sin(np.pi * np.clip(frac, 0.0, 1.0))
    out[(frac <= 0) | (frac >= 1)] = 0.0
    return out


def _interval_clearness(
    calendar: Calendar, obs: WeatherObservations, config: SynthConfig
) -> np.ndarray:
    """Step-hold each observation's group clearness onto the interval grid."""
    table = WeatherTable()
    obs_clear = np.array([config.clearness_of(table.group_of(c)) for c in obs.conditions])
    pos = obs.times.searchsorted(calendar.timestamps, side="right") - 1
    pos = np.clip(np.asarray(pos), 0, len(obs) - 1)
    return obs_clear[pos]


def _load_kwh(
    archetype: SynthArchetype,
    calendar: Calendar,
    seasonal: np.ndarray,
    weekend: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    ts = calendar.timestamps
    hour = ts.hour.to_numpy() + ts.minute.to_numpy() / 60.0
    kw = archetype.shape_kw(hour) * seasonal
    kw = kw * np.where(weekend, archetype.weekend_mult, 1.0)
    noise = np.maximum(NOISE_FLOOR, 1.0 + archetype.noise_sigma * rng.standard_normal(kw.size))
    return kw * noise * calendar.interval_hours


def gen_customers(
    config: SynthConfig,
    obs: WeatherObservations,
    day_groups: tuple[WeatherGroup, ...],
) -> tuple[Dataset, SynthTruth]:
    """Generate every customer's channels plus ground truth.

    Archetypes rotate through both pools in customer order, so solar
    customer k shares its load shape with every non-solar customer at the
    same rotation offset. Net meters are derived with the capping rules:
    u = min(0, G - L), v = max(0, G - L).
    """
    n_per_day = (24 * 60) // config.interval_minutes
    calendar = build_calendar(
        config.start,
        config.days * n_per_day,
        pd.Timedelta(minutes=config.interval_minutes),
        DaytimeSpec(default=config.daytime),
    )
    ts = calendar.timestamps
    day_of_year = ts.dayofyear.to_numpy()
    seasonal = 1.0 + config.seasonal_amplitude * np.cos(2 * np.pi * (day_of_year - 15) / 365.25)
    weekend = ts.dayofweek.to_numpy() >= 5
    clearsky = _clearsky_fraction(calendar, config.daytime)
    clearness = _interval_clearness(calendar, obs, config)
    n_arch = len(config.archetypes)

    customers: dict[str, CustomerRecord] = {}
    for k in range(config.n_nonsolar):
        cid = nonsolar_id(k)
        rng = np.random.default_rng([config.seed, 1 + k])
        load = _load_kwh(config.archetypes[k % n_arch], calendar, seasonal, weekend, rng)
        u = -load
        no_gaps = np.zeros(u.size, dtype=bool)
        customers[cid] = CustomerRecord(
            cid, CustomerKind.NON_SOLAR,
            {Channel.NET_CONSUMPTION: IntervalSeries(cid, Channel.NET_CONSUMPTION, u, no_gaps)},
        )

    n_spo = int(round(config.spo_fraction * config.n_solar))
    truth: dict[str, SolarTruth] = {}
    for k in range(config.n_solar):
        cid = solar_id(k)
        rng = np.random.default_rng([config.seed, 1 + config.n_nonsolar + k])
        capacity = float(rng.uniform(config.capacity_min_kw, config.capacity_max_kw))
        load = _load_kwh(config.archetypes[k % n_arch], calendar, seasonal, weekend, rng)
        pv_noise = np.maximum(
            0.0, 1.0 + config.pv_noise_sigma * rng.standard_normal(load.size)
        )
        gen = capacity * clearsky * clearness * pv_noise * calendar.interval_hours
        net = gen - load
        u = np.minimum(0.0, net)
        v = np.maximum(0.0, net)
        truth[cid] = SolarTruth(cid, capacity, load, gen, u, v)

        no_gaps = np.zeros(u.size, dtype=bool)
        channels = {
            Channel.NET_CONSUMPTION: IntervalSeries(cid, Channel.NET_CONSUMPTION, u, no_gaps),
            Channel.NET_GENERATION: IntervalSeries(cid, Channel.NET_GENERATION, v, no_gaps),
        }
        kind = CustomerKind.NET_METER_SOLAR
        if k < n_spo:
            channels[Channel.TOTAL_GENERATION] = IntervalSeries(
                cid, Channel.TOTAL_GENERATION, gen, no_gaps.copy()
            )
            kind = CustomerKind.SPO_SOLAR
        customers[cid] = CustomerRecord(cid, kind, channels)

    dataset = Dataset(calendar=calendar, customers=customers, weather=obs)
    log.info("generated %d non-solar + %d solar customers (%d SPO), %d days",
             config.n_nonsolar, config.n_solar, n_spo, config.days)
    return dataset, SynthTruth(customers=truth, day_groups=day_groups)


def generate(config: SynthConfig) -> tuple[Dataset, SynthTruth]:
    obs, day_groups = gen_weather(config)
    return gen_customers(config, obs, day_groups)


def _meter_rows(dataset: Dataset):
    times = dataset.calendar.timestamps
    for cid in sorted(dataset.customers):
        record = dataset.customers[cid]
        for channel in sorted(record.channels, key=lambda c: c.value):
            values = record.channels[channel].values
            for t in range(len(times)):
                yield times[t], cid, channel.value, values[t]


def _truth_rows(truth: SynthTruth, calendar: Calendar):
    times = calendar.timestamps
    for cid in sorted(truth.customers):
        gen = truth.customers[cid].total_generation
        for t in range(len(times)):
            yield times[t], cid, gen[t]


def emit_dataset(
    dataset: Dataset, truth: SynthTruth, out_dir: str | Path, seed: int
) -> dict[str, Path]:
    """Write meters.csv, weather.csv, and truth.csv under ``out_dir``."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        stamp = f"synthetic dataset, rng=numpy-PCG64 seed={seed}"
        paths = {
            "meters": out_dir / "meters.csv",
            "weather": out_dir / "weather.csv",
            "truth": out_dir / "truth.csv",
        }
        write_meter_csv(paths["meters"], _meter_rows(dataset), header_comment=stamp)
        write_weather_csv(paths["weather"], dataset.weather, header_comment=stamp)
        write_truth_csv(paths["truth"], _truth_rows(truth, dataset.calendar), header_comment=stamp)
    except OSError as exc:
        raise InputFileError(f"cannot write synthetic dataset under {out_dir}: {exc}") from exc
    log.info("wrote synthetic dataset to %s", out_dir)
    return paths
