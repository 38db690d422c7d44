"""Canonical data model: calendars, metered interval series, customer records.

Sign convention used everywhere downstream: net consumption is stored as
values <= 0, all generation-like channels and native load as magnitudes >= 0.
Missing intervals are flagged in a gap mask, never silently zero-filled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np
import pandas as pd

from .errors import ConfigurationError, CoverageError, DataQualityError, IngestionError

MINUTES_PER_DAY = 24 * 60

# Tolerance below which a sign violation is considered float dust rather than
# a data problem; dust is still clamped but does not count toward the
# data-quality threshold.
SIGN_EPSILON_KWH = 1e-9

DEFAULT_MAX_CLAMP_FRACTION = 0.01


class Channel(str, Enum):
    NET_CONSUMPTION = "net_consumption"
    NET_GENERATION = "net_generation"
    TOTAL_GENERATION = "total_generation"
    NATIVE_LOAD = "native_load"


class CustomerKind(str, Enum):
    NON_SOLAR = "non_solar"
    NET_METER_SOLAR = "net_meter_solar"
    SPO_SOLAR = "spo_solar"


class SignConvention(str, Enum):
    CONSUMPTION_POSITIVE = "consumption_positive"
    CONSUMPTION_NEGATIVE = "consumption_negative"


#: Channel sets required per customer kind.
KIND_CHANNELS = {
    CustomerKind.NON_SOLAR: {Channel.NET_CONSUMPTION},
    CustomerKind.NET_METER_SOLAR: {Channel.NET_CONSUMPTION, Channel.NET_GENERATION},
    CustomerKind.SPO_SOLAR: {
        Channel.NET_CONSUMPTION,
        Channel.NET_GENERATION,
        Channel.TOTAL_GENERATION,
    },
}

SOLAR_KINDS = (CustomerKind.NET_METER_SOLAR, CustomerKind.SPO_SOLAR)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class DaytimeWindow:
    """Daily daytime block expressed in minutes from local midnight."""

    start_minute: int = 6 * 60
    end_minute: int = 20 * 60

    def __post_init__(self):
        if not (0 <= self.start_minute < self.end_minute <= MINUTES_PER_DAY):
            raise ConfigurationError(
                f"daytime window must satisfy 0 <= start < end <= 24h, "
                f"got {self.start_minute}..{self.end_minute} minutes"
            )


@dataclass(frozen=True)
class DaytimeSpec:
    """How daytime intervals are determined.

    Either explicit per-interval flags (from a weather file daylight column)
    or a per-month clock window; months without an override use ``default``.
    """

    default: DaytimeWindow = field(default_factory=DaytimeWindow)
    monthly: dict[int, DaytimeWindow] = field(default_factory=dict)
    flags: np.ndarray | None = None

    def window_for_month(self, month: int) -> DaytimeWindow:
        return self.monthly.get(month, self.default)


@dataclass(frozen=True)
class Calendar:
    """Fixed-step interval grid with day partitioning and a daytime mask."""

    start: pd.Timestamp
    interval: pd.Timedelta
    n_intervals: int
    day_index: np.ndarray       # (n,) day ordinal per interval
    day_starts: np.ndarray      # (n_days,) first interval index of each day
    daytime_mask: np.ndarray    # (n,) bool
    daytime_counts: np.ndarray  # (n_days,) daytime intervals per day
    degenerate_days: np.ndarray  # day ordinals with zero daytime intervals

    @property
    def n_days(self) -> int:
        return len(self.day_starts)

    @property
    def interval_hours(self) -> float:
        return self.interval / pd.Timedelta(hours=1)

    @cached_property
    def timestamps(self) -> pd.DatetimeIndex:
        return pd.date_range(self.start, periods=self.n_intervals, freq=self.interval)

    @cached_property
    def day_dates(self) -> tuple:
        """Local calendar date of each day ordinal."""
        ts = self.timestamps
        return tuple(ts[i].date() for i in self.day_starts)

    def month_of_interval(self) -> np.ndarray:
        return self.timestamps.month.to_numpy()

    def hour_of_interval(self) -> np.ndarray:
        return self.timestamps.hour.to_numpy()

    def index_of(self, when: pd.Timestamp) -> int:
        """Interval index of an exact grid timestamp, or -1 if off-grid."""
        delta = when - self.start
        steps, rem = divmod(delta, self.interval)
        if rem != pd.Timedelta(0) or not (0 <= steps < self.n_intervals):
            return -1
        return int(steps)


def build_calendar(
    start: pd.Timestamp | str,
    n_intervals: int,
    interval: pd.Timedelta | str,
    daytime: DaytimeSpec | None = None,
) -> Calendar:
    """Build the interval grid and classify every interval as day or night.

    ``interval`` must divide 24 h and be at least 15 minutes. Days are the
    local calendar dates of the interval starts (fixed UTC offset only), so a
    non-midnight start yields a partial first day. Days with no daytime
    intervals are reported in ``degenerate_days`` rather than rejected.
    """
    daytime = daytime or DaytimeSpec()
    start = pd.Timestamp(start)
    interval = pd.Timedelta(interval)
    if n_intervals < 1:
        raise ConfigurationError(f"n_intervals must be >= 1, got {n_intervals}")
    minutes = interval / pd.Timedelta(minutes=1)
    if minutes != int(minutes) or MINUTES_PER_DAY % int(minutes) != 0:
        raise ConfigurationError(
            f"interval length {interval} does not divide 24 hours"
        )
    if minutes < 15:
        raise ConfigurationError(
            f"interval length {interval} below the 15-minute floor"
        )

    ts = pd.date_range(start, periods=n_intervals, freq=interval)
    day_ordinal = (ts.normalize() - ts[0].normalize()).days.to_numpy()
    day_index = day_ordinal.astype(np.int64)
    # Interval grids are contiguous, so day ordinals are non-decreasing and
    # dense; day_starts marks each first occurrence.
    change = np.flatnonzero(np.diff(day_index)) + 1
    day_starts = np.concatenate(([0], change))

    if daytime.flags is not None:
        mask = np.asarray(daytime.flags, dtype=bool)
        if mask.shape != (n_intervals,):
            raise ConfigurationError(
                f"daylight flags length {mask.size} != n_intervals {n_intervals}"
            )
        _check_contiguous_daytime(mask, day_starts, n_intervals)
    else:
        minute_of_day = (ts.hour * 60 + ts.minute).to_numpy()
        months = ts.month.to_numpy()
        starts = np.empty(n_intervals, dtype=np.int64)
        ends = np.empty(n_intervals, dtype=np.int64)
        for m in np.unique(months):
            win = daytime.window_for_month(int(m))
            sel = months == m
            starts[sel] = win.start_minute
            ends[sel] = win.end_minute
        mask = (minute_of_day >= starts) & (minute_of_day < ends)

    counts = np.bincount(day_index, weights=mask, minlength=len(day_starts)).astype(np.int64)
    degenerate = np.flatnonzero(counts == 0)
    return Calendar(
        start=ts[0],
        interval=interval,
        n_intervals=n_intervals,
        day_index=_freeze(day_index),
        day_starts=_freeze(day_starts),
        daytime_mask=_freeze(mask.copy()),
        daytime_counts=_freeze(counts),
        degenerate_days=_freeze(degenerate),
    )


def _check_contiguous_daytime(mask: np.ndarray, day_starts: np.ndarray, n: int) -> None:
    bounds = np.append(day_starts, n)
    for d in range(len(day_starts)):
        day = mask[bounds[d]: bounds[d + 1]]
        # A single daytime block has at most one 0->1 transition.
        rises = np.count_nonzero(np.diff(day.astype(np.int8)) == 1)
        if rises + (1 if day[0] else 0) > 1:
            raise CoverageError(
                f"daylight flags are not contiguous within day ordinal {d}"
            )


@dataclass(frozen=True)
class IntervalSeries:
    """One metered channel of one customer, aligned to a calendar."""

    customer_id: str
    channel: Channel
    values: np.ndarray
    gap_mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(np.ascontiguousarray(self.values, dtype=np.float64)))
        object.__setattr__(self, "gap_mask", _freeze(np.ascontiguousarray(self.gap_mask, dtype=bool)))
        if self.values.shape != self.gap_mask.shape:
            raise ConfigurationError(
                f"{self.customer_id}/{self.channel.value}: values and gap_mask lengths differ"
            )

    def __len__(self) -> int:
        return self.values.size

    @property
    def n_gaps(self) -> int:
        return int(self.gap_mask.sum())


@dataclass(frozen=True)
class CustomerRecord:
    customer_id: str
    kind: CustomerKind
    channels: dict[Channel, IntervalSeries]

    def __post_init__(self):
        expected = KIND_CHANNELS[self.kind]
        present = set(self.channels)
        if present != expected:
            raise IngestionError(
                f"customer {self.customer_id}: kind {self.kind.value} requires channels "
                f"{sorted(c.value for c in expected)}, got {sorted(c.value for c in present)}"
            )
        for series in self.channels.values():
            if series.customer_id != self.customer_id:
                raise IngestionError(
                    f"series customer_id {series.customer_id} attached to {self.customer_id}"
                )

    def series(self, channel: Channel) -> IntervalSeries:
        return self.channels[channel]

    @property
    def is_solar(self) -> bool:
        return self.kind in SOLAR_KINDS


@dataclass
class ClampReport:
    """Outcome of sign canonicalization for one series."""

    clamped: int = 0          # values moved to zero, including float dust
    severe: int = 0           # clamps larger than SIGN_EPSILON_KWH
    flipped: bool = False


def kind_for_channels(channels: set[Channel]) -> CustomerKind:
    for kind, expected in KIND_CHANNELS.items():
        if channels == expected:
            return kind
    raise IngestionError(
        f"channel set {sorted(c.value for c in channels)} matches no customer kind"
    )


def _is_canonical(channel: Channel, values: np.ndarray, gaps: np.ndarray) -> bool:
    live = values[~gaps]
    if channel is Channel.NET_CONSUMPTION:
        return bool(np.all(live <= 0.0))
    return bool(np.all(live >= 0.0))


def canonicalize_signs(
    series: IntervalSeries,
    convention: SignConvention,
    max_clamp_fraction: float = DEFAULT_MAX_CLAMP_FRACTION,
) -> tuple[IntervalSeries, ClampReport]:
    """Convert a series to the canonical sign convention.

    Net consumption is flipped when the source convention records it
    positive; all other channels are magnitudes under either convention.
    Residual wrong-sign values are clamped to zero and counted; clamps
    larger than ``SIGN_EPSILON_KWH`` count toward ``max_clamp_fraction``,
    beyond which a data-quality error is raised.

    A series that already satisfies the canonical invariants passes through
    unchanged, which makes the operation idempotent.
    """
    report = ClampReport()
    values = series.values
    gaps = series.gap_mask
    if _is_canonical(series.channel, values, gaps):
        return series, report

    if series.channel is Channel.NET_CONSUMPTION:
        if convention is SignConvention.CONSUMPTION_POSITIVE:
            values = -values
            report.flipped = True
        bad = (values > 0.0) & ~gaps
        severe = (values > SIGN_EPSILON_KWH) & ~gaps
    else:
        bad = (values < 0.0) & ~gaps
        severe = (values < -SIGN_EPSILON_KWH) & ~gaps

    report.clamped = int(bad.sum())
    report.severe = int(severe.sum())
    live = int((~gaps).sum())
    if live and report.severe / live > max_clamp_fraction:
        raise DataQualityError(
            f"{series.customer_id}/{series.channel.value}: {report.severe} of {live} values "
            f"({report.severe / live:.1%}) violate the canonical sign beyond "
            f"{SIGN_EPSILON_KWH} kWh (limit {max_clamp_fraction:.1%})"
        )
    if report.clamped:
        if not values.flags.writeable:
            values = values.copy()
        values[bad] = 0.0
    out = IntervalSeries(series.customer_id, series.channel, values, gaps)
    return out, report


@dataclass(frozen=True)
class RawChannel:
    """Unaligned meter rows for one (customer, channel)."""

    customer_id: str
    channel: Channel
    timestamps: pd.DatetimeIndex
    values: np.ndarray


@dataclass
class AlignmentReport:
    unmatched: list = field(default_factory=list)  # (customer, channel, timestamp)
    gap_counts: dict = field(default_factory=dict)  # (customer, channel) -> count


def align_channel(
    raw: RawChannel, calendar: Calendar, report: AlignmentReport | None = None
) -> IntervalSeries:
    """Place raw rows onto the calendar grid, flagging gaps and duplicates."""
    n = calendar.n_intervals
    delta = raw.timestamps - calendar.start
    steps = delta / calendar.interval
    idx = np.asarray(steps).astype(np.int64)
    exact = np.asarray(steps == idx) & (idx >= 0) & (idx < n)

    matched_idx = idx[exact]
    order = np.argsort(matched_idx, kind="stable")
    sorted_idx = matched_idx[order]
    dup_pos = np.flatnonzero(np.diff(sorted_idx) == 0)
    if dup_pos.size:
        dups = sorted({calendar.timestamps[sorted_idx[p]] for p in dup_pos[:5]})
        shown = ", ".join(str(t) for t in dups)
        raise IngestionError(
            f"duplicate rows for customer {raw.customer_id} channel {raw.channel.value} "
            f"at {shown}" + (" ..." if dup_pos.size > 5 else "")
        )

    values = np.zeros(n, dtype=np.float64)
    gap = np.ones(n, dtype=bool)
    values[matched_idx] = raw.values[exact]
    gap[matched_idx] = False

    if report is not None:
        for t in raw.timestamps[~exact][:20]:
            report.unmatched.append((raw.customer_id, raw.channel.value, t))
        report.gap_counts[(raw.customer_id, raw.channel.value)] = int(gap.sum())
    return IntervalSeries(raw.customer_id, raw.channel, values, gap)


def align_customer(
    customer_id: str,
    raw_channels: list[RawChannel],
    calendar: Calendar,
    convention: SignConvention = SignConvention.CONSUMPTION_NEGATIVE,
    report: AlignmentReport | None = None,
    clamp_reports: dict | None = None,
) -> CustomerRecord:
    """Align all channels of one customer and canonicalize signs."""
    channels = {}
    for raw in raw_channels:
        series = align_channel(raw, calendar, report)
        series, clamp = canonicalize_signs(series, convention)
        if clamp_reports is not None:
            clamp_reports[(customer_id, raw.channel.value)] = clamp
        channels[raw.channel] = series
    kind = kind_for_channels(set(channels))
    return CustomerRecord(customer_id, kind, channels)


@dataclass(frozen=True)
class WeatherObservations:
    """Raw station observations: condition strings at observation times."""

    times: pd.DatetimeIndex
    conditions: tuple[str, ...]
    daylight: np.ndarray | None = None  # optional 0/1 flags per observation

    def __post_init__(self):
        if len(self.times) != len(self.conditions):
            raise ConfigurationError("weather times and conditions lengths differ")
        if self.daylight is not None and len(self.daylight) != len(self.times):
            raise ConfigurationError("weather daylight column length differs")

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class Dataset:
    """Aligned customers plus the calendar and raw weather they share."""

    calendar: Calendar
    customers: dict[str, CustomerRecord]
    weather: WeatherObservations | None = None

    def __post_init__(self):
        n = self.calendar.n_intervals
        for rec in self.customers.values():
            for series in rec.channels.values():
                if len(series) != n:
                    raise ConfigurationError(
                        f"customer {rec.customer_id} channel {series.channel.value}: "
                        f"length {len(series)} != calendar {n}"
                    )

    def solar_ids(self) -> list[str]:
        return sorted(cid for cid, r in self.customers.items() if r.is_solar)

    def nonsolar_ids(self) -> list[str]:
        return sorted(cid for cid, r in self.customers.items() if not r.is_solar)

    def consumption_matrix(self, ids: list[str]) -> tuple[np.ndarray, np.ndarray]:
        """Stack net-consumption values and gap masks for the given customers."""
        vals = np.empty((len(ids), self.calendar.n_intervals), dtype=np.float64)
        gaps = np.empty((len(ids), self.calendar.n_intervals), dtype=bool)
        for k, cid in enumerate(ids):
            s = self.customers[cid].series(Channel.NET_CONSUMPTION)
            vals[k] = s.values
            gaps[k] = s.gap_mask
        return vals, gaps
