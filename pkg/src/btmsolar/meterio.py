"""CSV readers and writers for meter, weather, and ground-truth files.

All files are headered CSV. Lines starting with ``#`` are treated as
comments so generated files can record their seed and generator. Timestamps
are ISO-8601 with at most a fixed UTC offset; mixed offsets are rejected.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .core import (
    AlignmentReport,
    Calendar,
    Channel,
    ClampReport,
    CustomerRecord,
    Dataset,
    DaytimeSpec,
    RawChannel,
    SignConvention,
    WeatherObservations,
    align_customer,
    build_calendar,
)
from .errors import CoverageError, InputFileError, ParseError

log = logging.getLogger(__name__)

METER_COLUMNS = ["timestamp", "customer_id", "channel", "value_kwh"]
WEATHER_COLUMNS = ["timestamp", "condition"]
TRUTH_COLUMNS = ["timestamp", "customer_id", "total_generation_kwh"]

#: Channels a meter file may carry; native load is always derived, never read.
METER_CHANNELS = {
    Channel.NET_CONSUMPTION.value,
    Channel.NET_GENERATION.value,
    Channel.TOTAL_GENERATION.value,
}


def _read_csv(path: str | Path, required: list[str], optional: tuple = ()) -> pd.DataFrame:
    path = Path(path)
    try:
        frame = pd.read_csv(path, comment="#", dtype=str, skip_blank_lines=True)
    except FileNotFoundError as exc:
        raise InputFileError(f"input file not found: {path}") from exc
    except PermissionError as exc:
        raise InputFileError(f"input file not readable: {path}") from exc
    except pd.errors.EmptyDataError as exc:
        raise ParseError(f"{path}: file is empty") from exc
    except pd.errors.ParserError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise ParseError(f"{path}: missing required columns {missing}, header {list(frame.columns)}")
    unknown = [c for c in frame.columns if c not in required and c not in optional]
    if unknown:
        raise ParseError(f"{path}: unexpected columns {unknown}")
    if frame.empty:
        raise ParseError(f"{path}: no data rows")
    return frame


def _parse_timestamps(raw: pd.Series, path: Path) -> pd.DatetimeIndex:
    try:
        ts = pd.to_datetime(raw, format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise ParseError(f"{path}: unparseable timestamp ({exc})") from exc
    idx = pd.DatetimeIndex(ts)
    if idx.dtype == object:
        raise ParseError(f"{path}: timestamps mix UTC offsets; a single fixed offset is required")
    if idx.isna().any():
        bad = int(idx.isna().sum())
        raise ParseError(f"{path}: {bad} empty or invalid timestamps")
    return idx


def _parse_floats(raw: pd.Series, path: Path, column: str) -> np.ndarray:
    # numpy's string conversion is correctly rounded, so values written with
    # repr() read back bit-exact; pandas' fast parser can be an ulp off.
    try:
        values = raw.to_numpy(dtype=np.float64)
    except (ValueError, TypeError):
        coerced = pd.to_numeric(raw, errors="coerce")
        pos = int(coerced.isna().to_numpy().argmax())
        raise ParseError(
            f"{path}: non-numeric {column} value {raw.iloc[pos]!r} (row {pos + 2})"
        ) from None
    if not np.isfinite(values).all():
        pos = int(np.flatnonzero(~np.isfinite(values))[0])
        raise ParseError(f"{path}: non-finite {column} value (row {pos + 2})")
    return values


def read_meter_csv(path: str | Path) -> list[RawChannel]:
    """Read a long-format meter file into per-(customer, channel) row groups."""
    path = Path(path)
    frame = _read_csv(path, METER_COLUMNS)
    bad = set(frame["channel"]) - METER_CHANNELS
    if bad:
        raise ParseError(f"{path}: unknown meter channels {sorted(bad)}")
    times = _parse_timestamps(frame["timestamp"], path)
    values = _parse_floats(frame["value_kwh"], path, "value_kwh")

    raws = []
    keys = pd.MultiIndex.from_arrays([frame["customer_id"], frame["channel"]])
    for (cid, chan), sub in pd.Series(np.arange(len(frame)), index=keys).groupby(level=[0, 1], sort=True):
        rows = sub.to_numpy()
        raws.append(
            RawChannel(
                customer_id=str(cid),
                channel=Channel(chan),
                timestamps=times[rows],
                values=values[rows],
            )
        )
    log.info("read %d meter rows for %d customer-channels from %s",
             len(frame), len(raws), path)
    return raws


def read_weather_csv(path: str | Path) -> WeatherObservations:
    path = Path(path)
    frame = _read_csv(path, WEATHER_COLUMNS, optional=("daylight",))
    times = _parse_timestamps(frame["timestamp"], path)
    if not times.is_monotonic_increasing:
        order = np.argsort(times.values, kind="stable")
        frame = frame.iloc[order]
        times = times[order]
    daylight = None
    if "daylight" in frame.columns:
        flags = pd.to_numeric(frame["daylight"], errors="coerce")
        if flags.isna().any() or not set(np.unique(flags)) <= {0.0, 1.0}:
            raise ParseError(f"{path}: daylight column must contain only 0 or 1")
        daylight = flags.to_numpy(dtype=np.float64).astype(bool)
    conditions = tuple(str(c).strip() for c in frame["condition"])
    if any(not c for c in conditions):
        raise ParseError(f"{path}: empty condition string")
    return WeatherObservations(times=times, conditions=conditions, daylight=daylight)


def read_truth_csv(path: str | Path) -> list[RawChannel]:
    """Read ground-truth total generation, one RawChannel per customer."""
    path = Path(path)
    frame = _read_csv(path, TRUTH_COLUMNS)
    times = _parse_timestamps(frame["timestamp"], path)
    values = _parse_floats(frame["total_generation_kwh"], path, "total_generation_kwh")
    raws = []
    series = pd.Series(np.arange(len(frame)), index=frame["customer_id"])
    for cid, sub in series.groupby(level=0, sort=True):
        rows = sub.to_numpy()
        raws.append(
            RawChannel(
                customer_id=str(cid),
                channel=Channel.TOTAL_GENERATION,
                timestamps=times[rows],
                values=values[rows],
            )
        )
    return raws


def infer_grid(times: pd.DatetimeIndex) -> tuple[pd.Timestamp, pd.Timedelta, int]:
    """Infer (start, interval, n_intervals) from observed meter timestamps.

    The interval is the smallest positive spacing between distinct
    timestamps; every timestamp must then land on the implied grid.
    """
    uniq = times.unique().sort_values()
    if len(uniq) < 2:
        raise ParseError("cannot infer interval length from fewer than 2 distinct timestamps")
    diffs = np.diff(uniq.values)
    interval = pd.Timedelta(diffs.min())
    if interval <= pd.Timedelta(0):
        raise ParseError("non-increasing timestamps after deduplication")
    span = uniq[-1] - uniq[0]
    steps, rem = divmod(span, interval)
    if rem != pd.Timedelta(0):
        raise ParseError(
            f"meter timestamps do not form a regular grid: span {span} "
            f"is not a multiple of the inferred interval {interval}"
        )
    offsets = (uniq - uniq[0]) / interval
    if not np.array_equal(np.asarray(offsets), np.asarray(offsets).astype(np.int64)):
        raise ParseError("meter timestamps are not aligned to the inferred interval grid")
    return uniq[0], interval, int(steps) + 1


def daylight_flags_for(calendar_times: pd.DatetimeIndex, obs: WeatherObservations) -> np.ndarray:
    """Step-hold observation daylight flags onto a calendar grid."""
    pos = obs.times.searchsorted(calendar_times, side="right") - 1
    pos = np.clip(pos, 0, len(obs) - 1)
    return obs.daylight[pos]


@dataclass
class IngestReport:
    """What happened while loading a dataset: gaps, clamps, off-grid rows."""

    alignment: AlignmentReport = field(default_factory=AlignmentReport)
    clamps: dict[tuple, ClampReport] = field(default_factory=dict)
    n_customers: int = 0

    def log_summary(self) -> None:
        gaps = sum(self.alignment.gap_counts.values())
        clamped = sum(r.clamped for r in self.clamps.values())
        log.info("ingested %d customers; %d gap intervals, %d sign clamps, %d off-grid rows",
                 self.n_customers, gaps, clamped, len(self.alignment.unmatched))


def load_dataset(
    meter_path: str | Path,
    weather_path: str | Path,
    daytime: DaytimeSpec | None = None,
    convention: SignConvention = SignConvention.CONSUMPTION_NEGATIVE,
    truth_path: str | Path | None = None,
) -> tuple[Dataset, IngestReport]:
    """Load and align a meter file plus its weather file into a Dataset.

    The calendar grid is inferred from the meter timestamps. When the
    weather file carries a daylight column it overrides any configured
    daytime window; otherwise the supplied (or default) window applies.
    Ground truth, when given, is attached as the total_generation channel
    of each listed customer and must not conflict with metered channels.
    """
    raws = read_meter_csv(meter_path)
    obs = read_weather_csv(weather_path)

    all_times = raws[0].timestamps.append([r.timestamps for r in raws[1:]])
    start, interval, n = infer_grid(all_times)

    daytime = daytime or DaytimeSpec()
    if obs.daylight is not None:
        grid_times = pd.date_range(start, periods=n, freq=interval)
        daytime = DaytimeSpec(flags=daylight_flags_for(grid_times, obs))
    calendar = build_calendar(start, n, interval, daytime)
    if calendar.degenerate_days.size:
        days = [str(calendar.day_dates[d]) for d in calendar.degenerate_days[:5]]
        raise CoverageError(
            f"{calendar.degenerate_days.size} days have no daytime intervals: {days}"
        )

    by_customer: dict[str, list[RawChannel]] = {}
    for raw in raws:
        by_customer.setdefault(raw.customer_id, []).append(raw)
    if truth_path is not None:
        for raw in read_truth_csv(truth_path):
            group = by_customer.get(raw.customer_id)
            if group is None:
                raise ParseError(
                    f"truth file names unknown customer {raw.customer_id}"
                )
            if any(r.channel is Channel.TOTAL_GENERATION for r in group):
                # Customer already meters its total generation; the truth
                # file duplicates it, so the metered channel wins.
                log.debug("truth rows for %s ignored: total_generation metered",
                          raw.customer_id)
                continue
            group.append(raw)

    report = IngestReport()
    customers = {}
    for cid in sorted(by_customer):
        customers[cid] = align_customer(
            cid, by_customer[cid], calendar, convention,
            report.alignment, report.clamps,
        )
    report.n_customers = len(customers)
    report.log_summary()
    return Dataset(calendar=calendar, customers=customers, weather=obs), report


def _fmt(value: float) -> str:
    """Shortest decimal form that round-trips the float exactly."""
    return repr(float(value))


def write_meter_csv(path: str | Path, rows, header_comment: str | None = None) -> None:
    """Write meter rows. ``rows`` yields (timestamp, customer_id, channel, value)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(METER_COLUMNS)
        for ts, cid, chan, value in rows:
            writer.writerow([ts.isoformat(), cid, chan, _fmt(value)])


def write_weather_csv(path: str | Path, obs: WeatherObservations,
                      header_comment: str | None = None) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        if obs.daylight is not None:
            writer.writerow(WEATHER_COLUMNS + ["daylight"])
            for ts, cond, day in zip(obs.times, obs.conditions, obs.daylight):
                writer.writerow([ts.isoformat(), cond, int(day)])
        else:
            writer.writerow(WEATHER_COLUMNS)
            for ts, cond in zip(obs.times, obs.conditions):
                writer.writerow([ts.isoformat(), cond])


def write_truth_csv(path: str | Path, rows, header_comment: str | None = None) -> None:
    """Write truth rows. ``rows`` yields (timestamp, customer_id, value)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(TRUTH_COLUMNS)
        for ts, cid, value in rows:
            writer.writerow([ts.isoformat(), cid, _fmt(value)])
