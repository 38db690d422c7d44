"""Weighted annual usage-difference matrix and similar-set selection.

For every (solar, non-solar) customer pair the absolute net-consumption
difference is summed over daytime intervals of each day, weighted by the
day's averaged similarity weight, and accumulated over the year. Rainy
days dominate by construction: with no PV output the two profiles are
directly comparable, so a small weighted distance means genuinely similar
native usage. Each solar customer's similar set is the pool of non-solar
customers whose distance sits at least one standard deviation below the
median of that customer's row.

This is the compute-bound stage. Rows are processed as whole numpy blocks
(one solar customer against every non-solar customer at once) and solar
rows are farmed out to a thread pool; every pair's accumulation order is
fixed, so results are bit-identical for any worker count.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Calendar, Channel, Dataset, IntervalSeries
from .errors import ConfigurationError, InsufficientPoolError
from .weather import DailyWeight

log = logging.getLogger(__name__)

#: A day is dropped for a pair when either side has more than this fraction
#: of its daytime intervals missing.
DEFAULT_GAP_DAY_FRACTION = 0.5


@dataclass(frozen=True)
class DailyDifference:
    """Per-day daytime difference sums for one customer pair."""

    values: np.ndarray    # (n_days,) kWh; 0 contribution on excluded days
    retained: np.ndarray  # (n_days,) bool

    @property
    def excluded_count(self) -> int:
        return int((~self.retained).sum())


@dataclass(frozen=True)
class SimilarityMatrix:
    """Dense weighted distances, solar rows by non-solar columns."""

    solar_ids: tuple[str, ...]
    nonsolar_ids: tuple[str, ...]
    delta: np.ndarray          # (n_solar, n_nonsolar) kWh; NaN = no retained days
    excluded_days: np.ndarray  # (n_solar, n_nonsolar) int

    def row(self, solar_id: str) -> np.ndarray:
        return self.delta[self.solar_ids.index(solar_id)]


@dataclass(frozen=True)
class SelectionRule:
    sigma_kind: str = "sample"  # "sample" (n-1 divisor) or "population"
    fallback_k: int = 10

    def __post_init__(self):
        if self.sigma_kind not in ("sample", "population"):
            raise ConfigurationError(f"sigma_kind must be sample or population, got {self.sigma_kind!r}")
        if self.fallback_k < 1:
            raise ConfigurationError(f"fallback_k must be >= 1, got {self.fallback_k}")


@dataclass(frozen=True)
class NeighborSet:
    solar_customer_id: str
    members: tuple[str, ...]
    member_deltas: tuple[float, ...]
    threshold: float
    fallback_used: bool

    def __post_init__(self):
        if not self.members:
            raise ConfigurationError(
                f"neighbor set for {self.solar_customer_id} is empty; fallback should prevent this"
            )


def _daytime_gap_days(gaps: np.ndarray, calendar: Calendar) -> np.ndarray:
    """Count per-day daytime gaps; works on (n,) or (k, n) boolean arrays."""
    flagged = (gaps & calendar.daytime_mask).astype(np.float64)
    return np.add.reduceat(flagged, calendar.day_starts, axis=-1)


def pair_daily_difference(
    u_i: IntervalSeries,
    u_j: IntervalSeries,
    calendar: Calendar,
    gap_day_fraction: float = DEFAULT_GAP_DAY_FRACTION,
) -> DailyDifference:
    """Daily daytime sums of |u_i - u_j| with the gap-exclusion rule applied.

    Gapped intervals on either side never contribute. A day where either
    customer is missing more than ``gap_day_fraction`` of its daytime
    intervals is excluded outright for this pair.
    """
    for s in (u_i, u_j):
        if len(s) != calendar.n_intervals:
            raise ConfigurationError(
                f"series {s.customer_id} length {len(s)} does not match calendar "
                f"{calendar.n_intervals}"
            )
        if s.channel is not Channel.NET_CONSUMPTION:
            raise ConfigurationError(
                f"pair differences need net_consumption, got {s.channel.value} for {s.customer_id}"
            )
    valid = calendar.daytime_mask & ~u_i.gap_mask & ~u_j.gap_mask
    buf = np.abs(u_i.values - u_j.values) * valid
    day_sums = np.add.reduceat(buf, calendar.day_starts)
    limit = gap_day_fraction * calendar.daytime_counts
    excluded = (_daytime_gap_days(u_i.gap_mask, calendar) > limit) | (
        _daytime_gap_days(u_j.gap_mask, calendar) > limit
    )
    return DailyDifference(values=day_sums, retained=~excluded)


def weighted_annual_difference(daily: DailyDifference, weights: DailyWeight) -> float:
    """Sum of day weight times daily difference, accumulated day by day.

    Returns NaN when no day survived the gap rule: an all-excluded pair is
    unknown, not perfectly similar.
    """
    if daily.values.shape != weights.values.shape:
        raise ConfigurationError(
            f"daily differences cover {daily.values.size} days, weights {weights.values.size}"
        )
    if not daily.retained.any():
        return float("nan")
    terms = daily.values * weights.values * daily.retained
    return float(np.cumsum(terms)[-1])


def similarity_matrix(
    dataset: Dataset,
    weights: DailyWeight,
    workers: int = 1,
    gap_day_fraction: float = DEFAULT_GAP_DAY_FRACTION,
) -> SimilarityMatrix:
    """Weighted annual distance from every solar to every non-solar customer.

    One task per solar customer computes the whole row against a stacked
    non-solar block. Day totals are accumulated in chronological order per
    pair and rows land in disjoint output slices, so the matrix is
    bit-identical for any ``workers`` value.
    """
    solar_ids = dataset.solar_ids()
    nonsolar_ids = dataset.nonsolar_ids()
    if not solar_ids or not nonsolar_ids:
        raise ConfigurationError(
            f"similarity needs both pools populated: {len(solar_ids)} solar, "
            f"{len(nonsolar_ids)} non-solar"
        )
    calendar = dataset.calendar
    if weights.values.size != calendar.n_days:
        raise ConfigurationError(
            f"daily weights cover {weights.values.size} days, calendar has {calendar.n_days}"
        )

    ns_vals, ns_gaps = dataset.consumption_matrix(nonsolar_ids)
    ns_gapdays = _daytime_gap_days(ns_gaps, calendar)
    limit = gap_day_fraction * calendar.daytime_counts
    ns_bad = ns_gapdays > limit  # (n_ns, n_days)
    ns_valid = ~ns_gaps & calendar.daytime_mask  # shared, read-only across rows
    day_weights = weights.values

    n_s, n_ns = len(solar_ids), len(nonsolar_ids)
    delta = np.empty((n_s, n_ns), dtype=np.float64)
    excluded = np.empty((n_s, n_ns), dtype=np.int64)

    def compute_row(i: int) -> None:
        s = dataset.customers[solar_ids[i]].series(Channel.NET_CONSUMPTION)
        valid = ns_valid & ~s.gap_mask
        buf = np.abs(ns_vals - s.values) * valid
        day_sums = np.add.reduceat(buf, calendar.day_starts, axis=1)
        dropped = ns_bad | (_daytime_gap_days(s.gap_mask, calendar) > limit)
        weighted = day_sums * day_weights * ~dropped
        totals = np.cumsum(weighted, axis=1)[:, -1]
        totals[dropped.all(axis=1)] = np.nan
        delta[i] = totals
        excluded[i] = dropped.sum(axis=1)

    if workers > 1 and n_s > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(compute_row, range(n_s)))
    else:
        for i in range(n_s):
            compute_row(i)

    finite = delta[np.isfinite(delta)]
    if finite.size and finite.min() < 0:
        raise ConfigurationError("negative distance computed; inputs violate sign contract")
    log.info("similarity matrix %dx%d: %d invalid pairs, max delta %.1f kWh",
             n_s, n_ns, int(np.isnan(delta).sum()), finite.max() if finite.size else float("nan"))
    return SimilarityMatrix(
        solar_ids=tuple(solar_ids),
        nonsolar_ids=tuple(nonsolar_ids),
        delta=delta,
        excluded_days=excluded,
    )


def select_neighbors(
    solar_id: str,
    nonsolar_ids: tuple[str, ...],
    row: np.ndarray,
    rule: SelectionRule | None = None,
) -> NeighborSet:
    """Similar set for one solar customer from its distance row.

    Members are everyone at least one standard deviation below the row
    median (ties at the threshold included). When that set is empty the
    ``fallback_k`` nearest customers are taken instead.
    """
    rule = rule or SelectionRule()
    valid = np.isfinite(row)
    n_valid = int(valid.sum())
    if n_valid < 2:
        raise InsufficientPoolError(
            f"{solar_id}: only {n_valid} valid distances; need at least 2 to select neighbors"
        )
    values = row[valid]
    ids = np.asarray(nonsolar_ids, dtype=object)[valid]
    med = float(np.median(values))
    ddof = 1 if rule.sigma_kind == "sample" else 0
    sigma = float(np.std(values, ddof=ddof))
    threshold = med - sigma

    chosen = values <= threshold
    fallback = not chosen.any()
    if fallback:
        k = min(rule.fallback_k, n_valid)
        order = np.lexsort((ids, values))
        pick = order[:k]
    else:
        pick = np.flatnonzero(chosen)
        pick = pick[np.lexsort((ids[pick], values[pick]))]
    return NeighborSet(
        solar_customer_id=solar_id,
        members=tuple(str(x) for x in ids[pick]),
        member_deltas=tuple(float(x) for x in values[pick]),
        threshold=threshold,
        fallback_used=fallback,
    )


def select_all_neighbors(
    matrix: SimilarityMatrix, rule: SelectionRule | None = None
) -> dict[str, NeighborSet]:
    out = {}
    for i, solar_id in enumerate(matrix.solar_ids):
        out[solar_id] = select_neighbors(solar_id, matrix.nonsolar_ids, matrix.delta[i], rule)
    n_fallback = sum(ns.fallback_used for ns in out.values())
    sizes = [len(ns.members) for ns in out.values()]
    log.info("selected neighbors for %d solar customers: sizes %d..%d, %d fallbacks",
             len(out), min(sizes), max(sizes), n_fallback)
    return out


def write_matrix_csv(path: str | Path, matrix: SimilarityMatrix) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["solar_id", "nonsolar_id", "delta_kwh", "excluded_days"])
        for i, sid in enumerate(matrix.solar_ids):
            for j, nid in enumerate(matrix.nonsolar_ids):
                writer.writerow([sid, nid, repr(float(matrix.delta[i, j])),
                                 int(matrix.excluded_days[i, j])])


def write_neighbors_csv(path: str | Path, neighbor_sets: dict[str, NeighborSet]) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["solar_id", "member_id", "delta_kwh", "threshold", "fallback_used"])
        for sid in sorted(neighbor_sets):
            ns = neighbor_sets[sid]
            for member, d in zip(ns.members, ns.member_deltas):
                writer.writerow([sid, member, repr(d), repr(ns.threshold),
                                 int(ns.fallback_used)])


def read_neighbors_csv(path: str | Path) -> dict[str, NeighborSet]:
    """Rebuild neighbor sets from a previous dump."""
    import pandas as pd

    from .errors import InputFileError, ParseError

    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype={"solar_id": str, "member_id": str})
    except FileNotFoundError as exc:
        raise InputFileError(f"neighbor file not found: {path}") from exc
    expected = ["solar_id", "member_id", "delta_kwh", "threshold", "fallback_used"]
    if list(frame.columns) != expected:
        raise ParseError(f"{path}: expected columns {expected}, got {list(frame.columns)}")
    out = {}
    for sid, sub in frame.groupby("solar_id", sort=True):
        out[str(sid)] = NeighborSet(
            solar_customer_id=str(sid),
            members=tuple(sub["member_id"]),
            member_deltas=tuple(float(x) for x in sub["delta_kwh"]),
            threshold=float(sub["threshold"].iloc[0]),
            fallback_used=bool(sub["fallback_used"].iloc[0]),
        )
    return out
