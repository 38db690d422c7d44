"""Native-consumption estimation and generation correction for solar customers.

A solar customer's metered net consumption understates true usage whenever
self-consumed PV offsets load. The estimate of what the customer would have
consumed without PV is the per-interval mean over its similar non-solar
set. Wherever metered consumption sits above that estimate, the shortfall
is re-attributed to generation as a non-negative correction.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Calendar, Channel, Dataset
from .errors import ConfigurationError
from .similarity import NeighborSet

log = logging.getLogger(__name__)

RECON_COLUMNS = [
    "timestamp", "customer_id", "u_kwh", "u_hat_kwh", "v_kwh",
    "w_kwh", "g_hat_kwh", "native_hat_kwh",
]


@dataclass(frozen=True)
class ReconstructionResult:
    """Per-interval reconstruction for one solar customer.

    Invariants: w = max(0, u - u_hat) with w forced to 0 where the inputs
    were unusable; g_hat = v + w; native_hat = |u| + w, so the recovered
    energy g_hat - v always equals the added consumption native_hat - |u|.
    """

    solar_customer_id: str
    u: np.ndarray
    u_hat: np.ndarray
    u_hat_gaps: np.ndarray      # intervals where every neighbor was gapped
    v: np.ndarray
    w: np.ndarray
    g_hat: np.ndarray
    native_hat: np.ndarray
    actual: np.ndarray | None = None  # metered total generation, when present
    suppressed_corrections: int = 0   # intervals with w forced to 0 by gaps
    night_corrections: int = 0        # nonzero w outside daytime

    @property
    def recovered_kwh(self) -> float:
        return float(self.w.sum())


def estimate_native(neighbors: NeighborSet, dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Per-interval mean of the neighbor set's net consumption.

    Gapped neighbor intervals drop out of the mean; an interval where every
    neighbor is gapped is returned as 0 with its gap flag set.
    """
    n = dataset.calendar.n_intervals
    k = len(neighbors.members)
    sums = np.zeros(n, dtype=np.float64)
    counts = np.zeros(n, dtype=np.int64)
    for member in neighbors.members:
        record = dataset.customers.get(member)
        if record is None:
            raise ConfigurationError(
                f"neighbor {member} of {neighbors.solar_customer_id} not in dataset"
            )
        s = record.series(Channel.NET_CONSUMPTION)
        present = ~s.gap_mask
        sums += np.where(present, s.values, 0.0)
        counts += present
    all_gapped = counts == 0
    u_hat = np.divide(sums, counts, out=np.zeros(n), where=~all_gapped)
    if all_gapped.any():
        log.debug("%s: %d intervals with all %d neighbors gapped",
                  neighbors.solar_customer_id, int(all_gapped.sum()), k)
    return u_hat, all_gapped


def correct_generation(
    u: np.ndarray,
    u_hat: np.ndarray,
    v: np.ndarray,
    solar_customer_id: str = "",
    u_hat_gaps: np.ndarray | None = None,
    own_gaps: np.ndarray | None = None,
    calendar: Calendar | None = None,
    actual: np.ndarray | None = None,
) -> ReconstructionResult:
    """Apply the non-negative correction w = max(0, u - u_hat).

    Intervals where the estimate is a gap, or the customer's own meters
    are gapped, keep w = 0 (no correction can be justified there) and are
    counted. Corrections landing outside daytime are retained but counted
    as a neighbor-mismatch indicator.
    """
    u = np.asarray(u, dtype=np.float64)
    u_hat = np.asarray(u_hat, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if not (u.shape == u_hat.shape == v.shape):
        raise ConfigurationError(
            f"{solar_customer_id}: u, u_hat, v shapes differ: "
            f"{u.shape}, {u_hat.shape}, {v.shape}"
        )
    if (u > 0).any() or (u_hat > 0).any():
        raise ConfigurationError(f"{solar_customer_id}: consumption series must be <= 0")
    if (v < 0).any():
        raise ConfigurationError(f"{solar_customer_id}: net generation must be >= 0")

    w = np.maximum(0.0, u - u_hat)
    suppressed = 0
    unusable = np.zeros(u.shape, dtype=bool)
    if u_hat_gaps is not None:
        unusable |= u_hat_gaps
    if own_gaps is not None:
        unusable |= own_gaps
    if unusable.any():
        suppressed = int((w[unusable] > 0).sum())
        w[unusable] = 0.0

    night = 0
    if calendar is not None:
        night = int((w[~calendar.daytime_mask] > 0).sum())

    g_hat = v + w
    native_hat = np.abs(u) + w
    return ReconstructionResult(
        solar_customer_id=solar_customer_id,
        u=u,
        u_hat=u_hat,
        u_hat_gaps=(u_hat_gaps if u_hat_gaps is not None else np.zeros(u.shape, dtype=bool)),
        v=v,
        w=w,
        g_hat=g_hat,
        native_hat=native_hat,
        actual=actual,
        suppressed_corrections=suppressed,
        night_corrections=night,
    )


def reconstruct_customer(
    solar_id: str, neighbors: NeighborSet, dataset: Dataset
) -> ReconstructionResult:
    record = dataset.customers[solar_id]
    u_series = record.series(Channel.NET_CONSUMPTION)
    v_series = record.series(Channel.NET_GENERATION)
    u_hat, u_hat_gaps = estimate_native(neighbors, dataset)
    actual = None
    if Channel.TOTAL_GENERATION in record.channels:
        actual = record.series(Channel.TOTAL_GENERATION).values
    return correct_generation(
        u_series.values,
        u_hat,
        v_series.values,
        solar_customer_id=solar_id,
        u_hat_gaps=u_hat_gaps,
        own_gaps=u_series.gap_mask | v_series.gap_mask,
        calendar=dataset.calendar,
        actual=actual,
    )


def reconstruct_all(
    dataset: Dataset,
    neighbor_sets: dict[str, NeighborSet],
    workers: int = 1,
) -> dict[str, ReconstructionResult]:
    """Reconstruct every solar customer; parallel over customers."""
    solar_ids = dataset.solar_ids()
    missing = [sid for sid in solar_ids if sid not in neighbor_sets]
    if missing:
        raise ConfigurationError(f"no neighbor set for solar customers {missing[:5]}")

    def run(sid: str) -> ReconstructionResult:
        return reconstruct_customer(sid, neighbor_sets[sid], dataset)

    if workers > 1 and len(solar_ids) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, solar_ids))
    else:
        results = [run(sid) for sid in solar_ids]
    out = {r.solar_customer_id: r for r in results}
    total_w = sum(r.recovered_kwh for r in results)
    log.info("reconstructed %d solar customers, recovered %.1f kWh total", len(out), total_w)
    return out


def write_reconstruction_csv(
    path: str | Path, results: dict[str, ReconstructionResult], calendar: Calendar
) -> None:
    times = [t.isoformat() for t in calendar.timestamps]
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECON_COLUMNS)
        for sid in sorted(results):
            r = results[sid]
            for t in range(calendar.n_intervals):
                writer.writerow([
                    times[t], sid,
                    repr(float(r.u[t])), repr(float(r.u_hat[t])),
                    repr(float(r.v[t])), repr(float(r.w[t])),
                    repr(float(r.g_hat[t])), repr(float(r.native_hat[t])),
                ])
