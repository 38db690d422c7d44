"""Validation metrics against metered total generation.

Customers whose true total generation is metered anchor the evaluation:
how much of the real generation does the raw net-generation meter capture,
and how much does the reconstruction recover? Errors are reported as
annual percent error per customer, monthly MAPE across customers, and an
hour-by-month MAPE grid whose net-minus-estimated difference is positive
wherever reconstruction helped.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Calendar
from .errors import ConfigurationError, NoTruthError
from .reconstruction import ReconstructionResult

log = logging.getLogger(__name__)

N_HOURS = 24
N_MONTHS = 12


def capture_ratio(candidates: dict[str, np.ndarray], actuals: dict[str, np.ndarray]) -> float:
    """Total candidate energy over total actual energy across all customers."""
    if set(candidates) != set(actuals):
        raise ConfigurationError(
            f"capture ratio needs matching customer sets, got {len(candidates)} vs {len(actuals)}"
        )
    if not actuals:
        raise NoTruthError("capture ratio needs at least one customer with actual generation")
    total_actual = sum(float(a.sum()) for a in actuals.values())
    if total_actual <= 0:
        raise ConfigurationError("capture ratio undefined: actual generation sums to zero")
    total_candidate = sum(float(c.sum()) for c in candidates.values())
    return total_candidate / total_actual


def annual_percent_error(
    candidates: dict[str, np.ndarray], actuals: dict[str, np.ndarray]
) -> tuple[dict[str, float], list[str]]:
    """Per-customer 100 x (actual - candidate) / actual on annual sums.

    Overestimates come out negative rather than clipped. Customers with
    zero actual annual generation cannot be scored and are returned in the
    excluded list.
    """
    errors = {}
    excluded = []
    for cid in sorted(actuals):
        actual = float(actuals[cid].sum())
        if actual <= 0:
            excluded.append(cid)
            continue
        candidate = float(candidates[cid].sum())
        errors[cid] = 100.0 * (actual - candidate) / actual
    return errors, excluded


def _mean_sd(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return float("nan"), float("nan")
    sd = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), sd


def monthly_mape(
    candidates: dict[str, np.ndarray],
    actuals: dict[str, np.ndarray],
    calendar: Calendar,
) -> np.ndarray:
    """Percent error of monthly energy, averaged across customers.

    Entry m is the mean over customers of 100 x |actual_m - candidate_m| /
    actual_m, skipping customers with no actual energy that month. Months
    where nobody qualifies are NaN.
    """
    month_idx = calendar.month_of_interval() - 1
    sums = np.zeros(N_MONTHS)
    counts = np.zeros(N_MONTHS, dtype=np.int64)
    for cid in sorted(actuals):
        a_m = np.bincount(month_idx, weights=actuals[cid], minlength=N_MONTHS)
        c_m = np.bincount(month_idx, weights=candidates[cid], minlength=N_MONTHS)
        ok = a_m > 0
        sums[ok] += 100.0 * np.abs(a_m[ok] - c_m[ok]) / a_m[ok]
        counts[ok] += 1
    return np.divide(sums, counts, out=np.full(N_MONTHS, np.nan), where=counts > 0)


def hour_month_mape_grid(
    candidates: dict[str, np.ndarray],
    actuals: dict[str, np.ndarray],
    calendar: Calendar,
    capacity_norm: bool = False,
) -> np.ndarray:
    """Hour-of-day by month MAPE grid (24 x 12), averaged across customers.

    Bucket energy per customer feeds 100 x |actual - candidate| / actual;
    with ``capacity_norm`` the denominator becomes the bucket's maximum
    producible energy at the customer's apparent capacity, which keeps
    low-sun buckets from exploding. Buckets no customer can score are NaN.
    """
    hours = calendar.hour_of_interval()
    months = calendar.month_of_interval() - 1
    bucket = hours * N_MONTHS + months
    n_buckets = N_HOURS * N_MONTHS
    bucket_intervals = np.bincount(bucket, minlength=n_buckets)

    sums = np.zeros(n_buckets)
    counts = np.zeros(n_buckets, dtype=np.int64)
    for cid in sorted(actuals):
        a_b = np.bincount(bucket, weights=actuals[cid], minlength=n_buckets)
        c_b = np.bincount(bucket, weights=candidates[cid], minlength=n_buckets)
        if capacity_norm:
            peak = float(actuals[cid].max())
            denom = peak * bucket_intervals
        else:
            denom = a_b
        ok = denom > 0
        sums[ok] += 100.0 * np.abs(a_b[ok] - c_b[ok]) / denom[ok]
        counts[ok] += 1
    grid = np.divide(sums, counts, out=np.full(n_buckets, np.nan), where=counts > 0)
    return grid.reshape(N_HOURS, N_MONTHS)


@dataclass
class ValidationReport:
    """Everything the validation run measured, ready for CSV emission."""

    customers_used: list[str]
    customers_excluded: list[str]
    capture_ratio_net: float
    capture_ratio_est: float
    annual_net: dict[str, float]
    annual_est: dict[str, float]
    monthly_net: np.ndarray
    monthly_est: np.ndarray
    grid_net: np.ndarray
    grid_est: np.ndarray
    capacity_norm: bool = False
    annual_net_stats: tuple[float, float] = field(init=False)
    annual_est_stats: tuple[float, float] = field(init=False)

    def __post_init__(self):
        self.annual_net_stats = _mean_sd(list(self.annual_net.values()))
        self.annual_est_stats = _mean_sd(list(self.annual_est.values()))

    @property
    def grid_difference(self) -> np.ndarray:
        """MAPE(net) - MAPE(est); positive where reconstruction improved."""
        return self.grid_net - self.grid_est


def build_validation_report(
    results: dict[str, ReconstructionResult],
    calendar: Calendar,
    capacity_norm: bool = False,
) -> ValidationReport:
    """Score reconstructions against every customer with metered truth."""
    with_truth = {cid: r for cid, r in results.items() if r.actual is not None}
    if not with_truth:
        raise NoTruthError(
            "validation needs at least one solar customer with a total_generation meter"
        )
    actuals = {cid: r.actual for cid, r in with_truth.items()}
    nets = {cid: r.v for cid, r in with_truth.items()}
    ests = {cid: r.g_hat for cid, r in with_truth.items()}

    annual_net, excluded = annual_percent_error(nets, actuals)
    annual_est, _ = annual_percent_error(ests, actuals)
    usable = sorted(annual_net)
    if not usable:
        raise NoTruthError("all truth-metered customers have zero actual generation")
    actuals = {cid: actuals[cid] for cid in usable}
    nets = {cid: nets[cid] for cid in usable}
    ests = {cid: ests[cid] for cid in usable}

    report = ValidationReport(
        customers_used=usable,
        customers_excluded=excluded,
        capture_ratio_net=capture_ratio(nets, actuals),
        capture_ratio_est=capture_ratio(ests, actuals),
        annual_net=annual_net,
        annual_est=annual_est,
        monthly_net=monthly_mape(nets, actuals, calendar),
        monthly_est=monthly_mape(ests, actuals, calendar),
        grid_net=hour_month_mape_grid(nets, actuals, calendar, capacity_norm),
        grid_est=hour_month_mape_grid(ests, actuals, calendar, capacity_norm),
        capacity_norm=capacity_norm,
    )
    log.info("validated %d customers: capture net %.3f -> est %.3f",
             len(usable), report.capture_ratio_net, report.capture_ratio_est)
    return report


def summary_text(report: ValidationReport) -> str:
    net_mean, net_sd = report.annual_net_stats
    est_mean, est_sd = report.annual_est_stats
    lines = [
        f"customers_used: {len(report.customers_used)}",
        f"customers_excluded_zero_actual: {len(report.customers_excluded)}",
        f"capture_ratio_net: {report.capture_ratio_net:.4f}",
        f"capture_ratio_est: {report.capture_ratio_est:.4f}",
        f"annual_pct_error_net: mean {net_mean:.2f}, sd {net_sd:.2f}",
        f"annual_pct_error_est: mean {est_mean:.2f}, sd {est_sd:.2f}",
        f"capacity_norm: {report.capacity_norm}",
    ]
    return "\n".join(lines) + "\n"


def write_report_files(report: ValidationReport, out_dir: str | Path) -> list[Path]:
    """Emit annual, monthly, and grid CSVs plus the summary text block."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    path = out_dir / "annual_errors.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["customer_id", "net_pct_error", "est_pct_error"])
        for cid in report.customers_used:
            writer.writerow([cid, repr(report.annual_net[cid]), repr(report.annual_est[cid])])
    written.append(path)

    path = out_dir / "monthly_mape.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["month", "net_mape", "est_mape"])
        for m in range(N_MONTHS):
            if np.isnan(report.monthly_net[m]) and np.isnan(report.monthly_est[m]):
                continue
            writer.writerow([m + 1, repr(float(report.monthly_net[m])),
                             repr(float(report.monthly_est[m]))])
    written.append(path)

    path = out_dir / "hour_month_grid.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["hour", "month", "net_mape", "est_mape", "difference"])
        diff = report.grid_difference
        for h in range(N_HOURS):
            for m in range(N_MONTHS):
                if np.isnan(report.grid_net[h, m]):
                    continue
                writer.writerow([h, m + 1, repr(float(report.grid_net[h, m])),
                                 repr(float(report.grid_est[h, m])),
                                 repr(float(diff[h, m]))])
    written.append(path)

    path = out_dir / "summary.txt"
    path.write_text(summary_text(report))
    written.append(path)
    return written
