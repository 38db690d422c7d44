"""Static SVG figures from metric and scenario CSVs.

Figures are deliberately plain matplotlib with a pinned hash salt and no
embedded date metadata, so the same inputs always produce byte-identical
SVG files.
"""

from __future__ import annotations

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from .errors import InputFileError, ParseError

log = logging.getLogger(__name__)

HASH_SALT = "btmsolar"

MONTH_LABELS = ["Jan", "Feb", "Mar", "Apr", "May", "Jun",
                "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"]


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    with plt.rc_context({"svg.hashsalt": HASH_SALT}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    log.info("wrote %s", path)
    return path


def _read(path: str | Path, required: list[str]) -> pd.DataFrame:
    path = Path(path)
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError as exc:
        raise InputFileError(f"plot input not found: {path}") from exc
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise ParseError(f"{path}: missing columns {missing}")
    return frame


def plot_annual_histogram(annual_csv: str | Path, out_svg: str | Path) -> Path:
    """Histogram of per-customer annual percent error, net vs estimated."""
    frame = _read(annual_csv, ["customer_id", "net_pct_error", "est_pct_error"])
    lo = min(frame["net_pct_error"].min(), frame["est_pct_error"].min(), 0.0)
    hi = max(frame["net_pct_error"].max(), frame["est_pct_error"].max(), 0.0)
    bins = np.linspace(lo - 1, hi + 1, 25)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.hist(frame["net_pct_error"], bins=bins, alpha=0.6, label="net meter", color="#c44e52")
    ax.hist(frame["est_pct_error"], bins=bins, alpha=0.6, label="reconstructed", color="#4c72b0")
    ax.axvline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("annual generation percent error")
    ax.set_ylabel("customers")
    ax.legend()
    fig.tight_layout()
    return _save(fig, out_svg)


def plot_grid_heatmap(grid_csv: str | Path, out_svg: str | Path) -> Path:
    """Hour-by-month heatmap of net-minus-estimated MAPE difference."""
    frame = _read(grid_csv, ["hour", "month", "net_mape", "est_mape", "difference"])
    grid = np.full((24, 12), np.nan)
    for row in frame.itertuples(index=False):
        grid[int(row.hour), int(row.month) - 1] = row.difference
    fig, ax = plt.subplots(figsize=(7, 5.5))
    finite = grid[np.isfinite(grid)]
    limit = float(np.abs(finite).max()) if finite.size else 1.0
    image = ax.imshow(grid, aspect="auto", origin="lower", cmap="RdBu_r",
                      vmin=-limit, vmax=limit)
    ax.set_xticks(range(12), MONTH_LABELS, fontsize=8)
    ax.set_ylabel("hour of day")
    ax.set_title("MAPE(net) - MAPE(estimated); positive = reconstruction better")
    fig.colorbar(image, ax=ax, label="percentage points")
    fig.tight_layout()
    return _save(fig, out_svg)


def plot_monthly_bars(monthly_csv: str | Path, out_svg: str | Path) -> Path:
    """Monthly consumption above and generation below zero, per scenario."""
    frame = _read(monthly_csv, ["scenario", "month", "consumption_kwh", "generation_kwh"])
    scenarios = list(dict.fromkeys(frame["scenario"]))
    width = 0.8 / max(1, len(scenarios))
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for k, name in enumerate(scenarios):
        sub = frame[frame["scenario"] == name]
        x = sub["month"].to_numpy() - 0.4 + (k + 0.5) * width
        ax.bar(x, sub["consumption_kwh"], width=width, label=f"{name} consumption")
        ax.bar(x, sub["generation_kwh"], width=width, label=f"{name} generation")
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xticks(range(1, 13), MONTH_LABELS, fontsize=8)
    ax.set_ylabel("energy (kWh)")
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    return _save(fig, out_svg)
