"""Shared fixtures: tiny hand-built calendars and the full-size synthetic run."""

from dataclasses import dataclass

import numpy as np
import pytest

from btmsolar.core import Calendar, Channel, Dataset, IntervalSeries, build_calendar
from btmsolar.metrics import ValidationReport, build_validation_report
from btmsolar.reconstruction import ReconstructionResult, reconstruct_all
from btmsolar.similarity import SimilarityMatrix, select_all_neighbors, similarity_matrix
from btmsolar.synthgen import SynthConfig, SynthTruth, generate
from btmsolar.weather import DailyWeight, WeatherTable, daily_avg_weight, interval_weights


def series(customer_id, values, channel=Channel.NET_CONSUMPTION, gaps=None):
    values = np.asarray(values, dtype=np.float64)
    if gaps is None:
        gaps = np.zeros(values.size, dtype=bool)
    return IntervalSeries(customer_id, channel, values, np.asarray(gaps, dtype=bool))


@pytest.fixture
def one_day_hourly() -> Calendar:
    return build_calendar("2021-06-01", 24, "1h")


@pytest.fixture
def three_day_hourly() -> Calendar:
    return build_calendar("2021-06-01", 72, "1h")


@dataclass
class DefaultRun:
    """Everything computed once from the default synthetic configuration."""

    config: SynthConfig
    dataset: Dataset
    truth: SynthTruth
    daily: DailyWeight
    matrix: SimilarityMatrix
    neighbors: dict
    reconstructions: dict[str, ReconstructionResult]
    report: ValidationReport


@pytest.fixture(scope="session")
def default_run() -> DefaultRun:
    config = SynthConfig()  # 200 non-solar, 40 solar, 365 days, hourly, seed 42
    dataset, truth = generate(config)
    table = WeatherTable()
    weights = interval_weights(dataset.weather, dataset.calendar, table)
    daily = daily_avg_weight(weights, dataset.calendar)
    matrix = similarity_matrix(dataset, daily, workers=1)
    neighbors = select_all_neighbors(matrix)
    reconstructions = reconstruct_all(dataset, neighbors, workers=1)
    report = build_validation_report(reconstructions, dataset.calendar)
    return DefaultRun(
        config=config,
        dataset=dataset,
        truth=truth,
        daily=daily,
        matrix=matrix,
        neighbors=neighbors,
        reconstructions=reconstructions,
        report=report,
    )


@pytest.fixture(scope="session")
def small_run():
    """A fast synthetic dataset for integration-style tests."""
    config = SynthConfig(n_nonsolar=16, n_solar=6, days=40, seed=7)
    dataset, truth = generate(config)
    return config, dataset, truth
