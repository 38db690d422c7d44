"""Acceptance gate: nine release criteria, one verdict line each.

Each test covers one numbered criterion and writes a single
``criterion N: PASS/FAIL`` line straight to the terminal so the verdicts
survive pytest's output capture. Tolerances are fixed here on purpose;
loosening them is a release decision, not a test fix.
"""

import os
import time
from contextlib import contextmanager
from itertools import combinations

import numpy as np
import pytest

from btmsolar.cli import main as cli_main
from btmsolar.core import (
    Channel,
    CustomerKind,
    CustomerRecord,
    Dataset,
    build_calendar,
)
from btmsolar.reconstruction import correct_generation
from btmsolar.scenario import CustomerAnnual, annual_pool, build_scenario, penetration
from btmsolar.similarity import (
    SelectionRule,
    pair_daily_difference,
    select_neighbors,
    similarity_matrix,
    weighted_annual_difference,
)
from btmsolar.synthgen import SynthConfig, emit_dataset, generate
from btmsolar.meterio import load_dataset
from btmsolar.weather import DailyWeight, WeightSeries, daily_avg_weight

from conftest import series


@pytest.fixture
def criterion(capfd):
    """Context manager that prints the verdict line past output capture."""

    def emit(line):
        with capfd.disabled():
            print(line, flush=True)

    @contextmanager
    def check(num: int, summary: str):
        try:
            yield
        except Exception:
            emit(f"criterion {num}: FAIL  {summary}")
            raise
        emit(f"criterion {num}: PASS  {summary}")

    check.emit = emit
    return check


def daytime_calendar(n):
    """A calendar that is all daytime, for direct formula checks."""
    cal = build_calendar("2021-06-01 10:00", n, "1h")
    assert cal.daytime_mask.all()
    return cal


def test_criterion_1_formula_exactness(criterion):
    with criterion(1, "daily weight / daily difference / annual sum / correction formulas"):
        # daily averaged weight over daytime intervals
        for weights, expected in [
            ([1.0, 0.1, 0.001], 1.101 / 3),
            ([1.0, 1.0, 0.1, 0.1], 0.55),
            ([0.001, 0.001], 0.001),
        ]:
            cal = daytime_calendar(len(weights))
            ws = WeightSeries(np.array(weights), ("x",) * len(weights))
            got = daily_avg_weight(ws, cal).values
            assert got.shape == (1,)
            assert got[0] == pytest.approx(expected, abs=1e-9)

        # daily daytime usage difference
        cal = daytime_calendar(2)
        daily = pair_daily_difference(series("a", [-3.0, -1.0]),
                                      series("b", [-2.0, -2.0]), cal)
        assert daily.values[0] == pytest.approx(2.0, abs=1e-9)
        same = pair_daily_difference(series("a", [-3.0, -1.0]),
                                     series("b", [-3.0, -1.0]), cal)
        assert same.values[0] == pytest.approx(0.0, abs=1e-9)

        # weighted annual accumulation
        cal2 = build_calendar("2021-06-01 10:00", 26, "1h")
        u_i = np.full(26, -3.0)
        u_j = np.full(26, -2.0)
        d = pair_daily_difference(series("a", u_i), series("b", u_j), cal2)
        total = weighted_annual_difference(d, DailyWeight(np.array([1.0, 0.001])))
        # day one spans 10 daytime hours (10:00-20:00), day two six (06:00-12:00)
        assert total == pytest.approx(10.0 + 0.001 * 6.0, abs=1e-9)
        flat = weighted_annual_difference(
            type(d)(np.array([2.0, 4.0]), np.array([True, True])),
            DailyWeight(np.array([1.0, 0.001])))
        assert flat == pytest.approx(2.004, abs=1e-9)

        # generation correction
        for (u, u_hat, v), (w, g_hat, native) in [
            ((-2.0, -5.0, 1.0), (3.0, 4.0, 5.0)),
            ((0.0, -4.0, 2.0), (4.0, 6.0, 4.0)),
            ((-6.0, -4.0, 0.0), (0.0, 0.0, 6.0)),
        ]:
            r = correct_generation(np.array([u]), np.array([u_hat]), np.array([v]))
            assert r.w[0] == pytest.approx(w, abs=1e-9)
            assert r.g_hat[0] == pytest.approx(g_hat, abs=1e-9)
            assert r.native_hat[0] == pytest.approx(native, abs=1e-9)


def random_pools_dataset(rng, n_solar, n_nonsolar, n_days):
    cal = build_calendar("2021-03-01", n_days * 24, "1h")
    customers = {}
    for k in range(n_solar):
        cid = f"S{k}"
        vals = -rng.uniform(0.0, 3.0, cal.n_intervals)
        gaps = rng.random(cal.n_intervals) < 0.04
        customers[cid] = CustomerRecord(cid, CustomerKind.NET_METER_SOLAR, {
            Channel.NET_CONSUMPTION: series(cid, vals, gaps=gaps),
            Channel.NET_GENERATION: series(cid, np.zeros(cal.n_intervals),
                                           channel=Channel.NET_GENERATION),
        })
    for k in range(n_nonsolar):
        cid = f"N{k:02d}"
        vals = -rng.uniform(0.0, 3.0, cal.n_intervals)
        gaps = rng.random(cal.n_intervals) < 0.04
        customers[cid] = CustomerRecord(cid, CustomerKind.NON_SOLAR, {
            Channel.NET_CONSUMPTION: series(cid, vals, gaps=gaps),
        })
    daily = DailyWeight(rng.choice([1.0, 0.1, 0.001], size=cal.n_days))
    return Dataset(calendar=cal, customers=customers), daily


def brute_force_delta(dataset, daily, solar_id, nonsolar_id, limit=0.5):
    """Plain-Python re-derivation of one weighted annual distance."""
    cal = dataset.calendar
    s = dataset.customers[solar_id].series(Channel.NET_CONSUMPTION)
    n = dataset.customers[nonsolar_id].series(Channel.NET_CONSUMPTION)
    total = 0.0
    kept = 0
    for d in range(cal.n_days):
        day = [t for t in range(cal.n_intervals)
               if cal.day_index[t] == d and cal.daytime_mask[t]]
        bad_s = sum(bool(s.gap_mask[t]) for t in day)
        bad_n = sum(bool(n.gap_mask[t]) for t in day)
        if bad_s > limit * len(day) or bad_n > limit * len(day):
            continue
        acc = 0.0
        for t in day:
            if not s.gap_mask[t] and not n.gap_mask[t]:
                acc += abs(s.values[t] - n.values[t])
        total += float(daily.values[d]) * acc
        kept += 1
    return total if kept else float("nan")


def test_criterion_2_brute_force_equivalence(criterion):
    with criterion(2, "similarity matrix equals naive triple-loop oracle (1e-12 rel)"):
        rng = np.random.default_rng(1234)
        dataset, daily = random_pools_dataset(rng, n_solar=5, n_nonsolar=20, n_days=7)
        matrix = similarity_matrix(dataset, daily)
        for i, sid in enumerate(matrix.solar_ids):
            for j, nid in enumerate(matrix.nonsolar_ids):
                expected = brute_force_delta(dataset, daily, sid, nid)
                got = matrix.delta[i, j]
                if np.isnan(expected):
                    assert np.isnan(got)
                else:
                    assert got == pytest.approx(expected, rel=1e-12, abs=1e-300), (sid, nid)


def test_criterion_3_selection_rule(criterion):
    with criterion(3, "median-minus-sigma selection with fallback on the worked rows"):
        ids = [f"N{k:02d}" for k in range(10)]

        spread = np.array([1.0, 2.0, 3.0, 4.0, 100.0])
        picked = select_neighbors("S", ids[:5], spread, SelectionRule())
        assert picked.fallback_used
        assert picked.threshold < 0
        assert set(picked.members) == set(ids[:5])  # k=10 cap exceeds the pool

        clustered = np.array([1.0, 1.0, 1.0] + [10.0] * 7)
        picked = select_neighbors("S", ids, clustered, SelectionRule())
        assert not picked.fallback_used
        assert sorted(picked.members) == ids[:3]

        equal = np.full(6, 4.2)
        picked = select_neighbors("S", ids[:6], equal, SelectionRule())
        assert not picked.fallback_used
        assert sorted(picked.members) == ids[:6]


def test_criterion_4_reconstruction_properties(criterion, default_run):
    with criterion(4, "default run: g_hat >= v, exact balance, capture gain in range"):
        for r in default_run.reconstructions.values():
            assert (r.g_hat >= r.v).all()
            assert np.array_equal(r.g_hat, r.v + r.w)
            assert np.array_equal(r.native_hat, np.abs(r.u) + r.w)
        net = default_run.report.capture_ratio_net
        est = default_run.report.capture_ratio_est
        assert est >= net + 0.15, (net, est)
        assert est <= 1.05, est


def test_criterion_5_midday_summer_grid(criterion, default_run):
    with criterion(5, "hour-by-month improvement grid non-negative in midday summer"):
        diff = default_run.report.grid_difference
        cells = [(h, m) for h in range(10, 17) for m in (6, 7, 8)
                 if np.isfinite(diff[h, m - 1])]
        assert cells, "no midday summer cell carries generation"
        for h, m in cells:
            assert diff[h, m - 1] >= 0, (h, m, diff[h, m - 1])


def exhaustive_best_gap(pool, target):
    best = None
    for size in range(1, len(pool) + 1):
        for combo in combinations(pool, size):
            gap = abs(penetration(list(combo)) - target)
            if best is None or gap < best:
                best = gap
    return best


def test_criterion_6_scenario_accuracy(criterion, default_run):
    with criterion(6, "targets 0.2/0.5 hit within 0.01; matches exhaustive search on small pools"):
        pool = annual_pool(default_run.dataset, default_run.reconstructions)
        for target in (0.2, 0.5):
            sc = build_scenario(pool, target=target, tolerance=0.01, seed=0)
            assert sc.feasible, target
            assert abs(sc.achieved_penetration - target) <= 0.01, (
                target, sc.achieved_penetration)

        rng = np.random.default_rng(99)
        for trial in range(20):
            n = int(rng.integers(5, 16))
            small = []
            for k in range(n):
                solar = rng.random() < 0.5
                gen = float(rng.uniform(1, 8)) if solar else 0.0
                small.append(CustomerAnnual(f"c{k}", gen, float(rng.uniform(4, 14)), solar))
            target = float(rng.uniform(0.0, 0.5))
            sc = build_scenario(small, target=target, tolerance=0.01, seed=trial)
            if exhaustive_best_gap(small, target) <= 0.01:
                assert sc.feasible, trial
                assert abs(sc.achieved_penetration - target) <= 0.01


SMALL_ARGS = [
    "--set", "synth.n_nonsolar=10",
    "--set", "synth.n_solar=4",
    "--set", "synth.days=30",
    "--set", "synth.seed=11",
]


def _cli(*argv):
    assert cli_main([str(a) for a in argv]) == 0


def test_criterion_7_determinism(criterion, tmp_path):
    with criterion(7, "byte-identical outputs across worker counts and repeated seeds"):
        synth_a, synth_b = tmp_path / "synth_a", tmp_path / "synth_b"
        _cli("synth", "--out", synth_a, *SMALL_ARGS)
        _cli("synth", "--out", synth_b, *SMALL_ARGS)
        for name in ("meters.csv", "weather.csv", "truth.csv"):
            assert (synth_a / name).read_bytes() == (synth_b / name).read_bytes()

        meters, weather = synth_a / "meters.csv", synth_a / "weather.csv"
        for cmd, outputs in [
            ("similarity", ("matrix.csv", "neighbors.csv")),
            ("reconstruct", ("reconstruction.csv",)),
        ]:
            w1, w8 = tmp_path / f"{cmd}_w1", tmp_path / f"{cmd}_w8"
            _cli(cmd, "--out", w1, "--workers", 1, "--meters", meters, "--weather", weather)
            _cli(cmd, "--out", w8, "--workers", 8, "--meters", meters, "--weather", weather)
            for name in outputs:
                assert (w1 / name).read_bytes() == (w8 / name).read_bytes(), (cmd, name)

        sc_a, sc_b = tmp_path / "sc_a", tmp_path / "sc_b"
        for out in (sc_a, sc_b):
            _cli("scenario", "--out", out, "--target", 0.2,
                 "--meters", meters, "--weather", weather)
        for name in ("scenario_members.csv", "scenario_monthly.csv", "feeder_p20.csv"):
            assert (sc_a / name).read_bytes() == (sc_b / name).read_bytes(), name


def test_criterion_8_similarity_performance(criterion, default_run):
    cores = os.cpu_count() or 1
    with criterion(8, "full-year similarity stage under 10 s single-worker"):
        t0 = time.perf_counter()
        single = similarity_matrix(default_run.dataset, default_run.daily, workers=1)
        elapsed = time.perf_counter() - t0
        assert elapsed < 10.0, f"single-worker similarity took {elapsed:.2f} s"
        assert np.allclose(single.delta, default_run.matrix.delta, equal_nan=True)

    if cores < 4:
        pytest.skip(f"speedup leg needs >= 4 cores; host reports {cores}")
    t0 = time.perf_counter()
    similarity_matrix(default_run.dataset, default_run.daily, workers=4)
    parallel = time.perf_counter() - t0
    speedup = elapsed / parallel
    assert speedup >= 2.5, f"4-worker speedup only {speedup:.2f}x"
    criterion.emit(f"criterion 8: PASS  4-worker speedup {speedup:.2f}x")


def test_criterion_9_round_trip(criterion, tmp_path):
    with criterion(9, "emit then ingest reproduces every value bit for bit"):
        cfg = SynthConfig(seed=13, n_nonsolar=12, n_solar=5, days=45)
        dataset, truth = generate(cfg)
        emit_dataset(dataset, truth, tmp_path, cfg.seed)
        loaded, report = load_dataset(tmp_path / "meters.csv", tmp_path / "weather.csv")
        assert sum(report.alignment.gap_counts.values()) == 0
        assert loaded.calendar.n_intervals == dataset.calendar.n_intervals
        assert sorted(loaded.customers) == sorted(dataset.customers)
        for cid, cust in dataset.customers.items():
            got = loaded.customers[cid]
            assert got.kind is cust.kind
            assert set(got.channels) == set(cust.channels)
            for ch in cust.channels:
                assert np.array_equal(got.series(ch).values,
                                      cust.series(ch).values), (cid, ch)
                assert not got.series(ch).gap_mask.any()
