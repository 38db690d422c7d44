"""Native-load estimation and the non-negative generation correction."""

import numpy as np
import pytest

from btmsolar.core import (
    Channel,
    CustomerKind,
    CustomerRecord,
    Dataset,
    build_calendar,
)
from btmsolar.errors import ConfigurationError
from btmsolar.reconstruction import (
    correct_generation,
    estimate_native,
    reconstruct_all,
    reconstruct_customer,
)
from btmsolar.similarity import NeighborSet

from conftest import series


def neighbor_set(solar_id, members):
    return NeighborSet(
        solar_customer_id=solar_id,
        members=tuple(members),
        member_deltas=tuple(0.0 for _ in members),
        threshold=1.0,
        fallback_used=False,
    )


def pool_dataset(calendar, nonsolar, solar=None):
    """nonsolar/solar: dict id -> (values, gaps or None) per channel tuple."""
    customers = {}
    for cid, (values, gaps) in nonsolar.items():
        customers[cid] = CustomerRecord(cid, CustomerKind.NON_SOLAR, {
            Channel.NET_CONSUMPTION: series(cid, values, gaps=gaps),
        })
    for cid, (u, v) in (solar or {}).items():
        customers[cid] = CustomerRecord(cid, CustomerKind.NET_METER_SOLAR, {
            Channel.NET_CONSUMPTION: series(cid, u),
            Channel.NET_GENERATION: series(cid, v, channel=Channel.NET_GENERATION),
        })
    return Dataset(calendar=calendar, customers=customers)


class TestEstimateNative:
    def test_mean_of_two(self, one_day_hourly):
        ds = pool_dataset(one_day_hourly, {
            "a": (np.full(24, -4.0), None),
            "b": (np.full(24, -6.0), None),
        })
        u_hat, gaps = estimate_native(neighbor_set("s", ["a", "b"]), ds)
        assert (u_hat == -5.0).all()
        assert not gaps.any()

    def test_single_member_identity(self, one_day_hourly):
        values = -np.linspace(0.1, 2.4, 24)
        ds = pool_dataset(one_day_hourly, {"a": (values, None)})
        u_hat, _ = estimate_native(neighbor_set("s", ["a"]), ds)
        assert np.array_equal(u_hat, values)

    def test_gapped_member_skipped(self, one_day_hourly):
        gaps_c = np.zeros(24, dtype=bool)
        gaps_c[5] = True
        ds = pool_dataset(one_day_hourly, {
            "a": (np.full(24, -3.0), None),
            "b": (np.full(24, -5.0), None),
            "c": (np.full(24, -100.0), gaps_c),
        })
        u_hat, gaps = estimate_native(neighbor_set("s", ["a", "b", "c"]), ds)
        assert u_hat[5] == pytest.approx(-4.0)
        assert u_hat[6] == pytest.approx(-36.0)
        assert not gaps.any()

    def test_all_members_gapped_flags_interval(self, one_day_hourly):
        gaps = np.zeros(24, dtype=bool)
        gaps[3] = True
        ds = pool_dataset(one_day_hourly, {"a": (np.full(24, -2.0), gaps.copy())})
        u_hat, out_gaps = estimate_native(neighbor_set("s", ["a"]), ds)
        assert out_gaps[3]
        assert u_hat[3] == 0.0

    def test_unknown_member_rejected(self, one_day_hourly):
        ds = pool_dataset(one_day_hourly, {"a": (np.full(24, -2.0), None)})
        with pytest.raises(ConfigurationError, match="ghost"):
            estimate_native(neighbor_set("s", ["ghost"]), ds)


class TestCorrectGeneration:
    @pytest.mark.parametrize("u,u_hat,v,w,g_hat,native", [
        (-2.0, -5.0, 1.0, 3.0, 4.0, 5.0),
        (0.0, -4.0, 2.0, 4.0, 6.0, 4.0),
        (-6.0, -4.0, 0.0, 0.0, 0.0, 6.0),
    ])
    def test_single_interval_cases(self, u, u_hat, v, w, g_hat, native):
        r = correct_generation(np.array([u]), np.array([u_hat]), np.array([v]))
        assert r.w[0] == pytest.approx(w, abs=1e-9)
        assert r.g_hat[0] == pytest.approx(g_hat, abs=1e-9)
        assert r.native_hat[0] == pytest.approx(native, abs=1e-9)

    def test_invariants_random_sweep(self):
        rng = np.random.default_rng(77)
        for _ in range(20):
            n = 200
            u = -rng.random(n) * 3
            u_hat = -rng.random(n) * 3
            v = rng.random(n)
            r = correct_generation(u, u_hat, v)
            assert (r.w >= 0).all()
            assert (r.g_hat >= r.v).all()
            assert np.array_equal(r.g_hat, r.v + r.w)
            assert np.array_equal(r.native_hat, np.abs(r.u) + r.w)
            # recovered generation equals added consumption up to rounding
            assert np.allclose(r.g_hat - r.v, r.native_hat - np.abs(r.u),
                               rtol=0, atol=1e-12)

    def test_no_correction_when_consuming_more_than_estimate(self):
        u = np.array([-5.0, -2.0])
        u_hat = np.array([-4.0, -2.0])
        v = np.array([0.3, 0.0])
        r = correct_generation(u, u_hat, v)
        assert np.array_equal(r.g_hat, v)

    def test_nonsolar_like_input_stays_zero(self):
        u = -np.linspace(0.2, 1.0, 10)
        r = correct_generation(u, u.copy(), np.zeros(10))
        assert (r.g_hat == 0.0).all()

    def test_estimate_gap_suppresses_correction(self):
        u = np.array([0.0, 0.0])
        u_hat = np.array([-2.0, -2.0])
        v = np.array([1.0, 1.0])
        gaps = np.array([False, True])
        r = correct_generation(u, u_hat, v, u_hat_gaps=gaps)
        assert r.w.tolist() == [2.0, 0.0]
        assert r.suppressed_corrections == 1

    def test_sign_contract_enforced(self):
        with pytest.raises(ConfigurationError):
            correct_generation(np.array([1.0]), np.array([-1.0]), np.array([0.0]))
        with pytest.raises(ConfigurationError):
            correct_generation(np.array([-1.0]), np.array([-1.0]), np.array([-0.5]))

    def test_night_corrections_counted(self, one_day_hourly):
        u = np.zeros(24)
        u_hat = np.full(24, -1.0)
        v = np.zeros(24)
        r = correct_generation(u, u_hat, v, calendar=one_day_hourly)
        assert r.night_corrections == 24 - 14


class TestReconstructAll:
    def test_single_customer_composition(self, one_day_hourly):
        u = np.concatenate([np.full(12, -1.0), np.zeros(12)])
        v = np.concatenate([np.zeros(12), np.full(12, 0.5)])
        ds = pool_dataset(
            one_day_hourly,
            {"a": (np.full(24, -2.0), None), "b": (np.full(24, -4.0), None)},
            solar={"s1": (u, v)},
        )
        out = reconstruct_all(ds, {"s1": neighbor_set("s1", ["a", "b"])})
        assert set(out) == {"s1"}
        direct = reconstruct_customer("s1", neighbor_set("s1", ["a", "b"]), ds)
        assert np.array_equal(out["s1"].g_hat, direct.g_hat)
        assert out["s1"].w[12:].tolist() == [3.0] * 12

    def test_missing_neighbor_set_rejected(self, one_day_hourly):
        ds = pool_dataset(
            one_day_hourly,
            {"a": (np.full(24, -2.0), None)},
            solar={"s1": (np.zeros(24), np.zeros(24))},
        )
        with pytest.raises(ConfigurationError, match="s1"):
            reconstruct_all(ds, {})

    def test_worker_counts_identical(self, small_run):
        from btmsolar.similarity import select_all_neighbors, similarity_matrix
        from btmsolar.weather import WeatherTable, daily_avg_weight, interval_weights

        _, dataset, _ = small_run
        daily = daily_avg_weight(
            interval_weights(dataset.weather, dataset.calendar, WeatherTable()),
            dataset.calendar,
        )
        nb = select_all_neighbors(similarity_matrix(dataset, daily))
        r1 = reconstruct_all(dataset, nb, workers=1)
        r5 = reconstruct_all(dataset, nb, workers=5)
        for cid in r1:
            assert np.array_equal(r1[cid].g_hat, r5[cid].g_hat)
            assert np.array_equal(r1[cid].native_hat, r5[cid].native_hat)

    def test_synthetic_run_properties(self, default_run):
        for r in default_run.reconstructions.values():
            assert (r.g_hat >= r.v).all()
            assert np.array_equal(r.g_hat, r.v + r.w)
            total_recovered = (r.g_hat - r.v).sum()
            total_added = (r.native_hat - np.abs(r.u)).sum()
            assert total_recovered == pytest.approx(total_added, abs=1e-9)
