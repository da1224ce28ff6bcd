import io

import numpy as np
import pytest

from duracd.acd import AcdParams
from duracd.data import (DurationSeries, Side, acf, apply_scaling,
                         compute_durations, fit_scaling, invert_mean,
                         load_duration_series, make_windows, pacf,
                         parse_ticks, save_duration_series, split_series)
from duracd.errors import DataError, ParseError
from duracd.rng import SplitMix64
from duracd.simulate import SimConfig, simulate_acd


def ticks(text, **kw):
    return parse_ticks(io.StringIO(text), **kw)


class TestParseTicks:
    def test_premarket_rows_dropped(self):
        # 09:30 = 34_200_000 ms after midnight
        text = "34100000,10.0,5,B\n34200000,10.1,3,S\n34300000,10.2,1,U\n"
        ts = ticks(text, session_open="09:30")
        assert len(ts.records) == 2
        assert ts.records[0].timestamp == 34_200_000

    def test_empty_input(self):
        assert ticks("").records == []

    def test_bad_volume_names_line(self):
        with pytest.raises(ParseError, match="line 2"):
            ticks("100,10.0,5,B\n200,10.0,xyz,B\n")

    def test_decreasing_timestamps_rejected(self):
        with pytest.raises(DataError, match="line 3"):
            ticks("100,1,1,B\n300,1,1,B\n200,1,1,B\n")

    def test_equal_timestamps_allowed(self):
        assert len(ticks("100,1,1,B\n100,1,2,S\n").records) == 2

    def test_header_skipped(self):
        text = "timestamp_ms,price,volume,side\n100,1.0,5,B\n"
        assert len(ticks(text).records) == 1

    def test_side_parsing_and_optional(self):
        ts = ticks("1,1,1,B\n2,1,1,s\n3,1,1,U\n4,1,1\n")
        assert [r.side for r in ts.records] == [Side.BUY, Side.SELL,
                                                Side.UNKNOWN, Side.UNKNOWN]

    def test_bad_timestamp(self):
        with pytest.raises(ParseError, match="line 1"):
            ticks("12.5,1,1,B\n")


class TestComputeDurations:
    def test_basic_arithmetic(self):
        ts = ticks("0,1,1,B\n500,1,2,S\n1500,1,3,B\n")
        series = compute_durations(ts)
        assert np.allclose(series.durations, [0.5, 1.0])
        # features: duration, arriving volume, arriving side code
        assert np.allclose(series.features[:, 0], series.durations)
        assert np.allclose(series.features[:, 1], [2.0, 3.0])
        assert np.allclose(series.features[:, 2], [-1.0, 1.0])

    def test_merge_same_timestamp(self):
        ts = ticks("0,1,1,B\n100,1,2,B\n100,1,5,S\n300,1,1,U\n")
        series = compute_durations(ts, merge_same_timestamp=True)
        assert np.allclose(series.durations, [0.1, 0.2])
        assert series.features[0, 1] == 7.0  # summed volume at the merge
        assert series.features[0, 2] == -1.0  # largest sub-trade sold

    def test_merge_volume_tie_goes_unknown(self):
        ts = ticks("0,1,1,B\n100,1,3,B\n100,1,3,S\n300,1,1,U\n")
        series = compute_durations(ts)
        assert series.features[0, 2] == 0.0

    def test_zero_duration_without_merging(self):
        ts = ticks("0,1,1,B\n100,1,1,B\n100,1,1,S\n")
        with pytest.raises(DataError, match="zero duration"):
            compute_durations(ts, merge_same_timestamp=False)

    def test_too_few_records(self):
        with pytest.raises(DataError, match="at least 2"):
            compute_durations(ticks("100,1,1,B\n"))

    def test_merging_makes_strictly_positive(self):
        ts = ticks("0,1,1,B\n0,1,2,B\n5,1,1,S\n5,1,4,S\n9,1,1,B\n")
        series = compute_durations(ts)
        assert np.all(series.durations > 0)

    def test_max_duration_filter(self):
        ts = ticks("0,1,1,B\n1000,1,1,B\n100000,1,1,S\n101000,1,1,B\n")
        series = compute_durations(ts, max_duration=10.0)
        assert np.allclose(series.durations, [1.0, 1.0])


class TestSplits:
    def test_headline_split_sizes(self):
        s = split_series(100_000, 0.3, (8, 2))
        assert (len(s.train), len(s.validation), len(s.test)) == (56_000, 14_000, 30_000)

    def test_small_floor_rule(self):
        s = split_series(10, 0.3, (8, 2))
        assert (len(s.train), len(s.validation), len(s.test)) == (5, 2, 3)

    def test_contiguous_ordered_cover(self):
        s = split_series(1000, 0.25, (7, 3))
        assert s.train.stop == s.validation.start
        assert s.validation.stop == s.test.start
        assert s.train.start == 0 and s.test.stop == 1000

    def test_full_test_fraction_rejected(self):
        with pytest.raises(DataError):
            split_series(100, 1.0, (8, 2))

    def test_empty_split_rejected(self):
        with pytest.raises(DataError):
            split_series(3, 0.3, (8, 2))

    def test_deterministic(self):
        a = split_series(12345, 0.3, (8, 2))
        b = split_series(12345, 0.3, (8, 2))
        assert a == b


def make_series(n=100, with_features=True, seed=0):
    rng = SplitMix64(seed)
    durations = rng.exponential(n) + 0.01
    features = None
    if with_features:
        volume = np.exp(rng.normal(n))
        side = np.where(rng.uniform(n) < 0.5, 1.0, -1.0)
        features = np.column_stack([durations, volume, side])
    return DurationSeries(durations=durations, features=features)


class TestScaling:
    def test_duration_mean_from_train_only(self):
        series = DurationSeries(durations=np.array([1.0, 2.0, 3.0, 100.0]))
        stats = fit_scaling(series, range(0, 3))
        assert stats.duration_mean == 2.0

    def test_train_stats_ignore_test_values(self):
        series = make_series(200)
        stats1 = fit_scaling(series, range(0, 100))
        modified = DurationSeries(durations=series.durations.copy(),
                                  features=series.features.copy())
        modified.durations[150:] *= 7.0
        modified.features[150:, 0] *= 7.0
        stats2 = fit_scaling(modified, range(0, 100))
        assert stats1.duration_mean == stats2.duration_mean
        assert np.array_equal(stats1.feature_means, stats2.feature_means)

    def test_constant_volume_column(self):
        durations = np.array([1.0, 2.0, 3.0])
        features = np.column_stack([durations, np.full(3, 5.0), np.zeros(3)])
        series = DurationSeries(durations=durations, features=features)
        stats = fit_scaling(series, range(0, 3))
        assert stats.feature_stds[1] == 1e-12
        scaled = apply_scaling(series, stats)
        assert np.allclose(scaled.features[:, 1], 0.0)

    def test_unit_mean_scaling(self):
        series = DurationSeries(durations=np.array([1.0, 2.0, 3.0]))
        stats = fit_scaling(series, range(0, 3))
        scaled = apply_scaling(series, stats)
        assert np.allclose(scaled.durations, [0.5, 1.0, 1.5])
        assert abs(scaled.durations.mean() - 1.0) < 1e-12

    def test_invert_mean_round_trip(self):
        series = make_series(50)
        stats = fit_scaling(series, range(0, 50))
        mu = 1.2345
        assert invert_mean(mu / stats.duration_mean, stats) == pytest.approx(mu, abs=0)
        assert invert_mean(0.5, type(stats)(duration_mean=2.0,
                                            feature_means=np.empty(0),
                                            feature_stds=np.empty(0))) == 1.0

    def test_side_code_untouched(self):
        series = make_series(80)
        stats = fit_scaling(series, range(0, 60))
        scaled = apply_scaling(series, stats)
        assert np.array_equal(scaled.features[:, 2], series.features[:, 2])
        # the duration column tracks the scaled durations exactly
        assert np.array_equal(scaled.features[:, 0], scaled.durations)


class TestWindows:
    def test_window_count_and_targets(self):
        series = make_series(52, with_features=False)
        ws = make_windows(series, 50)
        assert len(ws) == 2
        assert list(ws.origins) == [50, 51]

    def test_alignment_on_ramp(self):
        durations = np.arange(1.0, 21.0)
        series = DurationSeries(durations=durations)
        ws = make_windows(series, 5)
        w = ws[0]
        assert w.origin_index == 5
        assert np.allclose(w.inputs[:, 0], [1, 2, 3, 4, 5])
        assert w.target == 6.0
        # the target never appears among its own inputs
        for k in range(len(ws)):
            wk = ws[k]
            assert wk.target not in wk.inputs[:, 0]
            assert wk.inputs[-1, 0] == durations[wk.origin_index - 1]

    def test_too_short(self):
        series = make_series(50, with_features=False)
        with pytest.raises(DataError):
            make_windows(series, 50)

    def test_gather_matches_getitem(self):
        series = make_series(30)
        ws = make_windows(series, 4, log_mu_seed=0.25)
        feats, targets, seeds = ws.gather(np.array([4, 7, 10]))
        for row, k in enumerate([0, 3, 6]):
            w = ws[k]
            assert np.array_equal(feats[row], w.inputs)
            assert targets[row] == w.target
            assert seeds[row] == 0.25


class TestAcfPacf:
    def test_lag_zero_is_one(self):
        x = SplitMix64(3).exponential(500)
        assert acf(x, 10)[0] == 1.0

    def test_iid_exponential_has_no_correlation(self):
        x = SplitMix64(21).exponential(10_000)
        rho = acf(x, 20)
        assert np.all(np.abs(rho[1:]) < 0.05)

    def test_acd_series_decays_slowly(self):
        params = AcdParams(omega=0.1, alphas=[0.2], betas=[0.7])
        series, _ = simulate_acd(SimConfig(params=params, n=30_000, seed=5))
        rho = acf(series.durations, 10)
        assert rho[1] > rho[10] > 0

    def test_constant_series_rejected(self):
        with pytest.raises(DataError, match="constant"):
            acf(np.full(100, 3.3), 5)

    def test_pacf_base_case_equals_acf(self):
        x = SplitMix64(9).exponential(2000)
        assert pacf(x, 5)[1] == acf(x, 5)[1]

    def test_pacf_matches_toeplitz_solve(self):
        # independent oracle: phi_kk from solving the Yule-Walker system
        x = SplitMix64(17).normal(5000) + 0.3 * np.sin(np.arange(5000) / 7.0)
        max_lag = 8
        rho = acf(x, max_lag)
        got = pacf(x, max_lag)
        for k in range(1, max_lag + 1):
            toeplitz = np.array([[rho[abs(i - j)] for j in range(k)] for i in range(k)])
            phi = np.linalg.solve(toeplitz, rho[1:k + 1])
            assert got[k] == pytest.approx(phi[-1], rel=1e-8)


class TestSeriesIO:
    def test_round_trip_with_features(self, tmp_path):
        series = make_series(40)
        path = tmp_path / "series.csv"
        save_duration_series(path, series)
        loaded, mu = load_duration_series(path)
        assert mu is None
        assert np.allclose(loaded.durations, series.durations)
        assert np.allclose(loaded.features, series.features)

    def test_round_trip_with_mu(self, tmp_path):
        series = make_series(25, with_features=False)
        mu = SplitMix64(2).exponential(25) + 0.5
        path = tmp_path / "series.csv"
        save_duration_series(path, series, mu=mu)
        loaded, mu2 = load_duration_series(path)
        assert np.allclose(mu2, mu)
        assert loaded.features is None

    def test_missing_duration_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ParseError):
            load_duration_series(path)
