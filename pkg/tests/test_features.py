import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rfqlab.features import (
    CONTINUOUS_FEATURES,
    FeatureError,
    apply_standardization,
    compute_features,
    feature_matrix,
    fill_rate_curve,
    fit_standardization,
    standardize,
    unstandardize,
)
from rfqlab.market_sim import RfqRecord, SimConfig, gen_rfq_dataset


def make_record(time, bond=0, side=1, mid=124.25, quoted=124.24, notional=10_000,
                counterparty=0, competition=1, status=1):
    return RfqRecord(time=time, bond=bond, side=side, notional=notional,
                     counterparty=counterparty, mid_price=mid, quoted_price=quoted,
                     competition=competition, status=status, next_mid_price=mid)


class TestComputeFeatures:
    def test_constant_mid_gives_zero_momentum(self):
        records = [make_record(10000 + i) for i in range(30)]
        table = compute_features(records)
        assert np.all(table.mom5 == 0.0)
        assert np.all(table.mom10 == 0.0)
        assert np.all(table.mom20 == 0.0)

    def test_spread_and_response_bid(self):
        table = compute_features([make_record(10000, side=1, mid=124.25, quoted=124.24)])
        assert table.spread[0] == pytest.approx(0.01, abs=1e-12)
        assert table.response[0] == pytest.approx(0.01, abs=1e-12)

    def test_response_sign_flips_for_offer(self):
        table = compute_features([make_record(10000, side=0, mid=124.25, quoted=124.24)])
        assert table.response[0] == pytest.approx(-0.01, abs=1e-12)

    def test_momentum_values_and_history_flag(self):
        mids = [100.0 + i for i in range(25)]
        records = [make_record(10000 + i, mid=m) for i, m in enumerate(mids)]
        table = compute_features(records)
        i = 22
        assert table.mom5[i] == pytest.approx(mids[i] / mids[i - 5] - 1.0, rel=1e-12)
        assert table.mom10[i] == pytest.approx(mids[i] / mids[i - 10] - 1.0, rel=1e-12)
        assert table.mom20[i] == pytest.approx(mids[i] / mids[i - 20] - 1.0, rel=1e-12)
        assert not table.history_valid[19]
        assert table.history_valid[20]

    def test_momentum_is_per_bond(self):
        records = []
        for i in range(12):
            records.append(make_record(10000 + 2 * i, bond=0, mid=100.0 + i))
            records.append(make_record(10001 + 2 * i, bond=1, mid=200.0))
        table = compute_features(records)
        bond1 = table.take(table.bond == 1)
        assert np.all(bond1.mom5 == 0.0)

    def test_momentum_scale_invariance(self):
        mids = [100.0, 101.0, 99.5, 102.0, 103.0, 101.5, 104.0, 105.0]
        for scale in (0.5, 3.0, 1000.0):
            base = compute_features([make_record(10000 + i, mid=m) for i, m in enumerate(mids)])
            scaled = compute_features(
                [make_record(10000 + i, mid=m * scale) for i, m in enumerate(mids)])
            np.testing.assert_allclose(scaled.mom5, base.mom5, atol=1e-12)

    def test_log_notional(self):
        table = compute_features([make_record(10000, notional=10**6)])
        assert table.log_notional[0] == pytest.approx(6 * math.log(10.0), rel=1e-12)

    def test_zero_mid_in_history_errors(self):
        records = [make_record(10000 + i, mid=(0.0 if i == 0 else 100.0)) for i in range(6)]
        with pytest.raises(FeatureError):
            compute_features(records)

    def test_empty_input(self):
        with pytest.raises(FeatureError):
            compute_features([])


class TestStandardize:
    def _matrix(self, seed=0, n=400):
        records = gen_rfq_dataset(SimConfig(n_records=n, n_live=2, seed=seed))
        table = compute_features(records)
        return feature_matrix(table)

    def test_train_columns_zero_mean_unit_std(self):
        raw, names = self._matrix()
        x, stats = standardize(raw, names)
        cont = [i for i, name in enumerate(stats.names) if name in CONTINUOUS_FEATURES]
        assert np.all(np.abs(x[:, cont].mean(axis=0)) < 1e-9)
        np.testing.assert_allclose(x[:, cont].std(axis=0), 1.0, atol=1e-9)

    def test_reusing_stats_is_deterministic(self):
        raw, names = self._matrix()
        x1, stats = standardize(raw, names)
        x2, _ = standardize(raw, names, stats)
        assert np.array_equal(x1, x2)

    def test_constant_column_dropped_and_reported(self):
        raw, names = self._matrix()
        raw = raw.copy()
        raw[:, names.index("mom20")] = 7.7
        stats = fit_standardization(raw, names)
        assert "mom20" in stats.dropped
        assert "mom20" not in stats.names
        x = apply_standardization(raw, names, stats)
        assert x.shape[1] == len(names) - 1

    def test_round_trip(self):
        raw, names = self._matrix(seed=1)
        x, stats = standardize(raw, names)
        back = unstandardize(x, stats)
        idx = [names.index(n) for n in stats.names]
        np.testing.assert_allclose(back, raw[:, idx], atol=1e-12)

    def test_categoricals_pass_through(self):
        raw, names = self._matrix()
        x, stats = standardize(raw, names)
        j = stats.names.index("competition")
        assert set(np.unique(x[:, j])) <= {1.0, 2.0, 3.0, 4.0}

    def test_one_hot_layout(self):
        records = gen_rfq_dataset(SimConfig(n_records=300, n_live=2, seed=2))
        table = compute_features(records)
        raw, names = feature_matrix(table, one_hot=True)
        assert "counterparty_0" in names and "competition_4" in names
        assert "side" in names
        block = [i for i, n in enumerate(names) if n.startswith("counterparty_")]
        np.testing.assert_allclose(raw[:, block].sum(axis=1), 1.0)

    def test_empty_errors(self):
        with pytest.raises(FeatureError):
            fit_standardization(np.empty((0, 3)), ["a", "b", "c"])


class TestFillRateCurve:
    def test_all_filled(self):
        rng = np.random.default_rng(0)
        curve = fill_rate_curve(rng.random(500), np.ones(500), n_bins=10)
        assert np.all(curve.raw == 1.0)
        assert np.all(curve.smooth == 1.0)
        assert "skipped" in curve.note

    def test_counts_and_ranges(self):
        rng = np.random.default_rng(1)
        values = rng.random(1000)
        statuses = (rng.random(1000) < 0.4).astype(float)
        curve = fill_rate_curve(values, statuses, n_bins=20)
        assert curve.counts.sum() == 1000
        assert np.all(curve.counts > 0)
        assert np.all((curve.raw >= 0) & (curve.raw <= 1))
        assert np.all((curve.smooth >= 0) & (curve.smooth <= 1))
        assert np.all(np.diff(curve.centers) > 0)

    def test_independent_feature_within_binomial_band(self):
        # binomial oracle: with labels independent of the feature, each
        # bin's rate is Binomial(count, p)/count; check the 99.9% band
        rng = np.random.default_rng(2)
        values = rng.random(4000)
        p = 0.35
        statuses = (rng.random(4000) < p).astype(float)
        curve = fill_rate_curve(values, statuses, n_bins=10)
        z = 3.29  # two-sided 99.9%
        for rate, count in zip(curve.raw, curve.counts):
            band = z * math.sqrt(p * (1 - p) / count)
            assert abs(rate - p) < band + 0.02

    def test_response_curve_monotone_on_default_data(self, default_table):
        from rfqlab.pipeline import usable_rows
        usable = usable_rows(default_table)
        curve = fill_rate_curve(usable.response, usable.status, n_bins=20, feature="response")
        assert np.all(np.diff(curve.smooth) <= 1e-9)
        # generator makes fills rarer as response grows
        assert curve.raw[0] > 0.8 and curve.raw[-1] < 0.2

    def test_discrete_feature_bins_collapse(self):
        values = np.repeat([1.0, 2.0, 3.0], 100)
        statuses = np.concatenate([np.ones(100), np.zeros(100), np.ones(100)])
        curve = fill_rate_curve(values, statuses, n_bins=20)
        assert len(curve.centers) <= 3
        assert curve.counts.sum() == 300

    def test_validation(self):
        with pytest.raises(FeatureError):
            fill_rate_curve(np.ones(3), np.ones(4))
        with pytest.raises(FeatureError):
            fill_rate_curve(np.ones(3), np.ones(3), n_bins=1)
        with pytest.raises(FeatureError):
            fill_rate_curve(np.empty(0), np.empty(0))


@settings(max_examples=50, deadline=None)
@given(spread=st.floats(-0.01, 0.01, allow_nan=False))
def test_response_antisymmetry(spread):
    quoted = 124.24
    mid = quoted + spread
    bid = compute_features([make_record(10000, side=1, mid=mid, quoted=quoted)])
    offer = compute_features([make_record(10000, side=0, mid=mid, quoted=quoted)])
    assert bid.response[0] == pytest.approx(-offer.response[0], abs=1e-15)
