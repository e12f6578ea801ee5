import math

import numpy as np
import pytest
from scipy.special import expit

from rfqlab.market_sim import (
    LOG_NOTIONAL_MEAN,
    PricePath,
    RfqRecord,
    SimConfig,
    SimulationError,
    StatusCoeffs,
    feature_fill_probability,
    fill_probability,
    gen_competitor_quotes,
    gen_price_paths,
    gen_quote_price,
    gen_rfq_dataset,
    gen_ring_dataset,
    gen_status,
    sample_ring_point,
    substream,
)
from rfqlab.io import format_dataset


class TestPricePaths:
    def test_zero_noise_is_flat(self):
        config = SimConfig(mu=0.0, sigma_s=0.0, sigma_b=0.0, sigma_a=0.0, seed=5)
        path = gen_price_paths(config, bond_id=0, n_steps=50)
        assert np.allclose(path.spread, 0.1, atol=0)
        assert np.allclose(path.mid, 124.24, atol=1e-12)

    def test_mid_is_exact_midpoint(self):
        for seed in (0, 1, 99):
            path = gen_price_paths(SimConfig(seed=seed), bond_id=2, n_steps=300)
            assert np.array_equal(path.mid, (path.bid + path.ask) / 2.0)

    def test_spread_positive_and_book_uncrossed(self):
        # huge shocks force the crossing clamp to engage
        config = SimConfig(sigma_b=0.5, sigma_a=0.5, seed=3)
        path = gen_price_paths(config, bond_id=0, n_steps=2000)
        assert np.all(path.spread > 0)
        assert np.all(path.ask >= path.bid)

    def test_golden_first_10_rows_seed42(self, golden_dir):
        path = gen_price_paths(SimConfig(seed=42), bond_id=0, n_steps=10)
        got = "\n".join(
            f"{float(path.bid[t])!r},{float(path.ask[t])!r},"
            f"{float(path.mid[t])!r},{float(path.spread[t])!r}"
            for t in range(10)
        )
        expected = (golden_dir / "pricepath_seed42_bond0.csv").read_text().strip()
        assert got == expected.split("\n", 1)[1]  # drop header

    def test_non_finite_aborts(self):
        with pytest.raises(SimulationError):
            gen_price_paths(SimConfig(mu=1e4), bond_id=0, n_steps=200)

    def test_per_bond_streams_independent(self):
        config = SimConfig(seed=11)
        p0 = gen_price_paths(config, 0, n_steps=50)
        p1 = gen_price_paths(config, 1, n_steps=50)
        assert not np.array_equal(p0.mid, p1.mid)

    def test_deterministic(self):
        config = SimConfig(seed=11)
        a = gen_price_paths(config, 3, n_steps=100)
        b = gen_price_paths(config, 3, n_steps=100)
        assert np.array_equal(a.bid, b.bid) and np.array_equal(a.ask, b.ask)


class TestStatus:
    def test_verbatim_on_unit_circle(self):
        # radius exactly 1 (the zero-noise case): p = 1/(1+e^-10)
        p = fill_probability(np.array([0.6, 0.8]), "verbatim")
        assert p == pytest.approx(1.0 / (1.0 + math.exp(-10.0)), abs=1e-12)
        assert p == pytest.approx(0.9999546, abs=1e-7)

    def test_ring_distance_on_circle_is_half(self):
        p = fill_probability(np.array([math.sqrt(0.5), math.sqrt(0.5)]), "ring_distance")
        assert p == pytest.approx(0.5, abs=1e-12)

    def test_ring_distance_signed(self):
        inside = fill_probability(np.array([0.1, 0.0]), "ring_distance")
        outside = fill_probability(np.array([1.5, 0.0]), "ring_distance")
        assert inside < 0.01
        assert outside > 0.99

    def test_feature_linked_centered_is_half(self):
        p = feature_fill_probability(0.0, LOG_NOTIONAL_MEAN, 0.0)
        assert p == pytest.approx(0.5, abs=1e-12)

    def test_feature_linked_signs(self):
        base = feature_fill_probability(0.0, LOG_NOTIONAL_MEAN, 0.0)
        assert feature_fill_probability(0.005, LOG_NOTIONAL_MEAN, 0.0) < base
        assert feature_fill_probability(0.0, math.log(1e7), 0.0) < base

    def test_feature_linked_requires_features(self):
        rng = substream(0, 3)
        with pytest.raises(ValueError, match="requires"):
            gen_status("feature_linked", rng)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            gen_status("bogus", substream(0, 3))

    def test_verbatim_label_rate_degenerate(self):
        # analytic mean of sigmoid(10*r^2) under r=|1+0.3N| is ~0.987,
        # so nearly every label is a fill
        _, y = gen_ring_dataset(20_000, seed=3, mode="verbatim")
        assert y.mean() >= 0.98

    def test_ring_rate_outside_vs_inside(self):
        x, y = gen_ring_dataset(20_000, seed=4, mode="ring_distance")
        r = np.linalg.norm(x, axis=1)
        assert y[r > 1.2].mean() > y[r < 0.8].mean()

    def test_ring_point_radius_distribution(self):
        rng = substream(0, 3)
        radii = np.array([np.linalg.norm(sample_ring_point(rng)) for _ in range(4000)])
        assert abs(radii.mean() - 1.0) < 0.02  # E|1+0.3N| ~ 1 for sigma=0.3


class TestQuotePrice:
    def test_within_band(self):
        rng = substream(1, 2)
        for _ in range(200):
            q = gen_quote_price(124.24, rng)
            assert 124.23 <= q <= 124.25

    def test_zero_band_returns_mid(self):
        assert gen_quote_price(124.24, substream(0, 2), quote_band=0.0) == 124.24

    def test_uniform_mean(self):
        rng = substream(7, 2)
        deltas = np.array([gen_quote_price(0.0, rng) for _ in range(100_000)])
        se = (0.02 / math.sqrt(12.0)) / math.sqrt(len(deltas))
        assert abs(deltas.mean()) < 3 * se

    def test_non_finite_mid(self):
        with pytest.raises(ValueError):
            gen_quote_price(float("nan"), substream(0, 2))


class TestDataset:
    def test_default_shape(self, default_records):
        assert len(default_records) == 10005
        assert [r.live for r in default_records[-5:]] == [1] * 5
        assert all(r.live == 0 for r in default_records[:-5])

    def test_categorical_ranges(self, default_records):
        assert all(r.competition in (1, 2, 3, 4) for r in default_records)
        assert all(r.counterparty in (0, 1, 2, 3) for r in default_records)
        assert all(r.side in (0, 1) for r in default_records)
        assert all(r.notional in {10**k for k in range(3, 8)} for r in default_records)

    def test_quote_band_and_midpoint(self, default_records):
        for r in default_records:
            assert abs(r.quoted_price - r.mid_price) <= 0.01

    def test_times_strictly_increasing(self, default_records):
        times = [r.time for r in default_records]
        assert all(b > a for a, b in zip(times, times[1:]))

    def test_same_seed_byte_identical(self):
        config = SimConfig(n_records=300, n_live=3, seed=9)
        a = format_dataset(gen_rfq_dataset(config))
        b = format_dataset(gen_rfq_dataset(config))
        assert a == b

    def test_live_rows_cover_bonds(self, default_records):
        assert [r.bond for r in default_records[-5:]] == [0, 1, 2, 3, 4]

    def test_next_mid_is_paths_following_mid(self):
        config = SimConfig(n_records=50, n_live=2, n_bonds=2, seed=13)
        records = gen_rfq_dataset(config)
        per_bond = {0: [], 1: []}
        for r in records:
            per_bond[r.bond].append(r)
        for bond, rows in per_bond.items():
            path = gen_price_paths(config, bond, n_steps=len(rows) + 1)
            for t, r in enumerate(rows):
                assert r.mid_price == path.mid[t]
                assert r.next_mid_price == path.mid[t + 1]

    def test_invalid_configs(self):
        with pytest.raises(ValueError):
            SimConfig(n_live=10, n_records=5).validate()
        with pytest.raises(ValueError):
            SimConfig(s0=0.0).validate()
        with pytest.raises(ValueError):
            SimConfig(quote_band=0.0).validate()
        with pytest.raises(ValueError):
            SimConfig(status_mode="nope").validate()


class TestCompetitorQuotes:
    def _rfq(self):
        return RfqRecord(time=10000, bond=0, side=1, notional=1000, counterparty=0,
                         mid_price=124.24, quoted_price=124.24, competition=3,
                         status=0, next_mid_price=124.24)

    def test_zero_competitors(self):
        assert len(gen_competitor_quotes(self._rfq(), 0, substream(0, 4))) == 0

    def test_quotes_in_band(self):
        quotes = gen_competitor_quotes(self._rfq(), 3, substream(5, 4))
        assert len(quotes) == 3
        assert np.all(np.abs(quotes - 124.24) <= 0.01)

    def test_golden_seeded(self, golden_dir):
        quotes = gen_competitor_quotes(self._rfq(), 4, substream(123, 4))
        got = "\n".join(repr(float(q)) for q in quotes)
        expected = (golden_dir / "competitor_quotes_seed123.txt").read_text().strip()
        assert got == expected

    def test_negative_count(self):
        with pytest.raises(ValueError):
            gen_competitor_quotes(self._rfq(), -1, substream(0, 4))


class TestRingDataset:
    def test_shapes_and_determinism(self):
        x1, y1 = gen_ring_dataset(500, seed=6)
        x2, y2 = gen_ring_dataset(500, seed=6)
        assert x1.shape == (500, 2) and y1.shape == (500,)
        assert np.array_equal(x1, x2) and np.array_equal(y1, y2)
        assert set(np.unique(y1)) <= {0.0, 1.0}

    def test_rejects_feature_linked(self):
        with pytest.raises(ValueError):
            gen_ring_dataset(10, seed=0, mode="feature_linked")
