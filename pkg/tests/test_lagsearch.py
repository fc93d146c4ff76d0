import math
from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sentilag.lagsearch import (
    LagSearchError,
    align_to_trading_days,
    pearson,
    search_lag,
    shift_align,
)
from conftest import (
    DAY0,
    make_sentiment_series,
    make_stock_series,
    planted_lag_data,
)


def brute_force_pearson(x, y):
    """Definitional formula, evaluated independently of the implementation."""
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    num = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    den = math.sqrt(
        math.fsum((a - mx) ** 2 for a in x) * math.fsum((b - my) ** 2 for b in y)
    )
    return num / den


class TestPearson:
    def test_perfect_positive(self):
        assert pearson([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)

    def test_perfect_negative(self):
        assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)

    def test_hand_value(self):
        assert pearson([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)

    def test_constant_series_rejected(self):
        with pytest.raises(LagSearchError, match="constant"):
            pearson([1, 1, 1], [1, 2, 3])

    def test_length_mismatch_rejected(self):
        with pytest.raises(LagSearchError, match="mismatch"):
            pearson([1, 2, 3], [1, 2])

    def test_too_short_rejected(self):
        with pytest.raises(LagSearchError):
            pearson([1, 2], [1, 2])

    def test_symmetry_and_range(self, rng):
        for _ in range(50):
            x = list(rng.normal(size=20))
            y = list(rng.normal(size=20))
            r = pearson(x, y)
            assert -1.0 <= r <= 1.0
            assert r == pytest.approx(pearson(y, x), abs=1e-12)

    def test_matches_brute_force(self, rng):
        for _ in range(200):
            x = list(rng.normal(size=rng.integers(3, 40)))
            y = list(rng.normal(size=len(x)))
            assert pearson(x, y) == pytest.approx(brute_force_pearson(x, y),
                                                  abs=1e-12)

    def test_affine_invariance(self, rng):
        x = list(rng.normal(size=25))
        y = list(rng.normal(size=25))
        r = pearson(x, y)
        for a, b in [(2.5, 3.0), (-1.5, 0.0), (0.001, -7.0)]:
            scaled = [a * v + b for v in x]
            assert pearson(scaled, y) == pytest.approx(math.copysign(r, a * r),
                                                       abs=1e-12)


class TestShiftAlign:
    def test_zero_shift_pairs_same_day(self):
        stock = make_stock_series([0.0, 0.01, -0.01, 0.02])
        sent = make_sentiment_series([0.1, 0.2, 0.3, 0.4])
        pairs = shift_align(sent, stock, 0, target="open")
        assert len(pairs) == 4
        assert [p[0] for p in pairs] == [0.1, 0.2, 0.3, 0.4]
        assert [p[1] for p in pairs] == [b.open for b in stock]

    def test_weekend_sentiment_merges_into_next_trading_day(self):
        # Friday 2018-01-05, weekend gap, Monday 2018-01-08
        stock = make_stock_series([0.0] * 10, start=date(2018, 1, 1),
                                  skip_weekends=True)
        sent = make_sentiment_series([1.0], start=date(2018, 1, 6))  # Saturday
        indices, values = align_to_trading_days(sent, stock)
        day_of = {i: b.date for i, b in enumerate(stock.bars)}
        assert [day_of[i] for i in indices] == [date(2018, 1, 8)]
        assert values == [1.0]

    def test_weekend_merge_is_post_count_weighted(self):
        from sentilag.sentiment import DailySentimentEntry, DailySentimentSeries

        stock = make_stock_series([0.0] * 10, start=date(2018, 1, 1),
                                  skip_weekends=True)
        sent = DailySentimentSeries(entries=[
            DailySentimentEntry(date(2018, 1, 6), 1.0, 3),  # Sat
            DailySentimentEntry(date(2018, 1, 7), 0.0, 1),  # Sun
        ])
        indices, values = align_to_trading_days(sent, stock)
        assert values == [pytest.approx(0.75)]

    def test_missing_trading_day_filled_neutral(self):
        stock = make_stock_series([0.0, 0.01, 0.02, 0.03])
        sent = make_sentiment_series([0.9], start=DAY0)
        sent2 = make_sentiment_series([0.8], start=DAY0 + timedelta(days=2))
        from sentilag.sentiment import DailySentimentSeries

        merged = DailySentimentSeries(entries=sent.entries + sent2.entries)
        _, values = align_to_trading_days(merged, stock)
        assert values == [0.9, 0.5, 0.8]

    def test_drop_policy_leaves_gap(self):
        from sentilag.sentiment import DailySentimentSeries

        stock = make_stock_series([0.0, 0.01, 0.02, 0.03])
        merged = DailySentimentSeries(
            entries=make_sentiment_series([0.9], start=DAY0).entries
            + make_sentiment_series([0.8], start=DAY0 + timedelta(days=2)).entries
        )
        indices, values = align_to_trading_days(merged, stock, fill="drop")
        assert indices == [0, 2] and values == [0.9, 0.8]

    def test_empty_overlap_rejected(self):
        stock = make_stock_series([0.0, 0.01, 0.02])
        sent = make_sentiment_series([0.5], start=DAY0 + timedelta(days=30))
        with pytest.raises(LagSearchError):
            shift_align(sent, stock, 0)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_pair_count_non_increasing_in_t(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(20, 60))
        stock = make_stock_series(list(rng.normal(0, 0.01, n)),
                                  skip_weekends=True)
        offset = int(rng.integers(0, 5))
        m = int(rng.integers(10, n))
        sent = make_sentiment_series(list(rng.uniform(0, 1, m)),
                                     start=DAY0 + timedelta(days=offset))

        # exhaustive alignment oracle: count pairable indices directly
        indices, _ = align_to_trading_days(sent, stock)
        counts = []
        for t in range(0, 8):
            expected = sum(1 for i in indices if i + t < len(stock.bars))
            try:
                pairs = shift_align(sent, stock, t)
                assert len(pairs) == expected
                counts.append(len(pairs))
            except LagSearchError:
                assert expected == 0
                counts.append(0)
        assert all(b <= a for a, b in zip(counts, counts[1:]))


class TestSearchLag:
    def test_self_correlation_at_zero(self):
        stock = make_stock_series([0.0] + list(np.random.default_rng(1).normal(0, 0.01, 30)))
        sent = make_sentiment_series([b.open / 200.0 for b in stock.bars])
        result = search_lag(sent, stock, 0, 5, target="open")
        assert result.best_t == 0
        assert result.correlations[0] == pytest.approx(1.0)

    def test_planted_lag_recovered(self):
        sentiment, stock = planted_lag_data(k=12, n_days=500, seed=7)
        result = search_lag(sentiment, stock, 3, 30)
        assert result.best_t == 12

    def test_default_range_bounds_present(self):
        sentiment, stock = planted_lag_data(k=10, n_days=300, seed=3)
        result = search_lag(sentiment, stock)
        assert set(result.correlations) == set(range(3, 31))
        assert all(-1.0 <= r <= 1.0 for r in result.correlations.values())

    def test_best_t_invariant_under_affine_transform(self):
        sentiment, stock = planted_lag_data(k=8, n_days=400, seed=11)
        base = search_lag(sentiment, stock)
        from sentilag.sentiment import DailySentimentEntry, DailySentimentSeries

        squashed = DailySentimentSeries(entries=[
            DailySentimentEntry(e.day, 0.25 + 0.5 * e.value, e.post_count)
            for e in sentiment
        ])
        assert search_lag(squashed, stock).best_t == base.best_t

    def test_tmin_greater_than_tmax_rejected(self):
        sentiment, stock = planted_lag_data(k=5, n_days=100, seed=1)
        with pytest.raises(ValueError):
            search_lag(sentiment, stock, 10, 3)

    def test_all_t_failing_is_fatal(self):
        stock = make_stock_series([0.0, 0.01, 0.02, 0.03, 0.04])
        sent = make_sentiment_series([0.5, 0.5, 0.5, 0.5, 0.5])
        with pytest.raises(LagSearchError):
            search_lag(sent, stock, 0, 3)
