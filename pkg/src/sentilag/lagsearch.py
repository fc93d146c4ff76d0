"""Lead-lag window selection: shift the daily sentiment series against the
stock series by T trading days and pick the T maximizing Pearson
correlation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from datetime import date

from .ingest import StockSeries
from .sentiment import DailySentimentSeries

logger = logging.getLogger(__name__)

TARGET_COLUMNS = ("open", "close", "change_pct")
DEFAULT_T_MIN = 3
DEFAULT_T_MAX = 30
NEUTRAL_SENTIMENT = 0.5


class LagSearchError(Exception):
    pass


@dataclass
class LagSearchResult:
    best_t: int
    correlations: dict[int, float]
    pair_counts: dict[int, int]
    target_column: str
    skipped: list[int] = field(default_factory=list)


def pearson(x: list[float], y: list[float]) -> float:
    """Product-moment correlation. Requires equal lengths >= 3 and
    non-constant series."""
    if len(x) != len(y):
        raise LagSearchError(f"length mismatch: {len(x)} vs {len(y)}")
    n = len(x)
    if n < 3:
        raise LagSearchError(f"need at least 3 points, got {n}")
    mx = sum(x) / n
    my = sum(y) / n
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    if sxx == 0.0 or syy == 0.0:
        raise LagSearchError("correlation undefined for a constant series")
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    r = sxy / math.sqrt(sxx * syy)
    # clamp float noise at the boundaries
    return max(-1.0, min(1.0, r))


def align_to_trading_days(
    sentiment: DailySentimentSeries,
    stock: StockSeries,
    fill: str = "neutral",
) -> tuple[list[int], list[float]]:
    """Map sentiment days onto the stock calendar.

    Non-trading-day sentiment is merged into the next trading day by
    post-count-weighted averaging. Trading days inside the covered span
    with no posts are handled per ``fill``: "neutral" inserts 0.5,
    "carry-forward" repeats the last value, "drop" leaves gaps.

    Returns (trading-day indices, sentiment values), indices ascending.
    """
    if fill not in ("neutral", "carry-forward", "drop"):
        raise ValueError(f"unknown fill policy {fill!r}")
    dates = stock.dates
    if not dates or not len(sentiment):
        raise LagSearchError("empty stock or sentiment series")
    index = stock.date_index()

    def next_trading_index(day: date) -> int | None:
        if day in index:
            return index[day]
        # binary search for the first trading day after `day`
        lo, hi = 0, len(dates)
        while lo < hi:
            mid = (lo + hi) // 2
            if dates[mid] < day:
                lo = mid + 1
            else:
                hi = mid
        return lo if lo < len(dates) else None

    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    for entry in sentiment:
        idx = next_trading_index(entry.day)
        if idx is None:
            continue
        sums[idx] = sums.get(idx, 0.0) + entry.value * entry.post_count
        counts[idx] = counts.get(idx, 0) + entry.post_count
    if not sums:
        raise LagSearchError("no sentiment day maps to a trading day")

    first, last = min(sums), max(sums)
    indices: list[int] = []
    values: list[float] = []
    prev_value = NEUTRAL_SENTIMENT
    for idx in range(first, last + 1):
        if idx in sums:
            value = sums[idx] / counts[idx]
            prev_value = value
        elif fill == "neutral":
            value = NEUTRAL_SENTIMENT
        elif fill == "carry-forward":
            value = prev_value
        else:
            continue
        indices.append(idx)
        values.append(value)
    return indices, values


def shift_align(
    sentiment: DailySentimentSeries,
    stock: StockSeries,
    t: int,
    target: str = "change_pct",
    fill: str = "neutral",
) -> list[tuple[float, float]]:
    """Pair each aligned sentiment value with the target column T trading
    days later. Days lacking either side are dropped."""
    if t < 0:
        raise ValueError("T must be >= 0")
    if target not in TARGET_COLUMNS:
        raise ValueError(f"target must be one of {TARGET_COLUMNS}")
    indices, values = align_to_trading_days(sentiment, stock, fill=fill)
    n = len(stock.bars)
    pairs = [
        (value, getattr(stock.bars[idx + t], target))
        for idx, value in zip(indices, values)
        if idx + t < n
    ]
    if not pairs:
        raise LagSearchError(f"no overlap between sentiment and stock at T={t}")
    logger.debug("T=%d: %d aligned pairs", t, len(pairs))
    return pairs


def search_lag(
    sentiment: DailySentimentSeries,
    stock: StockSeries,
    t_min: int = DEFAULT_T_MIN,
    t_max: int = DEFAULT_T_MAX,
    target: str = "change_pct",
    fill: str = "neutral",
    use_abs: bool = False,
) -> LagSearchResult:
    """Compute Pearson r for every T in [t_min, t_max] and pick the argmax
    of signed r (or |r| with ``use_abs``), ties toward smaller T. Individual
    T values failing preconditions are skipped and flagged; all failing is
    fatal."""
    if t_min > t_max:
        raise ValueError("t_min must be <= t_max")
    correlations: dict[int, float] = {}
    pair_counts: dict[int, int] = {}
    skipped: list[int] = []
    for t in range(t_min, t_max + 1):
        try:
            pairs = shift_align(sentiment, stock, t, target=target, fill=fill)
            xs = [p[0] for p in pairs]
            ys = [p[1] for p in pairs]
            correlations[t] = pearson(xs, ys)
            pair_counts[t] = len(pairs)
        except LagSearchError as exc:
            logger.warning("T=%d skipped: %s", t, exc)
            skipped.append(t)
    if not correlations:
        raise LagSearchError(
            f"no T in [{t_min}, {t_max}] yielded a defined correlation"
        )
    key = (lambda t: abs(correlations[t])) if use_abs else (lambda t: correlations[t])
    best_t = max(sorted(correlations), key=key)
    return LagSearchResult(
        best_t=best_t,
        correlations=correlations,
        pair_counts=pair_counts,
        target_column=target,
        skipped=skipped,
    )
