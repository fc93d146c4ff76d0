"""Shared synthetic-data builders for the test suite."""

from __future__ import annotations

import json
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

import numpy as np
import pytest

from sentilag.ingest import PostRecord, PostCollection, StockBar, StockSeries
from sentilag.sentiment import DailySentimentEntry, DailySentimentSeries

TZ = timezone(timedelta(hours=8))
DAY0 = date(2018, 1, 1)


def make_post(post_id, user_id="u1", day=DAY0, text="恒生指数 会涨",
              hour=10) -> PostRecord:
    return PostRecord(
        post_id=post_id,
        user_id=user_id,
        created_at=datetime(day.year, day.month, day.day, hour, tzinfo=TZ),
        text=text,
        comments=0,
        reposts=0,
        likes=0,
    )


def make_stock_series(changes, start=DAY0, base_price=100.0,
                      skip_weekends=False) -> StockSeries:
    """Bars whose open/close track cumulative returns; change_pct[d] is the
    return from day d-1 to day d."""
    bars = []
    price = base_price
    day = start
    for i, chg in enumerate(changes):
        if i > 0:
            price *= 1.0 + chg
        while skip_weekends and day.weekday() >= 5:
            day += timedelta(days=1)
        bars.append(
            StockBar(
                date=day, open=price, close=price,
                high=price * 1.001, low=price * 0.999,
                volume=1e6, change_pct=chg if i > 0 else 0.0,
            )
        )
        day += timedelta(days=1)
    return StockSeries(bars=bars, index_name="synthetic")


def make_sentiment_series(values, start=DAY0, post_count=10) -> DailySentimentSeries:
    return DailySentimentSeries(
        entries=[
            DailySentimentEntry(day=start + timedelta(days=i), value=float(v),
                                post_count=post_count)
            for i, v in enumerate(values)
        ]
    )


def planted_lag_data(k: int, n_days: int, seed: int, noise: float = 0.1):
    """Stock changes are random; sentiment on day d encodes the sign of the
    change k days later, mapped to {0,1} plus bounded noise."""
    rng = np.random.default_rng(seed)
    changes = rng.normal(0.0, 0.01, size=n_days)
    changes[0] = 0.0
    sent = np.full(n_days, 0.5)
    for d in range(n_days - k):
        sent[d] = 1.0 if changes[d + k] >= 0 else 0.0
    sent = np.clip(sent + rng.uniform(-noise, noise, size=n_days), 0.0, 1.0)
    stock = make_stock_series(changes)
    sentiment = make_sentiment_series(sent)
    return sentiment, stock


def write_jsonl(path: Path, records: list[dict]) -> None:
    with path.open("w", encoding="utf-8") as handle:
        for rec in records:
            handle.write(json.dumps(rec, ensure_ascii=False) + "\n")


def post_obj(post_id, user_id="u1", created_at="2018-06-01T10:00:00+08:00",
             text="恒生指数 会涨", comments=0, reposts=0, likes=0) -> dict:
    return {
        "post_id": post_id, "user_id": user_id, "created_at": created_at,
        "text": text, "comments": comments, "reposts": reposts, "likes": likes,
    }


def two_group_fixture(
    root: Path,
    seed: int,
    n_days: int = 500,
    lag: int = 12,
    beta: float = 0.02,
    sigma: float = 0.010,
    posts_per_day: int = 40,
    epochs: int = 250,
    hidden_size: int = 16,
    lookback: int = 8,
    learning_rate: float = 0.02,
    kernel: tuple[float, ...] = (0.30, 0.28, 0.26, 0.24),
    phi: float = 0.93,
) -> Path:
    """Write a complete synthetic pipeline input set where one group's post
    labels encode future returns at the planted lag and the other group's
    labels are coin flips. Returns the config file path.

    The informative group's daily signal is an i.i.d. coin whose impact on
    returns is spread over ``len(kernel)`` consecutive days starting at
    ``lag``, so most of tomorrow's predictable return comes from signal
    values already visible in the lag-shifted feature window. The price
    noise ``sigma`` is large enough that the same information is hard to
    recover from past returns alone, which is what gives the informative
    group its edge. The log price mean-reverts (``phi``), keeping the test
    segment inside the training price range.
    """
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)

    # i.i.d. binary signal in {0.05, 0.95}; burn-in covers the kernel span
    # and lets the price process reach its stationary band
    burn = 200
    total = burn + n_days
    coin = rng.integers(0, 2, size=total)
    drive = 0.9 * (2.0 * coin - 1.0)

    w = np.zeros(total)
    for d in range(1, total):
        innov = beta * sum(
            k * drive[d - lag - off]
            for off, k in enumerate(kernel)
            if d - lag - off >= 0
        )
        w[d] = phi * w[d - 1] + innov + sigma * rng.normal()
    w = w[burn:]
    signal = 0.5 + 0.45 * (2.0 * coin[burn:] - 1.0)

    changes = np.exp(np.diff(w)) - 1.0
    changes = np.concatenate([[0.0], changes])
    stock = make_stock_series(changes, base_price=100.0 * float(np.exp(w[0])))

    stock_path = root / "stock.csv"
    with stock_path.open("w", encoding="utf-8") as handle:
        handle.write("date,open,close,high,low,volume,change_pct\n")
        for b in stock.bars:
            handle.write(
                f"{b.date.isoformat()},{float(b.open)!r},{float(b.close)!r},"
                f"{float(b.high)!r},{float(b.low)!r},{float(b.volume)!r},"
                f"{float(b.change_pct)!r}\n"
            )

    afa_users = [f"afa{i}" for i in range(5)]
    ufa_users = [f"ufa{i}" for i in range(5)]
    profiles = [
        {"user_id": uid, "certified": True, "verify_description": "证券分析师"}
        for uid in afa_users
    ] + [
        {"user_id": uid, "certified": False, "verify_description": ""}
        for uid in ufa_users
    ]
    write_jsonl(root / "profiles.jsonl", profiles)

    posts, labels = [], []
    for d in range(n_days):
        day = DAY0 + timedelta(days=d)
        for i in range(posts_per_day):
            for group, users, p_up in (
                ("a", afa_users, signal[d]),
                ("u", ufa_users, 0.5),
            ):
                pid = f"{group}{d}-{i}"
                lab = int(rng.random() < p_up)
                posts.append(post_obj(
                    pid,
                    user_id=users[i % len(users)],
                    created_at=f"{day.isoformat()}T10:00:00+08:00",
                    text=(f"恒生指数 看涨 #{pid}" if lab
                          else f"恒生指数 看跌 #{pid}"),
                ))
                labels.append(
                    {"post_id": pid, "label": lab,
                     "probability": 0.9 if lab else 0.1}
                )
    write_jsonl(root / "posts.jsonl", posts)
    write_jsonl(root / "labels.jsonl", labels)

    end_day = DAY0 + timedelta(days=n_days)
    config = root / "pipeline.cfg"
    config.write_text(
        "\n".join([
            "posts = posts.jsonl",
            "profiles = profiles.jsonl",
            "stock = stock.csv",
            "labels = labels.jsonl",
            "keyword = 恒生指数",
            f"date_from = {DAY0.isoformat()}",
            f"date_to = {end_day.isoformat()}",
            "tmin = 3",
            "tmax = 30",
            "target = change_pct",
            f"lookback = {lookback}",
            f"hidden_size = {hidden_size}",
            f"epochs = {epochs}",
            f"learning_rate = {learning_rate!r}",
            "batch_size = 64",
            "split = 0.6",
            f"seed = {seed}",
            "out = run",
        ]) + "\n",
        encoding="utf-8",
    )
    return config


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
