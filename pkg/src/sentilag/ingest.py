"""File-based ingestion of post corpora and daily stock bars.

Posts arrive as JSONL (one object per line, keys exactly post_id, user_id,
created_at, text, comments, reposts, likes); stock bars as CSV with header
``date,open,close,high,low,volume,change_pct`` where change_pct is optional
and recomputed from closes when the column is missing.
"""

from __future__ import annotations

import csv
import json
import logging
import re
import unicodedata
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

logger = logging.getLogger(__name__)

# Exchange and platform share UTC+8; all post timestamps are bucketed into
# calendar days in this zone unless the caller overrides it.
DEFAULT_TZ = timezone(timedelta(hours=8))

POST_KEYS = frozenset(
    {"post_id", "user_id", "created_at", "text", "comments", "reposts", "likes"}
)
STOCK_COLUMNS = ("date", "open", "close", "high", "low", "volume", "change_pct")

_WHITESPACE_RUN = re.compile(r"\s+")


class IngestError(Exception):
    """Fatal problem with an input file."""


@dataclass(frozen=True)
class PostRecord:
    post_id: str
    user_id: str
    created_at: datetime
    text: str
    comments: int
    reposts: int
    likes: int


@dataclass
class PostCollection:
    """Posts plus bookkeeping about records that did not survive loading."""

    posts: list[PostRecord] = field(default_factory=list)
    malformed: int = 0
    dropped: int = 0

    def __len__(self) -> int:
        return len(self.posts)

    def __iter__(self):
        return iter(self.posts)


@dataclass(frozen=True)
class StockBar:
    date: date
    open: float
    close: float
    high: float
    low: float
    volume: float
    change_pct: float


@dataclass
class StockSeries:
    bars: list[StockBar]
    index_name: str = "index"

    def __len__(self) -> int:
        return len(self.bars)

    def __iter__(self):
        return iter(self.bars)

    @property
    def dates(self) -> list[date]:
        return [b.date for b in self.bars]

    def date_index(self) -> dict[date, int]:
        return {b.date: i for i, b in enumerate(self.bars)}


def normalize_text(text: str) -> str:
    """NFC-normalize, strip control chars and unpaired surrogates, collapse
    whitespace runs to single spaces."""
    text = unicodedata.normalize("NFC", text)
    text = "".join(
        ch for ch in text if unicodedata.category(ch) not in ("Cc", "Cs")
    )
    return _WHITESPACE_RUN.sub(" ", text).strip()


def _parse_timestamp(raw: str) -> datetime:
    ts = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=DEFAULT_TZ)
    return ts


def _parse_post(obj: dict) -> PostRecord:
    if not isinstance(obj, dict) or set(obj.keys()) != POST_KEYS:
        raise ValueError(f"expected keys {sorted(POST_KEYS)}")
    for key in ("post_id", "user_id", "text"):
        if not isinstance(obj[key], str):
            raise ValueError(f"{key} must be a string")
    counts = {}
    for key in ("comments", "reposts", "likes"):
        value = obj[key]
        if not isinstance(value, int) or isinstance(value, bool) or value < 0:
            raise ValueError(f"{key} must be a non-negative integer")
        counts[key] = value
    return PostRecord(
        post_id=obj["post_id"],
        user_id=obj["user_id"],
        created_at=_parse_timestamp(obj["created_at"]),
        text=obj["text"],
        **counts,
    )


def load_posts(
    path: str | Path,
    keyword: str,
    date_range: tuple[date, date],
    tz: timezone = DEFAULT_TZ,
) -> PostCollection:
    """Load posts from JSONL, keeping only records whose text contains
    ``keyword`` case-insensitively and whose timestamp falls inside
    ``date_range`` (inclusive, calendar days in ``tz``).

    Malformed lines are skipped and counted; more than 50% malformed lines
    is fatal. A missing file is fatal.
    """
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"posts file not found: {path}")
    start, end = date_range
    needle = keyword.casefold()

    collection = PostCollection()
    seen_ids: set[str] = set()
    total_lines = 0
    for lineno, line in enumerate(path.open(encoding="utf-8"), start=1):
        if not line.strip():
            continue
        total_lines += 1
        try:
            record = _parse_post(json.loads(line))
            if record.post_id in seen_ids:
                raise ValueError(f"duplicate post_id {record.post_id!r}")
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            collection.malformed += 1
            logger.warning("%s:%d skipped: %s", path, lineno, exc)
            continue
        seen_ids.add(record.post_id)
        if needle not in record.text.casefold():
            continue
        local_day = record.created_at.astimezone(tz).date()
        if not start <= local_day <= end:
            continue
        collection.posts.append(record)

    if total_lines and collection.malformed * 2 > total_lines:
        raise IngestError(
            f"{path}: {collection.malformed}/{total_lines} lines malformed"
        )
    return collection


def load_posts_raw(path: str | Path) -> PostCollection:
    """Reload a previously written posts file without keyword or date
    filtering (for stage outputs). Malformed lines are fatal here: the file
    is our own artifact."""
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"posts file not found: {path}")
    collection = PostCollection()
    for lineno, line in enumerate(path.open(encoding="utf-8"), start=1):
        if not line.strip():
            continue
        try:
            collection.posts.append(_parse_post(json.loads(line)))
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            raise IngestError(f"{path}:{lineno}: {exc}")
    return collection


def clean_posts(posts: PostCollection) -> PostCollection:
    """Normalize texts and drop duplicates.

    A record is a duplicate when an earlier record has the same
    (user_id, normalized text) pair: identical boilerplate from distinct
    authors is kept because distinct authors are distinct opinions.
    Records whose text normalizes to empty are dropped and counted.
    """
    out = PostCollection(malformed=posts.malformed, dropped=posts.dropped)
    seen: set[tuple[str, str]] = set()
    for post in posts:
        text = normalize_text(post.text)
        if not text:
            out.dropped += 1
            continue
        key = (post.user_id, text)
        if key in seen:
            out.dropped += 1
            continue
        seen.add(key)
        out.posts.append(replace(post, text=text))
    return out


def _parse_float(raw: str, column: str, rownum: int) -> float:
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise IngestError(f"row {rownum}: unparsable {column} value {raw!r}")


def load_stock_bars(path: str | Path, index_name: str | None = None) -> StockSeries:
    """Load daily bars from CSV, sorted chronologically.

    When the change_pct column is absent it is recomputed as
    (close_t - close_{t-1}) / close_{t-1}, with the first bar set to 0.
    Duplicate dates, unparsable cells, and OHLC range violations are fatal.
    """
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"stock file not found: {path}")
    with path.open(encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        required = [c for c in STOCK_COLUMNS if c != "change_pct"]
        missing = [c for c in required if c not in header]
        if missing:
            raise IngestError(f"{path}: missing columns {missing}")
        has_change = "change_pct" in header

        bars: list[StockBar] = []
        for rownum, row in enumerate(reader, start=2):
            try:
                day = date.fromisoformat(row["date"])
            except (TypeError, ValueError):
                raise IngestError(f"row {rownum}: bad date {row.get('date')!r}")
            o = _parse_float(row["open"], "open", rownum)
            c = _parse_float(row["close"], "close", rownum)
            h = _parse_float(row["high"], "high", rownum)
            lo = _parse_float(row["low"], "low", rownum)
            v = _parse_float(row["volume"], "volume", rownum)
            if not (lo <= min(o, c) <= max(o, c) <= h):
                raise IngestError(f"row {rownum}: OHLC range violated")
            if v < 0:
                raise IngestError(f"row {rownum}: negative volume")
            chg = (
                _parse_float(row["change_pct"], "change_pct", rownum)
                if has_change
                else 0.0
            )
            bars.append(StockBar(day, o, c, h, lo, v, chg))

    bars.sort(key=lambda b: b.date)
    for prev, cur in zip(bars, bars[1:]):
        if prev.date == cur.date:
            raise IngestError(f"duplicate date {cur.date}")
    if not has_change:
        recomputed = [replace(bars[0], change_pct=0.0)] if bars else []
        for prev, cur in zip(bars, bars[1:]):
            recomputed.append(
                replace(cur, change_pct=(cur.close - prev.close) / prev.close)
            )
        bars = recomputed
    return StockSeries(bars=bars, index_name=index_name or path.stem)


def write_posts(path: str | Path, posts: PostCollection) -> None:
    """Write posts back out in the ingest JSONL schema."""
    with Path(path).open("w", encoding="utf-8") as handle:
        for p in posts:
            handle.write(
                json.dumps(
                    {
                        "post_id": p.post_id,
                        "user_id": p.user_id,
                        "created_at": p.created_at.isoformat(),
                        "text": p.text,
                        "comments": p.comments,
                        "reposts": p.reposts,
                        "likes": p.likes,
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )


def write_stock_bars(path: str | Path, series: StockSeries) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(STOCK_COLUMNS)
        for b in series:
            writer.writerow(
                [b.date.isoformat(), b.open, b.close, b.high, b.low, b.volume,
                 b.change_pct]
            )
