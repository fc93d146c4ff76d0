"""Binary post sentiment: a hashed character n-gram logistic classifier,
a label-file ingestion path for external scorers, and the per-day
aggregation Sentiment_d = (sum of labels on day d) / n."""

from __future__ import annotations

import csv
import json
import logging
import math
import zlib
from dataclasses import dataclass
from datetime import date, timezone
from pathlib import Path

import numpy as np

from .ingest import DEFAULT_TZ, PostCollection, PostRecord

logger = logging.getLogger(__name__)

DEFAULT_HASH_DIMS = 2 ** 18
DEFAULT_NGRAM_ORDERS = (1, 2)
DECISION_THRESHOLD = 0.5


class LabelFileError(Exception):
    """Fatal problem with a label file."""


@dataclass(frozen=True)
class SentimentLabel:
    post_id: str
    label: int  # 1 = expecting prices to rise, 0 = to fall
    probability: float  # confidence of label 1


@dataclass
class SentimentModel:
    weights: np.ndarray
    bias: float
    hash_dims: int
    ngram_orders: tuple[int, ...]

    def __post_init__(self):
        if self.hash_dims < 2 or self.hash_dims & (self.hash_dims - 1):
            raise ValueError("hash_dims must be a power of two >= 2")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("model weights must be finite")


@dataclass(frozen=True)
class DailySentimentEntry:
    day: date
    value: float  # mean of binary labels, in [0, 1]
    post_count: int


@dataclass
class DailySentimentSeries:
    entries: list[DailySentimentEntry]

    def __post_init__(self):
        self.entries = sorted(self.entries, key=lambda e: e.day)
        days = [e.day for e in self.entries]
        if len(set(days)) != len(days):
            raise ValueError("duplicate dates in daily sentiment series")
        for e in self.entries:
            if not 0.0 <= e.value <= 1.0:
                raise ValueError(f"sentiment value out of [0,1] on {e.day}")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def as_dict(self) -> dict[date, DailySentimentEntry]:
        return {e.day: e for e in self.entries}


def featurize(
    text: str,
    hash_dims: int = DEFAULT_HASH_DIMS,
    ngram_orders: tuple[int, ...] = DEFAULT_NGRAM_ORDERS,
) -> dict[int, float]:
    """Hash character n-grams into ``hash_dims`` buckets (crc32, stable
    across runs), count, and L2-normalize. Returns a sparse bucket->weight
    map."""
    if not text:
        raise ValueError("cannot featurize empty text")
    if hash_dims < 2:
        raise ValueError("hash_dims must be >= 2")
    counts: dict[int, float] = {}
    mask = hash_dims - 1
    power_of_two = not (hash_dims & (hash_dims - 1))
    for order in ngram_orders:
        for i in range(len(text) - order + 1):
            gram = text[i : i + order]
            h = zlib.crc32(gram.encode("utf-8"))
            bucket = (h & mask) if power_of_two else (h % hash_dims)
            counts[bucket] = counts.get(bucket, 0.0) + 1.0
    norm = math.sqrt(sum(v * v for v in counts.values()))
    return {k: v / norm for k, v in counts.items()}


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def _logit(model: SentimentModel, features: dict[int, float]) -> float:
    return sum(model.weights[k] * v for k, v in features.items()) + model.bias


def train_classifier(
    corpus: list[tuple[str, int]],
    learning_rate: float = 0.5,
    epochs: int = 100,
    l2: float = 1e-4,
    hash_dims: int = DEFAULT_HASH_DIMS,
    ngram_orders: tuple[int, ...] = DEFAULT_NGRAM_ORDERS,
) -> tuple[SentimentModel, list[float]]:
    """Fit a logistic model by full-batch gradient descent on L2-regularized
    mean cross-entropy. Returns (model, per-epoch loss history)."""
    labels = {y for _, y in corpus}
    if labels != {0, 1}:
        raise ValueError("training corpus must contain both classes")

    feats = [featurize(t, hash_dims, ngram_orders) for t, _ in corpus]
    ys = [float(y) for _, y in corpus]
    n = len(corpus)
    model = SentimentModel(
        weights=np.zeros(hash_dims), bias=0.0, hash_dims=hash_dims,
        ngram_orders=tuple(ngram_orders),
    )
    history: list[float] = []
    for _ in range(epochs):
        grad_w: dict[int, float] = {}
        grad_b = 0.0
        loss = 0.0
        for x, y in zip(feats, ys):
            p = _sigmoid(_logit(model, x))
            eps = 1e-12
            loss -= y * math.log(p + eps) + (1.0 - y) * math.log(1.0 - p + eps)
            err = p - y
            grad_b += err
            for k, v in x.items():
                grad_w[k] = grad_w.get(k, 0.0) + err * v
        loss = loss / n + 0.5 * l2 * float(model.weights @ model.weights)
        history.append(loss)
        model.weights *= 1.0 - learning_rate * l2
        for k, g in grad_w.items():
            model.weights[k] -= learning_rate * g / n
        model.bias -= learning_rate * grad_b / n
    return model, history


def score(
    model: SentimentModel, text: str, post_id: str = "",
    threshold: float = DECISION_THRESHOLD,
) -> SentimentLabel:
    """Probability = sigmoid(w . featurize(text) + b); label 1 on
    probability >= threshold (ties go positive)."""
    features = featurize(text, model.hash_dims, model.ngram_orders)
    p = _sigmoid(_logit(model, features))
    return SentimentLabel(post_id=post_id, label=int(p >= threshold), probability=p)


def score_posts(model: SentimentModel, posts: PostCollection) -> list[SentimentLabel]:
    return [score(model, p.text, p.post_id) for p in posts]


def save_model(path: str | Path, model: SentimentModel) -> None:
    payload = {
        "hash_dims": model.hash_dims,
        "ngram_orders": list(model.ngram_orders),
        "bias": model.bias,
        # store only nonzero weights; the space is mostly empty
        "weights": {str(i): float(w) for i, w in zip(
            np.flatnonzero(model.weights), model.weights[np.flatnonzero(model.weights)]
        )},
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_model(path: str | Path) -> SentimentModel:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    weights = np.zeros(int(payload["hash_dims"]))
    for k, v in payload["weights"].items():
        weights[int(k)] = v
    return SentimentModel(
        weights=weights,
        bias=float(payload["bias"]),
        hash_dims=int(payload["hash_dims"]),
        ngram_orders=tuple(payload["ngram_orders"]),
    )


def ingest_labels(path: str | Path) -> list[SentimentLabel]:
    """Parse a JSONL label file ({post_id, label, probability} per line).
    Domain violations are fatal with the offending line number."""
    path = Path(path)
    if not path.is_file():
        raise LabelFileError(f"label file not found: {path}")
    out: list[SentimentLabel] = []
    for lineno, line in enumerate(path.open(encoding="utf-8"), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            post_id = obj["post_id"]
            label = obj["label"]
            probability = obj["probability"]
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise LabelFileError(f"{path}:{lineno}: {exc}")
        if not isinstance(post_id, str):
            raise LabelFileError(f"{path}:{lineno}: post_id must be a string")
        if label not in (0, 1) or isinstance(label, bool):
            raise LabelFileError(f"{path}:{lineno}: label {label!r} not in {{0,1}}")
        if not isinstance(probability, (int, float)) or not 0.0 <= probability <= 1.0:
            raise LabelFileError(
                f"{path}:{lineno}: probability {probability!r} outside [0,1]"
            )
        out.append(SentimentLabel(post_id, int(label), float(probability)))
    return out


def write_labels(path: str | Path, labels: list[SentimentLabel]) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for lab in labels:
            handle.write(
                json.dumps(
                    {"post_id": lab.post_id, "label": lab.label,
                     "probability": lab.probability},
                    sort_keys=True,
                )
                + "\n"
            )


def join_labels(
    posts: PostCollection, labels: list[SentimentLabel]
) -> tuple[list[tuple[PostRecord, SentimentLabel]], int]:
    """Join labels to posts on post_id. Returns (pairs, unjoined post count);
    labels for unknown post_ids are tolerated and ignored."""
    by_id = {lab.post_id: lab for lab in labels}
    pairs = []
    unjoined = 0
    for post in posts:
        lab = by_id.get(post.post_id)
        if lab is None:
            unjoined += 1
        else:
            pairs.append((post, lab))
    if unjoined:
        logger.warning("%d posts had no sentiment label", unjoined)
    return pairs, unjoined


def daily_aggregate(
    labeled_posts: list[tuple[PostRecord, SentimentLabel]],
    tz: timezone = DEFAULT_TZ,
    use_probability: bool = False,
) -> DailySentimentSeries:
    """Per-day mean of labels: Sentiment_d = (sum of Label_i) / n over the
    n posts dated d. Days with no posts are absent. ``use_probability``
    averages soft probabilities instead of hard labels (experimental)."""
    sums: dict[date, float] = {}
    counts: dict[date, int] = {}
    for post, lab in labeled_posts:
        day = post.created_at.astimezone(tz).date()
        value = lab.probability if use_probability else float(lab.label)
        sums[day] = sums.get(day, 0.0) + value
        counts[day] = counts.get(day, 0) + 1
    entries = [
        DailySentimentEntry(day=d, value=sums[d] / counts[d], post_count=counts[d])
        for d in sorted(sums)
    ]
    return DailySentimentSeries(entries=entries)


def write_daily_series(path: str | Path, series: DailySentimentSeries) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["date", "sentiment", "post_count"])
        for e in series:
            writer.writerow([e.day.isoformat(), repr(e.value), e.post_count])


def read_daily_series(path: str | Path) -> DailySentimentSeries:
    entries = []
    with Path(path).open(encoding="utf-8", newline="") as handle:
        for row in csv.DictReader(handle):
            entries.append(
                DailySentimentEntry(
                    day=date.fromisoformat(row["date"]),
                    value=float(row["sentiment"]),
                    post_count=int(row["post_count"]),
                )
            )
    return DailySentimentSeries(entries=entries)
