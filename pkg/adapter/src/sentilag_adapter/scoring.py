"""Batch inference over a posts JSONL file."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

logger = logging.getLogger(__name__)


class AdapterError(Exception):
    """Fatal adapter failure (bad input file, unloadable model, ...)."""


@dataclass(frozen=True)
class AdapterConfig:
    model: str
    input: Path
    output: Path
    batch_size: int = 64
    threshold: float = 0.5
    max_length: int = field(default=256, repr=False)

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise AdapterError(f"batch size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.threshold <= 1.0:
            raise AdapterError(
                f"threshold must be in [0, 1], got {self.threshold}"
            )


def read_posts(path: Path) -> list[tuple[str, str]]:
    """Return (post_id, text) per line of a primary posts JSONL file."""
    if not path.is_file():
        raise AdapterError(f"input file not found: {path}")
    posts: list[tuple[str, str]] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                post_id = record["post_id"]
                text = record["text"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise AdapterError(f"{path}:{lineno}: bad post record: {exc}")
            if not isinstance(post_id, str) or not isinstance(text, str):
                raise AdapterError(
                    f"{path}:{lineno}: post_id and text must be strings"
                )
            if post_id in seen:
                raise AdapterError(f"{path}:{lineno}: duplicate post_id {post_id!r}")
            seen.add(post_id)
            posts.append((post_id, text))
    return posts


def load_model(identifier: str):
    """Load tokenizer and sequence-classification model; fatal on failure."""
    try:
        from transformers import (
            AutoModelForSequenceClassification,
            AutoTokenizer,
        )

        tokenizer = AutoTokenizer.from_pretrained(identifier)
        model = AutoModelForSequenceClassification.from_pretrained(identifier)
    except Exception as exc:
        raise AdapterError(f"cannot load model {identifier!r}: {exc}")
    model.eval()
    return tokenizer, model


def _positive_probabilities(logits) -> list[float]:
    """Map classifier logits to P(positive); handles 1- and 2-logit heads."""
    import torch

    if logits.shape[-1] == 1:
        probs = torch.sigmoid(logits[:, 0])
    else:
        probs = torch.softmax(logits, dim=-1)[:, 1]
    return [float(p) for p in probs]


def score_file(config: AdapterConfig) -> int:
    """Score every post in config.input, write the label file, and return
    the number of lines written. Output order matches input order."""
    import torch

    posts = read_posts(config.input)
    tokenizer, model = load_model(config.model)

    results: dict[str, float] = {}
    scorable = [(pid, text) for pid, text in posts if text.strip()]
    for pid, text in posts:
        if not text.strip():
            logger.warning("post %s has empty text; emitting probability 0.5",
                           pid)
            results[pid] = 0.5

    with torch.no_grad():
        for start in range(0, len(scorable), config.batch_size):
            batch = scorable[start:start + config.batch_size]
            encoded = tokenizer(
                [text for _, text in batch],
                padding=True,
                truncation=True,
                max_length=config.max_length,
                return_tensors="pt",
            )
            logits = model(**encoded).logits
            for (pid, _), prob in zip(batch, _positive_probabilities(logits)):
                results[pid] = prob

    config.output.parent.mkdir(parents=True, exist_ok=True)
    with config.output.open("w", encoding="utf-8") as handle:
        for pid, _ in posts:
            probability = results[pid]
            label = 1 if probability >= config.threshold else 0
            handle.write(
                json.dumps(
                    {"post_id": pid, "label": label,
                     "probability": probability},
                    sort_keys=True,
                )
                + "\n"
            )
    return len(posts)
