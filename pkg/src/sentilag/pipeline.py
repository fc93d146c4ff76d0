"""End-to-end orchestration: ingest -> group -> score -> aggregate ->
lagsearch -> train -> evaluate, run independently for the AFA and UFA
partitions, with a comparison report at the end.

Every stage writes its outputs under the run directory so a failed run
leaves partial artifacts behind for debugging, and each stage is also
reachable standalone through the CLI.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

from . import evaluate as ev
from . import grouping, ingest, lagsearch, lstm, plots, sentiment

logger = logging.getLogger(__name__)

STAGES = ("ingest", "group", "score", "aggregate", "lagsearch", "train",
          "evaluate", "report")
# distinct exit codes per failing stage, starting at 2 (1 = usage error)
STAGE_EXIT_CODES = {name: i + 2 for i, name in enumerate(STAGES)}


class PipelineStageError(Exception):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


class ConfigError(Exception):
    pass


@dataclass
class PipelineConfig:
    posts: Path
    profiles: Path
    stock: Path
    out: Path
    keywords: Path | None = None
    labels: Path | None = None
    model: Path | None = None
    keyword: str = "恒生指数"
    date_from: date = date(2018, 1, 1)
    date_to: date = date(2019, 12, 31)
    tmin: int = 3
    tmax: int = 30
    target: str = "change_pct"
    fill: str = "neutral"
    lookback: int = 20
    hidden_size: int = 128
    dropout: float = 0.001
    epochs: int = 100
    learning_rate: float = 1e-3
    batch_size: int = 64
    split: float = 0.6
    seed: int = 7

    def __post_init__(self):
        if not 0.0 < self.split < 1.0:
            raise ConfigError("split must be in (0, 1)")
        if self.tmin > self.tmax:
            raise ConfigError("tmin must be <= tmax")
        if self.labels is None and self.model is None:
            raise ConfigError("config needs either 'labels' or 'model'")
        for name in ("posts", "profiles", "stock", "keywords", "labels", "model"):
            value = getattr(self, name)
            if value is not None and not Path(value).is_file():
                raise ConfigError(f"{name} path does not exist: {value}")

    def echo(self) -> dict:
        out = {}
        for name, value in vars(self).items():
            if isinstance(value, Path):
                value = str(value)
            elif isinstance(value, date):
                value = value.isoformat()
            out[name] = value
        return out


_INT_KEYS = {"tmin", "tmax", "lookback", "hidden_size", "epochs", "batch_size",
             "seed"}
_FLOAT_KEYS = {"dropout", "learning_rate", "split"}
_PATH_KEYS = {"posts", "profiles", "stock", "out", "keywords", "labels", "model"}
_DATE_KEYS = {"date_from", "date_to"}


def load_config(path: str | Path, overrides: dict | None = None) -> PipelineConfig:
    """Parse a ``key = value`` config file (# comments allowed) with
    optional CLI overrides. Relative paths resolve against the file."""
    path = Path(path)
    base = path.parent
    raw: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        raw[key] = value
    raw.update({k: str(v) for k, v in (overrides or {}).items() if v is not None})

    kwargs: dict = {}
    for key, value in raw.items():
        if key in _INT_KEYS:
            kwargs[key] = int(value)
        elif key in _FLOAT_KEYS:
            kwargs[key] = float(value)
        elif key in _DATE_KEYS:
            kwargs[key] = date.fromisoformat(value)
        elif key in _PATH_KEYS:
            p = Path(value)
            kwargs[key] = p if p.is_absolute() else (base / p)
        elif key in ("keyword", "target", "fill"):
            kwargs[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    try:
        return PipelineConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc))


def _json_dump(path: Path, payload: dict) -> None:
    path.write_text(
        json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def write_predictions_csv(path: Path, rows: list[lstm.PredictionRow],
                          pred_trends: list[bool], actual_trends: list[bool]) -> None:
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["date", "predicted", "actual", "prev_actual", "pred_trend",
             "actual_trend"]
        )
        for row, pt, at in zip(rows, pred_trends, actual_trends):
            writer.writerow(
                [row.day.isoformat(), repr(row.predicted), repr(row.actual),
                 repr(row.prev_actual), int(pt), int(at)]
            )


def read_predictions_csv(path: str | Path) -> list[lstm.PredictionRow]:
    rows = []
    with Path(path).open(encoding="utf-8", newline="") as handle:
        for rec in csv.DictReader(handle):
            rows.append(
                lstm.PredictionRow(
                    day=date.fromisoformat(rec["date"]),
                    predicted=float(rec["predicted"]),
                    actual=float(rec["actual"]),
                    prev_actual=float(rec["prev_actual"]),
                )
            )
    return rows


def _score_branch(posts: ingest.PostCollection, cfg: PipelineConfig
                  ) -> list[sentiment.SentimentLabel]:
    if cfg.labels is not None:
        by_id = {lab.post_id: lab for lab in sentiment.ingest_labels(cfg.labels)}
        return [by_id[p.post_id] for p in posts if p.post_id in by_id]
    model = sentiment.load_model(cfg.model)
    return sentiment.score_posts(model, posts)


def run_branch(
    name: str,
    posts: ingest.PostCollection,
    stock: ingest.StockSeries,
    cfg: PipelineConfig,
    out_dir: Path,
) -> dict:
    """Run score -> aggregate -> lagsearch -> train -> evaluate for one user
    group; returns the branch report dict."""
    out_dir.mkdir(parents=True, exist_ok=True)

    stage = "score"
    try:
        labels = _score_branch(posts, cfg)
        sentiment.write_labels(out_dir / "labels.jsonl", labels)
        pairs, unjoined = sentiment.join_labels(posts, labels)

        stage = "aggregate"
        daily = sentiment.daily_aggregate(pairs)
        sentiment.write_daily_series(out_dir / "sentiment.csv", daily)

        stage = "lagsearch"
        lag = lagsearch.search_lag(
            daily, stock, cfg.tmin, cfg.tmax, target=cfg.target, fill=cfg.fill
        )
        ts = sorted(lag.correlations)
        plots.emit_line_chart(
            out_dir, "lag_curve", ts,
            {"pearson_r": [lag.correlations[t] for t in ts]},
            title=f"{name}: correlation vs. shift window",
            xlabel="T (trading days)", ylabel="Pearson r", x_name="T",
        )
        with (out_dir / "lagsearch.csv").open("w", newline="",
                                              encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["T", "r", "pairs"])
            for t in ts:
                writer.writerow([t, repr(lag.correlations[t]), lag.pair_counts[t]])

        stage = "train"
        dataset = lstm.build_dataset(
            stock, daily, lag.best_t, cfg.lookback, split=cfg.split, fill=cfg.fill
        )
        model = lstm.init_model(
            hidden_size=cfg.hidden_size, dropout=cfg.dropout, seed=cfg.seed
        )
        train_cfg = lstm.TrainConfig(
            batch_size=cfg.batch_size, epochs=cfg.epochs,
            learning_rate=cfg.learning_rate, seed=cfg.seed, lookback=cfg.lookback,
        )
        result = lstm.train(model, dataset, train_cfg)
        lstm.save_checkpoint(out_dir / "model.json", model, dataset, train_cfg)
        plots.write_series_csv(
            out_dir / "loss_history.csv", list(range(len(result.train_losses))),
            {"train_mse": result.train_losses, "test_mse": result.test_losses},
            x_name="epoch",
        )

        stage = "evaluate"
        rows = lstm.predict_series(model, dataset, "test")
        pred_trends, actual_trends = ev.trend_labels_from_rows(rows)
        matrix = ev.confusion(pred_trends, actual_trends)
        norm_mse = result.test_losses[-1] if result.test_losses else None
        report = ev.metrics(matrix, mse=norm_mse)
        write_predictions_csv(
            out_dir / "predictions.csv", rows, pred_trends, actual_trends
        )
        plots.emit_line_chart(
            out_dir, "price",
            [r.day.isoformat() for r in rows],
            {"predicted": [r.predicted for r in rows],
             "actual": [r.actual for r in rows]},
            title=f"{name}: predicted vs. actual open",
            xlabel="day", ylabel="open price", x_name="date",
        )

        branch_report = {
            "group": name,
            "posts": len(posts),
            "labeled_posts": len(pairs),
            "unlabeled_posts": unjoined,
            "days": len(daily),
            "best_t": lag.best_t,
            "correlations": {str(t): lag.correlations[t] for t in ts},
            "confusion": {"tp": matrix.tp, "fn": matrix.fn, "fp": matrix.fp,
                          "tn": matrix.tn},
            "precision": report.precision,
            "recall": report.recall,
            "f1": report.f1,
            "accuracy": report.accuracy,
            "mse_normalized": norm_mse,
            "mse_price": ev.mse([r.predicted for r in rows],
                                [r.actual for r in rows]),
            "evaluated_days": matrix.total,
            "zero_division": report.zero_division,
        }
        _json_dump(out_dir / "metrics.json", branch_report)
        return branch_report
    except PipelineStageError:
        raise
    except Exception as exc:
        raise PipelineStageError(stage, exc)


def comparison_report(afa: dict, ufa: dict, cfg: PipelineConfig) -> dict:
    gap = None
    if ufa["precision"] > 0:
        gap = afa["precision"] / ufa["precision"] - 1.0
    return {
        "afa": afa,
        "ufa": ufa,
        "precision_gap": gap,
        "config": cfg.echo(),
    }


def run_pipeline(cfg: PipelineConfig) -> dict:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)

    stage = "ingest"
    try:
        posts = ingest.load_posts(
            cfg.posts, cfg.keyword, (cfg.date_from, cfg.date_to)
        )
        posts = ingest.clean_posts(posts)
        stock = ingest.load_stock_bars(cfg.stock)
        ingest_dir = out / "ingest"
        ingest_dir.mkdir(exist_ok=True)
        ingest.write_posts(ingest_dir / "posts_clean.jsonl", posts)
        ingest.write_stock_bars(ingest_dir / "stock.csv", stock)
        _json_dump(
            ingest_dir / "ingest_report.json",
            {"posts": len(posts), "malformed_lines": posts.malformed,
             "dropped_records": posts.dropped, "stock_bars": len(stock)},
        )

        stage = "group"
        profiles = grouping.load_profiles(cfg.profiles)
        keywords = (
            grouping.load_keywords(cfg.keywords)
            if cfg.keywords is not None
            else list(grouping.DEFAULT_FINANCIAL_KEYWORDS)
        )
        partition = grouping.partition_posts(posts, profiles, keywords)
        group_dir = out / "groups"
        group_dir.mkdir(exist_ok=True)
        ingest.write_posts(group_dir / "afa_posts.jsonl", partition.afa)
        ingest.write_posts(group_dir / "ufa_posts.jsonl", partition.ufa)
        _json_dump(
            group_dir / "group_report.json",
            {"afa_posts": len(partition.afa), "ufa_posts": len(partition.ufa),
             "unknown_user_posts": partition.unknown_posts},
        )
    except PipelineStageError:
        raise
    except Exception as exc:
        raise PipelineStageError(stage, exc)

    afa_report = run_branch("AFA", partition.afa, stock, cfg, out / "afa")
    ufa_report = run_branch("UFA", partition.ufa, stock, cfg, out / "ufa")

    try:
        report = comparison_report(afa_report, ufa_report, cfg)
        _json_dump(out / "comparison.json", report)
    except Exception as exc:
        raise PipelineStageError("report", exc)
    logger.info(
        "pipeline done: AFA precision %.4f vs UFA precision %.4f",
        afa_report["precision"], ufa_report["precision"],
    )
    return report
