"""Command-line interface. Each pipeline stage runs standalone so failures
are debuggable in isolation; ``sentilag pipeline`` wires them end to end."""

from __future__ import annotations

import csv
import json
import logging
import sys
from datetime import date
from pathlib import Path

import click

from . import evaluate as ev
from . import grouping, ingest, lagsearch, lstm, pipeline, plots, sentiment

logger = logging.getLogger(__name__)


def _resolve_posts(path: str) -> Path:
    """Accept either a posts JSONL file or a stage output directory."""
    p = Path(path)
    if p.is_dir():
        for candidate in ("posts_clean.jsonl", "posts.jsonl"):
            if (p / candidate).is_file():
                return p / candidate
        raise click.ClickException(f"no posts JSONL found in {p}")
    return p


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def main(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command("ingest")
@click.option("--posts", required=True, type=click.Path(exists=True))
@click.option("--stock", required=True, type=click.Path(exists=True))
@click.option("--keyword", required=True)
@click.option("--from", "date_from", required=True, type=click.DateTime(["%Y-%m-%d"]))
@click.option("--to", "date_to", required=True, type=click.DateTime(["%Y-%m-%d"]))
@click.option("--out", required=True, type=click.Path())
def ingest_cmd(posts, stock, keyword, date_from, date_to, out):
    """Load, filter, and clean posts and stock bars."""
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    collection = ingest.load_posts(
        posts, keyword, (date_from.date(), date_to.date())
    )
    collection = ingest.clean_posts(collection)
    series = ingest.load_stock_bars(stock)
    ingest.write_posts(out_dir / "posts_clean.jsonl", collection)
    ingest.write_stock_bars(out_dir / "stock.csv", series)
    click.echo(
        f"kept {len(collection)} posts "
        f"({collection.malformed} malformed, {collection.dropped} dropped), "
        f"{len(series)} stock bars"
    )


@main.command("group")
@click.option("--posts", required=True, type=click.Path(exists=True))
@click.option("--profiles", required=True, type=click.Path(exists=True))
@click.option("--keywords", type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
def group_cmd(posts, profiles, keywords, out):
    """Partition posts into AFA and UFA groups."""
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    collection = ingest.load_posts_raw(_resolve_posts(posts))
    profile_map = grouping.load_profiles(profiles)
    keyword_list = (
        grouping.load_keywords(keywords)
        if keywords
        else list(grouping.DEFAULT_FINANCIAL_KEYWORDS)
    )
    partition = grouping.partition_posts(collection, profile_map, keyword_list)
    ingest.write_posts(out_dir / "afa_posts.jsonl", partition.afa)
    ingest.write_posts(out_dir / "ufa_posts.jsonl", partition.ufa)
    click.echo(
        f"AFA: {len(partition.afa)} posts, UFA: {len(partition.ufa)} posts, "
        f"unknown users: {partition.unknown_posts}"
    )


@main.command("train-classifier")
@click.option("--corpus", required=True, type=click.Path(exists=True),
              help="CSV with columns label,text.")
@click.option("--out", required=True, type=click.Path())
@click.option("--epochs", default=100, show_default=True)
@click.option("--learning-rate", default=0.5, show_default=True)
def train_classifier_cmd(corpus, out, epochs, learning_rate):
    """Fit the hashed n-gram logistic sentiment classifier."""
    rows = []
    with open(corpus, encoding="utf-8", newline="") as handle:
        for rec in csv.DictReader(handle):
            rows.append((rec["text"], int(rec["label"])))
    model, history = sentiment.train_classifier(
        rows, learning_rate=learning_rate, epochs=epochs
    )
    sentiment.save_model(out, model)
    click.echo(f"trained on {len(rows)} texts, final loss {history[-1]:.6f}")


@main.command("score")
@click.option("--model", "model_path", type=click.Path(exists=True))
@click.option("--labels", "labels_path", type=click.Path(exists=True))
@click.option("--posts", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
def score_cmd(model_path, labels_path, posts, out):
    """Label posts with the built-in classifier or an external label file."""
    if (model_path is None) == (labels_path is None):
        raise click.UsageError("provide exactly one of --model / --labels")
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    collection = ingest.load_posts_raw(_resolve_posts(posts))
    if labels_path:
        by_id = {l.post_id: l for l in sentiment.ingest_labels(labels_path)}
        labels = [by_id[p.post_id] for p in collection if p.post_id in by_id]
    else:
        labels = sentiment.score_posts(sentiment.load_model(model_path), collection)
    sentiment.write_labels(out_dir / "labels.jsonl", labels)
    ingest.write_posts(out_dir / "posts.jsonl", collection)
    click.echo(f"scored {len(labels)} of {len(collection)} posts")


@main.command("aggregate")
@click.option("--scored", required=True, type=click.Path(exists=True),
              help="Directory from `sentilag score` (posts.jsonl + labels.jsonl).")
@click.option("--out", required=True, type=click.Path())
def aggregate_cmd(scored, out):
    """Average labels into a per-day sentiment series."""
    scored_dir = Path(scored)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    collection = ingest.load_posts_raw(_resolve_posts(scored))
    labels = sentiment.ingest_labels(scored_dir / "labels.jsonl")
    pairs, unjoined = sentiment.join_labels(collection, labels)
    series = sentiment.daily_aggregate(pairs)
    sentiment.write_daily_series(out_dir / "sentiment.csv", series)
    click.echo(f"{len(series)} days aggregated ({unjoined} posts unlabeled)")


@main.command("lagsearch")
@click.option("--sentiment", "sentiment_path", required=True,
              type=click.Path(exists=True))
@click.option("--stock", required=True, type=click.Path(exists=True))
@click.option("--tmin", default=lagsearch.DEFAULT_T_MIN, show_default=True)
@click.option("--tmax", default=lagsearch.DEFAULT_T_MAX, show_default=True)
@click.option("--target", default="change_pct", show_default=True,
              type=click.Choice(lagsearch.TARGET_COLUMNS))
@click.option("--fill", default="neutral", show_default=True,
              type=click.Choice(["neutral", "carry-forward", "drop"]))
@click.option("--abs", "use_abs", is_flag=True,
              help="Maximize |r| instead of signed r.")
@click.option("--out", required=True, type=click.Path())
def lagsearch_cmd(sentiment_path, stock, tmin, tmax, target, fill, use_abs, out):
    """Find the lead-lag window T maximizing Pearson correlation."""
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    series = sentiment.read_daily_series(sentiment_path)
    bars = ingest.load_stock_bars(stock)
    result = lagsearch.search_lag(
        series, bars, tmin, tmax, target=target, fill=fill, use_abs=use_abs
    )
    ts = sorted(result.correlations)
    with (out_dir / "lagsearch.csv").open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["T", "r", "pairs"])
        for t in ts:
            writer.writerow([t, repr(result.correlations[t]), result.pair_counts[t]])
    plots.emit_line_chart(
        out_dir, "lag_curve", ts,
        {"pearson_r": [result.correlations[t] for t in ts]},
        title="correlation vs. shift window", xlabel="T (trading days)",
        ylabel="Pearson r", x_name="T",
    )
    click.echo(f"best T = {result.best_t} (r = {result.correlations[result.best_t]:.4f})")


@main.command("train")
@click.option("--stock", required=True, type=click.Path(exists=True))
@click.option("--sentiment", "sentiment_path", required=True,
              type=click.Path(exists=True))
@click.option("--t", "--T", "t", required=True, type=int)
@click.option("--lookback", default=20, show_default=True)
@click.option("--hidden", default=128, show_default=True)
@click.option("--epochs", default=100, show_default=True)
@click.option("--batch-size", default=64, show_default=True)
@click.option("--learning-rate", default=1e-3, show_default=True)
@click.option("--split", default=0.6, show_default=True)
@click.option("--seed", default=7, show_default=True)
@click.option("--out", required=True, type=click.Path())
def train_cmd(stock, sentiment_path, t, lookback, hidden, epochs, batch_size,
              learning_rate, split, seed, out):
    """Train the two-layer LSTM regressor and write test predictions."""
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    bars = ingest.load_stock_bars(stock)
    series = sentiment.read_daily_series(sentiment_path)
    dataset = lstm.build_dataset(bars, series, t, lookback, split=split)
    model = lstm.init_model(hidden_size=hidden, seed=seed)
    config = lstm.TrainConfig(
        batch_size=batch_size, epochs=epochs, learning_rate=learning_rate,
        seed=seed, lookback=lookback,
    )
    result = lstm.train(model, dataset, config)
    lstm.save_checkpoint(out_dir / "model.json", model, dataset, config)
    rows = lstm.predict_series(model, dataset, "test")
    pred_trends, actual_trends = ev.trend_labels_from_rows(rows)
    pipeline.write_predictions_csv(
        out_dir / "predictions.csv", rows, pred_trends, actual_trends
    )
    plots.emit_line_chart(
        out_dir, "price", [r.day.isoformat() for r in rows],
        {"predicted": [r.predicted for r in rows],
         "actual": [r.actual for r in rows]},
        title="predicted vs. actual open", xlabel="day", ylabel="open price",
        x_name="date",
    )
    click.echo(
        f"trained {epochs} epochs; final train MSE {result.train_losses[-1]:.6f}, "
        f"test MSE {result.test_losses[-1]:.6f}"
    )


@main.command("evaluate")
@click.option("--predictions", required=True, type=click.Path(exists=True))
@click.option("--stock", type=click.Path(exists=True),
              help="Unused when predictions carry prev_actual; kept for "
                   "recomputing prior-day opens.")
@click.option("--strict-rise", is_flag=True,
              help="Count steady as negative instead of positive.")
@click.option("--out", required=True, type=click.Path())
def evaluate_cmd(predictions, stock, strict_rise, out):
    """Score trend predictions: confusion matrix, precision/recall/F1,
    accuracy, MSE."""
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = pipeline.read_predictions_csv(predictions)
    pred_trends, actual_trends = ev.trend_labels_from_rows(
        rows, strict_rise=strict_rise
    )
    matrix = ev.confusion(pred_trends, actual_trends)
    report = ev.metrics(
        matrix,
        mse=ev.mse([r.predicted for r in rows], [r.actual for r in rows]),
    )
    payload = {
        "confusion": {"tp": matrix.tp, "fn": matrix.fn, "fp": matrix.fp,
                      "tn": matrix.tn},
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
        "accuracy": report.accuracy,
        "mse_price": report.mse,
        "evaluated_days": matrix.total,
        "zero_division": report.zero_division,
        "strict_rise": strict_rise,
    }
    (out_dir / "metrics.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    pipeline.write_predictions_csv(
        out_dir / "per_day.csv", rows, pred_trends, actual_trends
    )
    click.echo(
        f"precision {report.precision:.4f}, accuracy {report.accuracy:.4f} "
        f"over {matrix.total} days"
    )


@main.command("pipeline")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True))
@click.option("--seed", type=int)
@click.option("--out", type=click.Path())
def pipeline_cmd(config_path, seed, out):
    """Run the full AFA/UFA comparison pipeline from a config file."""
    try:
        cfg = pipeline.load_config(config_path, {"seed": seed, "out": out})
        report = pipeline.run_pipeline(cfg)
    except pipeline.PipelineStageError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(pipeline.STAGE_EXIT_CODES[exc.stage])
    except pipeline.ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(1)
    gap = report["precision_gap"]
    gap_str = f"{gap:+.2%}" if gap is not None else "undefined"
    click.echo(
        f"AFA precision {report['afa']['precision']:.4f}, "
        f"UFA precision {report['ufa']['precision']:.4f}, gap {gap_str}"
    )


if __name__ == "__main__":
    main()
