"""Command-line entry point: posts JSONL in, label JSONL out."""

from __future__ import annotations

import logging
from pathlib import Path

import click

from .scoring import AdapterConfig, AdapterError, score_file


@click.command()
@click.option("--model", required=True,
              help="Model identifier or checkpoint directory.")
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True),
              help="Posts JSONL from the primary pipeline.")
@click.option("--output", "output_path", required=True, type=click.Path(),
              help="Label JSONL to write.")
@click.option("--batch", default=64, show_default=True,
              help="Inference batch size.")
@click.option("--threshold", default=0.5, show_default=True,
              help="Probability at or above which the label is 1.")
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def main(model, input_path, output_path, batch, threshold, verbose):
    """Score posts with a pretrained transformer and emit the label file."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = AdapterConfig(
            model=model,
            input=Path(input_path),
            output=Path(output_path),
            batch_size=batch,
            threshold=threshold,
        )
        written = score_file(config)
    except AdapterError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"wrote {written} labels to {output_path}")


if __name__ == "__main__":
    main()
