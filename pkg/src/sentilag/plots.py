"""Chart output for the report path.

Two renderers: a hand-rolled SVG line chart (deterministic, diff-able, one
``<polyline>`` per series, data extrema recorded as attributes so charts are
machine-checkable) and a matplotlib PNG companion for human eyes.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

SVG_WIDTH = 800
SVG_HEIGHT = 480
MARGIN = 60
DEFAULT_PADDING = 0.05

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


class PlotError(Exception):
    pass


def _extent(values: list[float], padding: float) -> tuple[float, float]:
    lo, hi = min(values), max(values)
    pad = (hi - lo) * padding
    if pad == 0.0:
        pad = abs(hi) * padding or padding
    return lo - pad, hi + pad


def line_chart_svg(
    path: str | Path,
    x: list[float],
    series: dict[str, list[float]],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    padding: float = DEFAULT_PADDING,
) -> None:
    """Write an SVG line chart: one polyline per series over a shared x
    axis. Axis ranges cover the data extrema expanded by ``padding``."""
    if not x or not series or any(len(v) != len(x) for v in series.values()):
        raise PlotError("series must be non-empty and match the x axis length")
    xmin, xmax = _extent(x, padding)
    all_y = [v for ys in series.values() for v in ys]
    ymin, ymax = _extent(all_y, padding)

    def sx(value: float) -> float:
        return MARGIN + (value - xmin) / (xmax - xmin) * (SVG_WIDTH - 2 * MARGIN)

    def sy(value: float) -> float:
        return SVG_HEIGHT - MARGIN - (value - ymin) / (ymax - ymin) * (
            SVG_HEIGHT - 2 * MARGIN
        )

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" '
        f'height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">',
        f'<g id="plot" data-xmin="{xmin!r}" data-xmax="{xmax!r}" '
        f'data-ymin="{ymin!r}" data-ymax="{ymax!r}">',
        f'<rect x="0" y="0" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="white"/>',
        f'<line x1="{MARGIN}" y1="{SVG_HEIGHT - MARGIN}" x2="{SVG_WIDTH - MARGIN}" '
        f'y2="{SVG_HEIGHT - MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" '
        f'y2="{SVG_HEIGHT - MARGIN}" stroke="black"/>',
    ]
    if title:
        lines.append(
            f'<text x="{SVG_WIDTH / 2}" y="{MARGIN / 2}" text-anchor="middle" '
            f'font-size="16">{title}</text>'
        )
    if xlabel:
        lines.append(
            f'<text x="{SVG_WIDTH / 2}" y="{SVG_HEIGHT - MARGIN / 4}" '
            f'text-anchor="middle" font-size="12">{xlabel}</text>'
        )
    if ylabel:
        lines.append(
            f'<text x="{MARGIN / 4}" y="{SVG_HEIGHT / 2}" text-anchor="middle" '
            f'font-size="12" transform="rotate(-90 {MARGIN / 4} {SVG_HEIGHT / 2})">'
            f"{ylabel}</text>"
        )
    for k, (label, ys) in enumerate(series.items()):
        color = _COLORS[k % len(_COLORS)]
        points = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, ys))
        lines.append(
            f'<polyline data-label="{label}" fill="none" stroke="{color}" '
            f'stroke-width="1.5" points="{points}"/>'
        )
        lines.append(
            f'<text x="{SVG_WIDTH - MARGIN + 5}" y="{MARGIN + 15 * k}" '
            f'font-size="11" fill="{color}">{label}</text>'
        )
    lines.append("</g></svg>")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def line_chart_png(
    path: str | Path,
    x: list[float],
    series: dict[str, list[float]],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
) -> None:
    fig, ax = plt.subplots(figsize=(8, 4.8))
    for label, ys in series.items():
        ax.plot(x, ys, label=label)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if len(series) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def write_series_csv(
    path: str | Path, x: list, series: dict[str, list[float]], x_name: str = "x"
) -> None:
    """Delimited companion to a chart: one row per x value."""
    labels = list(series)
    with Path(path).open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([x_name, *labels])
        for i, xv in enumerate(x):
            writer.writerow([xv, *(repr(series[label][i]) for label in labels)])


def emit_line_chart(
    out_dir: str | Path,
    stem: str,
    x: list,
    series: dict[str, list[float]],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    x_name: str = "x",
) -> dict[str, Path]:
    """Render SVG + PNG and write the underlying CSV next to them."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    xs = [float(v) for v in range(len(x))] if not _numeric(x) else [float(v) for v in x]
    paths = {
        "svg": out_dir / f"{stem}.svg",
        "png": out_dir / f"{stem}.png",
        "csv": out_dir / f"{stem}.csv",
    }
    line_chart_svg(paths["svg"], xs, series, title=title, xlabel=xlabel, ylabel=ylabel)
    line_chart_png(paths["png"], xs, series, title=title, xlabel=xlabel, ylabel=ylabel)
    write_series_csv(paths["csv"], x, series, x_name=x_name)
    return paths


def _numeric(x: list) -> bool:
    return all(isinstance(v, (int, float)) for v in x)
