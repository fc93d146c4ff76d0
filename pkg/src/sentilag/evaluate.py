"""Trend classification of price predictions plus confusion-matrix metrics.

Positive = "rising or steady" vs. the prior trading day's actual open;
negative = "falling". A strict-rise mode (steady counts as negative) is
available for sensitivity analysis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .lstm import PredictionRow


class EvalError(Exception):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fn: int
    fp: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn


@dataclass
class MetricsReport:
    precision: float
    recall: float
    f1: float
    accuracy: float
    mse: float | None = None
    zero_division: list[str] = field(default_factory=list)


def trend_labels(
    predicted: list[float],
    actual: list[float],
    prev_actual: list[float],
    strict_rise: bool = False,
) -> tuple[list[bool], list[bool]]:
    """Per-day trend flags: predicted positive iff predicted >= prior-day
    actual, actual positive iff actual >= prior-day actual (``>`` in
    strict-rise mode)."""
    if not len(predicted) == len(actual) == len(prev_actual):
        raise EvalError("predicted/actual/prev_actual lengths differ")

    def up(value: float, base: float) -> bool:
        return value > base if strict_rise else value >= base

    pred_trends = [up(p, b) for p, b in zip(predicted, prev_actual)]
    actual_trends = [up(a, b) for a, b in zip(actual, prev_actual)]
    return pred_trends, actual_trends


def trend_labels_from_rows(
    rows: list[PredictionRow], strict_rise: bool = False
) -> tuple[list[bool], list[bool]]:
    return trend_labels(
        [r.predicted for r in rows],
        [r.actual for r in rows],
        [r.prev_actual for r in rows],
        strict_rise=strict_rise,
    )


def confusion(pred_trends: list[bool], actual_trends: list[bool]) -> ConfusionMatrix:
    """2x2 tally with positive = rising-or-steady."""
    if len(pred_trends) != len(actual_trends):
        raise EvalError("trend list lengths differ")
    tp = fn = fp = tn = 0
    for p, a in zip(pred_trends, actual_trends):
        if a and p:
            tp += 1
        elif a and not p:
            fn += 1
        elif not a and p:
            fp += 1
        else:
            tn += 1
    return ConfusionMatrix(tp=tp, fn=fn, fp=fp, tn=tn)


def metrics(matrix: ConfusionMatrix, mse: float | None = None) -> MetricsReport:
    """Standard precision/recall/F1/accuracy. Zero denominators yield 0 and
    are flagged rather than raising."""
    if matrix.total == 0:
        raise EvalError("empty confusion matrix")
    flags: list[str] = []

    def ratio(num: int, den: int, name: str) -> float:
        if den == 0:
            flags.append(name)
            return 0.0
        return num / den

    precision = ratio(matrix.tp, matrix.tp + matrix.fp, "precision")
    recall = ratio(matrix.tp, matrix.tp + matrix.fn, "recall")
    if precision + recall == 0.0:
        flags.append("f1")
        f1 = 0.0
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    accuracy = (matrix.tp + matrix.tn) / matrix.total
    return MetricsReport(
        precision=precision,
        recall=recall,
        f1=f1,
        accuracy=accuracy,
        mse=mse,
        zero_division=flags,
    )


def mse(predicted: list[float], actual: list[float]) -> float:
    if len(predicted) != len(actual):
        raise EvalError("series lengths differ")
    if not predicted:
        raise EvalError("empty series")
    return sum((p - a) ** 2 for p, a in zip(predicted, actual)) / len(predicted)
