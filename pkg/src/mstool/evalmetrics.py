"""Confusion counts and the derived classification metric suite.

Metrics are percentages in [0, 100]. A metric whose denominator is zero is
reported as ``None`` (null in JSON), never silently 0; small test sets make
those cases reachable.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ValidationError

CLASSES = ("Rest", "Load")
DEFAULT_POSITIVE = "Load"

METRIC_NAMES = ("accuracy", "mrate", "tpr", "fpr", "tnr", "recall", "precision", "fscore")


@dataclass
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def validate(self) -> None:
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValidationError("confusion counts must be non-negative")
        if self.total < 1:
            raise ValidationError("confusion counts must total at least 1")


@dataclass
class MetricsReport:
    accuracy: float
    mrate: float
    tpr: float | None
    fpr: float | None
    tnr: float | None
    recall: float | None
    precision: float | None
    fscore: float | None

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in METRIC_NAMES}


def confusion(predictions: list[str], truth: list[str],
              positive_class: str = DEFAULT_POSITIVE) -> ConfusionCounts:
    """Standard confusion counts with a designated positive class."""
    if len(predictions) != len(truth):
        raise ValidationError(
            f"{len(predictions)} predictions for {len(truth)} truth labels"
        )
    if len(truth) < 1:
        raise ValidationError("need at least one labeled item")
    if positive_class not in CLASSES:
        raise ValidationError(f"positive_class must be one of {CLASSES}")
    tp = fp = tn = fn = 0
    for i, (pred, true) in enumerate(zip(predictions, truth)):
        if pred not in CLASSES:
            raise ValidationError(f"unknown predicted label {pred!r} at item {i}")
        if true not in CLASSES:
            raise ValidationError(f"unknown truth label {true!r} at item {i}")
        if true == positive_class:
            if pred == positive_class:
                tp += 1
            else:
                fn += 1
        else:
            if pred == positive_class:
                fp += 1
            else:
                tn += 1
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def metrics(c: ConfusionCounts) -> MetricsReport:
    """Accuracy, misclassification rate, the four rates, and P/R/F."""
    c.validate()
    accuracy = 100.0 * (c.tp + c.tn) / c.total
    tpr = 100.0 * c.tp / (c.tp + c.fn) if c.tp + c.fn > 0 else None
    fpr = 100.0 * c.fp / (c.fp + c.tn) if c.fp + c.tn > 0 else None
    tnr = 100.0 * c.tn / (c.fp + c.tn) if c.fp + c.tn > 0 else None
    precision = 100.0 * c.tp / (c.tp + c.fp) if c.tp + c.fp > 0 else None
    if precision is None or tpr is None:
        fscore = None
    elif precision + tpr == 0.0:
        fscore = 0.0
    else:
        fscore = 2.0 * precision * tpr / (precision + tpr)
    return MetricsReport(
        accuracy=accuracy,
        mrate=100.0 - accuracy,
        tpr=tpr,
        fpr=fpr,
        tnr=tnr,
        recall=tpr,
        precision=precision,
        fscore=fscore,
    )


def compare_reports(before: MetricsReport, after: MetricsReport) -> dict:
    """Signed differences and after/before ratios per metric.

    Undefined inputs propagate as ``None``; a ratio with a zero denominator
    is also ``None``.
    """
    delta: dict[str, float | None] = {}
    ratio: dict[str, float | None] = {}
    for name in METRIC_NAMES:
        b = getattr(before, name)
        a = getattr(after, name)
        if a is None or b is None:
            delta[name] = None
            ratio[name] = None
            continue
        delta[name] = a - b
        ratio[name] = a / b if b != 0 else None
    return {
        "delta": delta,
        "ratio": ratio,
        "accuracy_ratio": ratio["accuracy"],
    }
