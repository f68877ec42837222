"""Confusion matrices, macro-averaged scores and mean/std summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .data import Dataset
from .model import ModelConfig, ParameterVector, forward


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError("confusion matrix must be square")
        if (counts < 0).any():
            raise ValueError("confusion counts must be non-negative")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def class_count(self) -> int:
        return self.counts.shape[0]

    def one_vs_rest(self, c: int) -> tuple[int, int, int, int]:
        """(TP, FP, FN, TN) for class ``c``."""
        tp = int(self.counts[c, c])
        fp = int(self.counts[:, c].sum()) - tp
        fn = int(self.counts[c, :].sum()) - tp
        return tp, fp, fn, self.total - tp - fp - fn


class Scores(NamedTuple):
    accuracy: float
    precision: float
    recall: float
    f1: float


def predict(params: ParameterVector, config: ModelConfig, features) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lowest class index on ties.
    return np.argmax(forward(params, config, np.atleast_2d(features)), axis=1)


def confusion(params: ParameterVector, config: ModelConfig, test: Dataset) -> ConfusionMatrix:
    if len(test) == 0:
        raise ValueError("cannot score an empty dataset")
    predicted = predict(params, config, test.features)
    k = config.class_count
    counts = np.bincount(test.labels * k + predicted, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(counts)


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def scores(cm: ConfusionMatrix, average: str = "macro", positive: int = 0) -> Scores:
    """Accuracy, precision, recall and F1.

    ``average="macro"`` averages the per-class one-vs-rest precision, recall
    and F1 with equal weight. ``average="binary"`` reports them for the single
    class ``positive``. Zero denominators score 0.
    """
    total = cm.total
    if total == 0:
        raise ValueError("confusion matrix is empty")
    accuracy = float(np.trace(cm.counts)) / total
    if average == "binary":
        classes = [positive]
    elif average == "macro":
        classes = list(range(cm.class_count))
    else:
        raise ValueError(f"unknown average {average!r}")
    precisions, recalls, f1s = [], [], []
    for c in classes:
        tp, fp, fn, _ = cm.one_vs_rest(c)
        p = _ratio(tp, tp + fp)
        r = _ratio(tp, tp + fn)
        precisions.append(p)
        recalls.append(r)
        f1s.append(2 * p * r / (p + r) if p + r > 0 else 0.0)
    n = len(classes)
    return Scores(accuracy, math.fsum(precisions) / n, math.fsum(recalls) / n, math.fsum(f1s) / n)


def summarize(values: Sequence[float]) -> tuple[float, float]:
    """Mean and sample standard deviation (n-1 divisor; 0 for a single value)."""
    values = [float(v) for v in values]
    if not values:
        raise ValueError("cannot summarize an empty list")
    n = len(values)
    mean = math.fsum(values) / n
    if n == 1:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)
