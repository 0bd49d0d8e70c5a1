"""Confusion matrices and accuracy / precision / recall / F1."""

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMatrix, LengthMismatch, UnknownLabel
from .grades import UsabilityGrade


def _label_name(c):
    return c.value if isinstance(c, UsabilityGrade) else str(c)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with rows as actual classes and columns as predicted classes."""

    classes: list
    counts: np.ndarray

    @property
    def total(self):
        return int(self.counts.sum())


def build_confusion(actual, predicted, classes):
    actual = list(actual)
    predicted = list(predicted)
    if len(actual) != len(predicted):
        raise LengthMismatch(f"{len(actual)} actual labels vs {len(predicted)} predictions")
    if not actual:
        raise LengthMismatch("no labels to compare")
    index = {c: i for i, c in enumerate(classes)}
    try:
        rows = np.array([index[a] for a in actual])
        cols = np.array([index[p] for p in predicted])
    except KeyError as exc:
        raise UnknownLabel(f"label {exc.args[0]!r} not among the classes") from None
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    np.add.at(counts, (rows, cols), 1)
    return ConfusionMatrix(list(classes), counts)


@dataclass(frozen=True)
class MetricsReport:
    classes: list
    counts: np.ndarray
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    warnings: list = field(default_factory=list)

    @property
    def macro_precision(self):
        return float(self.precision.mean())

    @property
    def macro_recall(self):
        return float(self.recall.mean())

    @property
    def macro_f1(self):
        return float(self.f1.mean())

    def to_dict(self):
        return {
            "classes": [_label_name(c) for c in self.classes],
            "counts": self.counts.tolist(),
            "accuracy": float(self.accuracy),
            "per_class": {
                "precision": self.precision.tolist(),
                "recall": self.recall.tolist(),
                "f1": self.f1.tolist(),
            },
            "macro": {
                "precision": self.macro_precision,
                "recall": self.macro_recall,
                "f1": self.macro_f1,
            },
            "warnings": list(self.warnings),
        }


def _ratio(num, den):
    return num / den if den else 0.0


def compute_metrics(cm):
    """One-vs-rest precision, recall and F1 per class plus their unweighted means.

    Undefined ratios (zero denominators) are reported as 0 and listed in
    ``warnings``.
    """
    counts = np.asarray(cm.counts)
    total = counts.sum()
    if total <= 0:
        raise EmptyMatrix("confusion matrix holds no samples")
    k = len(cm.classes)
    precision = np.zeros(k)
    recall = np.zeros(k)
    f1 = np.zeros(k)
    warnings = []
    for i, c in enumerate(cm.classes):
        tp = counts[i, i]
        fp = counts[:, i].sum() - tp
        fn = counts[i, :].sum() - tp
        name = _label_name(c)
        if tp + fp == 0:
            warnings.append(f"precision undefined for {name} (never predicted); reported as 0")
        if tp + fn == 0:
            warnings.append(f"recall undefined for {name} (absent from actual labels); reported as 0")
        precision[i] = _ratio(tp, tp + fp)
        recall[i] = _ratio(tp, tp + fn)
        f1[i] = _ratio(2 * precision[i] * recall[i], precision[i] + recall[i])
    # overall rate; coincides with (TP+TN)/N in the two-class case
    accuracy = float(np.trace(counts) / total)
    return MetricsReport(list(cm.classes), counts.copy(), accuracy, precision, recall, f1, warnings)


def evaluate(actual, predicted, classes):
    return compute_metrics(build_confusion(actual, predicted, classes))
