"""Selection-quality metrics and summary statistics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

CLEAN, RELABELED, DISCARDED = "clean", "relabeled", "discarded"


@dataclass(frozen=True)
class SelectionMetrics:
    """Noisy-label detection quality. ``None`` marks an undefined ratio."""

    precision: float | None
    recall: float | None
    f1: float | None
    relabel_accuracy: float | None
    retained_label_accuracy: float | None

    def to_dict(self) -> dict:
        return asdict(self)


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def selection_metrics(
    dispositions,
    flipped,
    true_labels=None,
    effective_labels=None,
) -> SelectionMetrics:
    """Score a purification pass against ground truth.

    Positives are samples whose label was flipped; a sample is flagged when its
    disposition is relabeled or discarded. ``effective_labels`` holds the label
    each sample is trained with (pseudo label for relabeled ones).
    """
    disp = np.asarray(dispositions)
    flipped = np.asarray(flipped, dtype=bool)
    flagged = disp != CLEAN
    tp = int(np.sum(flagged & flipped))
    precision = _ratio(tp, int(flagged.sum()))
    recall = _ratio(tp, int(flipped.sum()))
    f1 = None
    if precision is not None and recall is not None:
        f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    relabel_acc = retained_acc = None
    if true_labels is not None and effective_labels is not None:
        true_labels = np.asarray(true_labels)
        effective_labels = np.asarray(effective_labels)
        correct = effective_labels == true_labels
        rel = disp == RELABELED
        relabel_acc = _ratio(int(np.sum(correct & rel)), int(rel.sum()))
        kept = disp != DISCARDED
        retained_acc = _ratio(int(np.sum(correct & kept)), int(kept.sum()))
    return SelectionMetrics(precision, recall, f1, relabel_acc, retained_acc)


def mean_std(values) -> tuple[float, float]:
    """Two-pass mean and population standard deviation."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("mean_std of an empty collection")
    mean = float(v.sum() / v.size)
    var = float(np.sum((v - mean) ** 2) / v.size)
    return mean, math.sqrt(var)


def accuracy(predicted, labels) -> float:
    predicted = np.asarray(predicted)
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("accuracy of an empty set")
    return float(np.mean(predicted == labels))
