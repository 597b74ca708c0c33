"""Per-class soft labels: averaged predictions of correctly classified samples, EMA-smoothed per epoch."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True, eq=False)
class SoftLabelMatrix:
    """Row ``y`` is the soft label of class ``y``."""

    S: np.ndarray
    epoch: int = 0

    def __post_init__(self):
        S = np.array(self.S, dtype=np.float64, copy=True)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ValueError(f"soft-label matrix must be C x C, got {S.shape}")
        S.setflags(write=False)
        object.__setattr__(self, "S", S)

    @property
    def num_classes(self) -> int:
        return self.S.shape[0]

    def targets(self, labels) -> np.ndarray:
        return self.S[np.asarray(labels, dtype=np.int64)]


def init_soft_labels(num_classes: int) -> SoftLabelMatrix:
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    return SoftLabelMatrix(np.full((num_classes, num_classes), 1.0 / num_classes), epoch=0)


class EpochAccumulator:
    """Running per-class sums of predictions that agree with their label."""

    def __init__(self, num_classes: int):
        self.sums = np.zeros((num_classes, num_classes))
        self.counts = np.zeros(num_classes, dtype=np.int64)

    def accumulate(self, pred, label: int) -> None:
        pred = np.asarray(pred, dtype=np.float64)
        if int(np.argmax(pred)) == label:
            self.sums[label] += pred
            self.counts[label] += 1

    def accumulate_batch(self, probs, labels) -> None:
        """Same as calling :meth:`accumulate` row by row, in row order."""
        probs = np.asarray(probs, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        hit = np.argmax(probs, axis=1) == labels
        for p, y in zip(probs[hit], labels[hit]):
            self.sums[y] += p
            self.counts[y] += 1

    def merge(self, other: "EpochAccumulator") -> "EpochAccumulator":
        out = EpochAccumulator(self.sums.shape[0])
        out.sums = self.sums + other.sums
        out.counts = self.counts + other.counts
        return out


def finalize_epoch(acc: EpochAccumulator, prev: SoftLabelMatrix, m: float) -> SoftLabelMatrix:
    """EMA update ``S_y <- m prev_y + (1 - m) mean_y``; classes with no hits keep ``prev_y``."""
    if not 0.0 <= m <= 1.0:
        raise ValueError(f"EMA momentum must lie in [0, 1], got {m}")
    S = prev.S.copy()
    hit = acc.counts > 0
    means = acc.sums[hit] / acc.counts[hit, None]
    S[hit] = m * prev.S[hit] + (1.0 - m) * means
    return SoftLabelMatrix(S, epoch=prev.epoch + 1)


def save_soft_labels_csv(soft: SoftLabelMatrix, path: str | Path) -> None:
    C = soft.num_classes
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(["class"] + [f"p{c}" for c in range(C)]) + "\n")
        for y in range(C):
            fh.write(",".join([str(y)] + [repr(float(v)) for v in soft.S[y]]) + "\n")


def load_soft_labels_csv(path: str | Path, epoch: int = 0) -> SoftLabelMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))[1:]
    return SoftLabelMatrix(np.array([[float(v) for v in r[1:]] for r in rows]), epoch=epoch)
