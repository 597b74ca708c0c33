"""Global noisy-label identification by JS divergence to class soft labels."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .metrics import CLEAN, DISCARDED, RELABELED, SelectionMetrics, mean_std, selection_metrics
from .model import PROB_FLOOR
from .softlabel import SoftLabelMatrix


def _normalize(p: np.ndarray) -> np.ndarray:
    p = np.clip(np.asarray(p, dtype=np.float64), PROB_FLOOR, None)
    return p / p.sum(axis=-1, keepdims=True)


def js_divergence(p, q):
    """Base-2 Jensen-Shannon divergence, row-wise over the last axis.

    Inputs are floored at ``PROB_FLOOR`` and renormalised, so the result is
    always finite and lies in [0, 1].
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape[-1] != q.shape[-1]:
        raise ValueError(f"length mismatch: {p.shape[-1]} vs {q.shape[-1]}")
    p, q = np.broadcast_arrays(_normalize(p), _normalize(q))
    m = 0.5 * (p + q)
    kl_pm = np.sum(p * np.log2(p / m), axis=-1)
    kl_qm = np.sum(q * np.log2(q / m), axis=-1)
    d = np.clip(0.5 * kl_pm + 0.5 * kl_qm, 0.0, 1.0)
    return float(d) if d.ndim == 0 else d


def compute_threshold(d_values, alpha: float) -> float:
    mean, std = mean_std(d_values)
    return mean + alpha * std


def alpha_at(epoch: int, warmup: int, alpha_start: float, alpha_end: float, ramp_epochs: int) -> float:
    """Linear ramp from ``alpha_start`` at epoch ``warmup`` to ``alpha_end`` ``ramp_epochs`` later."""
    if ramp_epochs <= 0:
        return alpha_end
    frac = min(max((epoch - warmup) / ramp_epochs, 0.0), 1.0)
    return alpha_start + (alpha_end - alpha_start) * frac


@dataclass(frozen=True)
class DivergenceRecord:
    sample_id: int
    d: float
    predicted_label: int
    d_hat: float | None = None


def partition(records, thr: float) -> tuple[list[int], list[int]]:
    """Split into (clean ids, noisy ids); ``d == thr`` counts as clean."""
    clean = [r.sample_id for r in records if r.d <= thr]
    noisy = [r.sample_id for r in records if r.d > thr]
    return clean, noisy


def relabel_split(noisy_records, tau: float) -> tuple[dict[int, int], list[int]]:
    """Noisy records with ``d_hat < tau`` get their predicted class as pseudo label; the rest are discarded."""
    relabel, discard = {}, []
    for r in noisy_records:
        if r.d_hat is None:
            raise ValueError(f"record {r.sample_id} has no d_hat")
        if r.d_hat < tau:
            relabel[r.sample_id] = r.predicted_label
        else:
            discard.append(r.sample_id)
    return relabel, discard


DISPOSITION_CODES = {CLEAN: 0, RELABELED: 1, DISCARDED: 2}


@dataclass
class Purification:
    """Dataset-wide purification outcome for one epoch, indexed by sample position."""

    epoch: int
    thr: float
    alpha: float
    d: np.ndarray
    d_hat: np.ndarray
    predicted: np.ndarray
    disposition: np.ndarray  # codes from DISPOSITION_CODES
    train_labels: np.ndarray  # pseudo label if relabeled, else the given label
    given_labels: np.ndarray

    @property
    def clean_mask(self) -> np.ndarray:
        return self.disposition == DISPOSITION_CODES[CLEAN]

    @property
    def relabel_mask(self) -> np.ndarray:
        return self.disposition == DISPOSITION_CODES[RELABELED]

    @property
    def discard_mask(self) -> np.ndarray:
        return self.disposition == DISPOSITION_CODES[DISCARDED]

    def counts(self) -> dict[str, int]:
        return {
            CLEAN: int(self.clean_mask.sum()),
            RELABELED: int(self.relabel_mask.sum()),
            DISCARDED: int(self.discard_mask.sum()),
        }

    def disposition_names(self) -> np.ndarray:
        names = np.array([CLEAN, RELABELED, DISCARDED])
        return names[self.disposition]


def divergences(probs: np.ndarray, labels: np.ndarray, soft: SoftLabelMatrix, threads: int = 1) -> np.ndarray:
    """JS divergence of each prediction to the soft label of the paired class."""
    if threads <= 1 or len(labels) < 2 * threads:
        return js_divergence(probs, soft.targets(labels))
    chunks = np.array_split(np.arange(len(labels)), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = pool.map(lambda ix: js_divergence(probs[ix], soft.targets(labels[ix])), chunks)
    return np.concatenate(list(parts))


def purify(
    probs: np.ndarray,
    given_labels: np.ndarray,
    soft: SoftLabelMatrix,
    alpha: float,
    tau: float,
    epoch: int = 0,
    threads: int = 1,
) -> Purification:
    """Vectorised clean / relabel / discard decision over the whole training set."""
    probs = np.asarray(probs, dtype=np.float64)
    given_labels = np.asarray(given_labels, dtype=np.int64)
    predicted = np.argmax(probs, axis=1)
    d = divergences(probs, given_labels, soft, threads)
    d_hat = divergences(probs, predicted, soft, threads)
    thr = compute_threshold(d, alpha)
    noisy = d > thr
    relabel = noisy & (d_hat < tau)
    disposition = np.zeros(len(d), dtype=np.int8)
    disposition[relabel] = DISPOSITION_CODES[RELABELED]
    disposition[noisy & ~relabel] = DISPOSITION_CODES[DISCARDED]
    train_labels = np.where(relabel, predicted, given_labels)
    return Purification(epoch, thr, alpha, d, d_hat, predicted, disposition, train_labels, given_labels)


@dataclass
class PurificationReport:
    epoch: int
    thr: float
    counts: dict[str, int]
    dispositions: list[str]
    metrics: SelectionMetrics | None
    extras: dict = field(default_factory=dict)

    def to_dict(self, include_dispositions: bool = False) -> dict:
        d = {
            "epoch": self.epoch,
            "thr": self.thr,
            "counts": dict(self.counts),
            "metrics": None if self.metrics is None else self.metrics.to_dict(),
            **self.extras,
        }
        if include_dispositions:
            d["dispositions"] = list(self.dispositions)
        return d


def evaluate_selection(result: Purification, true_labels=None, flipped=None) -> PurificationReport:
    """Attach ground-truth quality metrics; metrics are ``None`` when true labels are absent."""
    names = result.disposition_names()
    metrics = None
    extras = {}
    if true_labels is not None and np.all(np.asarray(true_labels) >= 0):
        true_labels = np.asarray(true_labels)
        if flipped is None:
            flipped = true_labels != result.given_labels
        flipped = np.asarray(flipped, dtype=bool)
        metrics = selection_metrics(names, flipped, true_labels, result.train_labels)
        extras["mean_d_true_clean"] = float(result.d[~flipped].mean()) if np.any(~flipped) else None
        extras["mean_d_true_noisy"] = float(result.d[flipped].mean()) if np.any(flipped) else None
    return PurificationReport(result.epoch, result.thr, result.counts(), names.tolist(), metrics, extras)


def save_purification_csv(
    result: Purification,
    path: str | Path,
    sample_ids=None,
    true_labels=None,
) -> None:
    n = len(result.d)
    ids = np.arange(n) if sample_ids is None else np.asarray(sample_ids)
    names = result.disposition_names()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("sample_id,d,d_hat,disposition,pseudo_label,true_label_match\n")
        for i in range(n):
            pseudo = int(result.train_labels[i]) if names[i] == RELABELED else -1
            if true_labels is None or true_labels[i] < 0:
                match = ""
            else:
                match = str(int(result.train_labels[i] == true_labels[i]))
            fh.write(
                f"{int(ids[i])},{float(result.d[i])!r},{float(result.d_hat[i])!r},{names[i]},{pseudo},{match}\n"
            )


def load_purification_csv(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["sample_id"] = int(r["sample_id"])
        r["d"] = float(r["d"])
        r["d_hat"] = float(r["d_hat"])
        r["pseudo_label"] = int(r["pseudo_label"])
        r["true_label_match"] = None if r["true_label_match"] == "" else bool(int(r["true_label_match"]))
    return rows
