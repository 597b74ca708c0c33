"""Training losses on softmax outputs, each returning ``(value, dL/dlogits)``.

All losses are batch means and use the natural log on clamped probabilities.
An empty batch gives ``(0.0, empty gradient)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import clamp_probs


@dataclass(frozen=True)
class LossWeights:
    w: float = 0.5
    gamma: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.w <= 1.0:
            raise ValueError(f"w must lie in [0, 1], got {self.w}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")


def _check_probs(probs: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ValueError(f"probs must be B x C, got shape {probs.shape}")
    return probs


def _check_labels(labels, probs: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape[0] != probs.shape[0]:
        raise ValueError("labels length does not match batch size")
    if labels.size and (labels.min() < 0 or labels.max() >= probs.shape[1]):
        raise ValueError(f"label outside [0, {probs.shape[1]})")
    return labels


def ce_loss(probs, labels) -> tuple[float, np.ndarray]:
    probs = _check_probs(probs)
    labels = _check_labels(labels, probs)
    B = probs.shape[0]
    if B == 0:
        return 0.0, np.zeros_like(probs)
    rows = np.arange(B)
    value = float(-np.mean(np.log(clamp_probs(probs[rows, labels]))))
    grad = probs.copy()
    grad[rows, labels] -= 1.0
    return value, grad / B


def soft_loss(probs, soft_targets) -> tuple[float, np.ndarray]:
    probs = _check_probs(probs)
    targets = np.asarray(soft_targets, dtype=np.float64)
    if targets.shape != probs.shape:
        raise ValueError(f"soft_targets shape {targets.shape} != probs shape {probs.shape}")
    B = probs.shape[0]
    if B == 0:
        return 0.0, np.zeros_like(probs)
    if np.any(targets < 0) or np.max(np.abs(targets.sum(axis=1) - 1.0)) > 1e-6:
        raise ValueError("soft target rows must be probability distributions")
    value = float(-np.mean(np.sum(targets * np.log(clamp_probs(probs)), axis=1)))
    return value, (probs - targets) / B


def me_loss(probs) -> tuple[float, np.ndarray]:
    """Negative mean entropy; minimising it flattens predictions."""
    probs = _check_probs(probs)
    B = probs.shape[0]
    if B == 0:
        return 0.0, np.zeros_like(probs)
    logp = np.log(clamp_probs(probs))
    neg_h = np.sum(probs * logp, axis=1, keepdims=True)
    value = float(np.mean(neg_h))
    # d/dz_k sum_c p_c log p_c = p_k (log p_k - sum_c p_c log p_c)
    return value, probs * (logp - neg_h) / B


@dataclass(frozen=True)
class GRLossParts:
    ce: float
    soft: float
    me: float
    total: float


def gr_loss(probs, labels, soft_targets, weights: LossWeights) -> tuple[float, np.ndarray, GRLossParts]:
    """(1 - w) CE + w Soft + gamma ME, with the same combination of gradients."""
    ce, g_ce = ce_loss(probs, labels)
    soft, g_soft = soft_loss(probs, soft_targets)
    me, g_me = me_loss(probs)
    w, gamma = weights.w, weights.gamma
    total = (1.0 - w) * ce + w * soft + gamma * me
    grad = (1.0 - w) * g_ce + w * g_soft + gamma * g_me
    return total, grad, GRLossParts(ce, soft, me, total)
