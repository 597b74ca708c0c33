"""Softmax-linear and one-hidden-layer ReLU classifiers with hand-derived gradients."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PARAMS_FORMAT_VERSION = 1

# Global floor applied to probabilities before any logarithm.
PROB_FLOOR = 1e-12


class ShapeError(ValueError):
    pass


class OptimizerError(RuntimeError):
    pass


@dataclass
class ClassifierParams:
    """Network weights keyed by name.

    ``linear``: ``W`` (C x D), ``b`` (C).
    ``mlp1``: ``W1`` (H x D), ``b1`` (H), ``W2`` (C x H), ``b2`` (C).
    """

    architecture: str
    weights: dict[str, np.ndarray]

    @property
    def input_dim(self) -> int:
        return self.weights["W" if self.architecture == "linear" else "W1"].shape[1]

    @property
    def num_classes(self) -> int:
        return self.weights["b" if self.architecture == "linear" else "b2"].shape[0]

    def copy(self) -> "ClassifierParams":
        return ClassifierParams(self.architecture, {k: v.copy() for k, v in self.weights.items()})

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.weights.values())


@dataclass
class PredictionBatch:
    sample_ids: np.ndarray
    logits: np.ndarray
    probs: np.ndarray
    hidden: np.ndarray | None = None  # post-ReLU activations, cached for backward


@dataclass
class OptimizerState:
    learning_rate: float
    momentum: float = 0.0
    weight_decay: float = 0.0
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")


def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_out, fan_in))


def init_params(
    architecture: str,
    input_dim: int,
    num_classes: int,
    hidden: int = 64,
    rng: np.random.Generator | int | None = 0,
) -> ClassifierParams:
    rng = np.random.default_rng(rng)
    if architecture == "linear":
        w = {"W": _glorot(rng, num_classes, input_dim), "b": np.zeros(num_classes)}
    elif architecture == "mlp1":
        w = {
            "W1": _glorot(rng, hidden, input_dim),
            "b1": np.zeros(hidden),
            "W2": _glorot(rng, num_classes, hidden),
            "b2": np.zeros(num_classes),
        }
    else:
        raise ValueError(f"unknown architecture {architecture!r}")
    return ClassifierParams(architecture, w)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def clamp_probs(probs: np.ndarray) -> np.ndarray:
    return np.clip(probs, PROB_FLOOR, 1.0)


def forward(params: ClassifierParams, features: np.ndarray, sample_ids=None) -> PredictionBatch:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ShapeError(f"features shape {x.shape} does not match input dim {params.input_dim}")
    w = params.weights
    hidden = None
    if params.architecture == "linear":
        logits = x @ w["W"].T + w["b"]
    else:
        hidden = np.maximum(x @ w["W1"].T + w["b1"], 0.0)
        logits = hidden @ w["W2"].T + w["b2"]
    ids = np.arange(x.shape[0]) if sample_ids is None else np.asarray(sample_ids)
    return PredictionBatch(ids, logits, softmax(logits), hidden)


def backward(
    params: ClassifierParams,
    features: np.ndarray,
    dlogits: np.ndarray,
    cache: PredictionBatch | None = None,
) -> dict[str, np.ndarray]:
    """Vector-Jacobian product of the network for a given ``dL/dlogits``.

    Rows are summed, not averaged: the losses already carry the 1/B factor,
    so the result is the gradient of the batch-mean loss.
    """
    x = np.asarray(features, dtype=np.float64)
    g = np.asarray(dlogits, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ShapeError(f"features shape {x.shape} does not match input dim {params.input_dim}")
    if g.shape != (x.shape[0], params.num_classes):
        raise ShapeError(f"dlogits shape {g.shape} does not match ({x.shape[0]}, {params.num_classes})")
    w = params.weights
    if params.architecture == "linear":
        return {"W": g.T @ x, "b": g.sum(axis=0)}
    h = cache.hidden if cache is not None and cache.hidden is not None else np.maximum(x @ w["W1"].T + w["b1"], 0.0)
    dh = (g @ w["W2"]) * (h > 0)
    return {
        "W1": dh.T @ x,
        "b1": dh.sum(axis=0),
        "W2": g.T @ h,
        "b2": g.sum(axis=0),
    }


def sgd_step(
    params: ClassifierParams, grads: dict[str, np.ndarray], state: OptimizerState
) -> tuple[ClassifierParams, OptimizerState]:
    """Momentum SGD with coupled weight decay. Returns new objects; inputs are untouched."""
    if set(grads) != set(params.weights):
        raise ShapeError(f"gradient keys {sorted(grads)} != parameter keys {sorted(params.weights)}")
    for k, g in grads.items():
        if g.shape != params.weights[k].shape:
            raise ShapeError(f"gradient {k} has shape {g.shape}, expected {params.weights[k].shape}")
        if not np.all(np.isfinite(g)):
            raise OptimizerError(f"non-finite gradient in {k}")
    new_w, new_v = {}, {}
    for k, p in params.weights.items():
        v = state.velocity.get(k)
        if v is None:
            v = np.zeros_like(p)
        v = state.momentum * v + grads[k] + state.weight_decay * p
        new_v[k] = v
        new_w[k] = p - state.learning_rate * v
    new_state = OptimizerState(state.learning_rate, state.momentum, state.weight_decay, new_v)
    return ClassifierParams(params.architecture, new_w), new_state


def predict_labels(params: ClassifierParams, features: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximal index, i.e. ties go to the lowest class
    return np.argmax(forward(params, features).logits, axis=1)


# ---------------------------------------------------------------------------
# JSON parameter checkpoints


def params_to_dict(params: ClassifierParams) -> dict:
    return {
        "version": PARAMS_FORMAT_VERSION,
        "architecture": params.architecture,
        "arrays": {
            k: {"shape": list(v.shape), "data": v.ravel(order="C").tolist()}
            for k, v in params.weights.items()
        },
    }


def params_from_dict(d: dict) -> ClassifierParams:
    if d.get("version") != PARAMS_FORMAT_VERSION:
        raise ValueError(f"unsupported params format version {d.get('version')!r}")
    weights = {
        k: np.asarray(a["data"], dtype=np.float64).reshape(a["shape"])
        for k, a in d["arrays"].items()
    }
    return ClassifierParams(d["architecture"], weights)


def save_params(params: ClassifierParams, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(params_to_dict(params), fh)


def load_params(path: str | Path) -> ClassifierParams:
    with open(path, encoding="utf-8") as fh:
        return params_from_dict(json.load(fh))
