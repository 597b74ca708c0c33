"""Datasets with ground-truth provenance, synthetic blobs and label-noise injection."""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DatasetError(ValueError):
    """Raised for malformed datasets, bad CSV input or infeasible generation."""


class Origin(enum.IntEnum):
    CLEAN = 0
    FLIPPED = 1
    UNKNOWN = 2


@dataclass(frozen=True)
class Sample:
    id: int
    features: np.ndarray
    given_label: int
    true_label: int | None
    origin: Origin


@dataclass(frozen=True)
class NoiseSpec:
    kind: str  # symmetric | asymmetric | explicit_matrix
    ratio: float = 0.0
    seed: int = 0
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("symmetric", "asymmetric", "explicit_matrix"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.ratio < 1.0:
            raise ValueError(f"noise ratio must lie in [0, 1), got {self.ratio}")
        if self.kind == "explicit_matrix":
            if self.matrix is None:
                raise ValueError("explicit_matrix noise requires a matrix")
            _check_stochastic(np.asarray(self.matrix, dtype=float), atol=1e-9)
        elif self.matrix is not None:
            raise ValueError("matrix is only allowed for kind='explicit_matrix'")

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "ratio": self.ratio, "seed": self.seed}
        if self.matrix is not None:
            d["matrix"] = np.asarray(self.matrix).tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSpec":
        matrix = d.get("matrix")
        return cls(
            kind=d["kind"],
            ratio=float(d.get("ratio", 0.0)),
            seed=int(d.get("seed", 0)),
            matrix=None if matrix is None else np.asarray(matrix, dtype=float),
        )


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-oriented store of samples.

    ``true_labels`` uses -1 for an absent true label. ``origins`` holds
    :class:`Origin` codes. Arrays are copied and made read-only on construction.
    """

    features: np.ndarray
    given_labels: np.ndarray
    num_classes: int
    true_labels: np.ndarray | None = None
    origins: np.ndarray | None = None
    ids: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        if x.ndim != 2:
            raise DatasetError(f"features must be 2-D, got shape {x.shape}")
        n = x.shape[0]
        y = np.asarray(self.given_labels, dtype=np.int64).reshape(-1)
        if y.shape[0] != n:
            raise DatasetError("given_labels length does not match features")
        C = int(self.num_classes)
        if C < 1:
            raise DatasetError("num_classes must be positive")
        if n and (y.min() < 0 or y.max() >= C):
            raise DatasetError("given_label outside [0, C)")
        if self.true_labels is None:
            t = np.full(n, -1, dtype=np.int64)
        else:
            t = np.asarray(self.true_labels, dtype=np.int64).reshape(-1)
            if t.shape[0] != n:
                raise DatasetError("true_labels length does not match features")
            if n and (t.min() < -1 or t.max() >= C):
                raise DatasetError("true_label outside [0, C)")
        expected = np.where(t < 0, Origin.UNKNOWN, np.where(t == y, Origin.CLEAN, Origin.FLIPPED))
        if self.origins is None:
            o = expected.astype(np.int8)
        else:
            o = np.asarray(self.origins, dtype=np.int8).reshape(-1)
            if not np.array_equal(o, expected):
                raise DatasetError("origins inconsistent with given/true labels")
        ids = np.arange(n, dtype=np.int64) if self.ids is None else np.asarray(self.ids, dtype=np.int64)
        if ids.shape != (n,) or np.unique(ids).size != n:
            raise DatasetError("ids must be unique, one per sample")
        object.__setattr__(self, "features", _frozen(x))
        object.__setattr__(self, "given_labels", _frozen(y))
        object.__setattr__(self, "true_labels", _frozen(t))
        object.__setattr__(self, "origins", _frozen(o))
        object.__setattr__(self, "ids", _frozen(ids))
        object.__setattr__(self, "num_classes", C)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def has_true_labels(self) -> bool:
        return bool(len(self)) and bool(np.all(self.true_labels >= 0))

    @property
    def is_flipped(self) -> np.ndarray:
        return self.origins == Origin.FLIPPED

    def sample(self, i: int) -> Sample:
        t = int(self.true_labels[i])
        return Sample(
            id=int(self.ids[i]),
            features=self.features[i],
            given_label=int(self.given_labels[i]),
            true_label=None if t < 0 else t,
            origin=Origin(int(self.origins[i])),
        )

    @property
    def samples(self) -> list[Sample]:
        return [self.sample(i) for i in range(len(self))]

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        if index.dtype != bool:
            index = index.astype(np.int64)
        return Dataset(
            features=self.features[index],
            given_labels=self.given_labels[index],
            num_classes=self.num_classes,
            true_labels=self.true_labels[index],
            ids=self.ids[index],
            meta=dict(self.meta),
        )

    def with_labels(self, given_labels, meta: dict | None = None) -> "Dataset":
        return Dataset(
            features=self.features,
            given_labels=given_labels,
            num_classes=self.num_classes,
            true_labels=self.true_labels,
            ids=self.ids,
            meta=dict(self.meta) if meta is None else meta,
        )

    def equals(self, other: "Dataset") -> bool:
        return (
            self.num_classes == other.num_classes
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.given_labels, other.given_labels)
            and np.array_equal(self.true_labels, other.true_labels)
            and np.array_equal(self.ids, other.ids)
        )


def _check_stochastic(Q: np.ndarray, atol: float) -> None:
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise ValueError(f"transition matrix must be square, got {Q.shape}")
    if np.any(Q < 0) or np.any(Q > 1):
        raise ValueError("transition matrix entries must lie in [0, 1]")
    if np.max(np.abs(Q.sum(axis=1) - 1.0)) > atol:
        raise ValueError("transition matrix rows must sum to 1")


def make_transition_matrix(kind: str, ratio: float, num_classes: int) -> np.ndarray:
    """Noise transition matrix Q with Q[c, k] = P(given label k | true class c).

    ``symmetric`` spreads ``ratio`` evenly over the other classes; ``asymmetric``
    moves it entirely to class ``(c + 1) % C``.
    """
    if not 0.0 <= ratio < 1.0:
        raise ValueError(f"noise ratio must lie in [0, 1), got {ratio}")
    if num_classes < 2:
        raise ValueError(f"need at least 2 classes, got {num_classes}")
    C = num_classes
    if kind == "symmetric":
        Q = np.full((C, C), ratio / (C - 1))
        np.fill_diagonal(Q, 1.0 - ratio)
    elif kind == "asymmetric":
        Q = np.zeros((C, C))
        idx = np.arange(C)
        Q[idx, idx] = 1.0 - ratio
        Q[idx, (idx + 1) % C] += ratio
    else:
        raise ValueError(f"unknown noise kind {kind!r}")
    return Q


def inject_noise(dataset: Dataset, spec: NoiseSpec) -> Dataset:
    """Redraw every given label from the row of Q indexed by its true label."""
    if not dataset.has_true_labels or np.any(dataset.origins != Origin.CLEAN):
        raise DatasetError("inject_noise needs a clean source (true_label == given_label everywhere)")
    C = dataset.num_classes
    if spec.kind == "explicit_matrix":
        Q = np.asarray(spec.matrix, dtype=float)
    else:
        Q = make_transition_matrix(spec.kind, spec.ratio, C)
    if Q.shape != (C, C):
        raise DatasetError(f"transition matrix is {Q.shape}, dataset has {C} classes")
    rng = np.random.default_rng(spec.seed)
    true = dataset.true_labels
    u = rng.random(len(dataset))
    cdf = np.cumsum(Q, axis=1)[true]
    noisy = (u[:, None] >= cdf).sum(axis=1)
    # u can exceed a row's cdf tail when it rounds below 1
    last_nonzero = C - 1 - np.argmax(Q[:, ::-1] > 0, axis=1)
    over = noisy >= C
    noisy[over] = last_nonzero[true[over]]
    meta = dict(dataset.meta)
    meta["noise"] = spec.to_dict()
    return dataset.with_labels(noisy, meta=meta)


def generate_blobs(
    num_classes: int,
    per_class: int,
    dim: int,
    separation: float,
    seed: int,
    max_tries: int = 1000,
) -> Dataset:
    """Isotropic unit-variance Gaussian clusters, one per class.

    Means are drawn uniformly from a cube and rejected until every pair is at
    least ``separation`` apart.
    """
    if num_classes < 2 or per_class < 1 or dim < 2 or not separation > 0:
        raise ValueError("need num_classes >= 2, per_class >= 1, dim >= 2, separation > 0")
    rng = np.random.default_rng(seed)
    half_width = separation * max(1.0, num_classes ** (1.0 / dim))
    means: list[np.ndarray] = []
    for _ in range(num_classes):
        for _ in range(max_tries):
            cand = rng.uniform(-half_width, half_width, size=dim)
            if all(np.linalg.norm(cand - m) >= separation for m in means):
                means.append(cand)
                break
        else:
            raise DatasetError(
                f"could not place {num_classes} means {separation} apart in {dim} dims"
            )
    mu = np.stack(means)
    labels = np.repeat(np.arange(num_classes), per_class)
    x = mu[labels] + rng.standard_normal((labels.size, dim))
    meta = {
        "generator": {
            "kind": "blobs",
            "num_classes": num_classes,
            "per_class": per_class,
            "dim": dim,
            "separation": separation,
            "seed": seed,
        }
    }
    return Dataset(x, labels, num_classes, true_labels=labels, meta=meta)


def split(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified train/test split; sample ids are preserved."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    strat = dataset.true_labels if dataset.has_true_labels else dataset.given_labels
    test_idx = []
    for c in range(dataset.num_classes):
        members = np.flatnonzero(strat == c)
        if members.size == 0:
            continue
        if members.size < 2:
            raise DatasetError(f"class {c} has fewer than 2 samples; cannot stratify")
        k = int(round(members.size * test_fraction))
        k = min(max(k, 1), members.size - 1)
        test_idx.append(rng.permutation(members)[:k])
    test_idx = np.sort(np.concatenate(test_idx))
    mask = np.zeros(len(dataset), dtype=bool)
    mask[test_idx] = True
    return dataset.subset(np.flatnonzero(~mask)), dataset.subset(test_idx)


# ---------------------------------------------------------------------------
# CSV + sidecar metadata


def meta_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def save_csv(dataset: Dataset, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    D = dataset.feature_dim
    header = ["id", "given_label", "true_label"] + [f"f{j}" for j in range(D)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(len(dataset)):
            row = [str(int(dataset.ids[i])), str(int(dataset.given_labels[i])), str(int(dataset.true_labels[i]))]
            row.extend(repr(float(v)) for v in dataset.features[i])
            fh.write(",".join(row) + "\n")
    meta = dict(dataset.meta)
    meta.update(
        num_classes=dataset.num_classes,
        feature_dim=D,
        num_samples=len(dataset),
    )
    with open(meta_path(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_csv(path: str | Path, num_classes: int | None = None) -> Dataset:
    """Load a dataset CSV. ``num_classes`` falls back to the sidecar, then to max label + 1."""
    path = Path(path)
    meta = {}
    mp = meta_path(path)
    if mp.exists():
        with open(mp, encoding="utf-8") as fh:
            meta = json.load(fh)
    if num_classes is None:
        num_classes = meta.get("num_classes")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        missing = [c for c in ("id", "given_label", "true_label") if c not in header]
        fcols = [h for h in header if h.startswith("f")]
        if missing or not fcols:
            raise DatasetError(f"{path}: missing columns {missing or ['f0']}")
        col = {h: k for k, h in enumerate(header)}
        fidx = [col[f"f{j}"] for j in range(len(fcols)) if f"f{j}" in col]
        if len(fidx) != len(fcols):
            raise DatasetError(f"{path}: feature columns must be f0..f{len(fcols) - 1}")
        ids, given, true, feats = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DatasetError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
            try:
                ids.append(int(row[col["id"]]))
                given.append(int(row[col["given_label"]]))
                true.append(int(row[col["true_label"]]))
                feats.append([float(row[k]) for k in fidx])
            except ValueError as e:
                raise DatasetError(f"{path}: row {lineno}: {e}") from None
            if num_classes is not None and (given[-1] >= num_classes or true[-1] >= num_classes):
                raise DatasetError(f"{path}: row {lineno}: label >= num_classes ({num_classes})")
            if given[-1] < 0 or true[-1] < -1:
                raise DatasetError(f"{path}: row {lineno}: negative label")
    if num_classes is None:
        num_classes = max(max(given, default=0), max(true, default=0)) + 1
    x = np.asarray(feats, dtype=np.float64).reshape(len(ids), len(fidx))
    for k in ("num_classes", "feature_dim", "num_samples"):
        meta.pop(k, None)
    return Dataset(x, given, int(num_classes), true_labels=true, ids=ids, meta=meta)


def resolve_csv(path: str | Path) -> Path:
    """A dataset may be named by its CSV file or by a directory holding ``data.csv``."""
    path = Path(path)
    if path.is_dir():
        return path / "data.csv"
    return path
