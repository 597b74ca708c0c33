"""Shared desk-scale experiment: 10-class blobs with 40% symmetric noise."""

from __future__ import annotations

import time
from dataclasses import dataclass

from .config import TrainConfig, resolve_config
from .dataset import Dataset, NoiseSpec, generate_blobs, inject_noise, split
from .trainer import TrainResult, train, train_ce_baseline

BLOBS = dict(num_classes=10, per_class=500, dim=8, separation=8.0)
NOISE_RATIO = 0.4
TEST_FRACTION = 0.2
WARMUP = 5
EPOCHS = 40


def blobs_setup(seed: int, noise_ratio: float = NOISE_RATIO) -> tuple[Dataset, Dataset]:
    """Noisy training split and clean test split, both keyed on ``seed``."""
    data = generate_blobs(BLOBS["num_classes"], BLOBS["per_class"], BLOBS["dim"], BLOBS["separation"], seed)
    train_set, test_set = split(data, TEST_FRACTION, seed)
    return inject_noise(train_set, NoiseSpec("symmetric", noise_ratio, seed)), test_set


def setup_config(seed: int, **overrides) -> TrainConfig:
    sets = {"warmup": WARMUP, "epochs": EPOCHS, "seed": seed, **overrides}
    return resolve_config("cifar-like", sets={k: str(v) for k, v in sets.items()}, environ={})


@dataclass
class PairedRun:
    seed: int
    grip: TrainResult
    ce: TrainResult
    grip_seconds: float
    ce_seconds: float

    @property
    def margin(self) -> float:
        return self.grip.logs[-1].test_aca - self.ce.logs[-1].test_aca

    def separation_gaps(self) -> dict[int, float]:
        """mean d(true noisy) - mean d(true clean) for every purified epoch."""
        return {e.epoch: e.mean_d_true_noisy - e.mean_d_true_clean for e in self.grip.logs if e.purified}

    def summary(self) -> dict:
        g, c = self.grip.logs[-1], self.ce.logs[-1]
        return {
            "seed": self.seed,
            "grip_final_aca": g.test_aca,
            "ce_final_aca": c.test_aca,
            "margin": self.margin,
            "final_f1": g.f1,
            "final_relabel_accuracy": g.relabel_accuracy,
            "gaps": {str(t): v for t, v in self.separation_gaps().items()},
            "counts": {str(e.epoch): e.counts for e in self.grip.logs},
            "grip_seconds": self.grip_seconds,
            "ce_seconds": self.ce_seconds,
        }


def paired_run(seed: int, run_dir=None) -> PairedRun:
    train_set, test_set = blobs_setup(seed)
    config = setup_config(seed)
    t0 = time.perf_counter()
    grip = train(config, train_set, test_set, run_dir=run_dir)
    t1 = time.perf_counter()
    ce = train_ce_baseline(config, train_set, test_set)
    return PairedRun(seed, grip, ce, t1 - t0, time.perf_counter() - t1)
