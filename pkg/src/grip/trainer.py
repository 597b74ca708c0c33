"""Training loop: group regularization during warm-up, then per-epoch global purification."""

from __future__ import annotations

import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import model as mdl
from .config import TrainConfig, config_from_dict
from .dataset import Dataset
from .losses import LossWeights, ce_loss, gr_loss, me_loss
from .metrics import accuracy
from .purify import Purification, alpha_at, evaluate_selection, purify, save_purification_csv
from .softlabel import EpochAccumulator, SoftLabelMatrix, finalize_epoch, init_soft_labels, save_soft_labels_csv

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class TrainingAborted(RuntimeError):
    """Training stopped; ``state`` is the last state known to be finite, if any."""

    def __init__(self, message: str, state: "RunState | None" = None):
        super().__init__(message)
        self.state = state


class CheckpointError(ValueError):
    pass


@dataclass
class EpochLog:
    epoch: int
    lr: float
    loss_total: float
    loss_ce: float
    loss_soft: float | None = None
    loss_me: float | None = None
    loss_discard: float | None = None
    test_aca: float | None = None
    purified: bool = False
    alpha: float | None = None
    thr: float | None = None
    counts: dict | None = None
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    relabel_accuracy: float | None = None
    retained_label_accuracy: float | None = None
    mean_d_true_clean: float | None = None
    mean_d_true_noisy: float | None = None
    soft_label_peak: float | None = None  # mean over classes of max_c S[y, c]
    wall_time: float = field(default=0.0, compare=False)

    def to_json(self) -> str:
        # wall time lives in timing.jsonl so that epochs.jsonl is reproducible
        d = asdict(self)
        d.pop("wall_time")
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EpochLog":
        return cls(**d)


@dataclass
class RunState:
    """Everything needed to continue training after ``epoch`` epochs."""

    config: TrainConfig
    epoch: int
    params: mdl.ClassifierParams
    opt: mdl.OptimizerState
    soft: SoftLabelMatrix
    shuffle_rng: np.random.Generator
    logs: list[EpochLog] = field(default_factory=list)


@dataclass
class TrainResult:
    params: mdl.ClassifierParams
    logs: list[EpochLog]
    soft: SoftLabelMatrix | None
    state: RunState


def _rngs(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    init_ss, shuffle_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_ss), np.random.default_rng(shuffle_ss)


def lr_at(config: TrainConfig, epoch: int) -> float:
    if config.lr_step <= 0:
        return config.lr
    return config.lr * config.lr_decay ** (epoch // config.lr_step)


def evaluate(params: mdl.ClassifierParams, test_set: Dataset) -> float:
    """Test accuracy against given labels; argmax ties go to the lowest class."""
    if len(test_set) == 0:
        raise ValueError("empty test set")
    return accuracy(mdl.predict_labels(params, test_set.features), test_set.given_labels)


def initial_state(config: TrainConfig, train_set: Dataset) -> RunState:
    init_rng, shuffle_rng = _rngs(config.seed)
    params = mdl.init_params(
        config.architecture, train_set.feature_dim, train_set.num_classes, config.hidden, init_rng
    )
    opt = mdl.OptimizerState(config.lr, config.sgd_momentum, config.weight_decay)
    return RunState(config, 0, params, opt, init_soft_labels(train_set.num_classes), shuffle_rng)


def _check_compatible(train_set: Dataset, test_set: Dataset | None) -> None:
    if test_set is None:
        return
    if (train_set.num_classes, train_set.feature_dim) != (test_set.num_classes, test_set.feature_dim):
        raise ValueError("train and test sets disagree on classes or feature dimension")


def _batches(rng: np.random.Generator, n: int, batch_size: int):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]


# ---------------------------------------------------------------------------
# GRIP


def train(
    config: TrainConfig,
    train_set: Dataset,
    test_set: Dataset | None = None,
    run_dir: str | Path | None = None,
    resume: RunState | None = None,
) -> TrainResult:
    config.validate()
    _check_compatible(train_set, test_set)
    state = resume if resume is not None else initial_state(config, train_set)
    run_dir = Path(run_dir) if run_dir is not None else None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
        with open(run_dir / "epochs.jsonl", "w") as fh:
            for entry in state.logs:
                fh.write(entry.to_json() + "\n")
        open(run_dir / "timing.jsonl", "w").close()

    weights = LossWeights(config.w, config.gamma)
    X = train_set.features
    N = len(train_set)
    true = train_set.true_labels if train_set.has_true_labels else None

    for t in range(state.epoch, config.epochs):
        tic = time.perf_counter()
        good = RunState(config, t, state.params, state.opt, state.soft, _copy_rng(state.shuffle_rng), list(state.logs))
        lr = lr_at(config, t)
        params = state.params
        opt = mdl.OptimizerState(lr, state.opt.momentum, state.opt.weight_decay, state.opt.velocity)
        soft_prev = state.soft

        pur: Purification | None = None
        if t >= config.warmup:
            alpha = alpha_at(t, config.warmup, config.alpha_start, config.alpha_end, config.alpha_ramp)
            full = mdl.forward(params, X)
            pur = purify(full.probs, train_set.given_labels, soft_prev, alpha, config.tau, epoch=t, threads=config.threads)
            labels = pur.train_labels
            supervised = ~pur.discard_mask
            if not supervised.any():
                raise TrainingAborted(
                    f"epoch {t}: every sample was discarded (thr={pur.thr:.4g}); try a larger alpha",
                    good,
                )
        else:
            labels = train_set.given_labels
            supervised = np.ones(N, dtype=bool)

        acc = EpochAccumulator(train_set.num_classes)
        sums = np.zeros(5)  # ce, soft, me, discard, total
        nb = 0
        for idx in _batches(state.shuffle_rng, N, config.batch_size):
            xb = X[idx]
            out = mdl.forward(params, xb)
            sup = supervised[idx]
            yb = labels[idx]
            dlogits = np.zeros_like(out.probs)
            l1, g1, parts = gr_loss(out.probs[sup], yb[sup], soft_prev.targets(yb[sup]), weights)
            dlogits[sup] = g1
            if pur is not None:
                l2, g2 = me_loss(out.probs[~sup])
                dlogits[~sup] = g2
            else:
                l2 = 0.0
            total = l1 + l2
            if not np.isfinite(total):
                raise TrainingAborted(f"epoch {t}: non-finite loss", good)
            acc.accumulate_batch(out.probs, yb)
            grads = mdl.backward(params, xb, dlogits, cache=out)
            try:
                params, opt = mdl.sgd_step(params, grads, opt)
            except mdl.OptimizerError as e:
                raise TrainingAborted(f"epoch {t}: {e}", good) from e
            sums += (parts.ce, parts.soft, parts.me, l2, total)
            nb += 1

        soft = finalize_epoch(acc, soft_prev, config.ema_momentum)
        means = sums / max(nb, 1)
        entry = EpochLog(
            epoch=t,
            lr=lr,
            loss_total=float(means[4]),
            loss_ce=float(means[0]),
            loss_soft=float(means[1]),
            loss_me=float(means[2]),
            loss_discard=float(means[3]),
            soft_label_peak=float(soft.S.max(axis=1).mean()),
        )
        if pur is not None:
            report = evaluate_selection(pur, true)
            entry.purified = True
            entry.alpha = pur.alpha
            entry.thr = float(pur.thr)
            entry.counts = report.counts
            entry.mean_d_true_clean = report.extras.get("mean_d_true_clean")
            entry.mean_d_true_noisy = report.extras.get("mean_d_true_noisy")
            if report.metrics is not None:
                for k, v in report.metrics.to_dict().items():
                    setattr(entry, k, v)
        else:
            entry.counts = {"clean": N, "relabeled": 0, "discarded": 0}
        if test_set is not None and ((t + 1) % config.eval_every == 0 or t == config.epochs - 1):
            entry.test_aca = evaluate(params, test_set)
        entry.wall_time = time.perf_counter() - tic

        state = RunState(config, t + 1, params, opt, soft, state.shuffle_rng, state.logs + [entry])
        log.info(
            "epoch %d loss %.4f aca %s counts %s",
            t, entry.loss_total, entry.test_aca, entry.counts,
        )
        if run_dir is not None:
            _write_epoch(run_dir, state, entry, pur, train_set, soft)

    if run_dir is not None:
        mdl.save_params(state.params, run_dir / "params.json")
        (run_dir / "final_metrics.json").write_text(json.dumps(final_metrics(state.logs), indent=2, sort_keys=True) + "\n")
    return TrainResult(state.params, state.logs, state.soft, state)


def _write_epoch(run_dir: Path, state: RunState, entry: EpochLog, pur, train_set: Dataset, soft) -> None:
    t = entry.epoch
    with open(run_dir / "epochs.jsonl", "a") as fh:
        fh.write(entry.to_json() + "\n")
    with open(run_dir / "timing.jsonl", "a") as fh:
        fh.write(json.dumps({"epoch": t, "wall_time": entry.wall_time}) + "\n")
    save_soft_labels_csv(soft, run_dir / f"softlabels_epoch_{t}.csv")
    if pur is not None:
        save_purification_csv(pur, run_dir / f"purify_epoch_{t}.csv", train_set.ids, train_set.true_labels)
    every = state.config.checkpoint_every
    if (every and t % every == 0) or t == state.config.epochs - 1:
        save_checkpoint(state, run_dir / f"checkpoint_{t}.bin")


def final_metrics(logs: list[EpochLog], last_k: int = 10) -> dict:
    acas = [e.test_aca for e in logs if e.test_aca is not None]
    last = logs[-1] if logs else None
    return {
        "epochs": len(logs),
        "final_test_aca": acas[-1] if acas else None,
        f"last{last_k}_mean_test_aca": float(np.mean(acas[-last_k:])) if acas else None,
        "final_f1": None if last is None else last.f1,
        "final_relabel_accuracy": None if last is None else last.relabel_accuracy,
        "final_counts": None if last is None else last.counts,
    }


# ---------------------------------------------------------------------------
# plain cross-entropy reference


def train_ce_baseline(config: TrainConfig, train_set: Dataset, test_set: Dataset | None = None) -> TrainResult:
    """Standard CE training on the given labels with the same seeding, batching and optimizer."""
    config.validate()
    _check_compatible(train_set, test_set)
    state = initial_state(config, train_set)
    params, shuffle_rng = state.params, state.shuffle_rng
    velocity: dict = {}
    X, y = train_set.features, train_set.given_labels
    logs = []
    for t in range(config.epochs):
        opt = mdl.OptimizerState(lr_at(config, t), config.sgd_momentum, config.weight_decay, velocity)
        total, nb = 0.0, 0
        for idx in _batches(shuffle_rng, len(train_set), config.batch_size):
            out = mdl.forward(params, X[idx])
            loss, dlogits = ce_loss(out.probs, y[idx])
            params, opt = mdl.sgd_step(params, mdl.backward(params, X[idx], dlogits, cache=out), opt)
            total += loss
            nb += 1
        velocity = opt.velocity
        entry = EpochLog(epoch=t, lr=opt.learning_rate, loss_total=total / nb, loss_ce=total / nb)
        entry.counts = {"clean": len(train_set), "relabeled": 0, "discarded": 0}
        if test_set is not None and ((t + 1) % config.eval_every == 0 or t == config.epochs - 1):
            entry.test_aca = evaluate(params, test_set)
        logs.append(entry)
    final = RunState(config, config.epochs, params, opt, init_soft_labels(train_set.num_classes), shuffle_rng, logs)
    return TrainResult(params, logs, None, final)


# ---------------------------------------------------------------------------
# checkpoints


def _copy_rng(rng: np.random.Generator) -> np.random.Generator:
    new = np.random.default_rng()
    new.bit_generator.state = rng.bit_generator.state
    return new


def save_checkpoint(state: RunState, path: str | Path) -> None:
    """npz container: weights, velocities and soft labels as arrays plus a JSON header."""
    header = {
        "version": CHECKPOINT_VERSION,
        "epoch": state.epoch,
        "architecture": state.params.architecture,
        "config": state.config.to_dict(),
        "soft_epoch": state.soft.epoch,
        "rng_state": state.shuffle_rng.bit_generator.state,
        "logs": [json.loads(e.to_json()) for e in state.logs],
        "opt": {"momentum": state.opt.momentum, "weight_decay": state.opt.weight_decay},
    }
    arrays = {f"param__{k}": v for k, v in state.params.weights.items()}
    arrays.update({f"velocity__{k}": v for k, v in state.opt.velocity.items()})
    arrays["soft"] = state.soft.S
    buf = io.BytesIO()
    np.savez(buf, header=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8), **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path: str | Path) -> RunState:
    try:
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(bytes(z["header"]).decode())
            arrays = {k: z[k].copy() for k in z.files if k != "header"}
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: unreadable checkpoint ({e})") from None
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: checkpoint version {header.get('version')!r} != {CHECKPOINT_VERSION}")
    config = config_from_dict(header["config"])
    params = mdl.ClassifierParams(
        header["architecture"],
        {k.split("__", 1)[1]: v for k, v in arrays.items() if k.startswith("param__")},
    )
    velocity = {k.split("__", 1)[1]: v for k, v in arrays.items() if k.startswith("velocity__")}
    opt = mdl.OptimizerState(config.lr, header["opt"]["momentum"], header["opt"]["weight_decay"], velocity)
    rng = np.random.default_rng()
    rng.bit_generator.state = header["rng_state"]
    logs = [EpochLog.from_dict(d) for d in header["logs"]]
    soft = SoftLabelMatrix(arrays["soft"], epoch=header["soft_epoch"])
    return RunState(config, header["epoch"], params, opt, soft, rng, logs)


def read_epochs(path: str | Path) -> list[EpochLog]:
    with open(path) as fh:
        return [EpochLog.from_dict(json.loads(line)) for line in fh if line.strip()]
