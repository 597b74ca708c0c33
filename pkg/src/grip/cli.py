"""Command-line driver: ``grip gen-data | inject-noise | train | eval | report``.

Exit codes: 0 success, 2 usage or input error, 3 training aborted.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, apply_overrides, parse_set, resolve_config
from .dataset import DatasetError, NoiseSpec, generate_blobs, inject_noise, load_csv, resolve_csv, save_csv, split
from .model import load_params
from .purify import load_purification_csv
from .softlabel import load_soft_labels_csv
from .trainer import (
    CheckpointError,
    TrainingAborted,
    evaluate,
    load_checkpoint,
    read_epochs,
    save_checkpoint,
    train,
)

EXIT_OK, EXIT_USAGE, EXIT_ABORT = 0, 2, 3

log = logging.getLogger("grip")


class UsageError(Exception):
    pass


def _prepare_out(path: str | Path, force: bool) -> Path:
    path = Path(path)
    if path.exists() and (not path.is_dir() or any(path.iterdir())):
        if not force:
            raise UsageError(f"{path} already exists; pass --force to overwrite")
        if path.is_dir():
            shutil.rmtree(path)
        else:
            path.unlink()
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(out: Path, args: argparse.Namespace, **extra) -> None:
    manifest = {
        "command": args.command,
        "argv": sys.argv[1:] if args.argv is None else args.argv,
        "tool_version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "seed": getattr(args, "seed", None),
        "output": str(out),
    }
    manifest.update(extra)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def _load_dataset(path: str | Path):
    csv_path = resolve_csv(path)
    if not csv_path.exists():
        raise UsageError(f"dataset not found: {csv_path}")
    return load_csv(csv_path)


# ---------------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    if args.classes < 2:
        raise UsageError("--classes must be >= 2")
    if args.per_class < 1 or args.dim < 2 or not args.sep > 0:
        raise UsageError("--per-class >= 1, --dim >= 2 and --sep > 0 are required")
    seed = 0 if args.seed is None else args.seed
    data = generate_blobs(args.classes, args.per_class, args.dim, args.sep, seed)
    out = _prepare_out(args.out, args.force)
    outputs = {"data": str(out / "data.csv")}
    if args.test_out is not None:
        train_set, test_set = split(data, args.test_fraction, seed)
        test_dir = _prepare_out(args.test_out, args.force)
        save_csv(train_set, out / "data.csv")
        save_csv(test_set, test_dir / "data.csv")
        outputs["test"] = str(test_dir / "data.csv")
        _write_manifest(test_dir, args, outputs=outputs)
    else:
        save_csv(data, out / "data.csv")
    _write_manifest(out, args, outputs=outputs)
    print(json.dumps(outputs))
    return EXIT_OK


def cmd_inject_noise(args) -> int:
    if not 0.0 <= args.ratio < 1.0:
        raise UsageError("--ratio must lie in [0, 1)")
    data = _load_dataset(args.data)
    spec = NoiseSpec(args.kind, args.ratio, 0 if args.seed is None else args.seed)
    noisy = inject_noise(data, spec)
    out = _prepare_out(args.out, args.force)
    save_csv(noisy, out / "data.csv")
    flips = int(np.sum(noisy.given_labels != noisy.true_labels))
    summary = {"samples": len(noisy), "flipped": flips, "realized_ratio": flips / max(len(noisy), 1)}
    _write_manifest(out, args, inputs={"data": str(resolve_csv(args.data))}, noise=spec.to_dict(), summary=summary)
    print(json.dumps(summary))
    return EXIT_OK


def cmd_train(args) -> int:
    sets = parse_set(args.set)
    if args.seed is not None:
        sets["seed"] = str(args.seed)
    if args.threads is not None:
        sets["threads"] = str(args.threads)
    resume = None
    if args.resume:
        resume = load_checkpoint(args.resume)
        config = apply_overrides(resume.config, sets)
        resume.config = config
    else:
        config = resolve_config(args.preset, args.config, sets)
    train_set = _load_dataset(args.data)
    test_set = _load_dataset(args.test) if args.test else None
    out = _prepare_out(args.out, args.force)
    _write_manifest(
        out, args,
        config=config.to_dict(),
        inputs={"data": str(resolve_csv(args.data)), "test": args.test and str(resolve_csv(args.test)),
                "resume": args.resume},
    )
    try:
        result = train(config, train_set, test_set, run_dir=out, resume=resume)
    except TrainingAborted as e:
        if e.state is not None:
            save_checkpoint(e.state, out / "checkpoint_lastgood.bin")
        print(f"training aborted: {e}", file=sys.stderr)
        return EXIT_ABORT
    last = result.logs[-1] if result.logs else None
    print(json.dumps({"run": str(out), "epochs": len(result.logs), "final_test_aca": last and last.test_aca}))
    return EXIT_OK


def cmd_eval(args) -> int:
    src = Path(args.params)
    if src.is_dir():
        src = src / "params.json"
    if not src.exists():
        raise UsageError(f"parameters not found: {src}")
    params = load_checkpoint(src).params if src.suffix == ".bin" else load_params(src)
    data = _load_dataset(args.data)
    result = {"params": str(src), "data": str(resolve_csv(args.data)), "aca": evaluate(params, data)}
    if args.out:
        out = _prepare_out(args.out, args.force)
        (out / "eval.json").write_text(json.dumps(result, indent=2) + "\n")
        _write_manifest(out, args, inputs={"params": str(src), "data": result["data"]})
    print(json.dumps(result))
    return EXIT_OK


# ---------------------------------------------------------------------------
# report


def _run_names(runs: list[Path]) -> list[str]:
    names, seen = [], {}
    for r in runs:
        base = r.resolve().name
        k = seen.get(base, 0)
        seen[base] = k + 1
        names.append(base if k == 0 else f"{base}_{k}")
    return names


def _histogram_rows(rows: list[dict], bins: int) -> list[list]:
    edges = np.linspace(0.0, 1.0, bins + 1)
    d = np.array([r["d"] for r in rows])
    disp = np.array([r["disposition"] for r in rows])
    idx = np.clip(np.searchsorted(edges, d, side="right") - 1, 0, bins - 1)
    out = []
    for b in range(bins):
        sel = idx == b
        out.append([
            repr(float(edges[b])), repr(float(edges[b + 1])), int(sel.sum()),
            int(np.sum(sel & (disp == "clean"))), int(np.sum(sel & (disp == "relabeled"))),
            int(np.sum(sel & (disp == "discarded"))),
        ])
    return out


def cmd_report(args) -> int:
    runs = [Path(r) for r in args.runs]
    for r in runs:
        if not (r / "epochs.jsonl").exists():
            raise UsageError(f"{r}: missing epochs.jsonl")
        if not (r / "final_metrics.json").exists():
            raise UsageError(f"{r}: missing final_metrics.json")
    out = _prepare_out(args.out, args.force)
    names = _run_names(runs)
    summary = {}
    curves: dict[str, dict[int, float | None]] = {}
    for name, r in zip(names, runs):
        logs = read_epochs(r / "epochs.jsonl")
        final = json.loads((r / "final_metrics.json").read_text())
        acas = [e.test_aca for e in logs if e.test_aca is not None]
        purified = [e for e in logs if e.purified]
        entry = {
            "epochs": len(logs),
            "final_test_aca": acas[-1] if acas else None,
            "last10_mean_test_aca": float(np.mean(acas[-10:])) if acas else None,
            "purification": None,
        }
        if purified:
            last = purified[-1]
            entry["purification"] = {
                "first_epoch": purified[0].epoch,
                "final_counts": last.counts,
                "final_thr": last.thr,
                "final_precision": last.precision,
                "final_recall": last.recall,
                "final_f1": last.f1,
                "final_relabel_accuracy": last.relabel_accuracy,
            }
        entry["final_metrics"] = final
        summary[name] = entry
        curves[name] = {e.epoch: e.test_aca for e in logs}

        for p in sorted(r.glob("purify_epoch_*.csv"), key=lambda p: int(p.stem.rsplit("_", 1)[1])):
            t = p.stem.rsplit("_", 1)[1]
            with open(out / f"d_histogram_{name}_epoch_{t}.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["bin_lo", "bin_hi", "count", "clean", "relabeled", "discarded"])
                w.writerows(_histogram_rows(load_purification_csv(p), args.bins))
        for p in sorted(r.glob("softlabels_epoch_*.csv"), key=lambda p: int(p.stem.rsplit("_", 1)[1])):
            t = p.stem.rsplit("_", 1)[1]
            S = load_soft_labels_csv(p).S
            with open(out / f"softlabel_heatmap_{name}_epoch_{t}.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["label_class", "class", "prob"])
                for y in range(S.shape[0]):
                    for c in range(S.shape[1]):
                        w.writerow([y, c, repr(float(S[y, c]))])

    epochs = sorted({t for c in curves.values() for t in c})
    with open(out / "accuracy_curves.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch"] + names)
        for t in epochs:
            w.writerow([t] + ["" if curves[n].get(t) is None else repr(curves[n][t]) for n in names])
    metrics = ["final_test_aca", "last10_mean_test_aca", "final_f1", "final_relabel_accuracy"]
    with open(out / "comparison.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric"] + names)
        for m in metrics:
            row = []
            for n in names:
                v = summary[n].get(m)
                if v is None and summary[n]["purification"] is not None:
                    v = summary[n]["purification"].get(m)
                row.append("" if v is None else repr(v))
            w.writerow([m] + row)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _write_manifest(out, args, inputs={"runs": [str(r) for r in runs]})
    print(json.dumps({n: {k: summary[n][k] for k in ("final_test_aca", "last10_mean_test_aca")} for n in names}))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--threads", type=int, default=None, help="worker threads (1 = serial, deterministic)")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="grip", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", parents=[common], help="generate Gaussian-blob datasets")
    g.add_argument("--classes", type=int, required=True)
    g.add_argument("--per-class", type=int, required=True)
    g.add_argument("--dim", type=int, required=True)
    g.add_argument("--sep", type=float, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--test-out", default=None, help="also write a stratified held-out split here")
    g.add_argument("--test-fraction", type=float, default=0.2)
    g.set_defaults(func=cmd_gen_data)

    n = sub.add_parser("inject-noise", parents=[common], help="corrupt labels with a transition matrix")
    n.add_argument("--data", required=True)
    n.add_argument("--kind", choices=["symmetric", "asymmetric"], required=True)
    n.add_argument("--ratio", type=float, required=True)
    n.add_argument("--out", required=True)
    n.set_defaults(func=cmd_inject_noise)

    t = sub.add_parser("train", parents=[common], help="train with group regularization and purification")
    t.add_argument("--preset", default="default")
    t.add_argument("--config", default=None, help="flat JSON config file")
    t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    t.add_argument("--data", required=True)
    t.add_argument("--test", default=None)
    t.add_argument("--out", required=True)
    t.add_argument("--resume", default=None, help="checkpoint_{t}.bin to continue from")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="test accuracy of trained parameters")
    e.add_argument("--params", required=True, help="params.json, checkpoint .bin, or run directory")
    e.add_argument("--data", required=True)
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("report", parents=[common], help="aggregate run directories into tables")
    r.add_argument("runs", nargs="+")
    r.add_argument("--out", required=True)
    r.add_argument("--bins", type=int, default=20)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = None if argv is None else list(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, DatasetError, CheckpointError) as e:
        print(f"grip {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
