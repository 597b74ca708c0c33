#!/usr/bin/env python3
"""End-to-end CLI pipeline: data, noise, GRIP and CE runs, report.

    python3 scripts/demo.py --out runs/demo [--ratio 0.4] [--seed 0]
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from grip.cli import main as grip


def step(*argv) -> None:
    argv = [str(a) for a in argv]
    print("$ grip " + " ".join(argv), flush=True)
    rc = grip(argv)
    if rc != 0:
        sys.exit(rc)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/demo")
    ap.add_argument("--ratio", type=float, default=0.4)
    ap.add_argument("--kind", default="symmetric", choices=["symmetric", "asymmetric"])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=40)
    args = ap.parse_args(argv)
    out = Path(args.out)
    common = ["--seed", args.seed, "--force"]

    step("gen-data", "--classes", 10, "--per-class", 500, "--dim", 8, "--sep", 8.0,
         "--out", out / "clean", "--test-out", out / "test", *common)
    step("inject-noise", "--data", out / "clean", "--kind", args.kind, "--ratio", args.ratio,
         "--out", out / "noisy", *common)
    sets = ["--set", f"epochs={args.epochs}", "--set", "warmup=5"]
    data = ["--data", out / "noisy", "--test", out / "test"]
    step("train", "--preset", "cifar-like", *sets, *data, "--out", out / "grip", *common)
    step("train", "--preset", "cifar-like", *sets, "--set", "w=0", "--set", "gamma=0",
         "--set", f"warmup={args.epochs}", *data, "--out", out / "ce", *common)
    step("report", out / "grip", out / "ce", "--out", out / "report", "--force")
    print(f"report written to {out / 'report'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
