#!/usr/bin/env python3
"""End-to-end desk-scale experiment pipeline.

Generates a synthetic dataset, trains all four networks, and produces the
evaluation tables and plots (reconstruction quality, order metric,
accuracy/entropy vs history length) under one output directory.

    python3 scripts/run_experiments.py --out runs/exp1 [--fast]
"""

import argparse
import sys
from pathlib import Path

from assist2plan.cli import main as cli


def run(args: list[str]) -> None:
    print(f"\n$ assist2plan {' '.join(args)}", flush=True)
    code = cli(args)
    if code != 0:
        sys.exit(code)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/exp1")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--fast", action="store_true",
                    help="tiny training budgets for a quick smoke run")
    args = ap.parse_args()

    out = Path(args.out)
    data = out / "floors"
    seed = str(args.seed)

    count = "12" if args.fast else "80"
    nw_steps = "60" if args.fast else "3500"
    edge_steps = "30" if args.fast else "500"
    cls_steps = "40" if args.fast else "1200"
    tcn_iters = "80" if args.fast else "3000"

    run(["gen-floors", "--seed", seed, "--count", count, "--out", str(data)])
    run(["train-next-wall", "--data", str(data), "--out", str(out / "nextwall"),
         "--steps", nw_steps, "--seed", seed])
    run(["train-edge", "--data", str(data), "--out", str(out / "edge"),
         "--steps", edge_steps, "--seed", seed])
    run(["train-classifier", "--data", str(data), "--out", str(out / "classifier"),
         "--steps", cls_steps, "--seed", seed])
    run(["train-tcn", "--data", str(data), "--out", str(out / "tcn"),
         "--iterations", tcn_iters, "--seed", seed])

    run(["eval-recon", "--data", str(data), "--out", str(out / "eval"),
         "--edge-ckpt", str(out / "edge" / "edge.ckpt")])
    run(["eval-history", "--data", str(data), "--out", str(out / "eval"),
         "--nextwall-ckpt", str(out / "nextwall" / "nextwall.ckpt")])
    run(["eval-order", "--data", str(data), "--out", str(out / "eval"),
         "--tcn-ckpt", str(out / "tcn" / "tcn.ckpt"),
         "--nextwall-ckpt", str(out / "nextwall" / "nextwall.ckpt"),
         "--classifier-ckpt", str(out / "classifier" / "classifier.ckpt"),
         "--methods", "gt,nextwall,heuristic,classifier,random"])

    print(f"\nall outputs under {out}/")


if __name__ == "__main__":
    main()
