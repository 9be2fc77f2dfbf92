#!/usr/bin/env python3
"""Sweep the Beta(alpha, alpha) mixing parameter (or another ablation axis) and print per-value medians."""
import argparse
from pathlib import Path

from mixdg.harness.config import RunConfig
from mixdg.harness.sweep import AXES, ablation_sweep


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--axis", choices=AXES, default="alpha")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--out", type=Path, default=Path("runs/sweep.csv"))
    args = ap.parse_args(argv)

    table = ablation_sweep(RunConfig(seeds=args.seeds, epochs=args.epochs), args.axis)
    for value, acc in table.medians().items():
        print(f"{args.axis}={value}: median target acc {100 * acc:.1f}")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    table.write_csv(args.out)


if __name__ == "__main__":
    main()
