#!/usr/bin/env python3
"""Case I comparison: DANN+Pareto+VALD against fixed-lambda DANN and ERM, plus the selection study.

    python3 scripts/case1_study.py --seeds 0 1 2 3 4 --out runs/case1
"""
import argparse
import json
from pathlib import Path

import numpy as np

from mixdg.harness.config import RunConfig
from mixdg.harness.report import emit_report
from mixdg.harness.runner import run_experiment
from mixdg.selection import selection_study


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--out", type=Path, default=Path("runs/case1"))
    args = ap.parse_args(argv)

    base = RunConfig(seeds=args.seeds, epochs=args.epochs)
    runs = {
        "dann+pareto/vald": (run_experiment(base), "vald"),
        "dann+fixed/trainsplit": (run_experiment(base.replace(pareto=False, selection="trainsplit")), "trainsplit"),
        "erm/trainsplit": (run_experiment(base.replace(method="erm", pareto=False, selection="trainsplit")),
                           "trainsplit"),
    }
    for name, (res, policy) in runs.items():
        print(f"{name:24s} median target acc {100 * np.median(res.target_acc(policy)):.1f}")

    pareto = runs["dann+pareto/vald"][0]
    study = selection_study({t.seed: t.records for t in pareto.trials})
    for policy, row in study.summary().items():
        rho = row["median_spearman"]
        print(f"{policy:10s} median spearman {'n/a' if rho is None else f'{rho:+.3f}'}  "
              f"median regret {100 * row['median_regret']:.1f} pt")

    args.out.mkdir(parents=True, exist_ok=True)
    emit_report([r for r, _ in runs.values()], args.out)
    study.write_csv(args.out / "selection.csv")
    (args.out / "selection_summary.json").write_text(json.dumps(study.summary(), indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
