"""Ablation sweeps over the mixup alpha, the gradient-computation mode, or the method components."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .config import GRAD_MODES, RunConfig
from .runner import RunResult, run_experiment

AXES = ("alpha", "grad-mode", "component")
DEFAULT_ALPHAS = (0.1, 0.2, 0.5, 1.0, 2.0)
# component name -> (pareto, selection); OPTD only enters through the Pareto guidance
COMPONENTS = {"vanilla": (False, "trainsplit"), "+OPTD": (True, "trainsplit"),
              "+VALD": (False, "vald"), "+both": (True, "vald")}


@dataclass
class SweepTable:
    axis: str
    rows: list[dict[str, Any]] = field(default_factory=list)
    results: dict[str, RunResult] = field(default_factory=dict, repr=False)

    def medians(self) -> dict[str, float]:
        out = {}
        for value in dict.fromkeys(r["value"] for r in self.rows):
            out[value] = float(np.median([r["target_acc"] for r in self.rows if r["value"] == value]))
        return out

    def write_csv(self, path) -> None:
        cols = ["axis", "value", "seed", "target", "variant", "policy", "target_acc", "regret"]
        with Path(path).open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols)
            w.writeheader()
            for r in self.rows:
                w.writerow({"axis": self.axis, **{k: r[k] for k in cols[1:]}})


def _rows(value: str, result: RunResult, policy: str) -> list[dict[str, Any]]:
    return [{"value": value, "seed": t.seed, "target": t.target, "variant": t.variant, "policy": policy,
             "target_acc": t.outcomes[policy].chosen_target_acc, "regret": t.outcomes[policy].regret}
            for t in result.trials]


def ablation_sweep(base: RunConfig, axis: str, values: Sequence | None = None) -> SweepTable:
    """One row per (axis value, seed, target).

    ``component`` trains the fixed-lambda and the Pareto model once each and reads
    both selection policies from the same checkpoint trajectory.
    """
    if axis not in AXES:
        raise ValueError(f"axis must be one of {AXES}")
    if values is None:
        values = {"alpha": DEFAULT_ALPHAS, "grad-mode": GRAD_MODES, "component": tuple(COMPONENTS)}[axis]
    values = list(values)
    if not values:
        raise ValueError("sweep values must be non-empty")
    table = SweepTable(axis)
    if axis == "component":
        unknown = [v for v in values if v not in COMPONENTS]
        if unknown:
            raise ValueError(f"unknown components {unknown}")
        cache: dict[bool, RunResult] = {}
        for v in values:
            pareto, policy = COMPONENTS[v]
            if pareto not in cache:
                cache[pareto] = run_experiment(base.replace(pareto=pareto))
            table.results[v] = cache[pareto]
            table.rows += _rows(v, cache[pareto], policy)
        return table
    for v in values:
        cfg = base.replace(alpha=float(v)) if axis == "alpha" else base.replace(grad_mode=str(v))
        res = run_experiment(cfg)
        key = str(v)
        table.results[key] = res
        table.rows += _rows(key, res, cfg.selection)
    return table
