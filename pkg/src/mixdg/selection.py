"""Checkpoint selection policies and selection-quality metrics."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from .datadomains import DomainDataset
from .mixgen import MixSet

POLICIES = ("trainsplit", "vald", "oracle")
_SIGNAL = {"trainsplit": "val_acc_trainsplit", "vald": "val_acc_vald", "oracle": "target_acc"}


class ContractError(ValueError):
    pass


def evaluate_accuracy(model, data: DomainDataset | MixSet) -> float:
    """Fraction of argmax-correct predictions; ``model`` is anything with ``predict(x) -> logits``."""
    if isinstance(data, MixSet):
        if not np.all(data.is_hard):
            raise ContractError("accuracy is undefined on soft-labelled samples")
        x, y = data.x, np.argmax(data.y, axis=1)
    else:
        x, y = data.features, data.labels
    if len(y) == 0:
        raise ContractError("empty evaluation set")
    pred = np.argmax(model.predict(x), axis=1)
    return float(np.mean(pred == y))


@dataclass
class CheckpointRecord:
    iteration: int
    snapshot_id: int
    val_acc_trainsplit: float
    val_acc_vald: float
    target_acc: float | None = None


@dataclass
class SelectionOutcome:
    policy: str
    chosen_iteration: int
    chosen_snapshot: int
    chosen_target_acc: float | None
    regret: float | None


class BestTracker:
    """Streaming strict-greater best tracking (first checkpoint wins ties)."""

    def __init__(self, policy: str):
        if policy not in POLICIES:
            raise ValueError(f"unknown policy {policy!r}")
        self.policy = policy
        self.best_value = -np.inf
        self.best: CheckpointRecord | None = None

    def update(self, rec: CheckpointRecord) -> bool:
        value = getattr(rec, _SIGNAL[self.policy])
        if value is None:
            raise ContractError(f"policy {self.policy} needs {_SIGNAL[self.policy]}")
        if value > self.best_value:
            self.best_value, self.best = value, rec
            return True
        return False


def track_best(records: Iterable[CheckpointRecord], policy: str) -> SelectionOutcome:
    records = list(records)
    if not records:
        raise ValueError("empty checkpoint stream")
    tracker = BestTracker(policy)
    for rec in records:
        tracker.update(rec)
    chosen = tracker.best
    target = [r.target_acc for r in records]
    regret = None
    if all(t is not None for t in target):
        regret = max(max(target) - chosen.target_acc, 0.0)
    return SelectionOutcome(policy, chosen.iteration, chosen.snapshot_id, chosen.target_acc, regret)


def spearman(a: Sequence[float], b: Sequence[float]) -> float | None:
    """Spearman rank correlation with average ranks; ``None`` when either sequence is constant."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if len(a) != len(b):
        raise ValueError("sequences differ in length")
    if len(a) < 2 or np.all(a == a[0]) or np.all(b == b[0]):
        return None
    ra, rb = rankdata(a), rankdata(b)
    ra, rb = ra - ra.mean(), rb - rb.mean()
    return float(ra @ rb / np.sqrt((ra @ ra) * (rb @ rb)))


@dataclass
class StudyRow:
    seed: int
    policy: str
    chosen_iter: int
    target_acc: float
    regret: float
    spearman: float | None


@dataclass
class StudyReport:
    rows: list[StudyRow] = field(default_factory=list)

    def summary(self) -> dict[str, dict[str, float | None]]:
        out = {}
        for policy in sorted({r.policy for r in self.rows}):
            rows = [r for r in self.rows if r.policy == policy]
            regrets = np.array([r.regret for r in rows])
            rhos = [r.spearman for r in rows if r.spearman is not None]
            out[policy] = {"mean_regret": float(regrets.mean()), "median_regret": float(np.median(regrets)),
                           "median_spearman": float(np.median(rhos)) if rhos else None,
                           "undefined_spearman": len(rows) - len(rhos)}
        return out

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seed", "policy", "chosen_iter", "target_acc", "regret", "spearman"])
            for r in self.rows:
                w.writerow([r.seed, r.policy, r.chosen_iter, repr(r.target_acc), repr(r.regret),
                            "" if r.spearman is None else repr(r.spearman)])


def selection_study(trajectories: dict[int, Sequence[CheckpointRecord]],
                    policies: Sequence[str] = POLICIES) -> StudyReport:
    """Regret and validation/target rank correlation for each (seed, policy)."""
    report = StudyReport()
    for seed, recs in trajectories.items():
        recs = list(recs)
        if any(r.target_acc is None for r in recs):
            raise ContractError("selection study needs target accuracy at every checkpoint")
        target = [r.target_acc for r in recs]
        for policy in policies:
            out = track_best(recs, policy)
            signal = [getattr(r, _SIGNAL[policy]) for r in recs]
            report.rows.append(StudyRow(seed, policy, out.chosen_iteration, out.chosen_target_acc,
                                        out.regret, spearman(signal, target)))
    return report
