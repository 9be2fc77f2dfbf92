"""Algorithm-1 training loop and multi-seed experiment driver."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..datadomains import (CsvSchema, DomainDataset, ShiftFamilySpec, generate_synthetic, load_csv,
                           split)
from ..mixgen import MixSet, MixupConfig, gen_optd, gen_vald
from ..numcore import Adam, NumericError
from ..objectives import Batch, ModelBundle, ObjectiveGrads, compute_objectives, scalarized_direction
from ..paretolp import (GradientProblem, SimplexWeights, compute_guidance, fuse_and_apply, solve_lp,
                        theorem1_check)
from ..selection import POLICIES, CheckpointRecord, SelectionOutcome, evaluate_accuracy, track_best
from .config import RunConfig

log = logging.getLogger(__name__)


@dataclass
class Task:
    """Sources plus one held-out target."""

    name: str
    sources: DomainDataset
    target: DomainDataset


@dataclass
class TrialResult:
    seed: int
    target: str
    variant: str
    outcomes: dict[str, SelectionOutcome]
    records: list[CheckpointRecord]
    loss_curves: dict[str, list[float]]
    pareto: dict[str, Any]
    aborted: bool = False
    diag: list[dict] = field(default_factory=list, repr=False, compare=False)
    # trained bundle and validation sets, kept in memory only (never serialized)
    artifacts: dict[str, Any] = field(default_factory=dict, repr=False, compare=False)


@dataclass
class RunResult:
    config: dict[str, Any]
    trials: list[TrialResult]
    wall_clock: float = field(default=0.0, compare=False)

    def rows(self) -> list[dict[str, Any]]:
        out = []
        for t in self.trials:
            for policy, o in t.outcomes.items():
                out.append({"seed": t.seed, "target": t.target, "variant": t.variant, "policy": policy,
                            "chosen_iter": o.chosen_iteration, "target_acc": o.chosen_target_acc,
                            "regret": o.regret})
        return out

    def target_acc(self, policy: str) -> list[float]:
        return [t.outcomes[policy].chosen_target_acc for t in self.trials]


def _child_seeds(seed: int, n: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def build_tasks(cfg: RunConfig, seed: int) -> list[Task]:
    ds = dict(cfg.dataset)
    kind = ds.pop("kind")
    if kind == "synthetic":
        ds["seed"] = int(ds.get("seed", 0)) + seed
        spec = ShiftFamilySpec(**ds)
        sources, target = generate_synthetic(spec)
        return [Task(target.domain_names[0], sources, target)]
    loaded = load_csv(ds["path"], CsvSchema(ds["features"], ds.get("label", "label"), ds.get("domain", "domain")))
    full = loaded.dataset
    names = full.domain_names
    held = ds.get("targets") or names
    tasks = []
    for name in held:
        t = names.index(str(name))
        keep = [d for d in range(full.domain_count) if d != t]
        remap = np.full(full.domain_count, -1)
        remap[keep] = np.arange(len(keep))
        src_idx = np.flatnonzero(full.domain_ids != t)
        sources = DomainDataset(full.features[src_idx], full.labels[src_idx], remap[full.domain_ids[src_idx]],
                                full.class_count, len(keep), full.label_names, [names[d] for d in keep])
        tgt_idx = np.flatnonzero(full.domain_ids == t)
        target = DomainDataset(full.features[tgt_idx], full.labels[tgt_idx], np.zeros(len(tgt_idx), int),
                               full.class_count, 1, full.label_names, [names[t]])
        tasks.append(Task(names[t], sources, target))
    return tasks


class DomainSampler:
    """Equal-size per-domain batches; each domain cycles through its own reshuffled permutation."""

    def __init__(self, data: DomainDataset, batch_per_domain: int, rng: np.random.Generator):
        self.data, self.b, self.rng = data, batch_per_domain, rng
        self.pools = [np.flatnonzero(data.domain_ids == d) for d in range(data.domain_count)]
        self.pools = [p for p in self.pools if len(p)]
        self.order = [rng.permutation(p) for p in self.pools]
        self.cursor = [0] * len(self.pools)
        self.onehot = data.onehot()

    @property
    def steps_per_epoch(self) -> int:
        return max(int(np.ceil(len(p) / self.b)) for p in self.pools)

    def next(self) -> Batch:
        idx = []
        for k, pool in enumerate(self.pools):
            take = []
            need = self.b
            while need:
                if self.cursor[k] >= len(pool):
                    self.order[k] = self.rng.permutation(pool)
                    self.cursor[k] = 0
                chunk = self.order[k][self.cursor[k]:self.cursor[k] + need]
                self.cursor[k] += len(chunk)
                need -= len(chunk)
                take.append(chunk)
            idx.append(np.concatenate(take))
        idx = np.concatenate(idx)
        return Batch(self.data.features[idx], self.onehot[idx], self.data.domain_ids[idx])


class _Stepper:
    """Applies SGD, or Adam preconditioning, to the feature extractor and heads."""

    def __init__(self, bundle: ModelBundle, cfg: RunConfig):
        self.bundle, self.lr = bundle, cfg.lr
        self.adam = None
        if cfg.optimizer == "adam":
            self.adam = {n.store.name: Adam(n.store, cfg.lr) for n in (bundle.feat, bundle.clf, bundle.disc) if n}

    def apply(self, grads: ObjectiveGrads, direction: np.ndarray) -> None:
        from ..objectives import apply_update
        if self.adam is None:
            apply_update(self.bundle, grads, direction, self.lr)
            return
        heads = {k: self.adam[k].direction(v) for k, v in grads.heads.items()}
        scaled = ObjectiveGrads(grads.losses, grads.G, heads, grads.version)
        apply_update(self.bundle, scaled, self.adam["feat"].direction(direction), self.lr)


def _finite(bundle: ModelBundle) -> bool:
    return all(np.all(np.isfinite(s.flat_params())) for s in bundle.stores())


def _iteration(cfg: RunConfig, bundle: ModelBundle, batch: Batch, it: int, weights: SimplexWeights | None,
               optd: MixSet, stepper: _Stepper, guide_rng, pareto: dict, diag: list, epoch_losses: list):
    """One Algorithm-1 step; returns the (possibly refreshed) cached simplex weights."""
    guidance_mode = "batch" if cfg.grad_mode == "b-w" else "whole"
    grads = compute_objectives(bundle, batch, per_source=cfg.per_source)
    epoch_losses.append(grads.losses)
    if cfg.pareto:
        if it % cfg.B == 0:
            g_optd, ell = compute_guidance(bundle, optd, guidance_mode, cfg.optd_batch, guide_rng)
            problem = GradientProblem(grads.G, g_optd, ell, cfg.epsilon)
            weights = solve_lp(problem)
            report = theorem1_check(weights, problem)
            pareto["refreshes"] += 1
            pareto["modes"][weights.mode] = pareto["modes"].get(weights.mode, 0) + 1
            pareto["descent_resolves"] += int(weights.descent_resolve)
            pareto["theorem1_failures"] += int(not report.passed)
            pareto["fallbacks"] += int(weights.lp_status != "optimal")
            osum = pareto["omega_sum"]
            pareto["omega_sum"] = weights.omega.copy() if osum is None else osum + weights.omega
            diag.append({"event": "refresh", "iteration": it, "ell_optd": ell, **weights.to_record(),
                         "theorem1": report.to_record()})
            if not report.passed:
                log.warning("theorem-1 predicate failed at iteration %d: %s", it, report.branch)
        if stepper.adam is None:
            fuse_and_apply(bundle, weights, grads, cfg.lr)
        else:
            stepper.apply(grads, grads.G @ weights.omega)
    else:
        stepper.apply(grads, scalarized_direction(grads, cfg.lambdas()))
    return weights


def train_trial(cfg: RunConfig, task: Task, seed: int) -> TrialResult:
    s_split, s_vald, s_optd, s_model, s_batch, s_guide = _child_seeds(seed, 6)
    diag: list[dict] = []
    data_split = split(task.sources, cfg.split_ratio, s_split)
    train, val = data_split.train, data_split.val

    vald_pool = val if cfg.vald_from == "val" else train
    vald = gen_vald(vald_pool, MixupConfig(cfg.alpha_vald or cfg.alpha, s_vald, len(val)))
    diag.append({"event": "generate_vald", "iteration": 0, "count": len(vald)})
    optd_count = cfg.optd_count or int(np.sum(train.domain_ids == 0))
    optd = gen_optd(train, MixupConfig(cfg.alpha, s_optd, optd_count))
    diag.append({"event": "generate_optd", "iteration": 0, "count": len(optd)})

    bundle = ModelBundle.build(train.n_features, train.class_count, train.domain_count, cfg.method,
                               hidden=cfg.hidden, seed=s_model)
    sampler = DomainSampler(train, cfg.batch_per_domain, np.random.default_rng(s_batch))
    guide_rng = np.random.default_rng(s_guide)
    stepper = _Stepper(bundle, cfg)

    records: list[CheckpointRecord] = []
    curves: dict[str, list[float]] = {}
    weights: SimplexWeights | None = None
    pareto = {"refreshes": 0, "modes": {}, "descent_resolves": 0, "theorem1_failures": 0,
              "fallbacks": 0, "omega_sum": None}
    last_good = bundle.snapshot()
    aborted = False
    it = 0
    for epoch in range(cfg.epochs):
        epoch_losses = []
        for _ in range(sampler.steps_per_epoch):
            batch = sampler.next()
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    weights = _iteration(cfg, bundle, batch, it, weights, optd, stepper, guide_rng, pareto,
                                         diag, epoch_losses)
                ok = _finite(bundle)
            except NumericError as exc:
                log.warning("numeric failure at iteration %d: %s", it, exc)
                ok = False
            if not ok:
                bundle.restore(last_good)
                aborted = True
                diag.append({"event": "abort", "iteration": it, "reason": "non-finite values"})
                break
            it += 1
        if aborted:
            break
        labels = epoch_losses[0].labels
        mean = np.mean([l.values for l in epoch_losses], axis=0)
        for lab, v in zip(labels, mean):
            curves.setdefault(lab, []).append(float(v))
        if (epoch + 1) % cfg.eval_every == 0 or epoch + 1 == cfg.epochs:
            rec = CheckpointRecord(it, len(records), evaluate_accuracy(bundle, val),
                                   evaluate_accuracy(bundle, vald), evaluate_accuracy(bundle, task.target))
            records.append(rec)
            last_good = bundle.snapshot()
            diag.append({"event": "checkpoint", "iteration": it, "val_acc_trainsplit": rec.val_acc_trainsplit,
                         "val_acc_vald": rec.val_acc_vald, "target_acc": rec.target_acc})
    if not records:
        records.append(CheckpointRecord(it, 0, evaluate_accuracy(bundle, val), evaluate_accuracy(bundle, vald),
                                        evaluate_accuracy(bundle, task.target)))
    outcomes = {p: track_best(records, p) for p in POLICIES}
    if pareto["omega_sum"] is not None:
        pareto["mean_omega"] = (pareto.pop("omega_sum") / pareto["refreshes"]).tolist()
    else:
        pareto.pop("omega_sum")
    for d in diag:
        d.update(seed=seed, target=task.name)
    return TrialResult(seed, task.name, cfg.variant, outcomes, records, curves, pareto, aborted, diag,
                       {"bundle": bundle, "train": train, "val": val, "vald": vald, "optd": optd, "task": task})


def run_experiment(cfg: RunConfig) -> RunResult:
    cfg.validate()
    start = time.perf_counter()
    trials = []
    for seed in cfg.seeds:
        tasks = build_tasks(cfg, seed)
        cfg.validate(n_sources=tasks[0].sources.domain_count)
        for task in tasks:
            log.info("seed %d target %s variant %s", seed, task.name, cfg.variant)
            trials.append(train_trial(cfg, task, seed))
    return RunResult(cfg.to_dict(), trials, time.perf_counter() - start)
