"""Measurable terms of the multi-source generalization bound.

The H-delta-H divergence is a supremum over a hypothesis class; here it is
approximated from below by the proxy A-distance ``2 (1 - 2 err)`` of a small
probe classifier trained to tell the two sample sets apart.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .datadomains import DomainDataset
from .mixgen import MixSet
from .numcore import Adam, Network, NetworkSpec, as_tensor
from .objectives import cross_entropy
from .selection import evaluate_accuracy

MIN_SAMPLES = 20


class DataError(ValueError):
    pass


@dataclass
class ProbeConfig:
    hidden: int = 16
    epochs: int = 200
    batch_size: int = 64
    lr: float = 1e-2


def probe_error(set_a, set_b, probe: ProbeConfig | None = None, seed: int = 0) -> float:
    """Held-out error of a fresh probe separating A (label 0) from B (label 1) on a 50/50 split."""
    probe = probe or ProbeConfig()
    a = as_tensor(set_a, "set_a", ndim=2)
    b = as_tensor(set_b, "set_b", ndim=2)
    if len(a) < MIN_SAMPLES or len(b) < MIN_SAMPLES:
        raise DataError(f"proxy A-distance needs >= {MIN_SAMPLES} samples per set, got {len(a)} and {len(b)}")
    if a.shape[1] != b.shape[1]:
        raise DataError("sets differ in feature width")
    rng = np.random.default_rng(seed)
    ia, ib = rng.permutation(len(a)), rng.permutation(len(b))
    ha, hb = len(a) // 2, len(b) // 2
    x_tr = np.vstack([a[ia[:ha]], b[ib[:hb]]])
    y_tr = np.concatenate([np.zeros(ha, int), np.ones(hb, int)])
    x_te = np.vstack([a[ia[ha:]], b[ib[hb:]]])
    y_te = np.concatenate([np.zeros(len(a) - ha, int), np.ones(len(b) - hb, int)])
    mu, sd = x_tr.mean(axis=0), x_tr.std(axis=0) + 1e-12
    x_tr, x_te = (x_tr - mu) / sd, (x_te - mu) / sd

    net = Network(NetworkSpec.mlp([a.shape[1], probe.hidden, 2], last="softmax",
                                  seed=int(rng.integers(2**31))), "probe")
    opt = Adam(net.store, lr=probe.lr)
    onehot = np.eye(2)[y_tr]
    n = len(x_tr)
    for _ in range(probe.epochs):
        order = rng.permutation(n)
        for s in range(0, n, probe.batch_size):
            idx = order[s:s + probe.batch_size]
            net.store.zero_grad()
            _, dlogits = cross_entropy(net.forward(x_tr[idx]), onehot[idx])
            net.backward(dlogits)
            opt.step()
    # class-balanced error so unequal set sizes do not bias towards 0.5
    pred = np.argmax(net.predict(x_te), axis=1)
    return float(0.5 * (np.mean(pred[y_te == 0] != 0) + np.mean(pred[y_te == 1] != 1)))


def pad_from_error(err: float) -> float:
    err = min(max(err, 0.0), 0.5)
    return float(np.clip(2.0 * (1.0 - 2.0 * err), 0.0, 2.0))


def proxy_a_distance(set_a, set_b, probe: ProbeConfig | None = None, seed: int = 0) -> float:
    return pad_from_error(probe_error(set_a, set_b, probe, seed))


@dataclass
class DivergenceReport:
    pairs: dict[str, dict[str, float]] = field(default_factory=dict)
    source_errors: list[float] = field(default_factory=list)
    weighted_source_error: float | None = None

    def add(self, label: str, err: float) -> None:
        self.pairs[label] = {"proxy_a_distance": pad_from_error(err), "heldout_error": min(max(err, 0.0), 0.5)}

    @property
    def max_source_divergence(self) -> float | None:
        vals = [v["proxy_a_distance"] for k, v in self.pairs.items() if k.startswith("src")]
        return max(vals) if vals else None

    def to_dict(self) -> dict:
        return {"pairs": self.pairs, "max_source_divergence": self.max_source_divergence,
                "source_errors": self.source_errors, "weighted_source_error": self.weighted_source_error}

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))


def _x(data) -> np.ndarray:
    return data.x if isinstance(data, MixSet) else data.features


def bound_terms_report(sources: DomainDataset, target: DomainDataset, model=None,
                       val: DomainDataset | None = None, vald: MixSet | None = None,
                       probe: ProbeConfig | None = None, seed: int = 0) -> DivergenceReport:
    """Per-source errors (uniform weights), pairwise source divergences, and validation-to-target divergences."""
    report = DivergenceReport()
    doms = [sources.domain(d) for d in range(sources.domain_count)]
    if model is not None:
        report.source_errors = [1.0 - evaluate_accuracy(model, d) for d in doms]
        report.weighted_source_error = float(np.mean(report.source_errors))
    ss = np.random.SeedSequence(seed)
    for i, j in combinations(range(len(doms)), 2):
        report.add(f"src{i}|src{j}", probe_error(doms[i].features, doms[j].features, probe,
                                                 int(ss.spawn(1)[0].generate_state(1)[0])))
    if val is not None:
        report.add("val|target", probe_error(val.features, target.features, probe,
                                             int(ss.spawn(1)[0].generate_state(1)[0])))
    if vald is not None:
        report.add("vald|target", probe_error(vald.x, target.features, probe,
                                              int(ss.spawn(1)[0].generate_state(1)[0])))
    return report
