"""Loss bank and per-objective gradient assembly over the shared feature extractor."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .numcore import Network, NetworkSpec, StateError, as_tensor, flatten_grads

METHODS = ("erm", "erm-per-source", "dann", "coral")


class ConfigError(ValueError):
    pass


class LabelError(ValueError):
    pass


class CovarianceError(ValueError):
    pass


# --- elementary losses -------------------------------------------------------

def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(logits, soft_labels) -> tuple[float, np.ndarray]:
    """Mean soft-label cross-entropy and its gradient w.r.t. the logits."""
    logits = as_tensor(logits, "logits", ndim=2)
    y = as_tensor(soft_labels, "soft_labels", ndim=2)
    if logits.shape != y.shape:
        raise LabelError(f"logits {logits.shape} and labels {y.shape} differ in shape")
    if np.any(y < 0) or np.any(np.abs(y.sum(axis=1) - 1.0) > 1e-9):
        raise LabelError("label rows must be non-negative and sum to 1")
    n = len(logits)
    logp = log_softmax(logits)
    loss = float(-(y * logp).sum() / n)
    grad = (np.exp(logp) - y) / n
    return loss, grad


def grl_forward(x: np.ndarray) -> np.ndarray:
    return x


def grl_backward(upstream_grad: np.ndarray) -> np.ndarray:
    return -upstream_grad


def covariance(x: np.ndarray) -> np.ndarray:
    n = len(x)
    if n < 2:
        raise CovarianceError("covariance needs at least 2 rows")
    xc = x - x.mean(axis=0)
    return xc.T @ xc / (n - 1)


def coral_loss(features_a, features_b) -> tuple[float, np.ndarray, np.ndarray]:
    """``||Cov(A) - Cov(B)||_F^2 / (4 d^2)`` with gradients w.r.t. A and B."""
    a = as_tensor(features_a, "features_a", ndim=2)
    b = as_tensor(features_b, "features_b", ndim=2)
    if a.shape[1] != b.shape[1]:
        raise CovarianceError("feature widths differ")
    d = a.shape[1]
    diff = covariance(a) - covariance(b)
    loss = float((diff * diff).sum() / (4.0 * d * d))
    # dL/dCov = diff / (2 d^2);  dCov/dX through centred X: 2 Xc dL/dCov / (n-1)
    g = diff / (2.0 * d * d)
    ga = 2.0 * (a - a.mean(axis=0)) @ g / (len(a) - 1)
    gb = -2.0 * (b - b.mean(axis=0)) @ g / (len(b) - 1)
    return loss, ga, gb


# --- model bundle ------------------------------------------------------------

@dataclass
class ModelBundle:
    feat: Network
    clf: Network
    disc: Network | None
    method: str

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.clf.n_in != self.feat.n_out:
            raise ConfigError("classifier input width must equal feature width")
        if self.disc is not None and self.disc.n_in != self.feat.n_out:
            raise ConfigError("discriminator input width must equal feature width")

    @classmethod
    def build(cls, n_in: int, n_classes: int, n_domains: int, method: str, hidden: int = 16,
              feat_depth: int = 2, seed: int = 0) -> "ModelBundle":
        ss = np.random.SeedSequence(seed).generate_state(3)
        feat = Network(NetworkSpec.mlp([n_in] + [hidden] * feat_depth, hidden="relu", last="relu",
                                       seed=int(ss[0])), "feat")
        clf = Network(NetworkSpec.mlp([hidden, n_classes], last="softmax", seed=int(ss[1])), "clf")
        disc = None
        if method == "dann":
            disc = Network(NetworkSpec.mlp([hidden, hidden, n_domains], last="softmax", seed=int(ss[2])), "disc")
        return cls(feat, clf, disc, method)

    def stores(self):
        return [n.store for n in (self.feat, self.clf, self.disc) if n is not None]

    def zero_grad(self) -> None:
        for s in self.stores():
            s.zero_grad()

    def predict(self, x) -> np.ndarray:
        return self.clf.predict(self.feat.predict(x))

    def snapshot(self) -> list[dict]:
        return [s.snapshot() for s in self.stores()]

    def restore(self, snap: list[dict]) -> None:
        for s, v in zip(self.stores(), snap):
            s.restore(v)

    @property
    def version(self) -> int:
        return self.feat.store.version


@dataclass
class LossVector:
    values: np.ndarray
    labels: list[str]

    @property
    def k(self) -> int:
        return len(self.values) - 1


@dataclass
class ObjectiveGrads:
    """Per-objective gradients for one batch and one parameter snapshot.

    ``G`` holds one column per objective over the flattened feature extractor;
    ``heads`` maps head store names to the flat gradient of that head's own objective.
    """

    losses: LossVector
    G: np.ndarray
    heads: dict[str, np.ndarray] = field(default_factory=dict)
    version: int = 0


@dataclass
class Batch:
    x: np.ndarray
    y: np.ndarray          # (n, C) soft or one-hot
    domains: np.ndarray    # (n,) domain ids

    def __len__(self) -> int:
        return len(self.x)

    def of_domain(self, d: int) -> "Batch":
        m = self.domains == d
        return Batch(self.x[m], self.y[m], self.domains[m])


def _feat_column(bundle: ModelBundle, dz: np.ndarray) -> np.ndarray:
    bundle.feat.store.zero_grad()
    bundle.feat.backward(dz)
    return flatten_grads(bundle.feat.store)


def classification_grads(bundle: ModelBundle, batch: Batch) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss, feature-extractor gradient and classifier gradient of the classification loss."""
    z = bundle.feat.forward(batch.x)
    loss, dlogits = cross_entropy(bundle.clf.forward(z), batch.y)
    bundle.clf.store.zero_grad()
    dz = bundle.clf.backward(dlogits)
    return loss, _feat_column(bundle, dz), bundle.clf.store.flat_grads()


def domain_grads(bundle: ModelBundle, batch: Batch, reverse: bool = True):
    """Domain-adversarial loss; the feature column passes through the GRL when ``reverse``."""
    if bundle.disc is None:
        raise ConfigError("dann objective requires a discriminator")
    z = bundle.feat.forward(batch.x)
    n_dom = bundle.disc.n_out
    target = np.eye(n_dom)[batch.domains]
    loss, dlogits = cross_entropy(bundle.disc.forward(grl_forward(z)), target)
    bundle.disc.store.zero_grad()
    dz = bundle.disc.backward(dlogits)
    if reverse:
        dz = grl_backward(dz)
    return loss, _feat_column(bundle, dz), bundle.disc.store.flat_grads()


def coral_grads(bundle: ModelBundle, batch: Batch) -> tuple[float, np.ndarray]:
    """Mean CORAL loss over all source-domain pairs present in the batch."""
    z = bundle.feat.forward(batch.x)
    doms = np.unique(batch.domains)
    pairs = list(combinations(doms, 2))
    if not pairs:
        raise ConfigError("coral needs at least 2 domains in the batch")
    dz = np.zeros_like(z)
    total = 0.0
    for a, b in pairs:
        ma, mb = batch.domains == a, batch.domains == b
        loss, ga, gb = coral_loss(z[ma], z[mb])
        total += loss
        dz[ma] += ga
        dz[mb] += gb
    return total / len(pairs), _feat_column(bundle, dz / len(pairs))


def dann_losses(bundle: ModelBundle, batch: Batch) -> ObjectiveGrads:
    if bundle.method != "dann" or bundle.disc is None:
        raise ConfigError("dann_losses requires method 'dann' with a discriminator")
    l0, g0, hc = classification_grads(bundle, batch)
    l1, g1, hd = domain_grads(bundle, batch)
    return ObjectiveGrads(LossVector(np.array([l0, l1]), ["cls", "domain"]), np.stack([g0, g1], axis=1),
                          {"clf": hc, "disc": hd}, bundle.version)


def per_source_losses(bundle: ModelBundle, batches: Sequence[Batch | None]) -> ObjectiveGrads:
    """One classification objective per source batch; the classifier gets their mean gradient."""
    if any(b is None or len(b) == 0 for b in batches):
        raise ConfigError("every source needs a non-empty batch")
    losses, cols, heads = [], [], []
    for b in batches:
        l, g, h = classification_grads(bundle, b)
        losses.append(l)
        cols.append(g)
        heads.append(h)
    return ObjectiveGrads(LossVector(np.array(losses), [f"cls[{i}]" for i in range(len(batches))]),
                          np.stack(cols, axis=1), {"clf": np.mean(heads, axis=0)}, bundle.version)


def compute_objectives(bundle: ModelBundle, batch: Batch, per_source: bool | None = None) -> ObjectiveGrads:
    """Dispatch on ``bundle.method``.

    ``per_source`` splits the classification loss into one objective per source
    domain (default: only for ``erm-per-source``); the alignment objective of
    dann/coral is appended after the classification columns.
    """
    method = bundle.method
    if per_source is None:
        per_source = method == "erm-per-source"
    if per_source:
        doms = np.unique(batch.domains)
        og = per_source_losses(bundle, [batch.of_domain(d) for d in doms])
    else:
        l0, g0, hc = classification_grads(bundle, batch)
        og = ObjectiveGrads(LossVector(np.array([l0]), ["cls"]), g0[:, None], {"clf": hc}, bundle.version)
    if method == "dann":
        l1, g1, hd = domain_grads(bundle, batch)
        og.heads["disc"] = hd
    elif method == "coral":
        l1, g1 = coral_grads(bundle, batch)
    else:
        return og
    label = "domain" if method == "dann" else "coral"
    og.losses = LossVector(np.append(og.losses.values, l1), og.losses.labels + [label])
    og.G = np.column_stack([og.G, g1])
    return og


def scalarized_direction(grads: ObjectiveGrads, fixed_lambdas: Sequence[float]) -> np.ndarray:
    """Feature-extractor direction ``g_0 + sum_i lambda_i g_i`` for the fixed-weight baseline.

    With several classification columns (per-source), those are averaged to form ``g_0``.
    """
    lambdas = np.asarray(fixed_lambdas, dtype=np.float64)
    n_reg = 1 if grads.losses.labels[-1] in ("domain", "coral") else 0
    if len(lambdas) != n_reg:
        raise ConfigError(f"expected {n_reg} lambda(s), got {len(lambdas)}")
    if np.any(lambdas < 0):
        raise ConfigError("fixed lambdas must be non-negative")
    n_cls = grads.G.shape[1] - n_reg
    direction = grads.G[:, :n_cls].mean(axis=1)
    for i, lam in enumerate(lambdas):
        direction = direction + lam * grads.G[:, n_cls + i]
    return direction


def apply_update(bundle: ModelBundle, grads: ObjectiveGrads, direction: np.ndarray, lr: float) -> None:
    """``theta_f -= lr * direction``; heads step along their own objectives' gradients."""
    if grads.version != bundle.version:
        raise StateError(f"gradients were computed at parameter version {grads.version}, "
                         f"model is at {bundle.version}")
    bundle.feat.store.step(direction, lr)
    bundle.clf.store.step(grads.heads["clf"], lr)
    if bundle.disc is not None and "disc" in grads.heads:
        bundle.disc.store.step(grads.heads["disc"], lr)


def scalarized_step(bundle: ModelBundle, grads: ObjectiveGrads, fixed_lambdas: Sequence[float],
                    lr: float) -> np.ndarray:
    """Apply the fixed-weight baseline update; returns the feature-extractor direction used."""
    direction = scalarized_direction(grads, fixed_lambdas)
    apply_update(bundle, grads, direction, lr)
    return direction
