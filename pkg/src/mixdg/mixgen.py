"""Mixup generators: vanilla, OPTD (cross-domain + within-domain) and VALD (same-class)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .datadomains import DomainDataset

VANILLA = "vanilla"
OPTD_CROSS = "optd-cross-domain"
OPTD_WITHIN = "optd-within-domain"
VALD = "vald"


class ConfigError(ValueError):
    pass


class GenerationError(ValueError):
    pass


@dataclass
class MixupConfig:
    alpha: float = 0.2
    seed: int = 0
    count: int = 0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be > 0, got {self.alpha}")
        if self.count < 0:
            raise ConfigError("count must be >= 0")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


@dataclass(frozen=True)
class MixSample:
    x_tilde: np.ndarray
    y_tilde: np.ndarray
    lam: float
    parents: tuple[int, int]
    parent_domains: tuple[int, int]
    parent_labels: tuple[int, int]
    rule: str


@dataclass
class MixSet:
    """Column-wise storage of generated samples; indexing yields :class:`MixSample`."""

    x: np.ndarray          # (n, d)
    y: np.ndarray          # (n, C) soft labels
    lam: np.ndarray        # (n,)
    i: np.ndarray
    j: np.ndarray
    d_i: np.ndarray
    d_j: np.ndarray
    y_i: np.ndarray
    y_j: np.ndarray
    rule: np.ndarray       # (n,) of str

    def __len__(self) -> int:
        return len(self.lam)

    def __getitem__(self, k: int) -> MixSample:
        return MixSample(self.x[k], self.y[k], float(self.lam[k]), (int(self.i[k]), int(self.j[k])),
                         (int(self.d_i[k]), int(self.d_j[k])), (int(self.y_i[k]), int(self.y_j[k])),
                         str(self.rule[k]))

    def __iter__(self) -> Iterator[MixSample]:
        return (self[k] for k in range(len(self)))

    @property
    def is_hard(self) -> np.ndarray:
        return np.max(self.y, axis=1) == 1.0

    def hard_labels(self) -> np.ndarray:
        if not np.all(self.is_hard):
            raise ValueError("mix set contains soft labels; accuracy is undefined")
        return np.argmax(self.y, axis=1)

    def take(self, idx) -> "MixSet":
        idx = np.asarray(idx)
        if idx.dtype != bool:
            idx = idx.astype(np.int64)
        return MixSet(*(getattr(self, f)[idx] for f in
                        ("x", "y", "lam", "i", "j", "d_i", "d_j", "y_i", "y_j", "rule")))

    @staticmethod
    def concat(parts: list["MixSet"]) -> "MixSet":
        return MixSet(*(np.concatenate([getattr(p, f) for p in parts]) for f in
                        ("x", "y", "lam", "i", "j", "d_i", "d_j", "y_i", "y_j", "rule")))


def sample_lambda(cfg: MixupConfig, size: int | None = None, rng: np.random.Generator | None = None):
    """Draw from Beta(alpha, alpha), redrawing exact 0 or 1."""
    if not cfg.alpha > 0:
        raise ConfigError(f"alpha must be > 0, got {cfg.alpha}")
    rng = cfg.rng() if rng is None else rng
    n = 1 if size is None else size
    lam = rng.beta(cfg.alpha, cfg.alpha, size=n)
    bad = (lam <= 0.0) | (lam >= 1.0)
    while np.any(bad):
        lam[bad] = rng.beta(cfg.alpha, cfg.alpha, size=int(bad.sum()))
        bad = (lam <= 0.0) | (lam >= 1.0)
    return float(lam[0]) if size is None else lam


def mix(data: DomainDataset, i: np.ndarray, j: np.ndarray, lam: np.ndarray, rule: str,
        hard: bool) -> MixSet:
    """Build the mix set for explicit parent pairs and coefficients."""
    i, j = np.asarray(i, dtype=np.int64), np.asarray(j, dtype=np.int64)
    lam = np.asarray(lam, dtype=np.float64)
    x = lam[:, None] * data.features[i] + (1.0 - lam)[:, None] * data.features[j]
    eye = np.eye(data.class_count)
    if hard:
        y = eye[data.labels[i]]
    else:
        y = lam[:, None] * eye[data.labels[i]] + (1.0 - lam)[:, None] * eye[data.labels[j]]
        # labels of a same-class pair collapse to one-hot exactly
        same = data.labels[i] == data.labels[j]
        y[same] = eye[data.labels[i][same]]
    return MixSet(x, y, lam, i, j, data.domain_ids[i], data.domain_ids[j], data.labels[i], data.labels[j],
                  np.full(len(i), rule, dtype=object))


def _partner(groups: dict, keys: np.ndarray, anchors: np.ndarray, rng, exclude_self: bool = True) -> np.ndarray:
    """For each anchor pick a uniform partner from ``groups[key]`` (excluding the anchor itself)."""
    out = np.empty(len(anchors), dtype=np.int64)
    for k, (key, a) in enumerate(zip(keys, anchors)):
        pool = groups[key]
        if exclude_self:
            # pool is sorted; draw from len-1 slots and skip over the anchor
            pos = np.searchsorted(pool, a)
            r = rng.integers(len(pool) - 1)
            out[k] = pool[r + (r >= pos)]
        else:
            out[k] = pool[rng.integers(len(pool))]
    return out


def gen_vanilla(data: DomainDataset, cfg: MixupConfig) -> MixSet:
    n = len(data)
    if n < 2:
        raise GenerationError("vanilla mixup needs at least 2 samples")
    rng = cfg.rng()
    i = rng.integers(n, size=cfg.count)
    r = rng.integers(n - 1, size=cfg.count)
    j = r + (r >= i)
    lam = sample_lambda(cfg, cfg.count, rng)
    return mix(data, i, j, lam, VANILLA, hard=False)


def gen_optd(sources: DomainDataset, cfg: MixupConfig) -> MixSet:
    """Half same-class/different-domain mixes (hard labels), half same-domain mixes (soft labels).

    The cross-domain half gets the extra sample when ``count`` is odd.
    """
    if sources.domain_count < 2 or len(np.unique(sources.domain_ids)) < 2:
        raise GenerationError("OPTD needs at least 2 source domains")
    rng = cfg.rng()
    n_cross = (cfg.count + 1) // 2
    n_within = cfg.count // 2
    counts = sources.cell_counts()
    present = counts > 0
    for c in np.flatnonzero(present.any(axis=0)):
        if present[:, c].sum() < 2:
            raise GenerationError(f"class {c} appears in only one domain; cannot mix across domains")

    # cross-domain part: anchor uniform, partner uniform among same class in other domains
    i1 = rng.integers(len(sources), size=n_cross)
    j1 = np.empty(n_cross, dtype=np.int64)
    by_class = {c: np.flatnonzero(sources.labels == c) for c in range(sources.class_count)}
    for k, a in enumerate(i1):
        pool = by_class[sources.labels[a]]
        pool = pool[sources.domain_ids[pool] != sources.domain_ids[a]]
        j1[k] = pool[rng.integers(len(pool))]
    lam1 = sample_lambda(cfg, n_cross, rng)
    cross = mix(sources, i1, j1, lam1, OPTD_CROSS, hard=True)

    # within-domain part: anchor uniform among domains with >= 2 samples
    by_domain = {d: np.flatnonzero(sources.domain_ids == d) for d in range(sources.domain_count)}
    eligible = np.flatnonzero(np.array([len(by_domain[d]) for d in sources.domain_ids]) >= 2)
    if n_within and len(eligible) == 0:
        raise GenerationError("no domain has 2 samples for within-domain mixing")
    i2 = eligible[rng.integers(len(eligible), size=n_within)] if n_within else np.zeros(0, dtype=np.int64)
    j2 = _partner(by_domain, sources.domain_ids[i2], i2, rng)
    lam2 = sample_lambda(cfg, n_within, rng)
    within = mix(sources, i2, j2, lam2, OPTD_WITHIN, hard=False)
    return MixSet.concat([cross, within])


def gen_vald(sources: DomainDataset, cfg: MixupConfig) -> MixSet:
    """Same-class mixes with the shared hard label; parent domains unconstrained."""
    by_class = {c: np.flatnonzero(sources.labels == c) for c in range(sources.class_count)}
    for c, idx in by_class.items():
        if len(idx) == 1:
            raise GenerationError(f"class {c} has a single sample; cannot form a same-class pair")
    if len(sources) < 2:
        raise GenerationError("VALD needs at least 2 samples")
    rng = cfg.rng()
    i = rng.integers(len(sources), size=cfg.count)
    j = _partner(by_class, sources.labels[i], i, rng)
    lam = sample_lambda(cfg, cfg.count, rng)
    return mix(sources, i, j, lam, VALD, hard=True)
