from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from ..objectives import METHODS
from ..selection import POLICIES

GRAD_MODES = ("w-w", "b-w", "w-s")
OPTIMIZERS = ("sgd", "adam")


class ConfigError(ValueError):
    def __init__(self, violations: list[str]):
        super().__init__("invalid run config:\n  - " + "\n  - ".join(violations))
        self.violations = violations


@dataclass
class RunConfig:
    """One experiment. ``dataset`` is either ``{"kind": "synthetic", **ShiftFamilySpec fields}``
    or ``{"kind": "csv", "path", "features", "label", "domain", "targets"}``."""

    dataset: dict[str, Any] = field(default_factory=lambda: {
        "kind": "synthetic", "family": "rotated-gaussians", "source_angles": [0.0, 50.0, 100.0],
        "convex": True, "phi": [0.5, 0.25, 0.25], "noise": 1.0, "samples_per_domain": 500})
    method: str = "dann"
    pareto: bool = True
    selection: str = "vald"
    fixed_lambdas: list[float] | None = None
    alpha: float = 0.2
    alpha_vald: float | None = None
    epsilon: float = 1e-3
    B: int = 5
    lr: float = 0.05
    epochs: int = 40
    batch_per_domain: int = 16
    seeds: list[int] = field(default_factory=lambda: [0])
    grad_mode: str = "w-w"
    optd_batch: int = 64
    optd_count: int | None = None
    split_ratio: float = 0.8
    hidden: int = 16
    optimizer: str = "sgd"
    eval_every: int = 1
    vald_from: str = "val"
    diag: bool = False
    out: str = "runs/out"

    @property
    def variant(self) -> str:
        tag = "pareto" if self.pareto else "fixed"
        mode = f"[{self.grad_mode}]" if self.pareto and self.grad_mode != "w-w" else ""
        return f"{self.method}+{tag}{mode}"

    @property
    def per_source(self) -> bool:
        return self.method == "erm-per-source" or self.grad_mode == "w-s"

    def lambdas(self) -> list[float]:
        if self.method in ("dann", "coral"):
            return [1.0] if self.fixed_lambdas is None else list(self.fixed_lambdas)
        return []

    def n_objectives(self, n_sources: int) -> int:
        cls = n_sources if self.per_source else 1
        return cls + (1 if self.method in ("dann", "coral") else 0)

    def validate(self, n_sources: int | None = None) -> None:
        errs = []
        if self.method not in METHODS:
            errs.append(f"method must be one of {METHODS}, got {self.method!r}")
        if self.selection not in POLICIES:
            errs.append(f"selection must be one of {POLICIES}, got {self.selection!r}")
        if self.grad_mode not in GRAD_MODES:
            errs.append(f"grad_mode must be one of {GRAD_MODES}, got {self.grad_mode!r}")
        if self.optimizer not in OPTIMIZERS:
            errs.append(f"optimizer must be one of {OPTIMIZERS}")
        if not self.alpha > 0 or (self.alpha_vald is not None and not self.alpha_vald > 0):
            errs.append("alpha must be > 0")
        if not self.epsilon > 0:
            errs.append("epsilon must be > 0")
        if self.B < 1:
            errs.append("B must be >= 1")
        if self.epochs < 1:
            errs.append("epochs must be >= 1")
        if self.batch_per_domain < 2:
            errs.append("batch_per_domain must be >= 2")
        if not self.seeds:
            errs.append("seeds must be non-empty")
        if not self.lr >= 0:
            errs.append("lr must be >= 0")
        if not 0 < self.split_ratio < 1:
            errs.append("split_ratio must be in (0, 1)")
        if self.eval_every < 1:
            errs.append("eval_every must be >= 1")
        if self.vald_from not in ("val", "train"):
            errs.append("vald_from must be 'val' or 'train'")
        if self.fixed_lambdas is not None and any(l < 0 for l in self.fixed_lambdas):
            errs.append("fixed_lambdas must be non-negative")
        if self.dataset.get("kind") not in ("synthetic", "csv"):
            errs.append("dataset.kind must be 'synthetic' or 'csv'")
        if self.pareto and self.method in METHODS:
            m = self.n_objectives(n_sources if n_sources is not None else 2)
            if m < 2:
                errs.append(f"pareto needs >= 2 objectives; {self.method} with grad_mode "
                            f"{self.grad_mode} has {m}")
        if errs:
            raise ConfigError(errs)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError([f"unknown config key {k!r}" for k in unknown])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def replace(self, **kw) -> "RunConfig":
        d = self.to_dict()
        d.update({k: v for k, v in kw.items() if v is not None})
        return RunConfig.from_dict(d)
