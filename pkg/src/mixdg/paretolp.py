"""OPTD-guided Pareto weighting of objective gradients on the shared feature extractor.

Given the gradient matrix ``G`` (one column per objective) and the guidance
gradient ``g_optd`` of the classification loss on the OPTD set, pick simplex
weights ``omega`` by linear programming and descend along ``d = G omega``.

Mode selection:

* ``ell_optd <= epsilon`` (pure descent): the guidance is treated as vanished,
  so every index ties in ``J*`` and each objective must be non-increasing;
  the objective pulls towards the mean gradient ``G 1/m``.
* ``ell_optd > epsilon`` (guidance descent): maximise alignment with
  ``g_optd`` under the ``J`` / ``J-bar`` / ``J*`` constraints. If the optimum
  has ``gamma* <= 0`` the LP is re-solved with all descent constraints, so
  the returned direction always decreases every training loss in that case.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .mixgen import MixSet
from .numcore import NumericError
from .objectives import Batch, ModelBundle, ObjectiveGrads, apply_update, classification_grads
from .simplex import OPTIMAL, linprog_max

PURE = "pure-descent"
GUIDANCE = "guidance-descent"
FALLBACK = "fallback-mean"

TIE_TOL = 1e-10
DESCENT_TOL = 1e-8


class PreconditionError(ValueError):
    pass


class Theorem1Violation(AssertionError):
    pass


@dataclass
class GradientProblem:
    G: np.ndarray          # (n_params, m)
    g_optd: np.ndarray     # (n_params,)
    ell_optd: float
    epsilon: float = 1e-3

    def __post_init__(self):
        self.G = np.asarray(self.G, dtype=np.float64)
        self.g_optd = np.asarray(self.g_optd, dtype=np.float64)
        if self.G.ndim != 2 or self.G.shape[1] < 2:
            raise PreconditionError(f"G must have at least 2 objective columns, got shape {self.G.shape}")
        if self.g_optd.shape != (self.G.shape[0],):
            raise PreconditionError("g_optd length must match the rows of G")
        if not (np.all(np.isfinite(self.G)) and np.all(np.isfinite(self.g_optd)) and np.isfinite(self.ell_optd)):
            raise NumericError("gradient problem has non-finite entries")
        if not self.epsilon > 0:
            raise PreconditionError("epsilon must be positive")

    @property
    def m(self) -> int:
        return self.G.shape[1]

    @property
    def guided(self) -> bool:
        return self.ell_optd > self.epsilon


@dataclass
class IndexSets:
    J: tuple[int, ...]
    J_bar: tuple[int, ...]
    J_star: tuple[int, ...]
    dots: np.ndarray


def build_index_sets(problem: GradientProblem, tie_tol: float = TIE_TOL) -> IndexSets:
    dots = problem.G.T @ problem.g_optd
    top = dots.max()
    return IndexSets(tuple(int(j) for j in np.flatnonzero(dots > 0)),
                     tuple(int(j) for j in np.flatnonzero(dots < 0)),
                     tuple(int(j) for j in np.flatnonzero(dots >= top - tie_tol)),
                     dots)


@dataclass
class SimplexWeights:
    omega: np.ndarray
    direction: np.ndarray
    gamma_star: float
    mode: str
    lp_status: str
    objective: float
    constraint_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    constraint_rhs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    slacks: np.ndarray = field(default_factory=lambda: np.zeros(0))
    descent_resolve: bool = False

    def to_record(self) -> dict:
        return {"omega": self.omega.tolist(), "gamma_star": self.gamma_star, "mode": self.mode,
                "lp_status": self.lp_status, "objective": self.objective,
                "descent_resolve": self.descent_resolve, "slacks": self.slacks.tolist()}


def lp_program(problem: GradientProblem, sets: IndexSets, all_descent: bool = False):
    """Objective and ``>=`` constraints of the LP in omega-space.

    Returns ``(c, rows, rhs)`` where ``rows[k] . omega >= rhs[k]`` stands for
    ``(G omega)^T g_j >= rhs`` with ``j = rows-index[k]``.
    """
    gram = problem.G.T @ problem.G
    m = problem.m
    if problem.guided:
        c = sets.dots.copy()
    else:
        c = gram @ np.full(m, 1.0 / m)
    if all_descent or not problem.guided:
        idx = np.arange(m)
        rhs = np.zeros(m)
    else:
        j_star = set(sets.J_star)
        rest = [j for j in sets.J_bar if j not in j_star]
        idx = np.array(rest + sorted(j_star), dtype=int)
        scale = 1.0 if sets.J else 0.0
        rhs = np.concatenate([scale * sets.dots[rest], np.zeros(len(j_star))])
    return c, idx, gram[idx], rhs


def _solve(problem: GradientProblem, sets: IndexSets, all_descent: bool) -> SimplexWeights:
    m = problem.m
    c, idx, rows, rhs = lp_program(problem, sets, all_descent)
    res = linprog_max(c, rows, rhs, np.ones((1, m)), np.ones(1))
    mode = GUIDANCE if problem.guided else PURE
    if res.status != OPTIMAL or not np.all(np.isfinite(res.x)):
        omega, status = np.full(m, 1.0 / m), FALLBACK
    else:
        omega = np.clip(res.x, 0.0, None)
        omega /= omega.sum()
        status = OPTIMAL
    d = problem.G @ omega
    gram_rows = problem.G[:, idx].T @ d
    return SimplexWeights(omega, d, float(d @ problem.g_optd), mode, status, float(c @ omega),
                          idx, rhs, gram_rows - rhs, all_descent)


def solve_lp(problem: GradientProblem, sets: IndexSets | None = None) -> SimplexWeights:
    sets = build_index_sets(problem) if sets is None else sets
    w = _solve(problem, sets, all_descent=False)
    if w.mode == GUIDANCE and w.gamma_star <= 0:
        w = _solve(problem, sets, all_descent=True)
    if not (np.all(np.isfinite(w.direction)) and np.isfinite(w.gamma_star)):
        raise NumericError("LP produced a non-finite direction")
    return w


@dataclass
class Theorem1Report:
    branch: str
    predicate: str
    margins: np.ndarray
    passed: bool

    def to_record(self) -> dict:
        return {"branch": self.branch, "predicate": self.predicate,
                "margins": self.margins.tolist(), "passed": self.passed}


def theorem1_check(weights: SimplexWeights, problem: GradientProblem, strict: bool = False) -> Theorem1Report:
    """Check the descent/guidance dichotomy for a solved direction.

    With ``strict`` a violated predicate raises :class:`Theorem1Violation`.
    """
    d = weights.direction
    if not problem.guided:
        margins = problem.G.T @ d
        report = Theorem1Report("ell_optd<=eps", "d.g_j >= -1e-8 for all j", margins,
                                bool(np.all(margins >= -DESCENT_TOL)))
    elif weights.gamma_star > 0:
        margin = np.array([d @ problem.g_optd])
        report = Theorem1Report("gamma*>0", "d.g_optd > 0", margin, bool(margin[0] > 0))
    else:
        margins = problem.G.T @ d
        report = Theorem1Report("gamma*<=0", "d.g_j >= -1e-8 for all j", margins,
                                bool(np.all(margins >= -DESCENT_TOL)))
    if strict and not report.passed:
        raise Theorem1Violation(f"{report.branch}: {report.predicate} violated, margins={report.margins}")
    return report


def fuse_and_apply(bundle: ModelBundle, weights: SimplexWeights | np.ndarray, grads: ObjectiveGrads,
                   learning_rate: float) -> np.ndarray:
    """Step the feature extractor along ``G omega`` for freshly computed ``grads``.

    ``weights`` may be cached from an earlier refresh; it only has to match the
    number of objective columns. Returns the applied direction.
    """
    omega = weights.omega if isinstance(weights, SimplexWeights) else np.asarray(weights, dtype=np.float64)
    m = grads.G.shape[1]
    if m < 2:
        raise PreconditionError("Pareto fusion needs at least 2 objectives")
    if omega.shape != (m,):
        raise PreconditionError(f"omega has {omega.shape} entries, gradients have {m} columns")
    direction = grads.G @ omega
    apply_update(bundle, grads, direction, learning_rate)
    return direction


def compute_guidance(bundle: ModelBundle, optd: MixSet, mode: Literal["whole", "batch"] = "whole",
                     batch_size: int = 64, rng: np.random.Generator | None = None) -> tuple[np.ndarray, float]:
    """Mean classification-loss gradient on OPTD over the feature extractor.

    ``whole`` uses every OPTD sample; ``batch`` a uniformly drawn mini-batch.
    """
    if len(optd) == 0:
        raise ValueError("OPTD is empty")
    if mode == "whole":
        sel = optd
    elif mode == "batch":
        rng = np.random.default_rng(0) if rng is None else rng
        sel = optd.take(rng.choice(len(optd), size=min(batch_size, len(optd)), replace=False))
    else:
        raise ValueError(f"unknown guidance mode {mode!r}")
    loss, g, _ = classification_grads(bundle, Batch(sel.x, sel.y, sel.d_i))
    return g, loss
