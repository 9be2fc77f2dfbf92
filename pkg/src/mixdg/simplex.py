"""Dense two-phase tableau simplex with Bland's rule, for tiny LPs.

Solves ``max c^T x  s.t.  A_ge x >= b_ge,  A_eq x = b_eq,  x >= 0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass
class LPResult:
    x: np.ndarray
    status: str
    objective: float
    iterations: int


def _pivot(T: np.ndarray, basis: list[int], row: int, col: int) -> None:
    T[row] /= T[row, col]
    for r in range(T.shape[0]):
        if r != row and T[r, col] != 0.0:
            T[r] -= T[r, col] * T[row]
    basis[row] = col


def _run(T: np.ndarray, basis: list[int], allowed: np.ndarray, tol: float, max_iter: int) -> tuple[str, int]:
    """Maximise the objective stored (negated) in the last row over columns where ``allowed``."""
    n_rows = T.shape[0] - 1
    for it in range(max_iter):
        reduced = T[-1, :-1]
        candidates = np.flatnonzero(allowed & (reduced < -tol))
        if len(candidates) == 0:
            return OPTIMAL, it
        col = int(candidates[0])  # Bland: smallest index
        column = T[:n_rows, col]
        pos = column > tol
        if not np.any(pos):
            return UNBOUNDED, it
        ratios = np.full(n_rows, np.inf)
        ratios[pos] = T[:n_rows, -1][pos] / column[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol * max(1.0, abs(best)))
        row = int(min(ties, key=lambda r: basis[r]))
        _pivot(T, basis, row, col)
    raise RuntimeError("simplex did not terminate")


def linprog_max(c, A_ge=None, b_ge=None, A_eq=None, b_eq=None, tol: float = 1e-11,
                max_iter: int = 10_000) -> LPResult:
    c = np.asarray(c, dtype=np.float64)
    n = len(c)
    A_ge = np.zeros((0, n)) if A_ge is None else np.atleast_2d(np.asarray(A_ge, dtype=np.float64))
    b_ge = np.zeros(0) if b_ge is None else np.asarray(b_ge, dtype=np.float64)
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=np.float64))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=np.float64)
    n_ge, n_eq = len(A_ge), len(A_eq)
    rows = n_ge + n_eq

    # equilibrate each row so tolerances are scale-free
    def scaled(A, b):
        s = np.maximum(np.abs(A).max(axis=1, initial=0.0), np.abs(b))
        s[s == 0] = 1.0
        return A / s[:, None], b / s

    A_ge, b_ge = scaled(A_ge, b_ge)
    A_eq, b_eq = scaled(A_eq, b_eq)
    c_scale = np.abs(c).max(initial=0.0) or 1.0

    # columns: x (n) | surplus (n_ge) | artificial (rows) | rhs
    width = n + n_ge + rows + 1
    T = np.zeros((rows + 1, width))
    T[:n_ge, :n] = A_ge
    T[:n_ge, n:n + n_ge] = -np.eye(n_ge)
    T[:n_ge, -1] = b_ge
    T[n_ge:rows, :n] = A_eq
    T[n_ge:rows, -1] = b_eq
    neg = T[:rows, -1] < 0
    T[:rows][neg] *= -1.0
    T[:rows, n + n_ge:n + n_ge + rows] = np.eye(rows)
    basis = list(range(n + n_ge, n + n_ge + rows))
    art = np.zeros(width - 1, dtype=bool)
    art[n + n_ge:] = True

    # phase 1: maximise -sum(artificials)
    T[-1, :] = 0.0
    T[-1, n + n_ge:n + n_ge + rows] = 1.0
    for r in range(rows):
        T[-1] -= T[r]
    status, it1 = _run(T, basis, np.ones(width - 1, dtype=bool), tol, max_iter)
    if -T[-1, -1] > 1e-9:
        return LPResult(np.full(n, np.nan), INFEASIBLE, np.nan, it1)

    # drive degenerate artificials out of the basis; drop redundant rows
    keep = []
    for r in range(rows):
        if art[basis[r]]:
            cand = np.flatnonzero(~art & (np.abs(T[r, :-1]) > tol))
            if len(cand):
                _pivot(T, basis, r, int(cand[0]))
                keep.append(r)
        else:
            keep.append(r)
    T = np.vstack([T[keep], T[-1:]])
    basis = [basis[r] for r in keep]

    # phase 2
    T[-1, :] = 0.0
    T[-1, :n] = -c / c_scale
    for r, b in enumerate(basis):
        if T[-1, b] != 0.0:
            T[-1] -= T[-1, b] * T[r]
    status, it2 = _run(T, basis, ~art, tol, max_iter)
    x = np.zeros(width - 1)
    for r, b in enumerate(basis):
        x[b] = T[r, -1]
    x = x[:n]
    return LPResult(x, status, float(c @ x), it1 + it2)
