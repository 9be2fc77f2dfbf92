import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linprog

from mixdg.simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, linprog_max


def highs(c, A_ge, b_ge, A_eq=None, b_eq=None):
    return linprog(-np.asarray(c), A_ub=-np.asarray(A_ge), b_ub=-np.asarray(b_ge), A_eq=A_eq, b_eq=b_eq,
                   bounds=(0, None), method="highs")


def test_textbook_problem():
    # max 3x + 5y  s.t. x <= 4, 2y <= 12, 3x + 2y <= 18
    res = linprog_max([3, 5], -np.array([[1, 0], [0, 2], [3, 2]]), -np.array([4, 12, 18]))
    assert res.status == OPTIMAL
    np.testing.assert_allclose(res.x, [2, 6], atol=1e-12)
    assert res.objective == pytest.approx(36)


def test_infeasible_and_unbounded():
    assert linprog_max([1, 1], [[-1, -1]], [1], [[1, 1]], [0.5]).status == INFEASIBLE
    assert linprog_max([1, 0], [[1, -1]], [0]).status == UNBOUNDED


def test_beale_cycling_example_terminates():
    # classic instance on which Dantzig's rule cycles without an anti-cycling rule
    c = np.array([0.75, -150, 0.02, -6])
    A_le = np.array([[0.25, -60, -0.04, 9], [0.5, -90, -0.02, 3], [0, 0, 1, 0]])
    b_le = np.array([0, 0, 1])
    res = linprog_max(c, -A_le, -b_le)
    assert res.status == OPTIMAL
    assert res.objective == pytest.approx(0.05, abs=1e-12)


def test_redundant_equalities():
    res = linprog_max([1, 2, 0], A_eq=[[1, 1, 1], [2, 2, 2]], b_eq=[1, 2])
    assert res.status == OPTIMAL and res.objective == pytest.approx(2)


@given(st.integers(0, 100_000))
def test_matches_highs_on_random_bounded_lps(seed):
    rng = np.random.default_rng(seed)
    n, k = int(rng.integers(1, 6)), int(rng.integers(0, 5))
    c = rng.normal(size=n)
    A = rng.normal(size=(k, n))
    b = rng.normal(size=k)
    # bounding box keeps the region compact: -sum x >= -5
    A = np.vstack([A, -np.ones(n)])
    b = np.append(b, -5.0)
    ours = linprog_max(c, A, b)
    ref = highs(c, A, b)
    if ref.status == 2:
        assert ours.status == INFEASIBLE
    else:
        assert ref.status == 0 and ours.status == OPTIMAL
        assert ours.objective == pytest.approx(-ref.fun, abs=1e-7)
        assert np.all(A @ ours.x - b >= -1e-8) and np.all(ours.x >= -1e-12)


@given(st.integers(0, 100_000))
def test_simplex_constrained_lps(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, 6))
    c = rng.normal(size=m)
    A = rng.normal(size=(m, m))
    b = rng.normal(size=m) * 0.3
    ours = linprog_max(c, A, b, np.ones((1, m)), [1.0])
    ref = highs(c, A, b, np.ones((1, m)), [1.0])
    assert (ours.status == OPTIMAL) == (ref.status == 0)
    if ref.status == 0:
        assert ours.objective == pytest.approx(-ref.fun, abs=1e-8)
