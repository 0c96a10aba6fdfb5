import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from batsflan.simplex import INFEASIBLE, UNBOUNDED, linprog_max


def vertex_optimum(c, A_ub, b_ub, A_eq=None, b_eq=None):
    """Best feasible basic solution by brute-force enumeration."""
    n = len(c)
    rows = np.vstack([A_ub, -np.eye(n)])
    rhs = np.concatenate([b_ub, np.zeros(n)])
    eq_rows = np.zeros((0, n)) if A_eq is None else A_eq
    eq_rhs = np.zeros(0) if b_eq is None else b_eq
    need = n - len(eq_rows)
    best = None
    for active in itertools.combinations(range(len(rows)), need):
        A = np.vstack([eq_rows, rows[list(active)]])
        b = np.concatenate([eq_rhs, rhs[list(active)]])
        if abs(np.linalg.det(A)) < 1e-9:
            continue
        x = np.linalg.solve(A, b)
        if np.all(rows @ x <= rhs + 1e-9) and (A_eq is None or np.allclose(A_eq @ x, b_eq, atol=1e-9)):
            v = c @ x
            best = v if best is None else max(best, v)
    return best


@given(st.integers(1, 4), st.integers(1, 6), st.booleans(), st.integers(0, 2**32 - 1))
@settings(max_examples=60)
def test_matches_vertex_enumeration(n, m, with_eq, seed):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=n)
    A = rng.normal(size=(m, n))
    b = rng.uniform(0.5, 2.0, size=m)
    # a box keeps the region bounded
    A = np.vstack([A, np.ones((1, n))])
    b = np.append(b, 5.0)
    A_eq = b_eq = None
    if with_eq:
        A_eq = rng.uniform(0.1, 1.0, size=(1, n))
        b_eq = np.array([rng.uniform(0.0, 0.4)])
    ref = vertex_optimum(c, A, b, A_eq, b_eq)
    res = linprog_max(c, A, b, A_eq, b_eq)
    if ref is None:
        assert res.status == INFEASIBLE
        return
    assert res.success
    assert res.value == pytest.approx(ref, abs=1e-9)
    assert np.all(res.x >= -1e-12)
    assert np.all(A @ res.x <= b + 1e-9)
    if with_eq:
        assert np.allclose(A_eq @ res.x, b_eq, atol=1e-9)


def test_infeasible():
    res = linprog_max(np.ones(2), A_ub=np.array([[1.0, 1.0]]), b_ub=np.array([1.0]),
                      A_eq=np.array([[1.0, 1.0]]), b_eq=np.array([2.0]))
    assert res.status == INFEASIBLE and not res.success


def test_unbounded():
    res = linprog_max(np.array([1.0, 0.0]), A_ub=np.array([[-1.0, 1.0]]), b_ub=np.array([1.0]))
    assert res.status == UNBOUNDED


def test_negative_rhs_and_degenerate_vertex():
    # x1 + x2 >= 1 written as -x1 - x2 <= -1; the optimum sits on a degenerate vertex
    c = np.array([-1.0, -2.0])
    A = np.array([[-1.0, -1.0], [1.0, 0.0], [1.0, 1.0]])
    b = np.array([-1.0, 1.0, 1.0])
    res = linprog_max(c, A, b)
    assert res.success
    assert np.allclose(res.x, [1.0, 0.0])
    assert res.value == pytest.approx(-1.0)
