"""Dense two-phase tableau simplex for small and medium LPs.

Solves   max c.x   s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  x >= 0.

Pricing is Dantzig's rule (most negative reduced cost). After a run of
degenerate pivots the solver switches to Bland's rule for the rest of the
phase, which rules out cycling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL, INFEASIBLE, UNBOUNDED, ITERATION_LIMIT = "optimal", "infeasible", "unbounded", "iteration_limit"


@dataclass
class LPResult:
    status: str
    x: np.ndarray | None
    value: float | None
    iterations: int

    @property
    def success(self) -> bool:
        return self.status == OPTIMAL


class _Tableau:
    def __init__(self, T: np.ndarray, basis: list, tol: float):
        self.T = T
        self.basis = basis
        self.tol = tol
        self.iterations = 0

    def pivot(self, row: int, col: int):
        T = self.T
        T[row] /= T[row, col]
        col_vals = T[:, col].copy()
        col_vals[row] = 0.0
        nz = np.flatnonzero(col_vals)
        if nz.size:
            T[nz] -= np.outer(col_vals[nz], T[row])
        self.basis[row] = col

    def run(self, allowed: int, max_iter: int, degenerate_limit: int = 50) -> str:
        """Minimize the objective held in the last row over the first ``allowed`` columns."""
        T, tol = self.T, self.tol
        bland = False
        stall = 0
        while True:
            if self.iterations >= max_iter:
                return ITERATION_LIMIT
            cost = T[-1, :allowed]
            if bland:
                cand = np.flatnonzero(cost < -tol)
                if cand.size == 0:
                    return OPTIMAL
                col = int(cand[0])
            else:
                col = int(np.argmin(cost))
                if cost[col] >= -tol:
                    return OPTIMAL
            column = T[:-1, col]
            pos = np.flatnonzero(column > tol)
            if pos.size == 0:
                return UNBOUNDED
            ratios = T[pos, -1] / column[pos]
            best = ratios.min()
            ties = pos[ratios <= best + tol * max(1.0, abs(best))]
            # smallest basic index among ties (Bland's leaving rule)
            row = int(min(ties, key=lambda r: self.basis[r]))
            if best <= tol:
                stall += 1
                if stall >= degenerate_limit:
                    bland = True
            else:
                stall = 0
            self.pivot(row, col)
            self.iterations += 1


def linprog_max(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, tol: float = 1e-10,
                max_iter: int = 100_000) -> LPResult:
    c = np.asarray(c, dtype=float)
    n = c.size
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq

    # columns: x (n) | slacks (m_ub) | artificials (n_art) | rhs
    need_art = [i for i in range(m_ub) if b_ub[i] < 0] + [m_ub + i for i in range(m_eq)]
    n_art = len(need_art)
    width = n + m_ub + n_art
    T = np.zeros((m + 1, width + 1))
    basis = [0] * m
    for i in range(m_ub):
        sign = -1.0 if b_ub[i] < 0 else 1.0
        T[i, :n] = sign * A_ub[i]
        T[i, n + i] = sign
        T[i, -1] = sign * b_ub[i]
        basis[i] = n + i
    for i in range(m_eq):
        sign = -1.0 if b_eq[i] < 0 else 1.0
        T[m_ub + i, :n] = sign * A_eq[i]
        T[m_ub + i, -1] = sign * b_eq[i]
    for k, row in enumerate(need_art):
        T[row, n + m_ub + k] = 1.0
        basis[row] = n + m_ub + k

    tab = _Tableau(T, basis, tol)
    if n_art:
        # phase 1: minimize the sum of artificials
        T[-1, :] = 0.0
        for row in need_art:
            T[-1] -= T[row]
        T[-1, n + m_ub :] = 0.0
        T[-1, -1] = -sum(T[row, -1] for row in need_art)
        status = tab.run(width, max_iter)
        if status == ITERATION_LIMIT:
            return LPResult(status, None, None, tab.iterations)
        if -T[-1, -1] > 1e-8 * max(1.0, np.abs(T[:-1, -1]).max()):
            return LPResult(INFEASIBLE, None, None, tab.iterations)
        # drive remaining zero-level artificials out of the basis
        for row in range(m):
            if tab.basis[row] >= n + m_ub:
                cand = np.flatnonzero(np.abs(T[row, : n + m_ub]) > tol)
                if cand.size:
                    tab.pivot(row, int(cand[0]))
        keep = [r for r in range(m) if tab.basis[r] < n + m_ub]
        T = np.vstack([T[keep], T[-1:]])
        T = np.delete(T, np.s_[n + m_ub : width], axis=1)
        tab.T = T
        tab.basis = [tab.basis[r] for r in keep]
        width = n + m_ub

    # phase 2: minimize -c.x
    T = tab.T
    T[-1, :] = 0.0
    T[-1, :n] = -c
    for row, var in enumerate(tab.basis):
        if T[-1, var] != 0.0:
            T[-1] -= T[-1, var] * T[row]
    status = tab.run(width, max_iter)
    if status != OPTIMAL:
        return LPResult(status, None, None, tab.iterations)
    x = np.zeros(width)
    for row, var in enumerate(tab.basis):
        x[var] = T[row, -1]
    x = x[:n]
    return LPResult(OPTIMAL, x, float(c @ x), tab.iterations)
