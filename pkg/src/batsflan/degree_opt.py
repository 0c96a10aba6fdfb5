"""Degree-distribution design by linear programming.

Omega(x) is linear in the degree distribution, so the asymptotic design
problem

    max theta  s.t.  Omega(x) + theta g(x) >= 0 on [0, 1-eta],  sum psi = 1,  psi >= 0

is an LP once x is restricted to a grid. g(x) = ln(1-x) gives the asymptotic
design; the finite-length heuristic subtracts (c/K)(1-x)^c' from it, which
asks for a ripple that shrinks roughly linearly instead of touching zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import BatsModel, DegreeDistribution, Solvability, binom_pmf, log_comb
from .simplex import linprog_max

VIOLATION_TOL = 1e-6


def incomplete_beta(a: int, b: int, x):
    """I_x(a, b) for integer a, b >= 1: Pr{Bi(a+b-1, x) >= a}."""
    if a < 1 or b < 1:
        raise ValueError("incomplete_beta needs integers a, b >= 1")
    x = np.asarray(x, dtype=float)
    n = a + b - 1
    j = np.arange(a, n + 1)
    terms = binom_pmf(n, j[:, None] if x.ndim else j, x[None, ...] if x.ndim else x)
    out = np.clip(np.sum(terms, axis=0), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def _beta_rows(r: int, amax: int, x: np.ndarray) -> np.ndarray:
    """I_x(a, r) for a = 1..amax as rows, via the r-term lower-tail sum in log space."""
    a = np.arange(1, amax + 1)[:, None]
    n = a + r - 1
    with np.errstate(divide="ignore"):
        lx = np.log(x)[None, :]
        l1x = np.log1p(-x)[None, :]
    out = np.zeros((amax, x.size))
    for k in range(r):
        # k failures (weight 1-x) among n trials, the rest successes
        with np.errstate(invalid="ignore"):
            logt = log_comb(n, k) + (n - k) * lx + (k * l1x if k else 0.0)
        out += np.exp(logt)
    return np.clip(out, 0.0, 1.0)


def omega_coefficients(solv: Solvability, D: int, x) -> np.ndarray:
    """Matrix A with A[j, d-1] = d/dpsi_d Omega(x_j); Omega(x) = A @ psi."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    hbar, hbar_p = solv.hbar, solv.hbar_prime
    M = len(hbar) - 1
    A = np.zeros((x.size, D))
    for r in range(1, M + 1):
        if not hbar[r] or D <= r:
            continue
        # degrees d = r+1..D use I_x(d-r, r)
        A[:, r:] += hbar[r] * _beta_rows(r, D - r, x).T
    d = np.arange(1, D + 1)
    A *= d[None, :]
    top = min(M, D)
    A[:, :top] += (d[:top] * hbar_p[1 : top + 1])[None, :]
    return A


def omega(model: BatsModel, psi, x):
    """Omega(x) evaluated directly from its double sum."""
    psi = np.asarray(psi.psi if isinstance(psi, DegreeDistribution) else psi, dtype=float)
    hbar, hbar_p = model.hbar, model.hbar_prime
    M = model.M
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for r in range(1, M + 1):
        for d in range(r + 1, len(psi) + 1):
            out = out + d * psi[d - 1] * hbar[r] * incomplete_beta(d - r, r, x)
        if r <= len(psi):
            out = out + hbar_p[r] * r * psi[r - 1]
    return float(out) if out.ndim == 0 else out


def g_asymptotic(x):
    return np.log1p(-np.asarray(x, dtype=float))


def g_heuristic(x, c: float, cp: float, K: int):
    x = np.asarray(x, dtype=float)
    return np.log1p(-x) - (c / K) * (1.0 - x) ** cp


@dataclass(frozen=True)
class OptConfig:
    eta: float
    grid_points: int = 512
    c_heur: float = 0.0
    cp_heur: float = 0.0
    D: int | None = None
    verify_factor: int = 10
    max_refine: int = 3

    def __post_init__(self):
        if not 0.0 < self.eta < 1.0:
            raise ValueError("eta must lie in (0, 1)")
        if self.grid_points < 64:
            raise ValueError("grid_points must be at least 64")
        if self.c_heur < 0 or self.cp_heur < 0:
            raise ValueError("heuristic parameters must be non-negative")

    def max_degree(self, M: int) -> int:
        return self.D if self.D is not None else math.ceil(M / self.eta) - 1

    def grid(self, points: int | None = None) -> np.ndarray:
        """Sine-spaced grid on [0, 1-eta], denser toward 1-eta."""
        N = points or self.grid_points
        j = np.arange(N)
        x = (1.0 - self.eta) * np.sin(np.pi * j / (2 * (N - 1)))
        x[-1] = 1.0 - self.eta
        return x


@dataclass
class OptResult:
    theta_hat: float
    psi: DegreeDistribution
    active_constraints: list
    feasible: bool
    max_violation: float
    grid_size: int
    rounds: int = 0
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat,
            "psi": [float(v) for v in self.psi.psi],
            "active_constraints": [float(v) for v in self.active_constraints],
            "feasible": self.feasible,
            "max_violation": self.max_violation,
            "grid_size": self.grid_size,
            "refinement_rounds": self.rounds,
            "notes": list(self.notes),
        }


def _solve_grid(A: np.ndarray, gx: np.ndarray, theta_max: float):
    N, D = A.shape
    # variables (psi_1..psi_D, theta); -A psi - theta g <= 0
    A_ub = np.hstack([-A, -gx[:, None]])
    b_ub = np.zeros(N)
    bound = np.zeros((1, D + 1))
    bound[0, -1] = 1.0
    A_ub = np.vstack([A_ub, bound])
    b_ub = np.append(b_ub, theta_max)
    A_eq = np.hstack([np.ones((1, D)), np.zeros((1, 1))])
    cost = np.zeros(D + 1)
    cost[-1] = 1.0
    return linprog_max(cost, A_ub, b_ub, A_eq, [1.0])


def _solve_cutting_plane(A: np.ndarray, gx: np.ndarray, theta_max: float, start: int = 64, batch: int = 32):
    """Full-grid LP solved by adding violated grid constraints to a small subset.

    Returns the same optimum as the full LP; only the tableau size differs.
    """
    N = A.shape[0]
    rows = set(np.linspace(0, N - 1, min(start, N)).astype(int).tolist())
    while True:
        idx = np.array(sorted(rows))
        res = _solve_grid(A[idx], gx[idx], theta_max)
        if not res.success:
            return res
        slack = A @ res.x[:-1] + res.x[-1] * gx
        bad = np.flatnonzero(slack < -1e-12)
        bad = [j for j in bad[np.argsort(slack[bad])] if j not in rows][:batch]
        if not bad:
            return res
        rows.update(int(j) for j in bad)


def _optimize(model: BatsModel, cfg: OptConfig, g) -> OptResult:
    solv = model.solvability
    D = cfg.max_degree(model.M)
    expected_rank = float(np.dot(np.arange(model.M + 1), solv.hbar))
    theta_max = 2.0 * expected_rank / (1.0 - cfg.eta)
    grid = cfg.grid()
    fine = cfg.grid(cfg.verify_factor * (cfg.grid_points - 1) + 1)
    A_fine = omega_coefficients(solv, D, fine)
    g_fine = g(fine)
    notes = []
    rounds = 0
    while True:
        A = omega_coefficients(solv, D, grid)
        gx = g(grid)
        res = _solve_cutting_plane(A, gx, theta_max)
        if not res.success:
            return OptResult(0.0, DegreeDistribution(np.full(D, 1.0 / D)), [], False, math.inf,
                             grid.size, rounds, [f"LP {res.status}"])
        psi = res.x[:D].copy()
        psi[psi < 1e-9] = 0.0
        psi /= psi.sum()
        theta = float(res.x[-1])
        slack_fine = A_fine @ psi + theta * g_fine
        violation = float(max(0.0, -slack_fine.min()))
        if violation <= VIOLATION_TOL or rounds >= cfg.max_refine:
            break
        # add the violated verification points and re-solve
        rounds += 1
        worst = fine[slack_fine < -VIOLATION_TOL]
        grid = np.unique(np.concatenate([grid, worst]))
    feasible = violation <= VIOLATION_TOL
    if not feasible:
        # largest theta this psi supports on the verification grid
        neg = g_fine < 0
        theta = float(min(theta, np.min((A_fine @ psi)[neg] / -g_fine[neg])))
        slack_fine = A_fine @ psi + theta * g_fine
        violation = float(max(0.0, -slack_fine.min()))
        feasible = violation <= VIOLATION_TOL
        notes.append("theta reduced to the verified value after refinement")
    slack = A @ psi + theta * gx
    active = grid[slack <= 1e-9 * max(1.0, theta)].tolist()
    return OptResult(theta, DegreeDistribution(psi), active, feasible, violation, grid.size, rounds, notes)


def optimize_asymptotic(model: BatsModel, cfg: OptConfig) -> OptResult:
    return _optimize(model, cfg, g_asymptotic)


def optimize_heuristic(model: BatsModel, cfg: OptConfig, K: int) -> OptResult:
    if K < 1:
        raise ValueError("K must be positive")
    return _optimize(model, cfg, lambda x: g_heuristic(x, cfg.c_heur, cfg.cp_heur, K))


@dataclass(frozen=True)
class DesignMetrics:
    rate: float
    capacity: float
    overhead: float


def design_metrics(model: BatsModel, K: int, n: int, eta: float, capacity: float | None = None) -> DesignMetrics:
    """Design rate (1-eta)K/(nM), capacity sum_i i hbar_i / M and overhead C/R - 1.

    ``capacity`` overrides the computed value, e.g. to work with a published
    rounded figure.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    M = model.M
    rate = (1.0 - eta) * K / (n * M)
    C = model.capacity() if capacity is None else float(capacity)
    return DesignMetrics(rate, C, C / rate - 1.0)
