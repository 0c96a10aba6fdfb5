"""Exact stopping-time distribution of BP decoding with a fixed number of batches.

The state at decoding time t is the joint law of the number of undecodable
batches (the cloud, C^t) and the number of decodable input symbols (the
ripple, R^t), restricted to runs that have not stopped before t. Rows are
indexed by c, columns by r = 0..K-t.

Cloud thinning and ripple growth are applied together: a cloud batch either
stays (weight 1-rho) or becomes decodable and moves the ripple through Q_t
(weight rho). Writing the state as a polynomial in a cloud marker y with
row-vector coefficients, one time step maps y^c' V to V ((1-rho) y + rho Q)^c',
which is evaluated by Horner's rule over c' without forming powers of Q.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import BatsModel, log_comb

RHO_FLOOR = 1e-300
# prefix of flags that signal numerical degeneracy rather than information
DEGENERATE = "degenerate"


@dataclass(frozen=True)
class StepProbabilities:
    t: int
    p_s: np.ndarray
    rho: float
    degenerate: bool = False

    @property
    def total(self) -> float:
        return float(self.p_s.sum())


@dataclass(frozen=True)
class StepTable:
    """p_s^t and rho^t for every t = 0..K (rows) and s = 0..M (columns)."""

    p: np.ndarray
    rho: np.ndarray
    degenerate: np.ndarray

    def at(self, t: int) -> StepProbabilities:
        return StepProbabilities(t, self.p[t].copy(), float(self.rho[t]), bool(self.degenerate[t]))


def _compute_step_table(model: BatsModel) -> StepTable:
    K, M = model.K, model.M
    psi = model.psi
    D = len(psi)
    hbar, hbar_prime = model.hbar, model.hbar_prime
    p = np.zeros((K + 1, M + 1))

    # t = 0: the batch is decodable at its initial degree
    for s in range(1, min(M, D) + 1):
        p[0, s] = psi[s - 1] * hbar_prime[s]

    # t >= 1: the symbol decoded at step t is a contributor (d/K) and exactly
    # d-s-1 of the other d-1 contributors lie among the first t-1 decoded
    if K >= 1:
        t = np.arange(1, K + 1)[:, None]
        d = np.arange(1, D + 1)[None, :]
        weight = psi[None, :] * d / K
        for s in range(0, M + 1):
            kk = d - s - 1
            with np.errstate(invalid="ignore"):
                logh = log_comb(d - 1, kk) + log_comb(K - d, t - 1 - kk) - log_comb(K - 1, t - 1)
                terms = np.where(np.isfinite(logh), weight * np.exp(logh), 0.0)
            p[1:, s] = hbar[s] * terms.sum(axis=1)

    # the batch fates partition the sample space, so the remaining undecided
    # mass before t is the suffix sum; this avoids cancellation in 1 - prefix
    totals = p.sum(axis=1)
    suffix = np.cumsum(totals[::-1])[::-1]
    rho = np.zeros(K + 1)
    degenerate = np.zeros(K + 1, dtype=bool)
    rho[0] = min(max(totals[0], 0.0), 1.0)
    for tt in range(1, K + 1):
        remainder = suffix[tt]
        if remainder <= RHO_FLOOR:
            rho[tt] = 1.0
            degenerate[tt] = totals[tt] > 0 or remainder < 0
            continue
        rho[tt] = min(totals[tt] / remainder, 1.0)
    p.setflags(write=False)
    rho.setflags(write=False)
    return StepTable(p, rho, degenerate)


def step_table(model: BatsModel) -> StepTable:
    # models are immutable, so the table is memoized on the instance
    cached = model.__dict__.get("_step_table")
    if cached is None:
        cached = _compute_step_table(model)
        model.__dict__["_step_table"] = cached
    return cached


def step_probabilities(model: BatsModel, t: int) -> StepProbabilities:
    if not 0 <= t <= model.K:
        raise ValueError(f"t={t} outside 0..K={model.K}")
    return step_table(model).at(t)


@dataclass(frozen=True)
class BandedTransition:
    """Ripple transition Q_t stored as its upper band.

    ``band[i, k]`` holds Q_t(i, i+k) for k = 0..M (zero-based indices);
    entries that would fall outside the matrix are kept at zero.
    """

    t: int
    band: np.ndarray
    degenerate: bool = False

    @property
    def dim(self) -> int:
        return self.band.shape[0]

    @property
    def width(self) -> int:
        return self.band.shape[1] - 1

    def rmatvec(self, v: np.ndarray) -> np.ndarray:
        """v @ Q for a row vector or a stack of row vectors (last axis = dim)."""
        v = np.asarray(v, dtype=float)
        out = np.zeros_like(v)
        n = self.dim
        for k in range(min(self.width, n - 1) + 1):
            out[..., k:] += v[..., : n - k] * self.band[: n - k, k]
        return out

    def to_dense(self) -> np.ndarray:
        n = self.dim
        dense = np.zeros((n, n))
        for k in range(min(self.width, n - 1) + 1):
            idx = np.arange(n - k)
            dense[idx, idx + k] = self.band[: n - k, k]
        return dense

    def row_sums(self) -> np.ndarray:
        return self.band.sum(axis=1)

    def row_norm(self) -> float:
        """max absolute row sum: the operator norm for row-vector action in l1."""
        return float(np.abs(self.band).sum(axis=1).max())


def _transition_from_weights(t: int, N: int, w: np.ndarray, M: int) -> np.ndarray:
    # Q(i, i+k) = sum_s w_s hyge(N, i, s, s-k): the new batch hits s symbols
    # uniformly among the N undecoded ones, s-k of which were already in the ripple
    i = np.arange(N + 1)[:, None, None]
    k = np.arange(M + 1)[None, :, None]
    s = np.arange(M + 1)[None, None, :]
    with np.errstate(invalid="ignore"):
        logh = log_comb(i, s - k) + log_comb(N - i, k) - log_comb(N, s)
        vals = np.where(np.isfinite(logh), np.exp(logh), 0.0)
    band = (vals * w[None, None, :]).sum(axis=2)
    # entries past the last column vanish through C(N-i, k) = 0 already
    return band


def build_transition(model: BatsModel, t: int) -> BandedTransition:
    if not 0 <= t <= model.K:
        raise ValueError(f"t={t} outside 0..K={model.K}")
    K, M = model.K, model.M
    p = step_table(model).p[t]
    total = float(p.sum())
    N = K - t
    if total <= 0.0:
        band = np.zeros((N + 1, M + 1))
        band[:, 0] = 1.0
        return BandedTransition(t, band, degenerate=True)
    band = _transition_from_weights(t, N, p / total, M)
    return BandedTransition(t, band)


@dataclass(frozen=True)
class JointState:
    """lam[c, r] = Pr{C^t = c, R^t = r, no stop before t | N = n}."""

    t: int
    lam: np.ndarray

    @property
    def mass(self) -> float:
        return math.fsum(self.lam.ravel())

    def stop_mass(self) -> float:
        return math.fsum(self.lam[:, 0])


def cloud_update(rows: np.ndarray, rho: float, Q: BandedTransition) -> np.ndarray:
    """Horner evaluation of sum_c' rows[c'] ((1-rho) y + rho Q)^c'.

    ``rows`` has shape (cmax+1, dim); the result has the same shape, row c
    being the coefficient of y^c.
    """
    cmax, dim = rows.shape[0] - 1, rows.shape[1]
    acc = rows[cmax : cmax + 1].copy()
    for cp in range(cmax - 1, -1, -1):
        nxt = np.zeros((acc.shape[0] + 1, dim))
        nxt[1:] = (1.0 - rho) * acc
        if rho > 0.0:
            nxt[:-1] += rho * Q.rmatvec(acc)
        nxt[0] += rows[cp]
        acc = nxt
    return acc


def _trim(rows: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(rows.any(axis=1))
    top = nz[-1] + 1 if nz.size else 1
    return rows[:top]


def initial_state(model: BatsModel, n: int) -> JointState:
    if n < 0:
        raise ValueError("n must be non-negative")
    K = model.K
    rho0 = float(step_table(model).rho[0])
    Q0 = build_transition(model, 0)
    # e_1 y^0 pushed through n independent batches
    acc = np.zeros((1, K + 1))
    acc[0, 0] = 1.0
    for _ in range(n):
        nxt = np.zeros((acc.shape[0] + 1, K + 1))
        nxt[1:] = (1.0 - rho0) * acc
        if rho0 > 0.0:
            nxt[:-1] += rho0 * Q0.rmatvec(acc)
        acc = nxt
    lam = np.zeros((n + 1, K + 1))
    lam[: acc.shape[0]] = acc
    return JointState(0, lam)


def step(model: BatsModel, state: JointState) -> JointState:
    """Advance from t-1 to t; the r = 0 column of the input is the stop mass."""
    t = state.t + 1
    if t > model.K:
        raise ValueError("already at t = K")
    rho = float(step_table(model).rho[t])
    Q = build_transition(model, t)
    rows = state.lam[:, 1:]
    n_rows = rows.shape[0]
    trimmed = _trim(rows)
    new = cloud_update(trimmed, rho, Q)
    lam = np.zeros((n_rows, rows.shape[1]))
    lam[: new.shape[0]] = new
    return JointState(t, lam)


@dataclass
class StoppingTimeDistribution:
    pmf: np.ndarray
    flags: list = field(default_factory=list)

    @property
    def cdf(self) -> np.ndarray:
        return np.cumsum(self.pmf)

    @property
    def K(self) -> int:
        return len(self.pmf) - 1

    def error_probability(self, k_prime: int) -> float:
        if not 1 <= k_prime <= self.K:
            raise ValueError(f"K' = {k_prime} outside 1..K")
        return math.fsum(self.pmf[:k_prime])

    def mean(self) -> float:
        return float(np.dot(np.arange(len(self.pmf)), self.pmf))


def model_flags(model: BatsModel) -> list:
    flags = list(model.flags)
    table = step_table(model)
    bad = np.flatnonzero(table.degenerate)
    if bad.size:
        flags.append(f"{DEGENERATE}: rho denominator underflow at t={bad.tolist()}")
    return flags


def stopping_time(model: BatsModel, n: int) -> StoppingTimeDistribution:
    K = model.K
    pmf = np.zeros(K + 1)
    state = initial_state(model, n)
    for t in range(K):
        pmf[t] = state.stop_mass()
        if not state.lam[:, 1:].any():
            # every surviving run has stopped; nothing left to propagate
            break
        state = step(model, state)
    else:
        pmf[K] = state.mass
    return StoppingTimeDistribution(pmf, model_flags(model))


def bp_error_probability(model: BatsModel, n: int, k_prime: int) -> float:
    return stopping_time(model, n).error_probability(k_prime)
