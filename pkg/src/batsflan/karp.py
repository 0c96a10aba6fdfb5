"""Independent stopping-time recursion tracking decodable batches by degree.

The state at time t is the joint law of the cloud size c and the vector
o = (o_1, ..., o_M) of decodable batches of each live degree. BP always
decodes a contributor of a least-degree decodable batch, so that batch drops
one degree for certain, while every other decodable batch of degree s loses
a contributor with probability s / (K - t + 1). Cloud batches become
decodable as in the main recursion and land on degree s with weight
p_s^t / p^t.

The state space grows like n^(M+1), so this path is restricted to M <= 2
and used only as an oracle for the ripple-based recursion.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .bp import StoppingTimeDistribution, model_flags, step_table
from .model import BatsModel

PRUNE = 1e-16
MAX_M = 2
MAX_N = 64


def _check(model: BatsModel, n: int, max_m: int = MAX_M):
    if model.M > max_m:
        raise ValueError(f"degree-tracking recursion supports M <= {max_m}, got M = {model.M}")
    if not 0 <= n <= MAX_N:
        raise ValueError(f"n must lie in 0..{MAX_N}")


def _weights(model: BatsModel, t: int) -> np.ndarray:
    p = step_table(model).p[t]
    total = float(p.sum())
    if total <= 0.0:
        w = np.zeros_like(p)
        w[0] = 1.0
        return w
    return p / total


def _binom_row(m: int, p: float) -> list:
    """[Pr{Bi(m, p) = k} for k = 0..m] with exact 0/1 handling."""
    return [math.comb(m, k) * p**k * (1.0 - p) ** (m - k) for k in range(m + 1)]


def _multinomial(L: int, w: np.ndarray) -> dict:
    """Law of (b_1..b_M) when L leavers pick degree s with weight w_s (b_0 implicit)."""
    M = len(w) - 1
    out = {}
    for b in itertools.product(range(L + 1), repeat=M):
        b0 = L - sum(b)
        if b0 < 0:
            continue
        coef = math.factorial(L) / (math.factorial(b0) * math.prod(math.factorial(x) for x in b))
        prob = coef * w[0] ** b0 * math.prod(w[s + 1] ** b[s] for s in range(M))
        if prob > 0.0:
            out[b] = prob
    return out


@dataclass(frozen=True)
class KarpState:
    """table[(c, o_1, .., o_M)] = Pr{C^t = c, O^t = o, no stop before t}."""

    t: int
    table: dict

    @property
    def mass(self) -> float:
        return math.fsum(self.table.values())

    def stop_mass(self) -> float:
        return math.fsum(v for k, v in self.table.items() if not any(k[1:]))


def karp_initial(model: BatsModel, n: int) -> KarpState:
    _check(model, n)
    M = model.M
    rho = float(step_table(model).rho[0])
    w = _weights(model, 0)
    table = {}
    for c in range(n + 1):
        pc = math.comb(n, c) * (1 - rho) ** c * rho ** (n - c)
        if pc == 0.0:
            continue
        for b, pb in _multinomial(n - c, w).items():
            v = pc * pb
            if v > PRUNE:
                table[(c,) + b] = table.get((c,) + b, 0.0) + v
    return KarpState(0, table)


def karp_step(model: BatsModel, state: KarpState) -> KarpState:
    """Advance from t to t+1; states with no decodable batch carry no mass forward."""
    t = state.t + 1
    K, M = model.K, model.M
    if t > K:
        raise ValueError("already at t = K")
    if any(v < -1e-9 for v in state.table.values()) or state.mass > 1 + 1e-9:
        raise ValueError("state violates probability invariants")
    rho = float(step_table(model).rho[t])
    w = _weights(model, t)
    left = K - t + 1
    hit = [s / left for s in range(M + 1)]
    leave_cache = {}
    out = {}
    for key, mass in state.table.items():
        c_prev, o_prev = key[0], key[1:]
        if not any(o_prev):
            continue
        chosen = next(s for s in range(1, M + 1) if o_prev[s - 1] > 0)
        # decodable batches: per degree, how many keep all contributors
        moves = {tuple([0] * M): 1.0}
        for s in range(1, M + 1):
            m = o_prev[s - 1] - (1 if s == chosen else 0)
            stay = _binom_row(m, 1.0 - hit[s])
            nxt = {}
            for vec, pv in moves.items():
                for a, pa in enumerate(stay):
                    if pa == 0.0:
                        continue
                    v = list(vec)
                    v[s - 1] += a
                    if s >= 2:
                        v[s - 2] += m - a
                    nv = tuple(v)
                    nxt[nv] = nxt.get(nv, 0.0) + pv * pa
            moves = nxt
        if chosen >= 2:
            moves = {tuple(v + (1 if i == chosen - 2 else 0) for i, v in enumerate(vec)): p
                     for vec, p in moves.items()}
        # cloud batches that become decodable now
        for L in range(c_prev + 1):
            pl = math.comb(c_prev, L) * rho**L * (1 - rho) ** (c_prev - L)
            if pl == 0.0:
                continue
            if L not in leave_cache:
                leave_cache[L] = _multinomial(L, w)
            for b, pb in leave_cache[L].items():
                for vec, pv in moves.items():
                    v = mass * pl * pb * pv
                    if v <= PRUNE:
                        continue
                    k = (c_prev - L,) + tuple(x + y for x, y in zip(vec, b))
                    out[k] = out.get(k, 0.0) + v
    return KarpState(t, out)


def karp_stopping_time(model: BatsModel, n: int) -> StoppingTimeDistribution:
    K = model.K
    pmf = np.zeros(K + 1)
    state = karp_initial(model, n)
    for t in range(K):
        pmf[t] = state.stop_mass()
        if state.mass - pmf[t] <= 0.0:
            break
        state = karp_step(model, state)
    else:
        pmf[K] = state.mass
    return StoppingTimeDistribution(pmf, model_flags(model))


# ---------------------------------------------------------------------------
# generating-polynomial form, M = 1
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PolyState:
    """coef[o, c]: coefficient of x^o y^c in the generating polynomial at time t."""

    t: int
    coef: np.ndarray

    @property
    def mass(self) -> float:
        return math.fsum(self.coef.ravel())

    def stop_mass(self) -> float:
        return math.fsum(self.coef[0])


def _poly_mul_x(a: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Product of a polynomial in x (1-D) with a polynomial in (x, y) (2-D)."""
    out = np.zeros((len(a) + B.shape[0] - 1, B.shape[1]))
    for i, ai in enumerate(a):
        if ai:
            out[i : i + B.shape[0]] += ai * B
    return out


def _beta_powers(rho: float, w: np.ndarray, n: int) -> list:
    beta = np.array([[rho * w[0], 1.0 - rho], [rho * w[1], 0.0]])
    powers = [np.ones((1, 1))]
    for _ in range(n):
        prev = powers[-1]
        nxt = np.zeros((prev.shape[0] + 1, prev.shape[1] + 1))
        for (i, j), b in np.ndenumerate(beta):
            if b:
                nxt[i : i + prev.shape[0], j : j + prev.shape[1]] += b * prev
        powers.append(nxt)
    return powers


def karp_poly_initial(model: BatsModel, n: int) -> PolyState:
    _check(model, n, max_m=1)
    rho = float(step_table(model).rho[0])
    P = _beta_powers(rho, _weights(model, 0), n)[n]
    coef = np.zeros((n + 1, n + 1))
    coef[: P.shape[0], : P.shape[1]] = P
    return PolyState(0, coef)


def karp_polynomial_step(model: BatsModel, state: PolyState) -> PolyState:
    """P^t(x, y) = [P^{t-1}(alpha, beta) - P^{t-1}(0, beta)] / alpha."""
    if model.M != 1:
        raise ValueError("the generating-polynomial form is implemented for M = 1 only")
    t = state.t + 1
    K = model.K
    if t > K:
        raise ValueError("already at t = K")
    n = state.coef.shape[0] - 1
    rho = float(step_table(model).rho[t])
    betas = _beta_powers(rho, _weights(model, t), n)
    g = 1.0 / (K - t + 1)
    alpha = np.array([g, 1.0 - g])
    alpha_pow = [np.ones(1)]
    for _ in range(n):
        alpha_pow.append(np.convolve(alpha_pow[-1], alpha))
    out = np.zeros((n + 1, n + 1))
    for (o, c), v in np.ndenumerate(state.coef):
        if o == 0 or v == 0.0:
            continue
        term = _poly_mul_x(alpha_pow[o - 1], betas[c]) * v
        out[: term.shape[0], : term.shape[1]] += term[: n + 1, : n + 1]
    return PolyState(t, out)


def karp_poly_stopping_time(model: BatsModel, n: int) -> StoppingTimeDistribution:
    K = model.K
    pmf = np.zeros(K + 1)
    state = karp_poly_initial(model, n)
    for t in range(K):
        pmf[t] = state.stop_mass()
        if not state.coef[1:].any():
            break
        state = karp_polynomial_step(model, state)
    else:
        pmf[K] = state.mass
    return StoppingTimeDistribution(pmf, model_flags(model))


def poly_to_table(state: PolyState) -> dict:
    return {(c, o): float(v) for (o, c), v in np.ndenumerate(state.coef) if v != 0.0}
