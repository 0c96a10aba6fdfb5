"""Stopping-time distribution when the number of received batches is Poisson.

Poisson thinning makes the cloud count disappear from the state: with
N ~ Poisson(nbar) the batches that join the ripple at step t form an
independent Poisson(nbar p^t) stream, so the state is a single row vector
over ripple sizes and each step is the action of a matrix exponential

    Lam^t = exp(-a) (Lam^{t-1} without r = 0) exp(a Q_t),   a = nbar p^t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bp import DEGENERATE, BandedTransition, StoppingTimeDistribution, build_transition, model_flags, step_table
from .model import BatsModel

DEFAULT_TOL = 1e-10
MAX_TERMS = 10**6


class ExpmvError(ArithmeticError):
    """Taylor series failed to converge within the term cap."""


def _as_operator(A):
    if isinstance(A, BandedTransition):
        return A.rmatvec, A.row_norm()
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    return (lambda v: v @ A), float(np.abs(A).sum(axis=1).max()) if A.size else 0.0


def expmv(A, v, tol: float = DEFAULT_TOL, scale: float = 1.0, shift: float = 0.0) -> np.ndarray:
    """Row-vector action v exp(scale * A - shift * I) by scaled Taylor series.

    ``A`` is a :class:`BandedTransition` or a dense square array. The
    exponent is split into m = ceil(scale * ||A||) equal pieces, where ||.||
    is the max row sum (the induced norm for row vectors in l1), so each piece
    has norm at most 1; each piece's series stops once a term is below tol
    times the running sum. ``shift`` is applied per piece to avoid overflow.
    """
    if not 0.0 < tol < 1.0:
        raise ValueError("tol must lie in (0, 1)")
    apply, norm = _as_operator(A)
    v = np.asarray(v, dtype=float)
    a_norm = abs(scale) * norm
    if a_norm == 0.0:
        return v * math.exp(-shift)
    m = max(1, math.ceil(a_norm))
    h = scale / m
    damp = math.exp(-shift / m)
    out = v.copy()
    used = 0
    for _ in range(m):
        term = out
        acc = out.copy()
        k = 0
        while True:
            k += 1
            used += 1
            if used > MAX_TERMS:
                raise ExpmvError(f"no convergence after {MAX_TERMS} terms")
            term = apply(term) * (h / k)
            tn = np.abs(term).sum()
            acc += term
            if tn <= tol * np.abs(acc).sum():
                break
        out = acc * damp
    return out


@dataclass(frozen=True)
class PoissonState:
    """lam[r] = Pr{R^t = r, no stop before t}."""

    t: int
    lam: np.ndarray

    @property
    def mass(self) -> float:
        return math.fsum(self.lam)


def _rate(model: BatsModel, nbar: float, t: int) -> float:
    a = nbar * float(step_table(model).p[t].sum())
    if t > 0:
        bound = nbar * model.D / model.K
        if a > bound * (1 + 1e-12) + 1e-300:
            raise AssertionError(f"step rate {a} exceeds nbar D / K = {bound} at t={t}")
    return a


def poisson_initial(model: BatsModel, nbar: float, tol: float = DEFAULT_TOL) -> PoissonState:
    if nbar < 0:
        raise ValueError("nbar must be non-negative")
    e1 = np.zeros(model.K + 1)
    e1[0] = 1.0
    a = _rate(model, nbar, 0)
    lam = expmv(build_transition(model, 0), e1, tol, scale=a, shift=a)
    return PoissonState(0, lam)


def poisson_step(model: BatsModel, state: PoissonState, nbar: float, tol: float = DEFAULT_TOL) -> PoissonState:
    t = state.t + 1
    if t > model.K:
        raise ValueError("already at t = K")
    a = _rate(model, nbar, t)
    v = state.lam[1:]
    if a == 0.0:
        return PoissonState(t, v.copy())
    return PoissonState(t, expmv(build_transition(model, t), v, tol, scale=a, shift=a))


def poisson_stopping_time(model: BatsModel, nbar: float, tol: float = DEFAULT_TOL) -> StoppingTimeDistribution:
    K = model.K
    pmf = np.zeros(K + 1)
    state = poisson_initial(model, nbar, tol)
    flags = model_flags(model)
    start_mass = state.mass
    if abs(start_mass - 1.0) > 1e-8:
        flags.append(f"{DEGENERATE}: initial mass {start_mass:.12g} differs from 1")
    for t in range(K):
        pmf[t] = state.lam[0]
        if not state.lam[1:].any():
            break
        state = poisson_step(model, state, nbar, tol)
    else:
        pmf[K] = state.mass
    residual = 1.0 - math.fsum(pmf)
    if abs(residual) > 1e-8:
        flags.append(f"{DEGENERATE}: stopping pmf misses {residual:.3g} of the mass")
    return StoppingTimeDistribution(pmf, flags)


def poisson_weights(nbar: float, mass: float = 1e-12):
    """Poisson(nbar) p.m.f. truncated where the upper tail drops below ``mass``.

    Returns (n values, weights, tail mass left out).
    """
    from scipy.stats import poisson

    hi = int(poisson.isf(mass, nbar)) + 1 if nbar > 0 else 0
    ns = np.arange(hi + 1)
    w = poisson.pmf(ns, nbar)
    return ns, w, float(poisson.sf(hi, nbar))
