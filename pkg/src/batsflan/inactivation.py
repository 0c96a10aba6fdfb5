"""Expected number of inactivations under inactivation decoding.

The decoder never stops: when the ripple is empty an undecoded symbol is
inactivated and plays the role of the single decodable symbol of that step.
In the state recursion this is the fold that merges the r = 0 entry into
r = 1 before the shift, so no mass leaves the state. The expected number of
inactivations is the sum over t < K of Pr{R^t = 0}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bp import DEGENERATE, JointState, _trim, build_transition, cloud_update, initial_state, model_flags, step_table
from .model import BatsModel
from .poisson import DEFAULT_TOL, PoissonState, expmv, poisson_initial, poisson_weights

MASS_TOL_FIXED = 1e-9
MASS_TOL_POISSON = 1e-8


def fold(lam: np.ndarray) -> np.ndarray:
    """Drop the leading ripple entry after merging it into the next one."""
    out = lam[..., 1:].copy()
    out[..., 0] += lam[..., 0]
    return out


@dataclass
class InactivationResult:
    expected: float
    per_step: np.ndarray
    mass_error: float = 0.0
    flags: list = field(default_factory=list)


def inact_step_fixed(model: BatsModel, state: JointState) -> JointState:
    t = state.t + 1
    if t > model.K:
        raise ValueError("already at t = K")
    rho = float(step_table(model).rho[t])
    Q = build_transition(model, t)
    rows = fold(state.lam)
    new = cloud_update(_trim(rows), rho, Q)
    lam = np.zeros_like(rows)
    lam[: new.shape[0]] = new
    return JointState(t, lam)


def expected_inactivations_fixed(model: BatsModel, n: int) -> InactivationResult:
    K = model.K
    per_step = np.zeros(K)
    state = initial_state(model, n)
    worst = 0.0
    for t in range(K):
        worst = max(worst, abs(state.mass - 1.0))
        per_step[t] = state.stop_mass()
        if t + 1 < K:
            state = inact_step_fixed(model, state)
    flags = model_flags(model)
    if worst > MASS_TOL_FIXED:
        flags.append(f"{DEGENERATE}: state mass drifted by {worst:.3g}")
    return InactivationResult(math.fsum(per_step), per_step, worst, flags)


def inact_step_poisson(model: BatsModel, state: PoissonState, nbar: float, tol: float = DEFAULT_TOL) -> PoissonState:
    t = state.t + 1
    if t > model.K:
        raise ValueError("already at t = K")
    a = nbar * float(step_table(model).p[t].sum())
    v = fold(state.lam)
    if a == 0.0:
        return PoissonState(t, v)
    return PoissonState(t, expmv(build_transition(model, t), v, tol, scale=a, shift=a))


def expected_inactivations_poisson(model: BatsModel, nbar: float, tol: float = DEFAULT_TOL) -> InactivationResult:
    K = model.K
    per_step = np.zeros(K)
    state = poisson_initial(model, nbar, tol)
    worst = 0.0
    for t in range(K):
        worst = max(worst, abs(state.mass - 1.0))
        per_step[t] = state.lam[0]
        if t + 1 < K:
            state = inact_step_poisson(model, state, nbar, tol)
    flags = model_flags(model)
    if worst > MASS_TOL_POISSON:
        flags.append(f"{DEGENERATE}: state mass drifted by {worst:.3g}")
    return InactivationResult(math.fsum(per_step), per_step, worst, flags)


def expected_inactivations_mixture(model: BatsModel, nbar: float, mass: float = 1e-12) -> float:
    """Poisson(nbar) average of the fixed-n expectation; a check on the Poisson recursion."""
    ns, w, _ = poisson_weights(nbar, mass)
    return math.fsum(wi * expected_inactivations_fixed(model, int(n)).expected for n, wi in zip(ns, w))
