"""Monte Carlo BATS encoder and decoders over GF(2^m).

Input symbols are single field elements. Each trial draws its own random
stream from a Philox-4x64 counter-based generator keyed by
``SeedSequence([seed, trial_index])``, so any subset of trials can be rerun
in isolation and histograms do not depend on how trials are scheduled.

Both decoders recover exactly one input symbol per step, as in the analysis:
BP stops when no symbol is decodable; inactivation decoding instead marks a
uniformly random undecoded symbol inactive and carries on until every symbol
is decoded or inactive.
"""

from __future__ import annotations

import heapq
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .gf import GF, SingularSystemError
from .model import BatsModel


class SimulationError(RuntimeError):
    """A decoder invariant broke (wrong symbol value, bookkeeping mismatch)."""


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, trial])))


def field_for(model: BatsModel) -> GF:
    return GF.of_size(model.params.q)


# ---------------------------------------------------------------------------
# small dense elimination on python lists (hot path of the decoders)
# ---------------------------------------------------------------------------


def _rank_rows(rows, ncols, mul, inv) -> int:
    rows = [list(r) for r in rows]
    rank = 0
    for c in range(ncols):
        piv = None
        for k in range(rank, len(rows)):
            if rows[k][c]:
                piv = k
                break
        if piv is None:
            continue
        rows[rank], rows[piv] = rows[piv], rows[rank]
        prow = rows[rank]
        f = inv[prow[c]]
        prow = [mul[f][v] for v in prow]
        rows[rank] = prow
        for k in range(rank + 1, len(rows)):
            a = rows[k][c]
            if a:
                ma = mul[a]
                rows[k] = [x ^ ma[p] for x, p in zip(rows[k], prow)]
        rank += 1
        if rank == len(rows):
            break
    return rank


def _solve_rows(rows, y, mul, inv):
    """Solve x R = y for x, R given as s rows of length M.

    Returns None when the rows are dependent (batch not decodable yet).
    Raises SimulationError when the system is inconsistent.
    """
    s = len(rows)
    if s == 0:
        return []
    M = len(y)
    # equations: for each column c, sum_k x_k R[k][c] = y[c]
    eqs = [[rows[k][c] for k in range(s)] + [y[c]] for c in range(M)]
    r = 0
    where = []
    for col in range(s):
        piv = None
        for k in range(r, M):
            if eqs[k][col]:
                piv = k
                break
        if piv is None:
            return None
        eqs[r], eqs[piv] = eqs[piv], eqs[r]
        f = inv[eqs[r][col]]
        prow = [mul[f][v] for v in eqs[r]]
        eqs[r] = prow
        for k in range(M):
            if k != r:
                a = eqs[k][col]
                if a:
                    ma = mul[a]
                    eqs[k] = [x ^ ma[p] for x, p in zip(eqs[k], prow)]
        where.append(r)
        r += 1
    for k in range(s, M):
        if eqs[k][s]:
            raise SimulationError("inconsistent batch system")
    return [eqs[where[col]][s] for col in range(s)]


# ---------------------------------------------------------------------------
# encoding
# ---------------------------------------------------------------------------


@dataclass
class Batch:
    index: int
    contributors: np.ndarray
    G: np.ndarray
    H: np.ndarray
    Y: np.ndarray
    rank_H: int
    GH: np.ndarray = field(repr=False, default=None)

    @property
    def degree(self) -> int:
        return len(self.contributors)


def sample_transfer(h, M: int, gf: GF, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """M x M transfer matrix whose rank is drawn from h.

    Built as (M x r)(r x M) from uniform factors, rejecting until both
    factors have full rank r.
    """
    h = np.asarray(h, dtype=float)
    r = int(rng.choice(len(h), p=h)) if rank is None else rank
    if r == 0:
        return np.zeros((M, M), dtype=np.int64)
    mul, inv = gf.mul_rows, gf.inv_list
    while True:
        L = gf.random((M, r), rng)
        R = gf.random((r, M), rng)
        if _rank_rows(L.T.tolist(), M, mul, inv) == r and _rank_rows(R.tolist(), M, mul, inv) == r:
            return gf.matmul(L, R)


def encode(model: BatsModel, gf: GF, B: np.ndarray, n: int, rng: np.random.Generator) -> list[Batch]:
    """Draw n batches over the input symbols B."""
    K, M = model.K, model.M
    psi = model.psi
    h = model.rank.h
    degrees = rng.choice(len(psi), size=n, p=psi) + 1
    ranks = rng.choice(M + 1, size=n, p=h)
    batches = []
    for i, (d, r) in enumerate(zip(degrees.tolist(), ranks.tolist())):
        contrib = rng.choice(K, size=d, replace=False)
        if model.params.lt_mode:
            G = np.ones((d, 1), dtype=np.int64)
        else:
            G = gf.random((d, M), rng)
        H = sample_transfer(h, M, gf, rng, rank=r)
        GH = gf.matmul(G, H)
        Y = gf.matmul(B[contrib][None, :], GH)[0]
        batches.append(Batch(i, contrib, G, H, Y, r, GH))
    return batches


# ---------------------------------------------------------------------------
# decoding
# ---------------------------------------------------------------------------


@dataclass
class DecodeTrace:
    stop_time: int
    decoded_count: int
    success: bool
    inactivation_times: list = field(default_factory=list)
    solvable: bool | None = None

    @property
    def inactivations(self) -> int:
        return len(self.inactivation_times)


class _Peeler:
    """One-symbol-per-step decoder state shared by BP and inactivation decoding."""

    def __init__(self, batches, K: int, gf: GF, B: np.ndarray | None):
        self.K = K
        self.mul = gf.mul_rows
        self.inv = gf.inv_list
        self.truth = None if B is None else [int(b) for b in B]
        self.rows = []
        self.y = []
        self.decodable = []
        self.sym_batches = [[] for _ in range(K)]
        self.value = [None] * K
        self.done = [False] * K
        self.heap = []
        self.in_ripple = [False] * K
        self.M = batches[0].GH.shape[1] if batches else 0
        for i, b in enumerate(batches):
            rows = {}
            for j, row in zip(b.contributors.tolist(), b.GH.tolist()):
                rows[j] = row
                self.sym_batches[j].append(i)
            self.rows.append(rows)
            self.y.append(b.Y.tolist())
            self.decodable.append(False)
        for i in range(len(batches)):
            self._check(i)

    def _check(self, i):
        rows = self.rows[i]
        if self.decodable[i] or len(rows) > self.M:
            return
        syms = list(rows)
        x = _solve_rows([rows[j] for j in syms], self.y[i], self.mul, self.inv)
        if x is None:
            return
        self.decodable[i] = True
        for j, v in zip(syms, x):
            if self.truth is not None and v != self.truth[j]:
                raise SimulationError(f"batch {i} decoded symbol {j} as {v}, planted {self.truth[j]}")
            if self.value[j] is not None and self.value[j] != v:
                raise SimulationError(f"symbol {j} decoded inconsistently")
            self.value[j] = v
            if not self.in_ripple[j]:
                self.in_ripple[j] = True
                heapq.heappush(self.heap, j)

    def next_decodable(self):
        while self.heap:
            j = heapq.heappop(self.heap)
            if not self.done[j]:
                return j
        return None

    def substitute(self, j: int, v: int):
        """Mark j processed and remove it from every batch it contributes to."""
        self.done[j] = True
        mv = self.mul[v]
        for i in self.sym_batches[j]:
            rows = self.rows[i]
            before = len(rows)
            row = rows.pop(j, None)
            if row is None:
                continue
            if len(rows) != before - 1:
                raise SimulationError("degree bookkeeping")
            yi = self.y[i]
            self.y[i] = [a ^ mv[g] for a, g in zip(yi, row)]
            was = self.decodable[i]
            self._check(i)
            if was and not self.decodable[i]:
                raise SimulationError("decodable batch lost decodability")


def bp_decode(batches, K: int, gf: GF, B: np.ndarray | None = None, rng=None) -> DecodeTrace:
    """BP decoding, lowest-index decodable symbol first.

    ``B`` (the planted symbols) enables value checking; ``rng`` is unused
    since the tie-break is deterministic.
    """
    dec = _Peeler(batches, K, gf, B)
    t = 0
    while True:
        j = dec.next_decodable()
        if j is None:
            break
        dec.substitute(j, dec.value[j])
        t += 1
    return DecodeTrace(stop_time=t, decoded_count=t, success=t == K)


def global_rank(batches, K: int, gf: GF) -> int:
    """Rank of the K x (nM) system formed by all batches."""
    if not batches:
        return 0
    M = batches[0].GH.shape[1]
    A = np.zeros((K, M * len(batches)), dtype=np.int64)
    for i, b in enumerate(batches):
        A[b.contributors, i * M : (i + 1) * M] = b.GH
    return gf.rank(A)


def inactivation_decode(
    batches, K: int, gf: GF, rng: np.random.Generator, B: np.ndarray | None = None,
    check_solvable: bool = False,
) -> DecodeTrace:
    """Inactivation decoding; inactive symbols are picked uniformly at random.

    Inactive symbols are substituted with their planted value, which stands in
    for the value recovered later by Gaussian elimination. With
    ``check_solvable`` the rank of the whole system is checked instead of
    running that elimination.
    """
    dec = _Peeler(batches, K, gf, B)
    inact = []
    stop = None
    undecoded = set(range(K))
    for t in range(K):
        j = dec.next_decodable()
        if j is None:
            if stop is None:
                stop = t
            pool = sorted(undecoded)
            j = pool[int(rng.integers(len(pool)))]
            inact.append(t)
            v = dec.truth[j] if dec.truth is not None else 0
        else:
            v = dec.value[j]
        undecoded.discard(j)
        dec.substitute(j, v)
    if stop is None:
        stop = K
    solvable = None
    if check_solvable:
        solvable = global_rank(batches, K, gf) == K
    return DecodeTrace(
        stop_time=stop, decoded_count=K - len(inact), success=not inact,
        inactivation_times=inact, solvable=solvable,
    )


# ---------------------------------------------------------------------------
# Monte Carlo driver
# ---------------------------------------------------------------------------


def wilson_band(k: np.ndarray, trials: int, z: float = 3.0):
    """Wilson score interval for a binomial proportion; z = 3 is the 99.73% band."""
    p = np.asarray(k, dtype=float) / trials
    denom = 1.0 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * np.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    lo = np.where(p == 0.0, 0.0, np.clip(centre - half, 0.0, 1.0))
    hi = np.where(p == 1.0, 1.0, np.clip(centre + half, 0.0, 1.0))
    return lo, hi


@dataclass
class MonteCarloResult:
    K: int
    trials: int
    seed: int
    stop_hist: np.ndarray
    inact_hist: np.ndarray | None
    n: int | None = None
    nbar: float | None = None
    solvable_count: int | None = None

    @property
    def stop_cdf(self) -> np.ndarray:
        return np.cumsum(self.stop_hist) / self.trials

    def stop_cdf_band(self, z: float = 3.0):
        return wilson_band(np.cumsum(self.stop_hist), self.trials, z)

    @property
    def mean_stop(self) -> float:
        return float(np.dot(np.arange(self.K + 1), self.stop_hist)) / self.trials

    @property
    def mean_inactivations(self) -> float:
        return float(np.dot(np.arange(self.K + 1), self.inact_hist)) / self.trials

    @property
    def sem_inactivations(self) -> float:
        x = np.arange(self.K + 1)
        mean = self.mean_inactivations
        var = float(np.dot((x - mean) ** 2, self.inact_hist)) / max(self.trials - 1, 1)
        return math.sqrt(var / self.trials)

    def inact_band(self, z: float = 3.0):
        return wilson_band(self.inact_hist, self.trials, z)

    def merge(self, other: "MonteCarloResult") -> "MonteCarloResult":
        inact = None
        if self.inact_hist is not None and other.inact_hist is not None:
            inact = self.inact_hist + other.inact_hist
        solv = None
        if self.solvable_count is not None and other.solvable_count is not None:
            solv = self.solvable_count + other.solvable_count
        return MonteCarloResult(
            self.K, self.trials + other.trials, self.seed, self.stop_hist + other.stop_hist,
            inact, self.n, self.nbar, solv,
        )


def run_trial(model: BatsModel, gf: GF, seed: int, trial: int, n=None, nbar=None,
              inactivation=True, check_solvable=False):
    """One encode/decode trial; returns (BP trace, inactivation trace or None)."""
    rng = trial_rng(seed, trial)
    count = int(rng.poisson(nbar)) if nbar is not None else int(n)
    B = gf.random(model.K, rng)
    batches = encode(model, gf, B, count, rng)
    bp = bp_decode(batches, model.K, gf, B)
    inact = None
    if inactivation:
        inact = inactivation_decode(batches, model.K, gf, rng, B, check_solvable)
        if inact.stop_time != bp.stop_time:
            raise SimulationError("inactivation decoding diverged from BP before the first inactivation")
        if (inact.inactivations == 0) != bp.success:
            raise SimulationError("zero inactivations must coincide with BP success")
    return bp, inact


def _run_range(model_doc, seed, start, stop, n, nbar, inactivation, check_solvable):
    model = BatsModel.from_dict(model_doc, renormalize=True)
    gf = field_for(model)
    K = model.K
    stop_hist = np.zeros(K + 1, dtype=np.int64)
    inact_hist = np.zeros(K + 1, dtype=np.int64) if inactivation else None
    solvable = 0 if check_solvable else None
    for trial in range(start, stop):
        bp, inact = run_trial(model, gf, seed, trial, n, nbar, inactivation, check_solvable)
        stop_hist[bp.stop_time] += 1
        if inactivation:
            inact_hist[inact.inactivations] += 1
            if check_solvable and inact.solvable:
                solvable += 1
    return stop_hist, inact_hist, solvable


def monte_carlo(model: BatsModel, trials: int, seed: int = 0, n: int | None = None,
                nbar: float | None = None, inactivation: bool = True,
                check_solvable: bool = False, workers: int = 1,
                first_trial: int = 0) -> MonteCarloResult:
    """Run trials ``first_trial .. first_trial + trials - 1``.

    Exactly one of ``n`` (fixed batch count) and ``nbar`` (Poisson mean) must
    be given. Results are identical for any ``workers``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if (n is None) == (nbar is None):
        raise ValueError("give exactly one of n and nbar")
    doc = model.to_dict()
    start, stop = first_trial, first_trial + trials
    args = (n, nbar, inactivation, check_solvable)
    if workers <= 1:
        parts = [_run_range(doc, seed, start, stop, *args)]
    else:
        edges = np.linspace(start, stop, workers + 1).astype(int)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_run_range, doc, seed, int(a), int(b), *args)
                for a, b in zip(edges[:-1], edges[1:]) if b > a
            ]
            parts = [f.result() for f in futures]
    stop_hist = sum(p[0] for p in parts)
    inact_hist = sum(p[1] for p in parts) if inactivation else None
    solvable = sum(p[2] for p in parts) if check_solvable else None
    return MonteCarloResult(model.K, trials, seed, stop_hist, inact_hist, n, nbar, solvable)
