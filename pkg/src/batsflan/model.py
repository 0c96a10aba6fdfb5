"""Code parameters, rank/degree distributions and batch solvability.

Every analysis module consumes a :class:`BatsModel`, which bundles the code
parameters with the rank distribution of the transfer matrix and the batch
degree distribution, and caches the derived solvability vectors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np

PROB_TOL = 1e-12


class ModelError(ValueError):
    """Invalid model input. ``path`` names the offending JSON field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


def is_prime_power(q: int) -> bool:
    if q < 2:
        return False
    p = 2
    while p * p <= q:
        if q % p == 0:
            while q % p == 0:
                q //= p
            return q == 1
        p += 1
    return True


# ---------------------------------------------------------------------------
# combinatorial primitives
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _log_factorial_table(size: int) -> np.ndarray:
    from scipy.special import gammaln

    return gammaln(np.arange(size, dtype=float) + 1.0)


def log_factorial(n):
    """log(n!) for integer scalars or arrays, from a cached table."""
    arr = np.asarray(n)
    top = int(arr.max()) if arr.size else 0
    # grow in powers of two so the cache stays small
    size = 1 << max(10, (top + 1).bit_length())
    table = _log_factorial_table(size)
    out = table[np.clip(arr, 0, None)]
    return float(out) if np.ndim(out) == 0 else out


def log_comb(n, k):
    """log C(n, k); -inf outside 0 <= k <= n."""
    n = np.asarray(n)
    k = np.asarray(k)
    valid = (k >= 0) & (k <= n) & (n >= 0)
    nn = np.where(valid, n, 0)
    kk = np.where(valid, k, 0)
    out = log_factorial(nn) - log_factorial(kk) - log_factorial(nn - kk)
    out = np.where(valid, out, -np.inf)
    return float(out) if out.ndim == 0 else out


def hyge(n, i, j, k):
    """Hypergeometric p.m.f. C(i,k) C(n-i,j-k) / C(n,j).

    Probability that a uniform j-subset of n items hits exactly k of i marked
    items. Broadcasts over numpy arrays; zero outside the support.
    """
    n, i, j, k = np.broadcast_arrays(*(np.asarray(a) for a in (n, i, j, k)))
    valid = (
        (n >= 0) & (i >= 0) & (i <= n) & (j >= 0) & (j <= n)
        & (k >= np.maximum(0, i + j - n)) & (k <= np.minimum(i, j))
    )
    n_ = np.where(valid, n, 0)
    i_ = np.where(valid, i, 0)
    j_ = np.where(valid, j, 0)
    k_ = np.where(valid, k, 0)
    logp = log_comb(i_, k_) + log_comb(n_ - i_, j_ - k_) - log_comb(n_, j_)
    out = np.where(valid, np.exp(logp), 0.0)
    return float(out) if out.ndim == 0 else out


def binom_pmf(n, k, p):
    """Binomial p.m.f. C(n,k) p^k (1-p)^(n-k), evaluated in log space."""
    n, k, p = np.broadcast_arrays(np.asarray(n), np.asarray(k), np.asarray(p, dtype=float))
    valid = (k >= 0) & (k <= n)
    kk = np.where(valid, k, 0)
    nn = np.where(valid, n, 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = (
            log_comb(nn, kk)
            + np.where(kk > 0, kk * np.log(p), 0.0)
            + np.where(nn - kk > 0, (nn - kk) * np.log1p(-p), 0.0)
        )
    out = np.where(valid, np.exp(logp), 0.0)
    return float(out) if out.ndim == 0 else out


def zeta(r: int, m: int, q: float) -> float:
    """Probability that r uniform vectors in an m-dim space over F_q are independent.

    Product over j < r of (1 - q^(j-m)); empty product 1, and 0 when r > m.
    """
    if r < 0 or m < 0:
        raise ValueError("zeta needs r >= 0 and m >= 0")
    if r > m:
        return 0.0
    out = 1.0
    for j in range(r):
        out *= -math.expm1((j - m) * math.log(q))
    return out


# ---------------------------------------------------------------------------
# value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CodeParams:
    K: int
    M: int
    q: int
    D: int
    lt_mode: bool = False

    def __post_init__(self):
        if self.K < 1:
            raise ModelError("K", "must be a positive integer")
        if self.M < 1:
            raise ModelError("M", "must be a positive integer")
        if self.D < 1:
            raise ModelError("D", "must be a positive integer")
        if not is_prime_power(self.q):
            raise ModelError("q", f"{self.q} is not a prime power")
        if self.lt_mode and self.M != 1:
            raise ModelError("lt_mode", "only valid when M = 1")


def _check_probabilities(values, path: str, renormalize: bool) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ModelError(path, "must be a non-empty list of numbers")
    if not np.all(np.isfinite(arr)):
        raise ModelError(path, "contains non-finite entries")
    bad = np.flatnonzero((arr < 0) | (arr > 1))
    if bad.size:
        raise ModelError(f"{path}[{bad[0]}]", f"probability {arr[bad[0]]} outside [0, 1]")
    total = math.fsum(arr)
    if abs(total - 1.0) > PROB_TOL:
        if not renormalize or total <= 0:
            raise ModelError(path, f"entries sum to {total!r}, not 1")
        arr = arr / total
    return arr


@dataclass(frozen=True, eq=False)
class RankDistribution:
    """h[r] = Pr{rank(H) = r}, r = 0..M."""

    h: np.ndarray

    @classmethod
    def create(cls, values, renormalize: bool = False) -> "RankDistribution":
        return cls(_check_probabilities(values, "rank_dist", renormalize))

    @property
    def M(self) -> int:
        return len(self.h) - 1

    def expected_rank(self) -> float:
        return float(np.dot(np.arange(len(self.h)), self.h))


@dataclass(frozen=True, eq=False)
class DegreeDistribution:
    """psi[d-1] = Pr{degree = d}, d = 1..D. Degree 0 is not representable."""

    psi: np.ndarray

    @classmethod
    def create(cls, values, renormalize: bool = False) -> "DegreeDistribution":
        return cls(_check_probabilities(values, "degree_dist", renormalize))

    @property
    def D(self) -> int:
        return len(self.psi)

    def __getitem__(self, d: int) -> float:
        return float(self.psi[d - 1]) if 1 <= d <= self.D else 0.0

    def fold(self, K: int) -> "DegreeDistribution":
        """Move all mass on degrees above K onto degree K."""
        if self.D <= K:
            return self
        psi = self.psi[:K].copy()
        psi[K - 1] += math.fsum(self.psi[K:])
        return DegreeDistribution(psi)

    def mean(self) -> float:
        return float(np.dot(np.arange(1, self.D + 1), self.psi))


@dataclass(frozen=True, eq=False)
class Solvability:
    """hbar[s]: batch first becomes decodable at degree s; hbar_prime[s]: decodable at degree s."""

    hbar: np.ndarray
    hbar_prime: np.ndarray

    def capacity(self) -> float:
        """Expected rank per batch, normalized by M."""
        M = len(self.hbar) - 1
        return float(np.dot(np.arange(M + 1), self.hbar)) / M


def solvability_from_rank(h: RankDistribution, params: CodeParams) -> Solvability:
    M, q = params.M, params.q
    if h.M != M:
        raise ModelError("rank_dist", f"needs M+1 = {M + 1} entries, got {h.M + 1}")
    if params.lt_mode:
        if M != 1:
            raise ModelError("lt_mode", "only valid when M = 1")
        h0, h1 = float(h.h[0]), float(h.h[1])
        return Solvability(np.array([h0, h1]), np.array([1.0, h1]))
    hbar = np.zeros(M + 1)
    hbar_prime = np.zeros(M + 1)
    for s in range(M + 1):
        hbar[s] = math.fsum(zeta(s, i, q) * float(q) ** (s - i) * h.h[i] for i in range(s, M + 1))
        hbar_prime[s] = math.fsum(zeta(s, k, q) * h.h[k] for k in range(s, M + 1))
    return Solvability(hbar, hbar_prime)


@dataclass(frozen=True, eq=False)
class BatsModel:
    """Code parameters plus rank and degree laws; the input of every analysis.

    ``degree`` is the distribution as supplied. ``psi`` is the same law with
    degrees above K folded onto K, which is what the recursions use.
    """

    params: CodeParams
    rank: RankDistribution
    degree: DegreeDistribution
    flags: tuple = field(default=(), compare=False)

    @classmethod
    def create(cls, K, M, q, rank_dist, degree_dist, lt_mode=False, D=None, renormalize=False):
        rank = RankDistribution.create(rank_dist, renormalize)
        degree = DegreeDistribution.create(degree_dist, renormalize)
        if D is None:
            D = degree.D
        elif D != degree.D:
            raise ModelError("degree_dist", f"has {degree.D} entries but D = {D}")
        params = CodeParams(K=int(K), M=int(M), q=int(q), D=int(D), lt_mode=bool(lt_mode))
        if rank.M != params.M:
            raise ModelError("rank_dist", f"needs M+1 = {params.M + 1} entries, got {rank.M + 1}")
        flags = ()
        if D > K:
            flags = (f"degrees above K={K} folded onto K",)
        return cls(params, rank, degree, flags)

    @classmethod
    def from_dict(cls, doc: dict, renormalize: bool = False) -> "BatsModel":
        if not isinstance(doc, dict):
            raise ModelError("$", "model document must be a JSON object")
        for key in ("K", "M", "q", "rank_dist", "degree_dist"):
            if key not in doc:
                raise ModelError(key, "missing")
        for key in ("K", "M", "q", "D"):
            if key in doc and (isinstance(doc[key], bool) or not isinstance(doc[key], int)):
                raise ModelError(key, "must be an integer")
        if "lt_mode" in doc and not isinstance(doc["lt_mode"], bool):
            raise ModelError("lt_mode", "must be a boolean")
        return cls.create(
            K=doc["K"], M=doc["M"], q=doc["q"], D=doc.get("D"),
            lt_mode=doc.get("lt_mode", False),
            rank_dist=doc["rank_dist"], degree_dist=doc["degree_dist"],
            renormalize=renormalize,
        )

    @classmethod
    def load(cls, path, renormalize: bool = False) -> "BatsModel":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ModelError("$", f"invalid JSON: {exc}") from exc
        return cls.from_dict(doc, renormalize)

    def to_dict(self) -> dict:
        p = self.params
        return {
            "K": p.K, "M": p.M, "q": p.q, "D": p.D, "lt_mode": p.lt_mode,
            "rank_dist": [float(x) for x in self.rank.h],
            "degree_dist": [float(x) for x in self.degree.psi],
        }

    def with_degree(self, psi, K=None) -> "BatsModel":
        """Same channel, different degree distribution and optionally block length."""
        K = self.params.K if K is None else K
        return BatsModel.create(
            K=K, M=self.params.M, q=self.params.q, lt_mode=self.params.lt_mode,
            rank_dist=self.rank.h, degree_dist=psi, renormalize=True,
        )

    @property
    def K(self) -> int:
        return self.params.K

    @property
    def M(self) -> int:
        return self.params.M

    @property
    def D(self) -> int:
        """Maximum degree after folding onto K."""
        return min(self.params.D, self.params.K)

    @cached_property
    def psi(self) -> np.ndarray:
        return self.degree.fold(self.params.K).psi

    @cached_property
    def solvability(self) -> Solvability:
        return solvability_from_rank(self.rank, self.params)

    @property
    def hbar(self) -> np.ndarray:
        return self.solvability.hbar

    @property
    def hbar_prime(self) -> np.ndarray:
        return self.solvability.hbar_prime

    def capacity(self) -> float:
        return self.solvability.capacity()
