"""Arithmetic and linear algebra over GF(2^m), m in {1, 2, 4, 8}.

Elements are integers 0..q-1 in polynomial basis. Multiplication goes through
log/antilog tables for a fixed reduction polynomial so that every simulation
trace is reproducible bit for bit:

    m = 1: x + 1 (0x3), i.e. GF(2)
    m = 2: x^2 + x + 1 (0x7)
    m = 4: x^4 + x + 1 (0x13)
    m = 8: x^8 + x^4 + x^3 + x + 1 (0x11B, the AES polynomial)

0x11B is irreducible but not primitive, so the log tables are built on the
smallest generator of the multiplicative group (3 for 0x11B, 2 otherwise).
"""

from __future__ import annotations

import numpy as np

POLYNOMIALS = {1: 0x3, 2: 0x7, 4: 0x13, 8: 0x11B}


class SingularSystemError(ArithmeticError):
    """Linear system is inconsistent or does not determine a unique solution."""


def _clmul_mod(a: int, b: int, poly: int, m: int) -> int:
    out = 0
    while b:
        if b & 1:
            out ^= a
        b >>= 1
        a <<= 1
        if a >> m:
            a ^= poly
    return out


class GF:
    def __init__(self, m: int):
        if m not in POLYNOMIALS:
            raise ValueError(f"GF(2^{m}) not supported; m must be one of {sorted(POLYNOMIALS)}")
        self.m = m
        self.q = 1 << m
        self.poly = POLYNOMIALS[m]
        order = self.q - 1
        self.generator = self._find_generator()
        exp = np.zeros(2 * order + 1, dtype=np.int64)
        log = np.zeros(self.q, dtype=np.int64)
        x = 1
        for i in range(order):
            exp[i] = x
            log[x] = i
            x = _clmul_mod(x, self.generator, self.poly, m)
        exp[order : 2 * order] = exp[:order]
        exp[2 * order] = exp[0]
        self.exp = exp
        self.log = log
        a = np.arange(self.q)
        mul = np.zeros((self.q, self.q), dtype=np.int64)
        nz = a[1:]
        mul[1:, 1:] = exp[(log[nz][:, None] + log[nz][None, :])]
        self.mul_table = mul
        inv = np.zeros(self.q, dtype=np.int64)
        inv[1:] = exp[(order - log[nz]) % order]
        self.inv_table = inv
        # plain-list copies for scalar loops in the decoders
        self.mul_rows = mul.tolist()
        self.inv_list = inv.tolist()

    @classmethod
    def of_size(cls, q: int) -> "GF":
        m = q.bit_length() - 1
        if q < 2 or (1 << m) != q or m not in POLYNOMIALS:
            raise ValueError(f"simulation supports q in {{2, 4, 16, 256}}, got {q}")
        return cls(m)

    def _find_generator(self) -> int:
        order = self.q - 1
        if order == 1:
            return 1
        for g in range(2, self.q):
            x, k = g, 1
            while x != 1:
                x = _clmul_mod(x, g, self.poly, self.m)
                k += 1
            if k == order:
                return g
        raise AssertionError("no generator found")  # pragma: no cover

    def __repr__(self):
        return f"GF(2^{self.m})"

    # elementwise -----------------------------------------------------------

    def mul(self, a, b):
        return self.mul_table[np.asarray(a), np.asarray(b)]

    def inv(self, a):
        a = np.asarray(a)
        if np.any(a == 0):
            raise ZeroDivisionError("inverse of 0")
        return self.inv_table[a]

    def random(self, shape, rng: np.random.Generator) -> np.ndarray:
        return rng.integers(0, self.q, size=shape, dtype=np.int64)

    # matrices --------------------------------------------------------------

    def matmul(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        A = np.asarray(A, dtype=np.int64)
        B = np.asarray(B, dtype=np.int64)
        if A.shape[-1] != B.shape[0]:
            raise ValueError(f"shape mismatch {A.shape} @ {B.shape}")
        if A.shape[-1] == 0:
            return np.zeros(A.shape[:-1] + B.shape[1:], dtype=np.int64)
        vector = A.ndim == 1
        A2 = A[None, :] if vector else A
        prod = self.mul_table[A2[:, :, None], B[None, :, :]]
        out = np.bitwise_xor.reduce(prod, axis=1)
        return out[0] if vector else out

    def row_echelon(self, A: np.ndarray):
        """Reduced row echelon form and pivot columns."""
        R = np.array(A, dtype=np.int64, copy=True)
        rows, cols = R.shape
        pivots = []
        r = 0
        for c in range(cols):
            if r == rows:
                break
            nz = np.flatnonzero(R[r:, c])
            if nz.size == 0:
                continue
            p = r + nz[0]
            if p != r:
                R[[r, p]] = R[[p, r]]
            R[r] = self.mul_table[self.inv_table[R[r, c]], R[r]]
            others = np.flatnonzero(R[:, c])
            others = others[others != r]
            if others.size:
                R[others] ^= self.mul_table[R[others, c][:, None], R[r][None, :]]
            pivots.append(c)
            r += 1
        return R, pivots

    def rank(self, A: np.ndarray) -> int:
        A = np.asarray(A)
        if A.size == 0:
            return 0
        return len(self.row_echelon(A)[1])

    def solve(self, A: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """Unique X with X A = Y (row form, as in Y = B G H).

        A is s x M with rank s; Y is k x M (or a length-M vector). Raises
        SingularSystemError when A has dependent rows or Y is inconsistent.
        """
        A = np.asarray(A, dtype=np.int64)
        Y = np.asarray(Y, dtype=np.int64)
        vector = Y.ndim == 1
        Y2 = Y[None, :] if vector else Y
        s, M = A.shape
        if Y2.shape[1] != M:
            raise ValueError("Y must have as many columns as A")
        # transpose: A^T X^T = Y^T, eliminate on the augmented [A^T | Y^T]
        aug = np.concatenate([A.T, Y2.T], axis=1)
        R, pivots = self.row_echelon(aug)
        if len([p for p in pivots if p < s]) < s:
            raise SingularSystemError("rows of A are linearly dependent")
        if any(p >= s for p in pivots):
            raise SingularSystemError("inconsistent system")
        X = R[:s, s:].T
        return X[0] if vector else X
