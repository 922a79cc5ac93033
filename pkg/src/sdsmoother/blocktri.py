"""Symmetric positive definite block-tridiagonal matrices.

The matrix is stored as ``N`` diagonal blocks ``diag[k]`` of size ``n x n`` and
``N - 1`` blocks ``sub[k]`` sitting directly below ``diag[k]`` (so ``sub[k]``
couples block row ``k + 1`` to block column ``k``).  Factorization is a block
Cholesky sweep ``M = L L^T`` with ``L`` block lower bidiagonal, which costs
``O(n^3 N)`` time and ``O(n^2 N)`` memory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import DimensionMismatch, NotPositiveDefinite

__all__ = ["BlockTridiagonalMatrix", "BlockTriFactorization", "factor", "solve"]

_SYMMETRY_RTOL = 1e-12


class BlockTridiagonalMatrix:
    """Symmetric block-tridiagonal matrix.

    Diagonal blocks are symmetrized on construction; an input block whose
    asymmetry exceeds ``1e-12`` relative to its magnitude is rejected.
    """

    def __init__(self, diag, sub=None):
        diag = np.array(diag, dtype=float)
        if diag.ndim == 1:
            diag = diag[:, None, None]
        if diag.ndim != 3 or diag.shape[1] != diag.shape[2] or diag.shape[0] < 1:
            raise DimensionMismatch(f"diag must have shape (N, n, n), got {diag.shape}")
        N, n, _ = diag.shape
        if sub is None:
            sub = np.zeros((N - 1, n, n))
        sub = np.array(sub, dtype=float)
        if sub.size == 0:
            sub = sub.reshape(N - 1, n, n)
        elif sub.ndim == 1:
            sub = sub[:, None, None]
        if sub.shape != (N - 1, n, n):
            raise DimensionMismatch(f"sub must have shape {(N - 1, n, n)}, got {sub.shape}")

        asym = np.abs(diag - diag.transpose(0, 2, 1)).max(initial=0.0)
        scale = np.abs(diag).max(initial=0.0)
        if asym > _SYMMETRY_RTOL * max(scale, 1.0):
            raise ValueError(f"diagonal blocks are not symmetric (max asymmetry {asym:.3e})")
        self.diag = np.ascontiguousarray(0.5 * (diag + diag.transpose(0, 2, 1)))
        self.sub = np.ascontiguousarray(sub)
        self.diag.flags.writeable = False
        self.sub.flags.writeable = False

    @property
    def N(self) -> int:
        return self.diag.shape[0]

    @property
    def n(self) -> int:
        return self.diag.shape[1]

    @property
    def shape(self):
        size = self.N * self.n
        return (size, size)

    def to_dense(self) -> np.ndarray:
        N, n = self.N, self.n
        out = np.zeros((N * n, N * n))
        for k in range(N):
            out[k * n:(k + 1) * n, k * n:(k + 1) * n] = self.diag[k]
        for k in range(N - 1):
            blk = self.sub[k]
            out[(k + 1) * n:(k + 2) * n, k * n:(k + 1) * n] = blk
            out[k * n:(k + 1) * n, (k + 1) * n:(k + 2) * n] = blk.T
        return out

    def matvec(self, x) -> np.ndarray:
        N, n = self.N, self.n
        x = np.asarray(x, dtype=float)
        if x.shape[0] != N * n:
            raise DimensionMismatch(f"expected leading dimension {N * n}, got {x.shape[0]}")
        xb = x.reshape(N, n, -1)
        y = np.matmul(self.diag, xb)
        if N > 1:
            y[1:] += np.matmul(self.sub, xb[:-1])
            y[:-1] += np.matmul(self.sub.transpose(0, 2, 1), xb[1:])
        return y.reshape(x.shape)

    def __matmul__(self, x):
        return self.matvec(x)

    def add_to_diagonal(self, blocks) -> "BlockTridiagonalMatrix":
        """Return a new matrix with ``blocks`` (shape ``(N, n, n)``) added to the diagonal."""
        return BlockTridiagonalMatrix(self.diag + np.asarray(blocks, dtype=float), self.sub)


@dataclass(frozen=True)
class BlockTriFactorization:
    """Block Cholesky factor of a :class:`BlockTridiagonalMatrix`.

    ``chol[k]`` is the lower Cholesky factor of the Schur complement
    ``schur[k] = diag[k] - sub[k-1] S_{k-1}^{-1} sub[k-1]^T`` and ``offdiag[k]``
    is the block ``sub[k] chol[k]^{-T}`` of the bidiagonal factor.
    """

    chol: np.ndarray
    offdiag: np.ndarray
    schur: np.ndarray

    @property
    def N(self) -> int:
        return self.chol.shape[0]

    @property
    def n(self) -> int:
        return self.chol.shape[1]


@njit(cache=True)
def _factor_kernel(diag, sub, chol, offdiag, schur):
    """Block Cholesky sweep; returns the index of a failed pivot or -1."""
    N, n = diag.shape[0], diag.shape[1]
    for k in range(N):
        S = diag[k].copy()
        if k > 0:
            Lk = offdiag[k - 1]
            for i in range(n):
                for j in range(n):
                    acc = 0.0
                    for p in range(n):
                        acc += Lk[i, p] * Lk[j, p]
                    S[i, j] -= acc
        schur[k] = S
        L = chol[k]
        for j in range(n):
            acc = S[j, j]
            for p in range(j):
                acc -= L[j, p] * L[j, p]
            if not acc > 0.0 or not np.isfinite(acc):
                return k
            L[j, j] = np.sqrt(acc)
            for i in range(j + 1, n):
                acc = S[i, j]
                for p in range(j):
                    acc -= L[i, p] * L[j, p]
                L[i, j] = acc / L[j, j]
            for i in range(j):
                L[i, j] = 0.0
        if k < N - 1:
            # offdiag[k] = sub[k] L^{-T}: solve L X^T = sub[k]^T row by row of sub[k]
            B = sub[k]
            O = offdiag[k]
            for r in range(n):
                for j in range(n):
                    acc = B[r, j]
                    for p in range(j):
                        acc -= L[j, p] * O[r, p]
                    O[r, j] = acc / L[j, j]
    return -1


@njit(cache=True)
def _solve_kernel(chol, offdiag, rhs):
    N, n, ncol = rhs.shape
    y = np.empty_like(rhs)
    for c in range(ncol):
        for k in range(N):
            L = chol[k]
            for i in range(n):
                acc = rhs[k, i, c]
                if k > 0:
                    O = offdiag[k - 1]
                    for p in range(n):
                        acc -= O[i, p] * y[k - 1, p, c]
                for p in range(i):
                    acc -= L[i, p] * y[k, p, c]
                y[k, i, c] = acc / L[i, i]
        for k in range(N - 1, -1, -1):
            L = chol[k]
            for i in range(n - 1, -1, -1):
                acc = y[k, i, c]
                if k < N - 1:
                    O = offdiag[k]
                    for p in range(n):
                        acc -= O[p, i] * y[k + 1, p, c]
                for p in range(i + 1, n):
                    acc -= L[p, i] * y[k, p, c]
                y[k, i, c] = acc / L[i, i]
    return y


def factor(M: BlockTridiagonalMatrix) -> BlockTriFactorization:
    """Factor ``M = L L^T``; raises :class:`NotPositiveDefinite` on a failed pivot."""
    N, n = M.N, M.n
    chol = np.zeros((N, n, n))
    schur = np.empty((N, n, n))
    offdiag = np.empty((max(N - 1, 0), n, n))
    failed = _factor_kernel(M.diag, M.sub, chol, offdiag, schur)
    if failed >= 0:
        raise NotPositiveDefinite(int(failed))
    return BlockTriFactorization(chol=chol, offdiag=offdiag, schur=schur)


def solve(F: BlockTriFactorization, b) -> np.ndarray:
    """Solve ``M x = b`` given ``F = factor(M)``.

    ``b`` may be a vector of length ``nN`` or a matrix with ``nN`` rows.
    """
    N, n = F.N, F.n
    b = np.asarray(b, dtype=float)
    if b.ndim == 0 or b.shape[0] != N * n:
        raise DimensionMismatch(f"right-hand side must have {N * n} rows, got shape {b.shape}")
    rhs = np.ascontiguousarray(b.reshape(N, n, -1))
    return _solve_kernel(F.chol, F.offdiag, rhs).reshape(b.shape)
