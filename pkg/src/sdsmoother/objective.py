"""Extended MAP objective and the data of its Gauss-Newton subproblem.

The objective is

    K(x) = 1/2 ||V(x) c(x)||^2 - sum_i log V_ii(x),

finite only where every diagonal entry of ``V`` is positive.  Linearizing
``F1 = V c`` and ``F2 = diag(V)`` gives the subproblem data assembled here:

    Psi = d/dx [V(x) c(x)],   a = Psi^T V c,   C = omega I + Psi^T Psi,
    Vscript = d/dx diag(V(x)).

Because ``V_k`` depends on ``x_k`` only and ``c_k`` on ``(x_{k-1}, x_k)``,
``Psi`` is block bidiagonal, ``C`` block tridiagonal and ``Vscript`` block
diagonal, so everything is assembled in ``O(n^3 N)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocktri import BlockTridiagonalMatrix
from .errors import DimensionMismatch, OutOfDomain
from .statespace import ModelEval, StateSpaceModel, evaluate

__all__ = [
    "DEFAULT_OMEGA",
    "ObjectiveEval",
    "SubproblemData",
    "eval_K",
    "grad_K",
    "assemble_subproblem",
]

DEFAULT_OMEGA = 1e-4


@dataclass(frozen=True)
class ObjectiveEval:
    K: float
    quad: float
    barrier: float
    in_domain: bool


def _eval_from(ev: ModelEval) -> ObjectiveEval:
    vdiag = ev.vdiag()
    u = np.einsum("krc,kc->kr", ev.Qf, ev.w)
    y = np.einsum("krc,kc->kr", ev.Rf, ev.r)
    quad = 0.5 * float(np.sum(u * u) + np.sum(y * y))
    if np.all(vdiag > 0.0) and np.isfinite(quad):
        barrier = float(-np.sum(np.log(vdiag)))
        return ObjectiveEval(K=quad + barrier, quad=quad, barrier=barrier, in_domain=True)
    return ObjectiveEval(K=np.inf, quad=quad, barrier=np.inf, in_domain=False)


def eval_K(model: StateSpaceModel, x) -> ObjectiveEval:
    """Objective value; ``K`` is ``+inf`` outside the domain."""
    return _eval_from(evaluate(model, x))


@dataclass(frozen=True)
class SubproblemData:
    """Quantities defining the convex direction-finding subproblem at one point.

    ``Vscript`` is block diagonal; ``vpad[k]`` holds the derivative with
    respect to ``x_k`` of the diagonal entries of ``Q_k^{-1/2}`` followed by
    those of ``R_k^{-1/2}``, zero-padded to a common height, and ``mask``
    marks the rows that exist.  Flat vectors such as ``vdiag`` follow the
    row order of ``c``.  ``quad`` and ``barrier`` are the two parts of ``K``
    at the point of assembly.
    """

    C: BlockTridiagonalMatrix
    a: np.ndarray
    vdiag: np.ndarray
    vpad: np.ndarray
    mask: np.ndarray
    omega: float
    quad: float
    barrier: float

    @property
    def N(self) -> int:
        return self.C.N

    @property
    def n(self) -> int:
        return self.C.n

    @property
    def vblocks(self) -> list:
        return [self.vpad[k][self.mask[k]] for k in range(self.N)]

    def _pad(self, v) -> np.ndarray:
        out = np.zeros(self.mask.shape)
        out[self.mask] = v
        return out

    def vscript_matvec(self, d) -> np.ndarray:
        D = np.asarray(d, dtype=float).reshape(self.N, self.n)
        return np.einsum("kpl,kl->kp", self.vpad, D)[self.mask]

    def vscript_rmatvec(self, lam) -> np.ndarray:
        return np.einsum("kpl,kp->kl", self.vpad, self._pad(lam)).reshape(-1)

    def vscript_gram(self, weights) -> np.ndarray:
        """Diagonal blocks of ``Vscript^T diag(weights) Vscript``, shape ``(N, n, n)``."""
        Wt = self._pad(weights)
        return np.einsum("kpi,kp,kpj->kij", self.vpad, Wt, self.vpad)

    def vscript_dense(self) -> np.ndarray:
        rows = []
        for k, blk in enumerate(self.vblocks):
            row = np.zeros((blk.shape[0], self.N * self.n))
            row[:, k * self.n:(k + 1) * self.n] = blk
            rows.append(row)
        return np.vstack(rows)


def _psi_blocks(ev: ModelEval):
    """Per-step blocks of ``Psi`` and of ``V c``.

    Returns ``(P, B, Mb, u, y)`` where ``P[k]`` (process rows, column ``k``),
    ``B[k]`` (process rows, column ``k - 1``; ``B[0] = 0``) and ``Mb[k]``
    (measurement rows, column ``k``) are the nonzero blocks of ``Psi`` and
    ``u[k]``, ``y[k]`` the process and measurement blocks of ``V c``.
    """
    # Jacobian of V_k(x_k) c_k with c_k frozen: sum_c c[c] * dV[r, c, :]
    P = ev.Qf + np.einsum("krcl,kc->krl", ev.dQ, ev.w)
    B = -np.matmul(ev.Qf, ev.G)
    Mb = np.matmul(ev.Rf, ev.H) + np.einsum("krcl,kc->krl", ev.dR, ev.r)
    u = np.einsum("krc,kc->kr", ev.Qf, ev.w)
    y = np.einsum("krc,kc->kr", ev.Rf, ev.r)
    return P, B, Mb, u, y


def _gram(A: np.ndarray) -> np.ndarray:
    return np.matmul(A.transpose(0, 2, 1), A)


def _assemble(ev: ModelEval, omega: float) -> SubproblemData:
    N, n = ev.w.shape
    P, B, Mb, u, y = _psi_blocks(ev)
    diag = omega * np.eye(n) + _gram(P) + _gram(Mb)
    diag[:-1] += _gram(B[1:])
    a = np.einsum("krl,kr->kl", P, u) + np.einsum("krl,kr->kl", Mb, y)
    a[:-1] += np.einsum("krl,kr->kl", B[1:], u[1:])
    sub = np.matmul(P[1:].transpose(0, 2, 1), B[1:])

    vpad = np.concatenate(
        [np.diagonal(ev.dQ, axis1=1, axis2=2), np.diagonal(ev.dR, axis1=1, axis2=2)], axis=2
    ).transpose(0, 2, 1)
    base = _eval_from(ev)
    return SubproblemData(
        C=BlockTridiagonalMatrix(diag, sub),
        a=a.reshape(-1),
        vdiag=ev.vdiag(),
        vpad=np.ascontiguousarray(vpad),
        mask=ev.mask,
        omega=float(omega),
        quad=base.quad,
        barrier=base.barrier,
    )


def assemble_subproblem(model: StateSpaceModel, x, omega: float = DEFAULT_OMEGA) -> SubproblemData:
    """Assemble ``C``, ``a`` and ``Vscript`` at ``x``.

    Raises :class:`OutOfDomain` if ``x`` is outside the objective's domain.
    """
    if not omega > 0.0:
        raise ValueError(f"omega must be positive, got {omega}")
    ev = evaluate(model, x, derivatives=True)
    if not np.all(ev.vdiag() > 0.0):
        raise OutOfDomain("diagonal of V(x) is not strictly positive")
    return _assemble(ev, omega)


def grad_K(model: StateSpaceModel, x) -> np.ndarray:
    """Gradient of ``K``: ``a - Vscript^T (1 / vdiag)``."""
    data = assemble_subproblem(model, x, omega=1.0)
    g = data.a - data.vscript_rmatvec(1.0 / data.vdiag)
    if g.size != model.N * model.n:
        raise DimensionMismatch("gradient size mismatch")
    return g
