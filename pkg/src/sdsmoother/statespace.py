"""User-supplied dynamic model with state-dependent noise factors.

The model is

    x_0 = g0 + w_0,
    x_k = g(k, x_{k-1}) + w_k,      k = 1, ..., N-1
    z_k = h(k, x_k) + v_k,          k = 0, ..., N-1

with ``w_k ~ N(0, Q_k(x_k))`` and ``v_k ~ N(0, R_k(x_k))``.  Time indices are
zero-based throughout.  Covariances are supplied as lower-triangular inverse
Cholesky factors ``qfac(k, x_k) = Q_k^{-1/2}`` (so that
``qfac.T @ qfac = inv(Q_k)``) together with their derivatives with respect to
``x_k``.  A derivative callback returns an array ``D`` of shape
``(rows, cols, n)`` with ``D[r, c, l] = d factor[r, c] / d x_k[l]``; ``D[r]``
is therefore the derivative of row ``r``.

The stacked residual ``c(x)`` interleaves one process block and one
measurement block per step: ``[x_0 - g0; h_0 - z_0; x_1 - g_1(x_0); ...]``.
``V(x)`` is block diagonal with the matching factors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch

__all__ = [
    "StateSpaceModel",
    "ModelEval",
    "VFactor",
    "CJacobian",
    "as_blocks",
    "evaluate",
    "residual_c",
    "factor_V",
    "jacobian_c",
    "fd_factor_derivative",
]


def fd_factor_derivative(fac: Callable, k: int, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central finite-difference derivative of ``fac(k, x)`` with respect to ``x``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for l in range(x.size):
        hl = step * (1.0 + abs(x[l]))
        xp = x.copy()
        xm = x.copy()
        xp[l] += hl
        xm[l] -= hl
        cols.append((np.atleast_2d(fac(k, xp)) - np.atleast_2d(fac(k, xm))) / (2.0 * hl))
    return np.stack(cols, axis=-1)


@dataclass
class StateSpaceModel:
    """Nonlinear state-space model with state-dependent inverse Cholesky factors.

    Callbacks must be pure functions of ``(k, x)``.  ``g`` and ``G`` are only
    called for ``k >= 1``; step 0 uses the prior mean ``g0``.  Measurement
    dimensions are taken from ``z``.  When ``qfac_deriv`` or ``rfac_deriv`` is
    omitted, ``fd_derivatives=True`` enables a central finite-difference
    fallback; otherwise the missing derivative is an error.
    """

    N: int
    n: int
    g: Callable[[int, np.ndarray], np.ndarray]
    G: Callable[[int, np.ndarray], np.ndarray]
    h: Callable[[int, np.ndarray], np.ndarray]
    H: Callable[[int, np.ndarray], np.ndarray]
    qfac: Callable[[int, np.ndarray], np.ndarray]
    rfac: Callable[[int, np.ndarray], np.ndarray]
    g0: np.ndarray
    z: Sequence[np.ndarray]
    qfac_deriv: Optional[Callable[[int, np.ndarray], np.ndarray]] = None
    rfac_deriv: Optional[Callable[[int, np.ndarray], np.ndarray]] = None
    fd_derivatives: bool = False
    fd_step: float = 1e-6
    _offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.N < 1 or self.n < 1:
            raise DimensionMismatch("N and n must be positive")
        self.g0 = np.asarray(self.g0, dtype=float).reshape(-1)
        if self.g0.shape != (self.n,):
            raise DimensionMismatch(f"g0 must have length {self.n}")
        z = [np.atleast_1d(np.asarray(zk, dtype=float)).reshape(-1) for zk in self.z]
        if len(z) != self.N:
            raise DimensionMismatch(f"expected {self.N} measurement vectors, got {len(z)}")
        self.z = z
        for name in ("qfac", "rfac"):
            if getattr(self, name + "_deriv") is None and not self.fd_derivatives:
                raise ValueError(f"{name}_deriv is required unless fd_derivatives=True")
        sizes = [self.n + zk.size for zk in z]
        self._offsets = np.concatenate([[0], np.cumsum(sizes)])

    def m(self, k: int) -> int:
        return self.z[k].size

    @property
    def M(self) -> int:
        """Total measurement dimension."""
        return int(sum(zk.size for zk in self.z))

    @property
    def nrows(self) -> int:
        """Length of the stacked residual, ``M + nN``."""
        return int(self._offsets[-1])

    def row_slices(self, k: int):
        """Slices of the process and measurement rows of step ``k`` in ``c(x)``."""
        start = int(self._offsets[k])
        return slice(start, start + self.n), slice(start + self.n, int(self._offsets[k + 1]))

    def dqfac(self, k: int, xk: np.ndarray) -> np.ndarray:
        if self.qfac_deriv is not None:
            return np.asarray(self.qfac_deriv(k, xk), dtype=float).reshape(self.n, self.n, self.n)
        return fd_factor_derivative(self.qfac, k, xk, self.fd_step)

    def drfac(self, k: int, xk: np.ndarray) -> np.ndarray:
        m = self.m(k)
        if self.rfac_deriv is not None:
            return np.asarray(self.rfac_deriv(k, xk), dtype=float).reshape(m, m, self.n)
        return fd_factor_derivative(self.rfac, k, xk, self.fd_step).reshape(m, m, self.n)


def as_blocks(model: StateSpaceModel, x) -> np.ndarray:
    """Return ``x`` as an ``(N, n)`` array of state blocks."""
    x = np.asarray(x, dtype=float)
    if x.size != model.N * model.n:
        raise DimensionMismatch(f"state sequence must have {model.N * model.n} entries, got {x.size}")
    return x.reshape(model.N, model.n)


@dataclass(frozen=True)
class ModelEval:
    """All per-step quantities of a model evaluated at one state sequence.

    ``w[k]`` is the process residual ``x_k - g_k(x_{k-1})`` and ``r[k]`` the
    measurement residual ``h_k(x_k) - z_k`` (the sign used in ``c``).
    Measurement quantities are zero-padded to the largest measurement
    dimension; ``m[k]`` gives the true size.  ``G[0]`` is zero.  Derivative
    fields are ``None`` unless requested.
    """

    x: np.ndarray
    w: np.ndarray
    r: np.ndarray
    Qf: np.ndarray
    Rf: np.ndarray
    m: np.ndarray
    G: Optional[np.ndarray] = None
    H: Optional[np.ndarray] = None
    dQ: Optional[np.ndarray] = None
    dR: Optional[np.ndarray] = None

    @property
    def mask(self) -> np.ndarray:
        """Boolean ``(N, n + max m)`` mask of the rows that exist in ``c``."""
        n, mmax = self.w.shape[1], self.r.shape[1]
        meas = np.arange(mmax)[None, :] < self.m[:, None]
        return np.concatenate([np.ones((self.m.size, n), dtype=bool), meas], axis=1)

    def stack(self, proc: np.ndarray, meas: np.ndarray) -> np.ndarray:
        """Interleave per-step process and padded measurement rows into a flat vector."""
        return np.concatenate([proc, meas], axis=1)[self.mask]

    def vdiag(self) -> np.ndarray:
        return self.stack(
            np.diagonal(self.Qf, axis1=1, axis2=2), np.diagonal(self.Rf, axis1=1, axis2=2)
        )


def evaluate(model: StateSpaceModel, x, derivatives: bool = False) -> ModelEval:
    """Evaluate residuals and factors (and optionally all derivatives) at ``x``."""
    X = as_blocks(model, x)
    N, n = model.N, model.n
    ms = np.array([model.m(k) for k in range(N)], dtype=int)
    mmax = int(ms.max())
    w = np.empty((N, n))
    r = np.zeros((N, mmax))
    Qf = np.empty((N, n, n))
    Rf = np.zeros((N, mmax, mmax))
    if derivatives:
        Gm = np.zeros((N, n, n))
        Hm = np.zeros((N, mmax, n))
        dQ = np.empty((N, n, n, n))
        dR = np.zeros((N, mmax, mmax, n))
    else:
        Gm = Hm = dQ = dR = None
    for k in range(N):
        xk = X[k]
        m = ms[k]
        if k == 0:
            w[0] = xk - model.g0
        else:
            gk = np.asarray(model.g(k, X[k - 1]), dtype=float).reshape(-1)
            if gk.shape != (n,):
                raise DimensionMismatch(f"g({k}, x) returned shape {gk.shape}, expected ({n},)")
            w[k] = xk - gk
        hk = np.asarray(model.h(k, xk), dtype=float).reshape(-1)
        if hk.shape != (m,):
            raise DimensionMismatch(f"h({k}, x) returned shape {hk.shape}, expected ({m},)")
        r[k, :m] = hk - model.z[k]
        Qf[k] = np.asarray(model.qfac(k, xk), dtype=float).reshape(n, n)
        Rf[k, :m, :m] = np.asarray(model.rfac(k, xk), dtype=float).reshape(m, m)
        if derivatives:
            if k > 0:
                Gm[k] = np.asarray(model.G(k, X[k - 1]), dtype=float).reshape(n, n)
            Hm[k, :m] = np.asarray(model.H(k, xk), dtype=float).reshape(m, n)
            dQ[k] = model.dqfac(k, xk)
            dR[k, :m, :m] = model.drfac(k, xk)
    if np.any(np.triu(Qf, 1)) or np.any(np.triu(Rf, 1)):
        raise ValueError("qfac and rfac must return lower-triangular matrices")
    return ModelEval(x=X, w=w, r=r, Qf=Qf, Rf=Rf, m=ms, G=Gm, H=Hm, dQ=dQ, dR=dR)


def residual_c(model: StateSpaceModel, x) -> np.ndarray:
    """Stacked residual ``c(x)`` of length ``M + nN``, interleaved by step."""
    ev = evaluate(model, x)
    return ev.stack(ev.w, ev.r)


@dataclass(frozen=True)
class VFactor:
    """Block-diagonal inverse Cholesky factor ``V(x)``.

    ``blocks`` alternates process and measurement blocks (``2N`` in total),
    ``vdiag`` holds the diagonal of ``V`` and ``in_domain`` tells whether every
    entry of ``vdiag`` is strictly positive.
    """

    blocks: list
    vdiag: np.ndarray
    in_domain: bool

    def to_dense(self) -> np.ndarray:
        size = sum(b.shape[0] for b in self.blocks)
        out = np.zeros((size, size))
        i = 0
        for b in self.blocks:
            out[i:i + b.shape[0], i:i + b.shape[0]] = b
            i += b.shape[0]
        return out


def factor_V(model: StateSpaceModel, x) -> VFactor:
    ev = evaluate(model, x)
    blocks = [b for k in range(model.N) for b in (ev.Qf[k], ev.Rf[k, :ev.m[k], :ev.m[k]])]
    vdiag = ev.vdiag()
    return VFactor(blocks=blocks, vdiag=vdiag, in_domain=bool(np.all(vdiag > 0.0)))


@dataclass(frozen=True)
class CJacobian:
    """Block-bidiagonal Jacobian of ``c``.

    Column block ``k`` has ``I`` in the process rows of step ``k``, ``H[k]`` in
    its measurement rows and ``-G[k+1]`` in the process rows of step ``k + 1``.
    """

    model: StateSpaceModel
    G: np.ndarray
    H: np.ndarray

    def to_dense(self) -> np.ndarray:
        m = self.model
        out = np.zeros((m.nrows, m.N * m.n))
        for k in range(m.N):
            cols = slice(k * m.n, (k + 1) * m.n)
            prow, mrow = m.row_slices(k)
            out[prow, cols] = np.eye(m.n)
            out[mrow, cols] = self.H[k, :m.m(k)]
            if k > 0:
                out[prow, (k - 1) * m.n:k * m.n] = -self.G[k]
        return out


def jacobian_c(model: StateSpaceModel, x) -> CJacobian:
    ev = evaluate(model, x, derivatives=True)
    return CJacobian(model=model, G=ev.G, H=ev.H)
