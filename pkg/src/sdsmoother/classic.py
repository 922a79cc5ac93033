"""Classic Kalman filter and Rauch-Tung-Striebel smoother.

These handle linear-Gaussian models with state-independent covariances and
serve as baselines and as exact oracles for the constant-covariance case.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .errors import DimensionMismatch, NotPositiveDefinite
from .statespace import StateSpaceModel

__all__ = ["LinearGaussianModel", "kalman_filter", "rts_smooth", "inverse_cholesky"]


def inverse_cholesky(S) -> np.ndarray:
    """Lower-triangular ``L^{-1}`` where ``S = L L^T``, so ``L^{-T} L^{-1} = S^{-1}``."""
    L = np.linalg.cholesky(np.atleast_2d(np.asarray(S, dtype=float)))
    return solve_triangular(L, np.eye(L.shape[0]), lower=True)


@dataclass
class LinearGaussianModel:
    """Linear-Gaussian model with per-step matrices.

    ``F[k]`` maps ``x_{k-1}`` to the mean of ``x_k`` (``F[0]`` is unused),
    ``Q[0]`` is the prior covariance of ``x_0`` about ``g0`` and ``Q[k]``
    the process covariance of step ``k``.  ``H[k]``/``R[k]`` describe the
    measurement of step ``k``.
    """

    F: np.ndarray
    Q: np.ndarray
    H: list
    R: list
    g0: np.ndarray

    def __post_init__(self):
        self.F = np.asarray(self.F, dtype=float)
        self.Q = np.asarray(self.Q, dtype=float)
        self.g0 = np.asarray(self.g0, dtype=float).reshape(-1)
        self.H = [np.atleast_2d(np.asarray(h, dtype=float)) for h in self.H]
        self.R = [np.atleast_2d(np.asarray(r, dtype=float)) for r in self.R]
        N, n = self.N, self.n
        if self.F.shape != (N, n, n) or self.Q.shape != (N, n, n):
            raise DimensionMismatch("F and Q must have shape (N, n, n)")
        if len(self.H) != N or len(self.R) != N:
            raise DimensionMismatch("H and R need one entry per step")
        for h, r in zip(self.H, self.R):
            if h.shape[1] != n or r.shape != (h.shape[0], h.shape[0]):
                raise DimensionMismatch("inconsistent measurement dimensions")

    @property
    def N(self) -> int:
        return self.F.shape[0]

    @property
    def n(self) -> int:
        return self.g0.size

    @classmethod
    def time_invariant(cls, F, Q, H, R, g0, N, Q0=None):
        F = np.asarray(F, dtype=float)
        Q = np.asarray(Q, dtype=float)
        Qs = np.repeat(Q[None], N, axis=0)
        if Q0 is not None:
            Qs[0] = Q0
        return cls(F=np.repeat(F[None], N, axis=0), Q=Qs, H=[H] * N, R=[R] * N, g0=g0)

    def to_state_space(self, z) -> StateSpaceModel:
        """Equivalent :class:`StateSpaceModel` with constant inverse Cholesky factors."""
        n = self.n
        qf = np.stack([inverse_cholesky(q) for q in self.Q])
        rf = [inverse_cholesky(r) for r in self.R]
        zero_q = np.zeros((n, n, n))
        F, H = self.F, self.H
        return StateSpaceModel(
            N=self.N,
            n=n,
            g=lambda k, x: F[k] @ x,
            G=lambda k, x: F[k],
            h=lambda k, x: H[k] @ x,
            H=lambda k, x: H[k],
            qfac=lambda k, x: qf[k],
            rfac=lambda k, x: rf[k],
            qfac_deriv=lambda k, x: zero_q,
            rfac_deriv=lambda k, x: np.zeros(rf[k].shape + (n,)),
            g0=self.g0,
            z=z,
        )


def _measurements(model: LinearGaussianModel, z) -> list:
    z = [np.atleast_1d(np.asarray(zk, dtype=float)).reshape(-1) for zk in z]
    if len(z) != model.N:
        raise DimensionMismatch(f"expected {model.N} measurements, got {len(z)}")
    return z


def kalman_filter(model: LinearGaussianModel, z):
    """Filtered means ``(N, n)`` and covariances ``(N, n, n)``.

    Also returns the one-step predictions, which :func:`rts_smooth` reuses.
    """
    z = _measurements(model, z)
    N, n = model.N, model.n
    xs = np.empty((N, n))
    Ps = np.empty((N, n, n))
    xp = np.empty((N, n))
    Pp = np.empty((N, n, n))
    x, P = model.g0, model.Q[0]
    for k in range(N):
        if k > 0:
            x = model.F[k] @ x
            P = model.F[k] @ P @ model.F[k].T + model.Q[k]
        xp[k], Pp[k] = x, P
        H, R = model.H[k], model.R[k]
        S = H @ P @ H.T + R
        try:
            cS = cho_factor(S, lower=True)
        except np.linalg.LinAlgError:
            raise NotPositiveDefinite(k, f"innovation covariance at step {k} is not positive definite") from None
        K = cho_solve(cS, H @ P).T
        x = x + K @ (z[k] - H @ x)
        IKH = np.eye(n) - K @ H
        # Joseph form keeps P symmetric positive definite
        P = IKH @ P @ IKH.T + K @ R @ K.T
        xs[k], Ps[k] = x, P
    return xs, Ps, xp, Pp


def rts_smooth(model: LinearGaussianModel, z):
    """Smoothed means ``(N, n)`` and covariances ``(N, n, n)``."""
    xf, Pf, xp, Pp = kalman_filter(model, z)
    xs, Ps = xf.copy(), Pf.copy()
    for k in range(model.N - 2, -1, -1):
        F = model.F[k + 1]
        J = cho_solve(cho_factor(Pp[k + 1], lower=True), F @ Pf[k]).T
        xs[k] = xf[k] + J @ (xs[k + 1] - xp[k + 1])
        Ps[k] = Pf[k] + J @ (Ps[k + 1] - Pp[k + 1]) @ J.T
        Ps[k] = 0.5 * (Ps[k] + Ps[k].T)
    return xs, Ps
