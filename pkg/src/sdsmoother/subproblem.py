"""Interior-point solution of the Gauss-Newton direction-finding subproblem.

The subproblem is

    min_d  1/2 d^T C d + a^T d - sum_i log s_i
    s.t.   s = vdiag + Vscript d,

solved by damped Newton iteration on its KKT system

    E(s, lam, d) = [ s - vdiag - Vscript d ;
                     s * lam - 1 ;
                     C d + a - Vscript^T lam ] = 0.

Each Newton step eliminates ``s`` and ``lam`` and solves a system with
``Phi = C + Vscript^T diag(lam / s) Vscript``.  ``Vscript`` is block diagonal
so ``Phi`` keeps the block-tridiagonal structure of ``C``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .blocktri import factor, solve
from .errors import LinearizedDomainViolation
from .objective import ObjectiveEval, SubproblemData

__all__ = [
    "KktTriple",
    "SubproblemResult",
    "kkt_residual",
    "subproblem_objective",
    "solve_subproblem",
    "model_decrease",
    "default_inner_tol",
]

log = logging.getLogger(__name__)

BOUNDARY_FRACTION = 0.995
ARMIJO_C = 1e-4
MAX_BACKTRACK = 60


@dataclass(frozen=True)
class KktTriple:
    d: np.ndarray
    s: np.ndarray
    lam: np.ndarray


@dataclass(frozen=True)
class SubproblemResult:
    """Outcome of :func:`solve_subproblem`.

    ``delta`` is the model decrease at ``d`` and ``delta_bar`` adds the
    regularization ``omega/2 |d|^2``.  ``converged`` is false when the inner
    iteration limit was hit; the best iterate found is returned in that case.
    """

    triple: KktTriple
    delta: float
    delta_bar: float
    kkt_residual: float
    inner_iters: int
    converged: bool
    objective_trace: list = field(default_factory=list)

    @property
    def d(self) -> np.ndarray:
        return self.triple.d


def default_inner_tol(data: SubproblemData) -> float:
    return 1e-9 * (1.0 + float(np.max(np.abs(data.a), initial=0.0)))


def kkt_residual(data: SubproblemData, s, lam, d) -> np.ndarray:
    """The stacked KKT residual ``E(s, lam, d)``."""
    r1 = s - data.vdiag - data.vscript_matvec(d)
    r2 = s * lam - 1.0
    r3 = data.C.matvec(d) + data.a - data.vscript_rmatvec(lam)
    return np.concatenate([r1, r2, r3])


def subproblem_objective(data: SubproblemData, d) -> float:
    """``1/2 d^T C d + a^T d - sum log(vdiag + Vscript d)``; ``+inf`` off the domain."""
    lin = data.vdiag + data.vscript_matvec(d)
    if not np.all(lin > 0.0):
        return np.inf
    return float(0.5 * d @ data.C.matvec(d) + data.a @ d - np.sum(np.log(lin)))


def _decrease(data: SubproblemData, d: np.ndarray, lin: np.ndarray) -> float:
    gn = float(d @ data.C.matvec(d) - data.omega * (d @ d))
    return float(data.a @ d + 0.5 * gn - np.sum(np.log(lin / data.vdiag)))


def _max_step(v: np.ndarray, dv: np.ndarray) -> float:
    neg = dv < 0.0
    if not np.any(neg):
        return np.inf
    return float(np.min(-v[neg] / dv[neg]))


def solve_subproblem(data: SubproblemData, tol: float | None = None, max_inner: int = 50) -> SubproblemResult:
    """Solve the subproblem by damped Newton iteration on its KKT system.

    The iteration starts from ``d = 0, s = vdiag, lam = 1 / s``.  Primal
    ``(d, s)`` and dual ``lam`` steps are each cut to ``min(1, 0.995 alpha_max)``
    of their own boundary; the primal step is then halved until the
    subproblem objective shows sufficient decrease.  The ``d`` part of the
    Newton direction is ``-Phi^{-1}`` times the gradient of that objective
    (``s`` stays primal feasible from the start), so the backtracking always
    terminates.
    """
    if tol is None:
        tol = default_inner_tol(data)
    if not tol > 0.0:
        raise ValueError("tol must be positive")

    size = data.N * data.n
    d = np.zeros(size)
    s = data.vdiag.copy()
    lam = 1.0 / s
    f = subproblem_objective(data, d)
    trace = [f]

    res = float(np.max(np.abs(kkt_residual(data, s, lam, d))))
    best = (res, d, s, lam)
    it = 0
    while res > tol and it < max_inner:
        lin = data.vdiag + data.vscript_matvec(d)
        Phi = data.C.add_to_diagonal(data.vscript_gram(lam / s))
        gamma = data.vscript_rmatvec(lam + (1.0 - lam * lin) / s) - data.C.matvec(d) - data.a
        dd = solve(factor(Phi), gamma)
        lin_new = lin + data.vscript_matvec(dd)
        dlam = (1.0 - lam * lin_new) / s
        ds = lin_new - s

        alpha = min(1.0, BOUNDARY_FRACTION * _max_step(s, ds))
        alpha_dual = min(1.0, BOUNDARY_FRACTION * _max_step(lam, dlam))
        # gradient of the primal objective at d is -gamma when s == lin
        slope = -float(gamma @ dd)
        slack = 1e-14 * (1.0 + abs(f))
        for _ in range(MAX_BACKTRACK):
            f_new = subproblem_objective(data, d + alpha * dd)
            if f_new <= f + ARMIJO_C * alpha * min(slope, 0.0) + slack:
                break
            alpha *= 0.5
        else:
            log.debug("inner backtracking exhausted at iteration %d", it)

        d = d + alpha * dd
        s = s + alpha * ds
        lam = lam + alpha_dual * dlam
        f = subproblem_objective(data, d)
        trace.append(f)
        it += 1
        res = float(np.max(np.abs(kkt_residual(data, s, lam, d))))
        if res < best[0]:
            best = (res, d, s, lam)

    converged = res <= tol
    if not converged:
        log.warning("subproblem stopped after %d iterations with KKT residual %.3e", it, res)
        res, d, s, lam = best
    lin = data.vdiag + data.vscript_matvec(d)
    delta = _decrease(data, d, lin)
    return SubproblemResult(
        triple=KktTriple(d=d, s=s, lam=lam),
        delta=delta,
        delta_bar=delta + 0.5 * data.omega * float(d @ d),
        kkt_residual=res,
        inner_iters=it,
        converged=converged,
        objective_trace=trace,
    )


def model_decrease(data: SubproblemData, triple, eval_at_x: ObjectiveEval) -> float:
    """Model decrease ``rho(F(x) + F'(x) d) - K(x)`` of a direction.

    ``triple`` may be a :class:`KktTriple` or a bare direction.  The value is
    computed relative to ``K(x)`` so no cancellation against ``K`` occurs.
    """
    d = np.asarray(triple.d if isinstance(triple, KktTriple) else triple, dtype=float)
    if not eval_at_x.in_domain:
        raise LinearizedDomainViolation("x is outside the domain of K")
    lin = data.vdiag + data.vscript_matvec(d)
    if not np.all(lin > 0.0):
        raise LinearizedDomainViolation("linearized diagonal of V is not strictly positive")
    return _decrease(data, d, lin)
