"""Generalized Gauss-Newton smoother with backtracking line search."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InfeasibleStart
from .objective import DEFAULT_OMEGA, assemble_subproblem, eval_K
from .statespace import StateSpaceModel, as_blocks, evaluate
from .subproblem import solve_subproblem

__all__ = [
    "Status",
    "GgnConfig",
    "GgnIteration",
    "SmootherSolution",
    "smooth",
    "dead_reckon",
    "shrink_into_domain",
]

log = logging.getLogger(__name__)

MIN_STEP = 2.0 ** -52


class Status(enum.Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    LINE_SEARCH_STALLED = "line_search_stalled"


@dataclass(frozen=True)
class GgnConfig:
    """Solver parameters.

    ``epsilon=None`` means ``1e-8 * (1 + |K(x)|)`` evaluated at the current
    iterate; ``inner_tol=None`` uses the subproblem's own relative default.
    """

    epsilon: Optional[float] = None
    omega: float = DEFAULT_OMEGA
    beta: float = 1e-4
    gamma: float = 0.5
    max_outer: int = 100
    inner_tol: Optional[float] = None
    max_inner: int = 50

    def __post_init__(self):
        if self.epsilon is not None and not self.epsilon >= 0.0:
            raise ValueError("epsilon must be >= 0")
        if not self.omega > 0.0:
            raise ValueError("omega must be > 0")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.max_outer < 0 or self.max_inner < 1:
            raise ValueError("iteration limits must be non-negative")


@dataclass(frozen=True)
class GgnIteration:
    """One accepted outer step; ``K`` is the objective before the step."""

    K: float
    delta: float
    step: float
    trials: int
    inner_iters: int
    kkt_residual: float
    min_vdiag: float


@dataclass
class SmootherSolution:
    x: np.ndarray
    status: Status
    trace: list = field(default_factory=list)
    delta: float = 0.0
    K: float = np.inf

    @property
    def x_flat(self) -> np.ndarray:
        return self.x.reshape(-1)

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED

    @property
    def iterations(self) -> int:
        return len(self.trace)


def smooth(model: StateSpaceModel, x0, cfg: Optional[GgnConfig] = None) -> SmootherSolution:
    """Minimize the extended MAP objective starting from ``x0``.

    ``x0`` must satisfy ``diag(V(x0)) > 0``.  The returned state sequence has
    shape ``(N, n)``.
    """
    cfg = cfg or GgnConfig()
    x = as_blocks(model, x0).copy()
    cur = eval_K(model, x)
    if not cur.in_domain:
        raise InfeasibleStart("initial state sequence is outside the domain of K")

    trace = []
    delta = 0.0
    for _ in range(cfg.max_outer + 1):
        data = assemble_subproblem(model, x, cfg.omega)
        sub = solve_subproblem(data, tol=cfg.inner_tol, max_inner=cfg.max_inner)
        delta = sub.delta
        eps = cfg.epsilon if cfg.epsilon is not None else 1e-8 * (1.0 + abs(cur.K))
        if delta >= -eps:
            return SmootherSolution(x=x, status=Status.CONVERGED, trace=trace, delta=delta, K=cur.K)
        if len(trace) == cfg.max_outer:
            break

        d = sub.d.reshape(x.shape)
        t, trials = 1.0, 1
        while True:
            trial = eval_K(model, x + t * d)
            if trial.in_domain and trial.K <= cur.K + cfg.beta * t * delta:
                break
            t *= cfg.gamma
            trials += 1
            if t < MIN_STEP:
                log.warning("line search stalled at K=%.6e, delta=%.3e", cur.K, delta)
                return SmootherSolution(
                    x=x, status=Status.LINE_SEARCH_STALLED, trace=trace, delta=delta, K=cur.K
                )
        trace.append(
            GgnIteration(
                K=cur.K,
                delta=delta,
                step=t,
                trials=trials,
                inner_iters=sub.inner_iters,
                kkt_residual=sub.kkt_residual,
                min_vdiag=float(data.vdiag.min()),
            )
        )
        x = x + t * d
        cur = trial
        log.debug("iter %d: K=%.10e delta=%.3e t=%g", len(trace), cur.K, delta, t)

    return SmootherSolution(x=x, status=Status.MAX_ITERATIONS, trace=trace, delta=delta, K=cur.K)


def dead_reckon(model: StateSpaceModel) -> np.ndarray:
    """Propagate the prior mean through the process model: ``x_k = g_k(x_{k-1})``."""
    X = np.empty((model.N, model.n))
    X[0] = model.g0
    for k in range(1, model.N):
        X[k] = np.asarray(model.g(k, X[k - 1]), dtype=float).reshape(-1)
    return X


def shrink_into_domain(model: StateSpaceModel, x, interior, max_halvings: int = 60) -> np.ndarray:
    """Move ``x`` toward ``interior`` until every diagonal entry of ``V`` is positive.

    ``interior`` is a single state (applied to every step) or a full
    sequence that must itself lie in the domain.
    """
    X = as_blocks(model, x)
    P = np.broadcast_to(np.asarray(interior, dtype=float), X.shape)
    theta = 1.0
    for _ in range(max_halvings):
        cand = P + theta * (X - P)
        if np.all(evaluate(model, cand).vdiag() > 0.0):
            return cand
        theta *= 0.5
    if np.all(evaluate(model, P).vdiag() > 0.0):
        return np.array(P)
    raise InfeasibleStart("interior point is not in the domain of K")
