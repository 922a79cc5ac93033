"""MAP Kalman smoothing with state-dependent noise covariances.

A generalized Gauss-Newton method minimizes the extended MAP objective; each
direction comes from a convex log-barrier subproblem solved by damped Newton
iteration on its KKT system, with all linear algebra kept block tridiagonal.
"""

from .blocktri import BlockTridiagonalMatrix, BlockTriFactorization, factor, solve
from .classic import LinearGaussianModel, kalman_filter, rts_smooth
from .errors import (
    DimensionMismatch,
    InfeasibleStart,
    LinearizedDomainViolation,
    NotPositiveDefinite,
    OutOfDomain,
    SmootherError,
)
from .ggn import GgnConfig, SmootherSolution, Status, dead_reckon, shrink_into_domain, smooth
from .objective import ObjectiveEval, SubproblemData, assemble_subproblem, eval_K, grad_K
from .statespace import StateSpaceModel, factor_V, jacobian_c, residual_c
from .subproblem import KktTriple, SubproblemResult, model_decrease, solve_subproblem

__version__ = "0.1.0"
