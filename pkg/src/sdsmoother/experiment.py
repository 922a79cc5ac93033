"""Synthetic tracking experiment with state-dependent measurement noise.

The true trajectory is ``x(t) = (1 - 2 cos t, t - 2 sin t)`` sampled on a
closed uniform grid over ``t_span``.  The process model is a discretized
integrator with the matching process covariance; the second component is
measured with variance ``(3 - x_1)^{-2}``, which blows up wherever the first
component approaches 3.

Randomness comes from NumPy's PCG64 bit generator seeded with ``seed``; its
uniform doubles are turned into normals by the Marsaglia polar method
(rejection to the unit disk, two normals per accepted pair), so a seed gives
the same data on every platform.
"""

from __future__ import annotations

import gc
import io
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .classic import LinearGaussianModel, inverse_cholesky, kalman_filter, rts_smooth
from .ggn import GgnConfig, SmootherSolution, dead_reckon, shrink_into_domain, smooth
from .objective import DEFAULT_OMEGA
from .statespace import StateSpaceModel, evaluate

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "truth",
    "time_grid",
    "gaussian_noise",
    "simulate",
    "process_covariance",
    "transition_matrix",
    "build_tracking_model",
    "baseline_model",
    "run_experiment",
    "initial_iterate",
    "bench",
]

BASELINE_MODES = ("median", "fixed", "oracle")
CSV_HEADER = "k,t,truth_x1,truth_x2,z,kf_x1,kf_x2,rts_x1,rts_x2,eks_x1,eks_x2"


@dataclass(frozen=True)
class ExperimentConfig:
    """Experiment settings.

    ``baseline`` selects the constant measurement variance given to the
    classic filter and smoother: ``"median"`` uses the median of the true
    per-step variances, ``"fixed"`` uses ``baseline_value`` and ``"oracle"``
    hands them the true per-step variances.  ``epsilon=None`` keeps the
    solver's relative default.
    """

    N: int = 100
    t_span: tuple = (0.0, 4.0 * math.pi)
    seed: int = 0
    omega: float = DEFAULT_OMEGA
    epsilon: Optional[float] = None
    beta: float = 1e-4
    gamma: float = 0.5
    max_outer: int = 100
    baseline: str = "median"
    baseline_value: Optional[float] = None
    noise_scale: float = 1.0
    output_path: Optional[str] = None

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be at least 2")
        if not self.t_span[1] > self.t_span[0]:
            raise ValueError("t_span must be increasing")
        if self.baseline not in BASELINE_MODES:
            raise ValueError(f"baseline must be one of {BASELINE_MODES}")
        if self.baseline == "fixed" and not (self.baseline_value and self.baseline_value > 0):
            raise ValueError("baseline 'fixed' needs a positive baseline_value")

    @property
    def dt(self) -> float:
        return (self.t_span[1] - self.t_span[0]) / (self.N - 1)

    def solver_config(self) -> GgnConfig:
        return GgnConfig(
            epsilon=self.epsilon, omega=self.omega, beta=self.beta, gamma=self.gamma, max_outer=self.max_outer
        )


def truth(t) -> np.ndarray:
    """True states at times ``t``, shape ``(len(t), 2)``."""
    t = np.asarray(t, dtype=float)
    return np.stack([1.0 - 2.0 * np.cos(t), t - 2.0 * np.sin(t)], axis=-1)


def time_grid(cfg: ExperimentConfig) -> np.ndarray:
    return np.linspace(cfg.t_span[0], cfg.t_span[1], cfg.N)


def gaussian_noise(seed: int, size: int) -> np.ndarray:
    """Standard normals from PCG64 uniforms via the Marsaglia polar method.

    Uniform pairs are drawn in order; pairs falling outside the open unit
    disk (or at its center) are rejected, and each accepted pair yields two
    normals.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    pairs = (size + 1) // 2
    accepted = []
    have = 0
    while have < pairs:
        u = 2.0 * rng.random((max(16, 2 * (pairs - have)), 2)) - 1.0
        r2 = np.sum(u * u, axis=1)
        keep = (r2 > 0.0) & (r2 < 1.0)
        u, r2 = u[keep], r2[keep]
        accepted.append(u * np.sqrt(-2.0 * np.log(r2) / r2)[:, None])
        have += u.shape[0]
    return np.concatenate(accepted)[:pairs].reshape(-1)[:size]


def measurement_std(x1) -> np.ndarray:
    return 1.0 / np.abs(3.0 - np.asarray(x1, dtype=float))


def simulate(cfg: ExperimentConfig):
    """Return ``(t, states, z)`` with ``z_k = x_{2,k} + v_k``, ``v_k ~ N(0, (3 - x_{1,k})^{-2})``."""
    t = time_grid(cfg)
    states = truth(t)
    if np.min(np.abs(3.0 - states[:, 0])) < 1e-9:
        raise ValueError("a grid point hits x1 = 3, where the measurement variance is infinite")
    noise = gaussian_noise(cfg.seed, cfg.N)
    z = states[:, 1] + cfg.noise_scale * measurement_std(states[:, 0]) * noise
    return t, states, z


def transition_matrix(dt: float) -> np.ndarray:
    return np.array([[1.0, 0.0], [dt, 1.0]])


def process_covariance(dt: float) -> np.ndarray:
    return np.array([[dt, dt ** 2 / 2.0], [dt ** 2 / 2.0, dt ** 3 / 3.0]])


_H = np.array([[0.0, 1.0]])
_ZERO_DQ = np.zeros((2, 2, 2))
_DR = np.array([[[-1.0, 0.0]]])


def build_tracking_model(cfg: ExperimentConfig, z, prior_mean=(-1.0, 0.0)) -> StateSpaceModel:
    """State-space model with ``R_k^{-1/2}(x_k) = 3 - x_{1,k}``.

    The prior on ``x_0`` is centered at ``prior_mean`` with the common
    process covariance.
    """
    F = transition_matrix(cfg.dt)
    qf = inverse_cholesky(process_covariance(cfg.dt))
    return StateSpaceModel(
        N=cfg.N,
        n=2,
        g=lambda k, x: F @ x,
        G=lambda k, x: F,
        h=lambda k, x: x[1:2],
        H=lambda k, x: _H,
        qfac=lambda k, x: qf,
        rfac=lambda k, x: np.array([[3.0 - x[0]]]),
        qfac_deriv=lambda k, x: _ZERO_DQ,
        rfac_deriv=lambda k, x: _DR,
        g0=np.asarray(prior_mean, dtype=float),
        z=np.asarray(z, dtype=float).reshape(-1, 1),
    )


def baseline_variances(cfg: ExperimentConfig, states) -> np.ndarray:
    true_var = measurement_std(states[:, 0]) ** 2 * cfg.noise_scale ** 2
    if cfg.baseline == "oracle":
        return true_var
    if cfg.baseline == "fixed":
        return np.full(cfg.N, float(cfg.baseline_value))
    return np.full(cfg.N, float(np.median(true_var)))


def baseline_model(cfg: ExperimentConfig, variances, prior_mean=(-1.0, 0.0)) -> LinearGaussianModel:
    N = cfg.N
    return LinearGaussianModel(
        F=np.repeat(transition_matrix(cfg.dt)[None], N, axis=0),
        Q=np.repeat(process_covariance(cfg.dt)[None], N, axis=0),
        H=[_H] * N,
        R=[np.array([[v]]) for v in variances],
        g0=np.asarray(prior_mean, dtype=float),
    )


def initial_iterate(model: StateSpaceModel) -> np.ndarray:
    x0 = dead_reckon(model)
    if np.all(evaluate(model, x0).vdiag() > 0.0):
        return x0
    return shrink_into_domain(model, x0, np.zeros(model.n))


@dataclass
class ExperimentResult:
    t: np.ndarray
    truth: np.ndarray
    z: np.ndarray
    kf: np.ndarray
    rts: np.ndarray
    eks: np.ndarray
    solution: SmootherSolution
    baseline_variance: np.ndarray
    mse: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.t.size

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        for k in range(self.N):
            row = [self.t[k], *self.truth[k], self.z[k], *self.kf[k], *self.rts[k], *self.eks[k]]
            buf.write(str(k) + "," + ",".join(f"{v:.17g}" for v in row) + "\n")
        for name, (m1, m2) in self.mse.items():
            buf.write(f"# mse {name} x1={m1:.17g} x2={m2:.17g}\n")
        sol = self.solution
        buf.write(f"# eks status={sol.status.value} iterations={sol.iterations} K={sol.K:.17g}\n")
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def mse(estimate, states) -> tuple:
    err = np.mean((np.asarray(estimate) - states) ** 2, axis=0)
    return float(err[0]), float(err[1])


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Simulate data, run the three estimators and compute their errors."""
    t, states, z = simulate(cfg)
    model = build_tracking_model(cfg, z)
    sol = smooth(model, initial_iterate(model), cfg.solver_config())

    variances = baseline_variances(cfg, states)
    base = baseline_model(cfg, variances)
    kf, _, _, _ = kalman_filter(base, z[:, None])
    rts, _ = rts_smooth(base, z[:, None])

    result = ExperimentResult(
        t=t, truth=states, z=z, kf=kf, rts=rts, eks=sol.x, solution=sol, baseline_variance=variances
    )
    result.mse = {"kf": mse(kf, states), "rts": mse(rts, states), "eks": mse(sol.x, states)}
    if cfg.output_path:
        result.write_csv(cfg.output_path)
    return result


@dataclass(frozen=True)
class BenchRow:
    N: int
    outer_iters: int
    inner_iters: int
    seconds: float
    status: str

    @property
    def per_outer(self) -> float:
        # every outer iteration, including the final converged one, solves a subproblem
        return self.seconds / (self.outer_iters + 1)


def bench(sizes, seed: int = 0, repeats: int = 1, omega: float = DEFAULT_OMEGA):
    """Time the extended smoother on the synthetic problem for each ``N`` in ``sizes``.

    The reported time per outer iteration is the minimum over ``repeats`` runs.
    A small warm-up solve runs first so compilation is not timed, and garbage
    collection is paused while a solve is timed.
    """
    warm = ExperimentConfig(N=10, seed=seed)
    warm_model = build_tracking_model(warm, simulate(warm)[2])
    smooth(warm_model, initial_iterate(warm_model), warm.solver_config())
    problems = []
    for N in sizes:
        cfg = ExperimentConfig(N=int(N), seed=seed, omega=omega)
        model = build_tracking_model(cfg, simulate(cfg)[2])
        problems.append((cfg, model, initial_iterate(model)))
    best = [None] * len(problems)
    # sizes are interleaved within each round so slow drift in machine load
    # affects every size alike
    for _ in range(repeats):
        for i, (cfg, model, x0) in enumerate(problems):
            gc_was_enabled = gc.isenabled()
            gc.disable()  # like timeit, keep collection out of the timed region
            try:
                start = time.perf_counter()
                sol = smooth(model, x0, cfg.solver_config())
                elapsed = time.perf_counter() - start
            finally:
                if gc_was_enabled:
                    gc.enable()
            row = BenchRow(
                N=cfg.N,
                outer_iters=sol.iterations,
                inner_iters=sum(it.inner_iters for it in sol.trace),
                seconds=elapsed,
                status=sol.status.value,
            )
            if best[i] is None or row.per_outer < best[i].per_outer:
                best[i] = row
    rows = best
    return rows
