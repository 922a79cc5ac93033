import math

import numpy as np
import pytest
from helpers import (
    central_gradient,
    central_jacobian,
    dense_K,
    dense_subproblem,
    random_linear_gaussian,
    random_model,
)

from sdsmoother.blocktri import factor
from sdsmoother.classic import rts_smooth
from sdsmoother.errors import OutOfDomain
from sdsmoother.experiment import ExperimentConfig, build_tracking_model
from sdsmoother.objective import assemble_subproblem, eval_K, grad_K
from sdsmoother.statespace import StateSpaceModel, factor_V, residual_c


def barrier_scalar_model():
    return StateSpaceModel(
        N=1, n=1,
        g=None, G=None,
        h=lambda k, x: x, H=lambda k, x: np.eye(1),
        qfac=lambda k, x: np.eye(1), qfac_deriv=lambda k, x: np.zeros((1, 1, 1)),
        rfac=lambda k, x: np.array([[3.0 - x[0]]]), rfac_deriv=lambda k, x: -np.ones((1, 1, 1)),
        g0=[0.0], z=[[0.0]],
    )


def identity_model(N, n):
    return StateSpaceModel(
        N=N, n=n,
        g=lambda k, x: np.zeros(n), G=lambda k, x: np.zeros((n, n)),
        h=lambda k, x: x, H=lambda k, x: np.eye(n),
        qfac=lambda k, x: np.eye(n), qfac_deriv=lambda k, x: np.zeros((n, n, n)),
        rfac=lambda k, x: np.eye(n), rfac_deriv=lambda k, x: np.zeros((n, n, n)),
        g0=np.zeros(n), z=np.zeros((N, n)),
    )


def test_scalar_objective_by_hand():
    ev = eval_K(barrier_scalar_model(), [1.0])
    assert ev.quad == pytest.approx(2.5, abs=1e-15)
    assert ev.barrier == pytest.approx(-math.log(2.0), abs=1e-15)
    assert ev.K == pytest.approx(1.80685281944005, abs=1e-12)
    assert ev.in_domain


def test_zero_residual_identity_factors():
    ev = eval_K(identity_model(3, 2), np.zeros(6))
    assert ev.K == 0.0


def test_out_of_domain_is_infinite():
    model = build_tracking_model(ExperimentConfig(N=5), np.zeros(5))
    x = np.zeros((5, 2))
    x[2, 0] = 3.0
    ev = eval_K(model, x)
    assert not ev.in_domain and ev.K == math.inf
    with pytest.raises(OutOfDomain):
        grad_K(model, x)
    with pytest.raises(OutOfDomain):
        assemble_subproblem(model, x)


@pytest.mark.parametrize("seed", range(20))
def test_objective_matches_dense_evaluation(seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng, N=int(rng.integers(1, 5)), n=int(rng.integers(1, 4)))
    x = rng.normal(size=model.N * model.n)
    assert eval_K(model, x).K == pytest.approx(dense_K(model, x), rel=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(1000 + seed)
    model = random_model(rng, N=int(rng.integers(1, 8)), n=int(rng.integers(1, 4)))
    x = rng.normal(size=model.N * model.n)
    g = grad_K(model, x)
    fd = central_gradient(lambda y: eval_K(model, y).K, x)
    assert np.linalg.norm(fd - g) <= 1e-5 * max(np.linalg.norm(g), 1.0)


def test_state_independent_gradient_is_weighted_least_squares():
    rng = np.random.default_rng(3)
    lg = random_linear_gaussian(rng, N=6, n=2, m=1)
    z = rng.normal(size=(6, 1))
    model = lg.to_state_space(z)
    x = rng.normal(size=12)
    # classic gradient: Jc^T W c with W = blockdiag(Q^-1, R^-1)
    data = assemble_subproblem(model, x)
    np.testing.assert_array_equal(data.vdiag > 0, True)
    np.testing.assert_array_equal(data.vpad, 0.0)
    c = residual_c(model, x)
    V = factor_V(model, x).to_dense()
    from sdsmoother.statespace import jacobian_c

    J = jacobian_c(model, x).to_dense()
    np.testing.assert_allclose(grad_K(model, x), J.T @ V.T @ V @ c, rtol=1e-11, atol=1e-11)


def test_gradient_vanishes_at_rts_solution():
    rng = np.random.default_rng(4)
    lg = random_linear_gaussian(rng, N=30, n=2, m=1)
    z = rng.normal(size=(30, 1))
    xs, _ = rts_smooth(lg, z)
    assert np.max(np.abs(grad_K(lg.to_state_space(z), xs))) <= 1e-8


def test_identity_assembly_blocks():
    data = assemble_subproblem(identity_model(4, 2), np.ones(8), omega=0.1)
    np.testing.assert_allclose(data.C.diag, np.repeat(2.1 * np.eye(2)[None], 4, axis=0), atol=1e-15)
    np.testing.assert_array_equal(data.C.sub, 0.0)


@pytest.mark.parametrize("seed", range(15))
def test_assembly_matches_dense_kronecker_form(seed):
    rng = np.random.default_rng(2000 + seed)
    n = int(rng.integers(1, 4))
    N = int(rng.integers(1, 12 // n + 1))
    model = random_model(rng, N=N, n=n)
    x = rng.normal(size=N * n)
    omega = 10.0 ** rng.uniform(-6, 0)
    C, a, Vs, _ = dense_subproblem(model, x, omega)
    data = assemble_subproblem(model, x, omega)
    scale = max(np.abs(C).max(), 1.0)
    np.testing.assert_allclose(data.C.to_dense(), C, rtol=0, atol=1e-10 * scale)
    np.testing.assert_allclose(data.a, a, rtol=0, atol=1e-10 * max(np.abs(a).max(), 1.0))
    np.testing.assert_allclose(data.vscript_dense(), Vs, rtol=0, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_dense_psi_is_jacobian_of_weighted_residual(seed):
    rng = np.random.default_rng(3000 + seed)
    model = random_model(rng, N=3, n=2)
    x = rng.normal(size=6)
    *_, Psi = dense_subproblem(model, x, 1.0)

    def F1(y):
        return factor_V(model, y).to_dense() @ residual_c(model, y)

    fd = central_jacobian(F1, x)
    assert np.linalg.norm(fd - Psi) <= 1e-6 * np.linalg.norm(Psi)


def test_constant_factors_reduce_to_normal_equations():
    rng = np.random.default_rng(6)
    lg = random_linear_gaussian(rng, N=5, n=2, m=2)
    z = rng.normal(size=(5, 2))
    model = lg.to_state_space(z)
    x = rng.normal(size=10)
    from sdsmoother.statespace import jacobian_c

    J = jacobian_c(model, x).to_dense()
    V = factor_V(model, x).to_dense()
    data = assemble_subproblem(model, x, omega=0.5)
    np.testing.assert_allclose(data.C.to_dense(), 0.5 * np.eye(10) + J.T @ V.T @ V @ J, atol=1e-10)


@pytest.mark.parametrize("seed", range(10))
def test_assembled_C_is_positive_definite(seed):
    rng = np.random.default_rng(4000 + seed)
    model = random_model(rng, N=8, n=3)
    data = assemble_subproblem(model, rng.normal(size=24), omega=1e-8)
    F = factor(data.C)
    assert np.all(np.linalg.eigvalsh(F.schur) > 0)
    dense = data.C.to_dense()
    np.testing.assert_array_equal(dense, dense.T)


def test_constant_covariance_objective_differs_by_constant():
    rng = np.random.default_rng(8)
    lg = random_linear_gaussian(rng, N=6, n=2, m=1)
    z = rng.normal(size=(6, 1))
    model = lg.to_state_space(z)

    def neg_log_posterior(x):
        X = x.reshape(6, 2)
        total = 0.0
        for k in range(6):
            mean = lg.g0 if k == 0 else lg.F[k] @ X[k - 1]
            w = X[k] - mean
            v = z[k] - lg.H[k] @ X[k]
            total += 0.5 * w @ np.linalg.solve(lg.Q[k], w) + 0.5 * v @ np.linalg.solve(lg.R[k], v)
        return total

    offsets = []
    for _ in range(4):
        x = rng.normal(size=12) * 3
        offsets.append(eval_K(model, x).K - neg_log_posterior(x))
    np.testing.assert_allclose(offsets, offsets[0], atol=1e-10)
