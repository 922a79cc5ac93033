"""Random model generators and independent dense oracles shared by the tests."""

import numpy as np

from sdsmoother.statespace import StateSpaceModel, evaluate


def random_factor_fn(rng, size, n, amp):
    """Lower-triangular factor ``L0 + amp * sin(U x + phi)`` with analytic derivative."""
    L0 = np.tril(0.3 * rng.normal(size=(size, size)), -1) + np.diag(rng.uniform(1.0, 2.0, size))
    U = rng.normal(size=(size, size, n))
    phi = rng.uniform(0, 2 * np.pi, size=(size, size))
    low = np.tril(np.ones((size, size)))

    def fac(k, x):
        return L0 + amp * low * np.sin(U @ x + phi)

    def dfac(k, x):
        return (amp * low * np.cos(U @ x + phi))[:, :, None] * U

    return fac, dfac


def random_model(rng, N, n, m=None, amp=0.3, nonlinear=0.2):
    """Smooth nonlinear model; the factor diagonals stay above ``1 - amp``."""
    ms = [m if m is not None else int(rng.integers(1, n + 1)) for _ in range(N)]
    A = [np.eye(n) + 0.3 * rng.normal(size=(n, n)) for _ in range(N)]
    Bg = [rng.normal(size=(n, n)) for _ in range(N)]
    Hm = [rng.normal(size=(mk, n)) for mk in ms]
    Ch = [rng.normal(size=(mk, n)) for mk in ms]
    qf = [random_factor_fn(rng, n, n, amp) for _ in range(N)]
    rf = [random_factor_fn(rng, mk, n, amp) for mk in ms]
    s = nonlinear

    return StateSpaceModel(
        N=N,
        n=n,
        g=lambda k, x: A[k] @ x + s * np.sin(Bg[k] @ x),
        G=lambda k, x: A[k] + s * np.cos(Bg[k] @ x)[:, None] * Bg[k],
        h=lambda k, x: Hm[k] @ x + s * np.tanh(Ch[k] @ x),
        H=lambda k, x: Hm[k] + s * (1 - np.tanh(Ch[k] @ x) ** 2)[:, None] * Ch[k],
        qfac=lambda k, x: qf[k][0](k, x),
        qfac_deriv=lambda k, x: qf[k][1](k, x),
        rfac=lambda k, x: rf[k][0](k, x),
        rfac_deriv=lambda k, x: rf[k][1](k, x),
        g0=rng.normal(size=n),
        z=[rng.normal(size=mk) for mk in ms],
    )


def random_linear_gaussian(rng, N, n, m):
    from sdsmoother.classic import LinearGaussianModel

    def spd(size):
        B = rng.normal(size=(size, size))
        return B @ B.T / size + 0.5 * np.eye(size)

    return LinearGaussianModel(
        F=np.stack([np.eye(n) + 0.2 * rng.normal(size=(n, n)) for _ in range(N)]),
        Q=np.stack([spd(n) for _ in range(N)]),
        H=[rng.normal(size=(m, n)) for _ in range(N)],
        R=[spd(m) for _ in range(N)],
        g0=rng.normal(size=n),
    )


def central_gradient(f, x, step=1e-6):
    x = np.asarray(x, dtype=float).reshape(-1)
    g = np.empty_like(x)
    for i in range(x.size):
        h = step * (1 + abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def central_jacobian(f, x, step=1e-6):
    x = np.asarray(x, dtype=float).reshape(-1)
    cols = []
    for i in range(x.size):
        h = step * (1 + abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        cols.append((np.asarray(f(xp)) - np.asarray(f(xm))) / (2 * h))
    return np.stack(cols, axis=-1)


def dense_pieces(model, x):
    """Dense ``c``, ``V``, ``dc/dx`` and the full derivative tensor of ``V``.

    Built entry by entry from the callbacks, independent of the block
    assembly in the package.
    """
    N, n = model.N, model.n
    X = np.asarray(x, dtype=float).reshape(N, n)
    rows = model.nrows
    c = np.zeros(rows)
    V = np.zeros((rows, rows))
    Jc = np.zeros((rows, N * n))
    dV = np.zeros((rows, rows, N * n))
    for k in range(N):
        p, q = model.row_slices(k)
        cols = slice(k * n, (k + 1) * n)
        prev = model.g0 if k == 0 else model.g(k, X[k - 1])
        c[p] = X[k] - prev
        c[q] = model.h(k, X[k]) - model.z[k]
        V[p, p] = model.qfac(k, X[k])
        V[q, q] = model.rfac(k, X[k])
        Jc[p, cols] = np.eye(n)
        Jc[q, cols] = model.H(k, X[k])
        if k > 0:
            Jc[p, (k - 1) * n:k * n] = -model.G(k, X[k - 1])
        dV[p, p, cols] = model.qfac_deriv(k, X[k])
        dV[q, q, cols] = model.rfac_deriv(k, X[k])
    return c, V, Jc, dV


def dense_subproblem(model, x, omega):
    """Dense ``(C, a, Vscript, Psi)`` from the Kronecker form of the linearization."""
    c, V, Jc, dV = dense_pieces(model, x)
    # (c^T kron I) dV: derivative of V(x) c with c held fixed
    kron = np.einsum("ijl,j->il", dV, c)
    Psi = V @ Jc + kron
    C = omega * np.eye(Psi.shape[1]) + Psi.T @ Psi
    a = Psi.T @ (V @ c)
    idx = np.arange(V.shape[0])
    Vs = dV[idx, idx, :]
    return C, a, Vs, Psi


def dense_K(model, x):
    c, V, _, _ = dense_pieces(model, x)
    d = np.diag(V)
    if np.any(d <= 0):
        return np.inf
    return 0.5 * np.sum((V @ c) ** 2) - np.sum(np.log(d))


def random_interior_x(rng, model, scale=1.0):
    x = scale * rng.normal(size=(model.N, model.n))
    assert np.all(evaluate(model, x).vdiag() > 0)
    return x
