"""Pure numpy implementations of the hot loops.

These mirror the compiled versions in ``_ckernels.pyx`` call for call and
produce bit-identical random streams, so either backend can be swapped in
without changing seeded results beyond libm rounding.
"""

import numpy as np

TWO_PI = 2.0 * np.pi
_XS_MULT = np.uint64(2685821657736338717)
_LOW_BIT_SCALE = 2.0 ** -53 * 2.0 ** -52


def _xorshift_next(state):
    # xorshift64*; state is updated in place, returns uniform [0, 1)
    state ^= state >> np.uint64(12)
    state ^= state << np.uint64(25)
    state ^= state >> np.uint64(27)
    out = state * _XS_MULT
    return (out >> np.uint64(11)).astype(np.float64)


def _skew_step(X, lam_c, warp, refresh, rng_state):
    th = X[:, 0]
    c = np.cos(TWO_PI * th)
    s = np.sin(TWO_PI * th)
    if warp != 0.0:
        nt = 2.0 * th + (warp / TWO_PI) * s
    else:
        nt = 2.0 * th
    nt = nt - np.floor(nt)
    if refresh:
        nt = nt + _xorshift_next(rng_state) * _LOW_BIT_SCALE
        nt = np.where(nt >= 1.0, nt - 1.0, nt)
    X[:, 1] = lam_c * X[:, 1] + 0.5 * c
    X[:, 2] = lam_c * X[:, 2] + 0.5 * s
    X[:, 0] = nt


def skew_advance(X, n, lam_c, warp, refresh, rng_state):
    """Advance a batch of solenoid-family points ``n`` steps in place."""
    with np.errstate(over="ignore"):
        for _ in range(n):
            _skew_step(X, lam_c, warp, refresh, rng_state)


def skew_birkhoff(X, n, lam_c, warp, refresh, rng_state, K, phase):
    """Sum cos(2π K·x + phase) along n steps; X is advanced in place."""
    sums = np.zeros((X.shape[0], K.shape[0]))
    with np.errstate(over="ignore"):
        for _ in range(n):
            sums += np.cos(TWO_PI * (X @ K.T) + phase)
            _skew_step(X, lam_c, warp, refresh, rng_state)
    return sums


def _cat_step(X, c):
    x = X[:, 0]
    y = X[:, 1]
    nx = 2.0 * x + y
    ny = x + y
    X[:, 0] = nx - np.floor(nx)
    X[:, 1] = ny - np.floor(ny)
    X[:, 2] = c * X[:, 2]


def cat_advance(X, n, c):
    """Advance a batch of fat-cat points ``n`` steps in place."""
    for _ in range(n):
        _cat_step(X, c)


def cat_birkhoff(X, n, c, K, phase):
    sums = np.zeros((X.shape[0], K.shape[0]))
    for _ in range(n):
        sums += np.cos(TWO_PI * (X @ K.T) + phase)
        _cat_step(X, c)
    return sums


def _galerkin_rhs(a, S, lin, scale):
    u = S @ a
    return lin * a - scale * (S.T @ (u * u * u)), u


def galerkin_flow(a0, T, dt, lam, with_jac):
    """RK4 time-T map of the sine-Galerkin reaction-diffusion system.

    Returns the final coefficients and, when ``with_jac`` is set, the
    derivative of the flow map obtained from the variational equation.
    """
    a = np.array(a0, dtype=float)
    N = a.size
    M = 4 * N - 1
    x = np.arange(1, M + 1) * np.pi / (M + 1)
    S = np.sin(np.outer(x, np.arange(1, N + 1)))
    lin = lam - np.arange(1, N + 1, dtype=float) ** 2
    scale = 2.0 / (M + 1)
    steps = int(round(T / dt))
    V = np.eye(N) if with_jac else None

    def jac_times(u, W):
        return lin[:, None] * W - scale * (S.T @ ((3.0 * u * u)[:, None] * (S @ W)))

    for _ in range(steps):
        k1, u1 = _galerkin_rhs(a, S, lin, scale)
        a2 = a + 0.5 * dt * k1
        k2, u2 = _galerkin_rhs(a2, S, lin, scale)
        a3 = a + 0.5 * dt * k2
        k3, u3 = _galerkin_rhs(a3, S, lin, scale)
        a4 = a + dt * k3
        k4, u4 = _galerkin_rhs(a4, S, lin, scale)
        if with_jac:
            K1 = jac_times(u1, V)
            K2 = jac_times(u2, V + 0.5 * dt * K1)
            K3 = jac_times(u3, V + 0.5 * dt * K2)
            K4 = jac_times(u4, V + dt * K3)
            V = V + (dt / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
        a = a + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return a, V
