# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot loops. Signatures match ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, floor, M_PI
from libc.stdint cimport uint64_t

cnp.import_array()

cdef double TWO_PI = 2.0 * M_PI
cdef double LOW_BIT_SCALE = 2.0 ** -53 * 2.0 ** -52


cdef inline double _xs_next(uint64_t* s) noexcept nogil:
    cdef uint64_t x = s[0]
    x ^= x >> 12
    x ^= x << 25
    x ^= x >> 27
    s[0] = x
    return <double>((x * 2685821657736338717ULL) >> 11)


cdef inline void _skew_one(double* p, double lam_c, double warp, bint refresh,
                           uint64_t* st) noexcept nogil:
    cdef double th = p[0]
    cdef double c = cos(TWO_PI * th)
    cdef double s = sin(TWO_PI * th)
    cdef double nt
    if warp != 0.0:
        nt = 2.0 * th + (warp / TWO_PI) * s
    else:
        nt = 2.0 * th
    nt = nt - floor(nt)
    if refresh:
        nt = nt + _xs_next(st) * LOW_BIT_SCALE
        if nt >= 1.0:
            nt = nt - 1.0
    p[1] = lam_c * p[1] + 0.5 * c
    p[2] = lam_c * p[2] + 0.5 * s
    p[0] = nt


def skew_advance(double[:, ::1] X, Py_ssize_t n, double lam_c, double warp,
                 bint refresh, uint64_t[::1] rng_state):
    cdef Py_ssize_t i, k, m = X.shape[0]
    cdef uint64_t dummy = 1
    with nogil:
        for i in range(m):
            for k in range(n):
                if refresh:
                    _skew_one(&X[i, 0], lam_c, warp, refresh, &rng_state[i])
                else:
                    _skew_one(&X[i, 0], lam_c, warp, refresh, &dummy)


def skew_birkhoff(double[:, ::1] X, Py_ssize_t n, double lam_c, double warp,
                  bint refresh, uint64_t[::1] rng_state,
                  double[:, ::1] K, double[::1] phase):
    cdef Py_ssize_t i, k, f, m = X.shape[0], nf = K.shape[0]
    cdef uint64_t dummy = 1
    cdef uint64_t* st
    sums_arr = np.zeros((m, nf))
    cdef double[:, ::1] sums = sums_arr
    with nogil:
        for i in range(m):
            st = &rng_state[i] if refresh else &dummy
            for k in range(n):
                for f in range(nf):
                    sums[i, f] += cos(TWO_PI * (K[f, 0] * X[i, 0] + K[f, 1] * X[i, 1]
                                                + K[f, 2] * X[i, 2]) + phase[f])
                _skew_one(&X[i, 0], lam_c, warp, refresh, st)
    return sums_arr


cdef inline void _cat_one(double* p, double c) noexcept nogil:
    cdef double nx = 2.0 * p[0] + p[1]
    cdef double ny = p[0] + p[1]
    p[0] = nx - floor(nx)
    p[1] = ny - floor(ny)
    p[2] = c * p[2]


def cat_advance(double[:, ::1] X, Py_ssize_t n, double c):
    cdef Py_ssize_t i, k, m = X.shape[0]
    with nogil:
        for i in range(m):
            for k in range(n):
                _cat_one(&X[i, 0], c)


def cat_birkhoff(double[:, ::1] X, Py_ssize_t n, double c,
                 double[:, ::1] K, double[::1] phase):
    cdef Py_ssize_t i, k, f, m = X.shape[0], nf = K.shape[0]
    sums_arr = np.zeros((m, nf))
    cdef double[:, ::1] sums = sums_arr
    with nogil:
        for i in range(m):
            for k in range(n):
                for f in range(nf):
                    sums[i, f] += cos(TWO_PI * (K[f, 0] * X[i, 0] + K[f, 1] * X[i, 1]
                                                + K[f, 2] * X[i, 2]) + phase[f])
                _cat_one(&X[i, 0], c)
    return sums_arr


cdef void _gal_rhs(double[::1] a, double[:, ::1] S, double[::1] lin, double scale,
                   double[::1] out, double[::1] u) noexcept nogil:
    cdef Py_ssize_t j, k, M = S.shape[0], N = S.shape[1]
    cdef double acc
    for j in range(M):
        acc = 0.0
        for k in range(N):
            acc += S[j, k] * a[k]
        u[j] = acc
    for k in range(N):
        acc = 0.0
        for j in range(M):
            acc += S[j, k] * u[j] * u[j] * u[j]
        out[k] = lin[k] * a[k] - scale * acc


cdef void _gal_jac(double[::1] u, double[:, ::1] S, double[::1] lin, double scale,
                   double[:, ::1] J) noexcept nogil:
    cdef Py_ssize_t j, k, l, M = S.shape[0], N = S.shape[1]
    cdef double acc
    for k in range(N):
        for l in range(k, N):
            acc = 0.0
            for j in range(M):
                acc += S[j, k] * 3.0 * u[j] * u[j] * S[j, l]
            J[k, l] = -scale * acc
            J[l, k] = -scale * acc
        J[k, k] += lin[k]


cdef void _matmul_add(double[:, ::1] J, double[:, ::1] V, double[:, ::1] Wbase,
                      double h, double[:, ::1] out, double[:, ::1] tmp) noexcept nogil:
    # out = J @ (Wbase + h * V)
    cdef Py_ssize_t i, j, k, N = J.shape[0]
    cdef double acc
    for i in range(N):
        for j in range(N):
            tmp[i, j] = Wbase[i, j] + h * V[i, j]
    for i in range(N):
        for j in range(N):
            acc = 0.0
            for k in range(N):
                acc += J[i, k] * tmp[k, j]
            out[i, j] = acc


def galerkin_flow(a0, double T, double dt, double lam, bint with_jac):
    cdef Py_ssize_t N = len(a0)
    cdef Py_ssize_t M = 4 * N - 1
    x = np.arange(1, M + 1) * np.pi / (M + 1)
    S_arr = np.ascontiguousarray(np.sin(np.outer(x, np.arange(1, N + 1))))
    lin_arr = lam - np.arange(1, N + 1, dtype=float) ** 2
    cdef double[:, ::1] S = S_arr
    cdef double[::1] lin = lin_arr
    cdef double scale = 2.0 / (M + 1)
    cdef Py_ssize_t steps = int(round(T / dt))
    a_arr = np.array(a0, dtype=float)
    cdef double[::1] a = a_arr
    cdef double[::1] stg = np.empty(N)
    cdef double[:, ::1] ks = np.empty((4, N))
    cdef double[:, ::1] us = np.empty((4, M))
    V_arr = np.eye(N)
    cdef double[:, ::1] V = V_arr
    cdef double[:, ::1] J = np.empty((N, N))
    cdef double[:, ::1] tmp = np.empty((N, N))
    cdef double[:, :, ::1] Ks = np.empty((4, N, N))
    cdef double[:, ::1] zero = np.zeros((N, N))
    cdef Py_ssize_t t, k, i, j
    cdef double[4] c_stage
    c_stage[0] = 0.0
    c_stage[1] = 0.5
    c_stage[2] = 0.5
    c_stage[3] = 1.0
    with nogil:
        for t in range(steps):
            for i in range(4):
                for k in range(N):
                    if i == 0:
                        stg[k] = a[k]
                    else:
                        stg[k] = a[k] + c_stage[i] * dt * ks[i - 1, k]
                _gal_rhs(stg, S, lin, scale, ks[i], us[i])
                if with_jac:
                    _gal_jac(us[i], S, lin, scale, J)
                    if i == 0:
                        _matmul_add(J, zero, V, 0.0, Ks[0], tmp)
                    else:
                        _matmul_add(J, Ks[i - 1], V, c_stage[i] * dt, Ks[i], tmp)
            for k in range(N):
                a[k] = a[k] + (dt / 6.0) * (ks[0, k] + 2.0 * ks[1, k] + 2.0 * ks[2, k] + ks[3, k])
            if with_jac:
                for i in range(N):
                    for j in range(N):
                        V[i, j] = V[i, j] + (dt / 6.0) * (Ks[0, i, j] + 2.0 * Ks[1, i, j]
                                                          + 2.0 * Ks[2, i, j] + Ks[3, i, j])
    return a_arr, (V_arr if with_jac else None)
