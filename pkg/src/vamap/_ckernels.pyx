# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3str
"""Compiled twin of ``_pykernels``: particle likelihood matrices, message
accumulation, and systematic resampling. Single-threaded on purpose so that
results never depend on a thread schedule."""

import numpy as np

cimport numpy as cnp
from libc.math cimport erfc, exp, log, log1p, sqrt

cnp.import_array()

cdef double SQRT2 = sqrt(2.0)
cdef double SQRT2PI = sqrt(2.0 * 3.14159265358979323846)


cdef inline double _phi(double x) noexcept:
    return 0.5 * erfc(-x / SQRT2)


def bi_likelihood(double[::1] z, double[::1] var, double[:, ::1] X,
                  double[::1] u, double psi, double diffuse_weight):
    cdef Py_ssize_t M = z.shape[0]
    cdef Py_ssize_t N = X.shape[0]
    out_arr = np.empty((M, N), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    r_arr = np.empty(N, dtype=np.float64)
    cdef double[::1] r = r_arr
    cdef Py_ssize_t i, m
    cdef double dx, dy, dz, sigma, t, spec, diff, w

    for i in range(N):
        dx = X[i, 0] - u[0]
        dy = X[i, 1] - u[1]
        dz = X[i, 2] - u[2]
        r[i] = sqrt(dx * dx + dy * dy + dz * dz)

    w = diffuse_weight
    if w <= 0.0 or psi <= 0.0:
        for m in range(M):
            sigma = sqrt(var[m])
            for i in range(N):
                t = (z[m] - r[i]) / sigma
                out[m, i] = exp(-0.5 * t * t) / (sigma * SQRT2PI)
    else:
        for m in range(M):
            sigma = sqrt(var[m])
            for i in range(N):
                t = z[m] - r[i]
                spec = exp(-0.5 * (t / sigma) * (t / sigma)) / (sigma * SQRT2PI)
                diff = (_phi(t / sigma) - _phi((t - psi) / sigma)) / psi
                out[m, i] = (1.0 - w) * spec + w * diff
    return out_arr


def mo_likelihood(double[:, ::1] Z, double[:, :, ::1] R, double[:, ::1] X,
                  double[::1] p_bs):
    cdef Py_ssize_t M = Z.shape[0]
    cdef Py_ssize_t N = X.shape[0]
    out_arr = np.empty((M, N), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    n_arr = np.empty((N, 3), dtype=np.float64)
    cdef double[:, ::1] nvec = n_arr
    rho_arr = np.empty(N, dtype=np.float64)
    cdef double[::1] rho = rho_arr
    iso_arr = np.zeros(M, dtype=np.uint8)
    cdef unsigned char[::1] iso = iso_arr
    cdef Py_ssize_t i, m, a, b
    cdef double dx, dy, dz, rr, s2, dz2, d, v, sig0, dev

    for i in range(N):
        dx = p_bs[0] - X[i, 0]
        dy = p_bs[1] - X[i, 1]
        dz = p_bs[2] - X[i, 2]
        rr = sqrt(dx * dx + dy * dy + dz * dz)
        rho[i] = rr
        if rr > 1e-12:
            nvec[i, 0] = dx / rr
            nvec[i, 1] = dy / rr
            nvec[i, 2] = dz / rr
        else:
            nvec[i, 0] = 0.0
            nvec[i, 1] = 0.0
            nvec[i, 2] = 0.0

    for m in range(M):
        sig0 = R[m, 0, 0]
        iso[m] = 1
        for a in range(3):
            for b in range(3):
                dev = R[m, a, b] - (sig0 if a == b else 0.0)
                if dev > 1e-15 or dev < -1e-15:
                    iso[m] = 0

    for m in range(M):
        dx = Z[m, 0] - p_bs[0]
        dy = Z[m, 1] - p_bs[1]
        dz = Z[m, 2] - p_bs[2]
        s2 = dx * dx + dy * dy + dz * dz
        for i in range(N):
            if rho[i] <= 1e-12:
                out[m, i] = 0.0
                continue
            dx = Z[m, 0] - X[i, 0]
            dy = Z[m, 1] - X[i, 1]
            dz = Z[m, 2] - X[i, 2]
            dz2 = dx * dx + dy * dy + dz * dz
            d = (dz2 - s2) / (2.0 * rho[i])
            if iso[m]:
                v = R[m, 0, 0]
            else:
                v = (nvec[i, 0] * (R[m, 0, 0] * nvec[i, 0] + R[m, 0, 1] * nvec[i, 1] + R[m, 0, 2] * nvec[i, 2])
                     + nvec[i, 1] * (R[m, 1, 0] * nvec[i, 0] + R[m, 1, 1] * nvec[i, 1] + R[m, 1, 2] * nvec[i, 2])
                     + nvec[i, 2] * (R[m, 2, 0] * nvec[i, 0] + R[m, 2, 1] * nvec[i, 1] + R[m, 2, 2] * nvec[i, 2]))
            if v < 1e-300:
                v = 1e-300
            out[m, i] = exp(-0.5 * d * d / v) / sqrt(2.0 * 3.14159265358979323846 * v)
    return out_arr


def accumulate_log1p(double[::1] lw, double[:, ::1] L, double[::1] coeff):
    cdef Py_ssize_t M = L.shape[0]
    cdef Py_ssize_t N = L.shape[1]
    cdef Py_ssize_t m, i
    for m in range(M):
        for i in range(N):
            lw[i] += log1p(coeff[m] * L[m, i])


def systematic_resample(double[::1] weights, double u0):
    cdef Py_ssize_t n = weights.shape[0]
    idx_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] idx = idx_arr
    cdef Py_ssize_t i = 0, j = 0
    cdef double cum = weights[0]
    cdef double pos
    for i in range(n):
        pos = (u0 + i) / n
        while cum < pos and j < n - 1:
            j += 1
            cum += weights[j]
        idx[i] = j
    return idx_arr
