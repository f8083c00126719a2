"""NumPy reference implementation of the hot particle kernels.

Used when the compiled extension is unavailable or explicitly disabled via
``RM_BACKEND=python``. Semantics match ``_ckernels`` (agreement is covered by
tests); only speed differs.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erfc

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


def _phi(x):
    return 0.5 * erfc(-x / _SQRT2)


def bi_likelihood(z, var, X, u, psi, diffuse_weight):
    """Pseudo-range density matrix, shape (M, N).

    Mixture of a specular Gaussian and a diffuse Gaussian-uniform convolution
    around the per-particle mirror-path length.
    """
    z = np.asarray(z, dtype=float)
    var = np.asarray(var, dtype=float)
    X = np.asarray(X, dtype=float)
    r = np.linalg.norm(X - np.asarray(u, dtype=float), axis=1)  # (N,)
    sigma = np.sqrt(var)[:, None]                               # (M,1)
    t = z[:, None] - r[None, :]                                 # (M,N)
    spec = np.exp(-0.5 * (t / sigma) ** 2) / (sigma * _SQRT2PI)
    if diffuse_weight <= 0.0 or psi <= 0.0:
        return spec
    diff = (_phi(t / sigma) - _phi((t - psi) / sigma)) / psi
    return (1.0 - diffuse_weight) * spec + diffuse_weight * diff


def mo_likelihood(Z, R, X, p_bs):
    """Plane-residual density matrix, shape (M, N).

    For each particle the VA hypothesis induces a reflector plane; the density
    is the 1D Gaussian of the measurement's signed plane distance with
    variance n^T R n. Particles coincident with the transmitter get density 0.
    """
    Z = np.asarray(Z, dtype=float)
    R = np.asarray(R, dtype=float)
    X = np.asarray(X, dtype=float)
    p = np.asarray(p_bs, dtype=float)

    delta = p - X                                  # (N,3), toward transmitter
    rho = np.linalg.norm(delta, axis=1)            # (N,)
    ok = rho > 1e-12
    safe_rho = np.where(ok, rho, 1.0)
    n = delta / safe_rho[:, None]                  # (N,3)

    s2 = np.sum((Z - p) ** 2, axis=1)              # (M,)
    dz2 = np.sum((Z[:, None, :] - X[None, :, :]) ** 2, axis=2)   # (M,N)
    d = (dz2 - s2[:, None]) / (2.0 * safe_rho[None, :])

    iso = np.all(np.abs(R - R[:, 0, 0][:, None, None] * np.eye(3)) < 1e-15, axis=(1, 2))
    v = np.empty((Z.shape[0], X.shape[0]))
    if np.all(iso):
        v[:] = R[:, 0, 0][:, None]
    else:
        v[:] = np.einsum("ni,mij,nj->mn", n, R, n)
    v = np.maximum(v, 1e-300)
    dens = np.exp(-0.5 * d * d / v) / np.sqrt(2.0 * math.pi * v)
    dens[:, ~ok] = 0.0
    return dens


def accumulate_log1p(lw, L, coeff):
    """In place: lw[i] += sum_m log1p(coeff[m] * L[m, i])."""
    lw += np.log1p(np.asarray(coeff, dtype=float)[:, None] * L).sum(axis=0)


def systematic_resample(weights, u0):
    """Systematic resampling indices for normalized weights and offset u0 in [0,1)."""
    w = np.asarray(weights, dtype=float)
    n = w.shape[0]
    positions = (u0 + np.arange(n)) / n
    return np.searchsorted(np.cumsum(w), positions).clip(0, n - 1).astype(np.int64)
