"""Backend dispatch for the hot particle kernels.

The compiled extension is preferred; ``RM_BACKEND=python`` forces the NumPy
fallback. An evaluation counter (number of per-particle density evaluations)
is maintained here for complexity instrumentation, independent of backend.
"""

from __future__ import annotations

import os

import numpy as np

_requested = os.environ.get("RM_BACKEND", "").strip().lower()
if _requested in ("python", "py"):
    from . import _pykernels as _impl

    BACKEND = "python"
elif _requested in ("c", "compiled", "ext", ""):
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]

        BACKEND = "c"
    except ImportError:
        from . import _pykernels as _impl

        BACKEND = "python"
else:
    raise RuntimeError(f"unknown RM_BACKEND value: {_requested!r}")

_eval_count = 0


def reset_eval_count() -> None:
    global _eval_count
    _eval_count = 0


def eval_count() -> int:
    return _eval_count


def bi_likelihood(z, var, X, u, psi, diffuse_weight):
    global _eval_count
    z = np.ascontiguousarray(z, dtype=np.float64)
    var = np.ascontiguousarray(var, dtype=np.float64)
    X = np.ascontiguousarray(X, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    _eval_count += z.shape[0] * X.shape[0]
    return _impl.bi_likelihood(z, var, X, u, float(psi), float(diffuse_weight))


def mo_likelihood(Z, R, X, p_bs):
    global _eval_count
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    R = np.ascontiguousarray(R, dtype=np.float64)
    X = np.ascontiguousarray(X, dtype=np.float64)
    p_bs = np.ascontiguousarray(p_bs, dtype=np.float64)
    _eval_count += Z.shape[0] * X.shape[0]
    return _impl.mo_likelihood(Z, R, X, p_bs)


def accumulate_log1p(lw, L, coeff) -> None:
    coeff = np.ascontiguousarray(coeff, dtype=np.float64)
    _impl.accumulate_log1p(lw, np.ascontiguousarray(L, dtype=np.float64), coeff)


def systematic_resample(weights, u0: float):
    w = np.ascontiguousarray(weights, dtype=np.float64)
    return _impl.systematic_resample(w, float(u0))
