"""Runtime measurement harness.

Times the two fusion schedules per epoch over a grid of measurement counts
and particle counts on a controlled single-facade scene with exactly M
measurements per link per epoch (one specular plus M-1 diffuse, no clutter,
no missed detections), and compares the compiled kernels against the NumPy
fallback on the dominant kernel shapes.
"""

from __future__ import annotations

import time
from dataclasses import replace

import numpy as np

from . import _pykernels
from .inference import InferenceConfig, run_method
from .measurement import BistaticMeasurement, MonostaticMeasurement, NoiseConfig
from .scene import EpochFrame, build_desk_single, frame_rng

try:
    from . import _ckernels
except ImportError:
    _ckernels = None


def make_bench_frames(m_per_link: int, n_epochs: int, noise: NoiseConfig, seed: int = 0) -> tuple:
    """Frames with exactly m measurements per link per epoch on one facade."""
    sc = build_desk_single(n_epochs=n_epochs)
    facade = sc.facades[0]
    p_bs = sc.bs_positions[0]
    from .geometry import mirror_point, monostatic_specular_point

    va = mirror_point(p_bs, facade.plane)
    q_mo = monostatic_specular_point(p_bs, facade)
    R = noise.sigma_bs**2 * np.eye(3)
    frames = []
    for n in range(n_epochs):
        rng = frame_rng(seed, n, 0)
        u = sc.trajectory[n]
        frame = EpochFrame(epoch=n, bs=0, u=u)
        base = float(np.linalg.norm(u - va))
        for m in range(m_per_link):
            excess = 0.0 if m == 0 else rng.uniform(0.0, noise.psi_z)
            frame.bistatic.append(
                BistaticMeasurement(base + excess + rng.normal(0.0, noise.sigma_z), noise.sigma_z**2)
            )
            frame.bistatic_kinds.append("specular" if m == 0 else "diffuse")
        for m in range(m_per_link):
            point = q_mo if m == 0 else q_mo + rng.uniform(-noise.rho_diff, noise.rho_diff) * facade.axis_u
            frame.monostatic.append(MonostaticMeasurement(point + rng.normal(0.0, noise.sigma_bs, 3), R))
            frame.monostatic_kinds.append("specular" if m == 0 else "diffuse")
        frames.append(frame)
    return frames, sc


def time_method(method: str, frames, scenario, cfg: InferenceConfig, seed: int = 0) -> float:
    """Mean wall-clock seconds per epoch: total over all epochs divided by T."""
    t0 = time.perf_counter()
    run_method(method, frames, scenario.bs_positions[0], cfg, seed)
    return (time.perf_counter() - t0) / len(frames)


def scheme_grid(
    m_grid=(5, 10, 20),
    np_grid=(5000, 10000, 20000),
    n_epochs: int = 30,
    seed: int = 0,
    base_cfg: InferenceConfig | None = None,
) -> list[tuple[str, int, int, float]]:
    """(method, M, Np, sec_per_epoch) rows for the two fusion schedules."""
    noise = (base_cfg.noise if base_cfg else NoiseConfig(mu_fa_bi=0.0, mu_fa_mo=0.0))
    rows = []
    for m in m_grid:
        frames, sc = make_bench_frames(m, n_epochs, noise, seed)
        for n_p in np_grid:
            cfg = base_cfg if base_cfg is not None else InferenceConfig(noise=noise)
            cfg = replace(cfg, n_particles=n_p, noise=replace(noise, mu_m_bi=float(m), mu_m_mo=float(m)))
            cfg.birth = replace(cfg.birth, roi_center=sc.roi_center, roi_radius=sc.roi_radius)
            for method in ("fusion1", "fusion3"):
                rows.append((method, m, n_p, time_method(method, frames, sc, cfg, seed)))
    return rows


def speedups(rows, at_np: int = 20000) -> dict[int, float]:
    """Sequential/dominant per-epoch runtime ratio at a given particle count."""
    t = {(meth, m): sec for meth, m, n_p, sec in rows if n_p == at_np}
    return {m: t[("fusion3", m)] / t[("fusion1", m)] for meth, m in t if meth == "fusion1"}


def kernel_backend_rows(m_grid=(5, 20), np_grid=(5000, 20000), repeats: int = 5, seed: int = 0):
    """(backend, kernel, M, Np, sec_per_call) comparing compiled vs NumPy."""
    rng = np.random.default_rng(seed)
    backends = [("python", _pykernels)] + ([("c", _ckernels)] if _ckernels is not None else [])
    rows = []
    for m in m_grid:
        for n_p in np_grid:
            X = rng.uniform(-50, 50, size=(n_p, 3))
            u = np.zeros(3)
            z = rng.uniform(10, 80, size=m)
            var = np.full(m, 0.25)
            Z = rng.uniform(-20, 20, size=(m, 3))
            R = np.tile(0.01 * np.eye(3), (m, 1, 1))
            p_bs = np.array([30.0, 0.0, 5.0])
            for name, impl in backends:
                t0 = time.perf_counter()
                for _ in range(repeats):
                    impl.bi_likelihood(z, var, X, u, 4.0, 0.75)
                rows.append((name, "bi_likelihood", m, n_p, (time.perf_counter() - t0) / repeats))
                t0 = time.perf_counter()
                for _ in range(repeats):
                    impl.mo_likelihood(Z, R, X, p_bs)
                rows.append((name, "mo_likelihood", m, n_p, (time.perf_counter() - t0) / repeats))
    return rows
