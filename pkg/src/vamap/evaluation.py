"""Set-metric evaluation and map reconstruction.

OSPA with cutoff and order, its Monte-Carlo average across runs, and the
smoothing + plane-recovery step that turns per-epoch VA estimates into
rendered facade rectangles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import Facade, Plane, Vec3, bistatic_reflection_point, plane_from_va, project_onto_plane, unit


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class OspaConfig:
    cutoff: float = 5.0
    order: float = 2.0

    def __post_init__(self):
        if self.cutoff <= 0:
            raise ValueError("cutoff must be positive")
        if self.order < 1:
            raise ValueError("order must be >= 1")


@dataclass
class MospaSeries:
    """Per-epoch mean OSPA over Monte-Carlo runs for one BS and method."""

    method: str
    bs: int
    values: np.ndarray
    n_runs: int


@dataclass
class ReconstructedFacade:
    plane: Plane
    center: Vec3
    width: float
    height: float
    va: Vec3
    label: int = -1


def ospa(est: np.ndarray, truth: np.ndarray, cfg: OspaConfig) -> float:
    """Optimal subpattern assignment distance between two 3D point sets.

    Distances are clipped at the cutoff, matched by the Hungarian algorithm,
    unmatched elements pay the full cutoff, and the p-norm average is taken
    over the larger cardinality. Empty vs empty is zero.
    """
    A = np.asarray(est, dtype=float).reshape(-1, 3)
    B = np.asarray(truth, dtype=float).reshape(-1, 3)
    n, m = A.shape[0], B.shape[0]
    if n == 0 and m == 0:
        return 0.0
    if n == 0 or m == 0:
        return cfg.cutoff
    D = np.linalg.norm(A[:, None, :] - B[None, :, :], axis=2)
    D = np.minimum(D, cfg.cutoff) ** cfg.order
    ri, ci = linear_sum_assignment(D)
    cost = float(D[ri, ci].sum())
    big = max(n, m)
    return float(((cost + cfg.cutoff**cfg.order * (big - min(n, m))) / big) ** (1.0 / cfg.order))


def mospa(per_run_sets: list[list[np.ndarray]], truth_series: list[np.ndarray], cfg: OspaConfig) -> np.ndarray:
    """Arithmetic mean of per-run OSPA at each epoch.

    per_run_sets[r][n] is run r's declared set at epoch n; truth_series[n]
    is the truth set at epoch n (shared by all runs).
    """
    if not per_run_sets:
        raise LengthMismatch("need at least one run")
    T = len(truth_series)
    for r, run in enumerate(per_run_sets):
        if len(run) != T:
            raise LengthMismatch(f"run {r} has {len(run)} epochs, truth has {T}")
    out = np.zeros(T)
    for run in per_run_sets:
        for n in range(T):
            out[n] += ospa(run[n], truth_series[n], cfg)
    return out / len(per_run_sets)


@dataclass
class VaTrack:
    """Per-label VA estimate history used for reconstruction."""

    label: int
    epochs: list[int] = field(default_factory=list)
    positions: list[np.ndarray] = field(default_factory=list)


def smooth_last_estimate(track: VaTrack, window: int = 5) -> Vec3:
    """Mean of the last estimate with up to `window` preceding ones."""
    tail = track.positions[-(window + 1):]
    return np.mean(tail, axis=0)


def reconstruct_facades(
    tracks: list[VaTrack],
    p_bs: Vec3,
    trajectory: np.ndarray,
    height: float = 20.0,
    fallback_width: float = 20.0,
    smoothing_window: int = 5,
) -> list[ReconstructedFacade]:
    """Recover facade rectangles from declared VA estimate histories.

    Each VA's last estimate is smoothed over the preceding epochs, the facade
    plane is the perpendicular-bisector of the VA/BS segment, the width comes
    from the horizontal spread of the bounce points the trajectory induces on
    that plane, and the height is a configured constant.
    """
    out = []
    for track in tracks:
        if not track.positions:
            continue
        va = smooth_last_estimate(track, smoothing_window)
        plane = plane_from_va(p_bs, va)
        horiz = np.array([plane.normal[1], -plane.normal[0], 0.0])
        try:
            axis_u = unit(horiz)
        except Exception:
            axis_u = np.array([1.0, 0.0, 0.0])
        axis_v = np.cross(plane.normal, axis_u)
        probe = Facade(
            plane=plane,
            center=plane.anchor,
            axis_u=axis_u,
            axis_v=axis_v,
            half_width_u=1e6,
            half_width_v=1e6,
            id="probe",
        )
        hits = []
        for u_n in trajectory:
            q = bistatic_reflection_point(p_bs, u_n, probe)
            if q is not None:
                hits.append(q)
        if len(hits) >= 2:
            coords = np.array([float((h - plane.anchor) @ axis_u) for h in hits])
            width = float(coords.max() - coords.min())
            if width < 1e-9:
                width = fallback_width
            mid = plane.anchor + float((coords.max() + coords.min()) / 2.0) * axis_u
            center = project_onto_plane(np.array([mid[0], mid[1], np.mean([h[2] for h in hits])]), plane)
        else:
            width = fallback_width
            center = plane.anchor
        out.append(
            ReconstructedFacade(plane=plane, center=center, width=width, height=height, va=va, label=track.label)
        )
    return out
