"""Deterministic 3D geometry: mirror images, reflector planes, projections,
single-bounce path construction, and box occlusion tests.

All functions are pure; arrays are never mutated. The plane normal convention
used throughout is that the normal points from the virtual anchor toward the
transmitter, so signed distances are consistent across modules.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

Vec3 = NDArray[np.float64]

GEOM_EPS = 1e-9


class DegenerateGeometry(ValueError):
    """Raised when an operation is requested on coincident/degenerate input."""


def as_vec3(p) -> Vec3:
    v = np.asarray(p, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("coordinates must be finite")
    return v


def unit(v: Vec3, eps: float = 1e-12) -> Vec3:
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if n < eps:
        raise DegenerateGeometry("cannot normalize near-zero vector")
    return v / n


@dataclass(frozen=True)
class Plane:
    """Oriented plane given by a point on it and a unit normal."""

    anchor: Vec3
    normal: Vec3

    def __post_init__(self):
        object.__setattr__(self, "anchor", as_vec3(self.anchor))
        n = as_vec3(self.normal)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("plane normal must be unit length")
        object.__setattr__(self, "normal", n)

    def signed_distance(self, p: Vec3) -> float:
        return float(np.dot(self.normal, np.asarray(p, dtype=float) - self.anchor))


@dataclass(frozen=True)
class Facade:
    """Rectangular reflective face: a plane plus a finite in-plane extent.

    axis_u/axis_v are orthonormal in-plane directions; half_width_u/v give the
    rectangle half extents along them. Points exactly on the boundary count as
    outside (strict containment).
    """

    plane: Plane
    center: Vec3
    axis_u: Vec3
    axis_v: Vec3
    half_width_u: float
    half_width_v: float
    id: str = ""
    building: str = field(default="")

    def __post_init__(self):
        object.__setattr__(self, "center", as_vec3(self.center))
        u = as_vec3(self.axis_u)
        v = as_vec3(self.axis_v)
        n = self.plane.normal
        for a, b in ((u, v), (u, n), (v, n)):
            if abs(float(np.dot(a, b))) > 1e-9:
                raise ValueError("facade axes must be pairwise orthogonal to the normal")
        for a in (u, v):
            if abs(np.linalg.norm(a) - 1.0) > 1e-9:
                raise ValueError("facade axes must be unit length")
        if self.half_width_u <= 0 or self.half_width_v <= 0:
            raise ValueError("facade half widths must be positive")
        if abs(self.plane.signed_distance(self.center)) > 1e-9:
            raise ValueError("facade center must lie on its plane")
        object.__setattr__(self, "axis_u", u)
        object.__setattr__(self, "axis_v", v)

    def contains(self, p: Vec3) -> bool:
        """Strict in-plane containment test (boundary counts as outside)."""
        d = np.asarray(p, dtype=float) - self.center
        cu = abs(float(np.dot(d, self.axis_u)))
        cv = abs(float(np.dot(d, self.axis_v)))
        return cu < self.half_width_u and cv < self.half_width_v


@dataclass(frozen=True)
class Segment:
    a: Vec3
    b: Vec3

    def __post_init__(self):
        a = as_vec3(self.a)
        b = as_vec3(self.b)
        if np.array_equal(a, b):
            raise ValueError("segment endpoints must differ")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box, used both as building volume and as occluder."""

    center: Vec3
    dims: Vec3
    id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "center", as_vec3(self.center))
        d = as_vec3(self.dims)
        if np.any(d <= 0):
            raise ValueError("box dimensions must be positive")
        object.__setattr__(self, "dims", d)

    @property
    def lo(self) -> Vec3:
        return self.center - self.dims / 2.0

    @property
    def hi(self) -> Vec3:
        return self.center + self.dims / 2.0

    def contains(self, p: Vec3) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.lo) and np.all(p <= self.hi))


def mirror_point(p: Vec3, plane: Plane) -> Vec3:
    """Mirror image of a point across a plane (an involution)."""
    p = np.asarray(p, dtype=float)
    return p - 2.0 * plane.signed_distance(p) * plane.normal


def plane_from_va(p_bs: Vec3, va: Vec3) -> Plane:
    """Perpendicular-bisector plane of the transmitter/virtual-anchor segment.

    The anchor is the segment midpoint and the normal points from the virtual
    anchor toward the transmitter, so ``mirror_point(p_bs, result) == va``.
    """
    p_bs = np.asarray(p_bs, dtype=float)
    va = np.asarray(va, dtype=float)
    d = p_bs - va
    norm = float(np.linalg.norm(d))
    if norm < GEOM_EPS:
        raise DegenerateGeometry("transmitter and virtual anchor coincide")
    return Plane(anchor=(p_bs + va) / 2.0, normal=d / norm)


def project_onto_plane(x: Vec3, plane: Plane) -> Vec3:
    """Orthogonal projection onto the plane (idempotent)."""
    x = np.asarray(x, dtype=float)
    return x - plane.signed_distance(x) * plane.normal


def projection_residual(z: Vec3, plane: Plane) -> tuple[Vec3, float]:
    """Out-of-plane residual of a point: (vector residual, signed distance).

    The residual is parallel to the plane normal and equals
    ``signed_distance * normal``.
    """
    d = plane.signed_distance(z)
    return d * plane.normal, d


def bistatic_specular_range(u: Vec3, va: Vec3) -> float:
    """Mirror-path length between receiver and virtual anchor."""
    return float(np.linalg.norm(np.asarray(u, dtype=float) - np.asarray(va, dtype=float)))


def bistatic_reflection_point(p_bs: Vec3, u: Vec3, facade: Facade) -> Vec3 | None:
    """Single-bounce reflection point on a facade, or None if infeasible.

    Mirrors the transmitter across the facade plane, intersects the mirror
    image/receiver segment with the plane, and accepts the hit only if the
    segment genuinely crosses the plane and the hit lies strictly inside the
    rectangular extent. A valid hit q satisfies the mirror-path identity
    ``|p_bs - q| + |q - u| == |mirror(p_bs) - u|``.
    """
    p_bs = np.asarray(p_bs, dtype=float)
    u = np.asarray(u, dtype=float)
    va = mirror_point(p_bs, facade.plane)
    d_va = facade.plane.signed_distance(va)
    d_u = facade.plane.signed_distance(u)
    if d_va == 0.0 or d_u == 0.0 or np.sign(d_va) == np.sign(d_u):
        return None
    t = d_va / (d_va - d_u)
    q = va + t * (u - va)
    if not facade.contains(q):
        return None
    return q


def monostatic_specular_point(p_bs: Vec3, facade: Facade) -> Vec3 | None:
    """Normal-incidence backscatter point: foot of the perpendicular from the
    transmitter onto the facade plane, or None if it falls outside the extent.
    """
    q = project_onto_plane(p_bs, facade.plane)
    if not facade.contains(q):
        return None
    return q


def _segment_hits_box(a: Vec3, b: Vec3, box: Box, eps: float = 1e-12) -> bool:
    """Open-segment/solid-box intersection with positive overlap length.

    Grazing contacts (touching a face or sliding along one) do not count.
    """
    d = b - a
    lo, hi = box.lo, box.hi
    tmin, tmax = 0.0, 1.0
    for ax in range(3):
        if d[ax] == 0.0:
            # Parallel to this slab: require strict interior, else no hit.
            if not (lo[ax] < a[ax] < hi[ax]):
                return False
        else:
            t1 = (lo[ax] - a[ax]) / d[ax]
            t2 = (hi[ax] - a[ax]) / d[ax]
            if t1 > t2:
                t1, t2 = t2, t1
            tmin = max(tmin, t1)
            tmax = min(tmax, t2)
            if tmin >= tmax:
                return False
    return tmax - tmin > eps


def segment_occluded(seg: Segment, blockers) -> bool:
    """True iff the open segment passes through any blocker box.

    Boxes containing either endpoint are skipped, so paths starting or ending
    on a building surface are not blocked by that building.
    """
    for box in blockers:
        if box.contains(seg.a) or box.contains(seg.b):
            continue
        if _segment_hits_box(seg.a, seg.b, box):
            return True
    return False
