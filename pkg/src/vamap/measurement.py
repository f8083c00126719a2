"""Pseudo-measurement types, converted-measurement covariance propagation,
and the likelihood / clutter densities used by the inference engine.

Bistatic detections are scalar pseudo-ranges (delay times the speed of
light); monostatic detections are 3D pseudo-positions obtained from a
delay/angle triplet. The monostatic likelihood is evaluated in one dimension
along the hypothesized reflector-plane normal, which is exactly the rank-one
Gaussian induced by projecting the converted-measurement covariance onto the
normal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .geometry import DegenerateGeometry, Vec3, as_vec3, plane_from_va

SPEED_OF_LIGHT = 299_792_458.0  # m/s

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


class NegativeDelay(ValueError):
    pass


class NonPositiveSupport(ValueError):
    pass


class SingularVariance(ValueError):
    pass


@dataclass(frozen=True)
class BistaticMeasurement:
    """Scalar pseudo-range detection with its variance (meters, meters^2)."""

    pseudo_range: float
    variance: float

    def __post_init__(self):
        if not (self.pseudo_range >= 0.0 and np.isfinite(self.pseudo_range)):
            raise ValueError("pseudo_range must be finite and nonnegative")
        if not (self.variance > 0.0):
            raise ValueError("variance must be positive")


@dataclass(frozen=True)
class MonostaticMeasurement:
    """3D pseudo-position detection with a symmetric PSD covariance."""

    pseudo_position: Vec3
    covariance: NDArray[np.float64]

    def __post_init__(self):
        object.__setattr__(self, "pseudo_position", as_vec3(self.pseudo_position))
        R = np.asarray(self.covariance, dtype=float)
        if R.shape != (3, 3):
            raise ValueError("covariance must be 3x3")
        if not np.allclose(R, R.T, atol=1e-9):
            raise ValueError("covariance must be symmetric")
        if np.min(np.linalg.eigvalsh(R)) < -1e-12:
            raise ValueError("covariance must be positive semidefinite")
        object.__setattr__(self, "covariance", R)


@dataclass(frozen=True)
class DelayAngleEstimate:
    """Raw monostatic estimate: delay (s), azimuth/elevation (rad), covariance."""

    delay: float
    azimuth: float
    elevation: float
    covariance: NDArray[np.float64]

    def __post_init__(self):
        if self.delay < 0:
            raise NegativeDelay("delay must be nonnegative")
        if not (0.0 <= self.elevation <= math.pi):
            raise ValueError("elevation must lie in [0, pi]")
        C = np.asarray(self.covariance, dtype=float)
        if C.shape != (3, 3):
            raise ValueError("covariance must be 3x3")
        object.__setattr__(self, "covariance", C)


@dataclass
class NoiseConfig:
    """Measurement-generation parameters shared by simulator and inference."""

    sigma_z: float = 0.5               # pseudo-range std, m
    sigma_bs: float = 0.1              # isotropic pseudo-position std, m
    psi_z: float = 4.0                 # diffuse excess-range support, m
    clutter_range_interval: tuple[float, float] = (0.0, 500.0)
    clutter_box: tuple[float, float] = (-150.0, 150.0)   # per-axis cube bounds
    mu_fa_bi: float = 1.0
    mu_fa_mo: float = 1.0
    mu_m_bi: float = 4.0
    mu_m_mo: float = 4.0
    rho_diff: float = 3.0              # on-facade diffuse scatter radius, m

    def __post_init__(self):
        if self.sigma_z < 0 or self.sigma_bs < 0:
            raise ValueError("noise stds must be nonnegative")
        if self.psi_z < 0:
            raise ValueError("psi_z must be nonnegative")
        lo, hi = self.clutter_range_interval
        if not hi > lo:
            raise ValueError("clutter range interval must be non-degenerate")
        blo, bhi = self.clutter_box
        if not bhi > blo:
            raise ValueError("clutter box must be non-degenerate")
        for name in ("mu_fa_bi", "mu_fa_mo", "mu_m_bi", "mu_m_mo"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.rho_diff <= 0:
            raise ValueError("rho_diff must be positive")

    @property
    def clutter_density_bi(self) -> float:
        lo, hi = self.clutter_range_interval
        return 1.0 / (hi - lo)

    @property
    def clutter_density_mo(self) -> float:
        lo, hi = self.clutter_box
        return 1.0 / (hi - lo) ** 3


def pseudo_range_from_delay(tau: float) -> float:
    """Convert a propagation delay in seconds to a pseudo-range in meters."""
    if tau < 0:
        raise NegativeDelay("delay must be nonnegative")
    return SPEED_OF_LIGHT * tau


def direction_vector(theta: float, phi: float) -> Vec3:
    """Unit direction for azimuth theta and polar angle phi (phi=0 is +z)."""
    sp = math.sin(phi)
    return np.array([sp * math.cos(theta), sp * math.sin(theta), math.cos(phi)])


def delay_angle_to_position(p_bs: Vec3, est: DelayAngleEstimate) -> Vec3:
    """Round-trip delay/angle triplet mapped to a scattering-point position."""
    p_bs = as_vec3(p_bs)
    return p_bs + 0.5 * SPEED_OF_LIGHT * est.delay * direction_vector(est.azimuth, est.elevation)


def conversion_jacobian(est: DelayAngleEstimate) -> NDArray[np.float64]:
    """Analytic Jacobian of the delay/angle-to-position map, columns (tau, theta, phi)."""
    tau, th, ph = est.delay, est.azimuth, est.elevation
    half_c = 0.5 * SPEED_OF_LIGHT
    st, ct = math.sin(th), math.cos(th)
    sp, cp = math.sin(ph), math.cos(ph)
    J = np.empty((3, 3))
    J[:, 0] = half_c * np.array([sp * ct, sp * st, cp])
    J[:, 1] = half_c * tau * np.array([-sp * st, sp * ct, 0.0])
    J[:, 2] = half_c * tau * np.array([cp * ct, cp * st, -sp])
    return J


def propagate_covariance(p_bs: Vec3, est: DelayAngleEstimate) -> NDArray[np.float64]:
    """First-order propagation of the delay/angle covariance into position space."""
    J = conversion_jacobian(est)
    R = J @ np.asarray(est.covariance, dtype=float) @ J.T
    return 0.5 * (R + R.T)


def _norm_pdf(x: float, sigma: float) -> float:
    return math.exp(-0.5 * (x / sigma) ** 2) / (sigma * _SQRT2PI)


def _norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / _SQRT2)


def specular_likelihood(z: BistaticMeasurement, mu: float) -> float:
    """Gaussian pseudo-range density at the predicted mirror-path length."""
    return _norm_pdf(z.pseudo_range - mu, math.sqrt(z.variance))


def diffuse_likelihood(z: BistaticMeasurement, mu: float, psi: float) -> float:
    """Density of a diffuse subpath: Gaussian noise plus uniform excess range.

    Closed form of the convolution: (Phi((z-mu)/s) - Phi((z-mu-psi)/s)) / psi.
    """
    if psi <= 0:
        raise NonPositiveSupport("psi must be positive")
    sigma = math.sqrt(z.variance)
    t = z.pseudo_range - mu
    return (_norm_cdf(t / sigma) - _norm_cdf((t - psi) / sigma)) / psi


def monostatic_likelihood(z: MonostaticMeasurement, va_hyp: Vec3, p_bs: Vec3) -> float:
    """Plane-residual density of a pseudo-position under a VA hypothesis.

    The residual is confined to the normal of the perpendicular-bisector
    plane, so the rank-one Gaussian reduces to a 1D density in the signed
    distance with variance n^T R n.
    """
    try:
        plane = plane_from_va(p_bs, va_hyp)
    except DegenerateGeometry:
        raise DegenerateGeometry("VA hypothesis coincides with the transmitter")
    d = plane.signed_distance(z.pseudo_position)
    n = plane.normal
    v = float(n @ z.covariance @ n)
    if v < 1e-18:
        raise SingularVariance("measurement covariance has no component along the plane normal")
    return _norm_pdf(d, math.sqrt(v))


def clutter_density_bistatic(pseudo_range: float, cfg: NoiseConfig) -> float:
    """Uniform false-alarm density over the configured pseudo-range interval."""
    lo, hi = cfg.clutter_range_interval
    return cfg.clutter_density_bi if lo <= pseudo_range <= hi else 0.0


def clutter_density_monostatic(position: Vec3, cfg: NoiseConfig) -> float:
    """Uniform false-alarm density over the configured cube."""
    p = np.asarray(position, dtype=float)
    lo, hi = cfg.clutter_box
    return cfg.clutter_density_mo if bool(np.all(p >= lo) and np.all(p <= hi)) else 0.0
