import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

from vamap.geometry import DegenerateGeometry, plane_from_va
from vamap.measurement import (
    SPEED_OF_LIGHT,
    BistaticMeasurement,
    DelayAngleEstimate,
    MonostaticMeasurement,
    NegativeDelay,
    NoiseConfig,
    NonPositiveSupport,
    SingularVariance,
    clutter_density_bistatic,
    clutter_density_monostatic,
    delay_angle_to_position,
    diffuse_likelihood,
    monostatic_likelihood,
    propagate_covariance,
    pseudo_range_from_delay,
    specular_likelihood,
)


class TestPseudoRange:
    def test_values(self):
        assert pseudo_range_from_delay(0.0) == 0.0
        assert pseudo_range_from_delay(1.0 / SPEED_OF_LIGHT) == pytest.approx(1.0)
        assert pseudo_range_from_delay(1e-6) == pytest.approx(299.792458)

    def test_negative_raises(self):
        with pytest.raises(NegativeDelay):
            pseudo_range_from_delay(-1e-9)


class TestDelayAngleConversion:
    def test_along_x(self):
        tau = 20.0 / SPEED_OF_LIGHT  # (c/2) tau = 10 m
        est = DelayAngleEstimate(delay=tau, azimuth=0.0, elevation=math.pi / 2, covariance=np.zeros((3, 3)))
        assert np.allclose(delay_angle_to_position(np.zeros(3), est), [10, 0, 0], atol=1e-9)

    def test_zero_delay(self):
        est = DelayAngleEstimate(delay=0.0, azimuth=1.0, elevation=1.0, covariance=np.zeros((3, 3)))
        p = np.array([3.0, -2.0, 5.0])
        assert np.allclose(delay_angle_to_position(p, est), p)

    def test_zenith(self):
        tau = 8.0 / SPEED_OF_LIGHT
        est = DelayAngleEstimate(delay=tau, azimuth=0.7, elevation=0.0, covariance=np.zeros((3, 3)))
        assert np.allclose(delay_angle_to_position(np.zeros(3), est), [0, 0, 4], atol=1e-9)


class TestCovariancePropagation:
    def test_zero_covariance(self):
        est = DelayAngleEstimate(delay=1e-7, azimuth=0.3, elevation=1.1, covariance=np.zeros((3, 3)))
        assert np.allclose(propagate_covariance(np.zeros(3), est), 0.0)

    def test_delay_only_along_x(self):
        s_tau = 1e-9
        est = DelayAngleEstimate(delay=1e-7, azimuth=0.0, elevation=math.pi / 2,
                                 covariance=np.diag([s_tau**2, 0.0, 0.0]))
        R = propagate_covariance(np.zeros(3), est)
        expect = np.zeros((3, 3))
        expect[0, 0] = (0.5 * SPEED_OF_LIGHT * s_tau) ** 2
        assert np.allclose(R, expect, rtol=1e-12, atol=1e-15)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        p_bs = np.array([5.0, -3.0, 2.0])
        for _ in range(100):
            tau = rng.uniform(1e-8, 1e-6)
            th = rng.uniform(-math.pi, math.pi)
            ph = rng.uniform(0.1, math.pi - 0.1)
            A = rng.standard_normal((3, 3)) * np.array([1e-9, 1e-3, 1e-3])
            C = A @ A.T
            est = DelayAngleEstimate(delay=tau, azimuth=th, elevation=ph, covariance=C)

            def g(eta):
                e = DelayAngleEstimate(delay=eta[0], azimuth=eta[1], elevation=eta[2],
                                       covariance=np.zeros((3, 3)))
                return delay_angle_to_position(p_bs, e)

            eta0 = np.array([tau, th, ph])
            J = np.empty((3, 3))
            for k in range(3):
                h = 1e-7 * max(abs(eta0[k]), 1e-3)
                ep, em = eta0.copy(), eta0.copy()
                ep[k] += h
                em[k] -= h
                J[:, k] = (g(ep) - g(em)) / (2 * h)
            R_fd = J @ C @ J.T
            R = propagate_covariance(p_bs, est)
            assert np.allclose(R, R_fd, rtol=1e-6, atol=1e-12)


class TestSpecularLikelihood:
    def test_peak(self):
        z = BistaticMeasurement(pseudo_range=10.0, variance=0.25)
        assert specular_likelihood(z, 10.0) == pytest.approx(1.0 / (0.5 * math.sqrt(2 * math.pi)), rel=1e-12)

    def test_tail_and_one_sigma(self):
        z = BistaticMeasurement(pseudo_range=10.5, variance=0.25)
        peak = 1.0 / (0.5 * math.sqrt(2 * math.pi))
        assert specular_likelihood(z, 10.0) == pytest.approx(peak * math.exp(-0.5), rel=1e-12)
        far = BistaticMeasurement(pseudo_range=1e6, variance=0.25)
        assert specular_likelihood(far, 10.0) == 0.0

    def test_scale_consistency(self):
        z = BistaticMeasurement(pseudo_range=12.0, variance=1.0)
        base = specular_likelihood(z, 10.0)
        s = 7.0
        scaled = BistaticMeasurement(pseudo_range=12.0 * s, variance=s**2)
        assert specular_likelihood(scaled, 10.0 * s) == pytest.approx(base / s, rel=1e-12)


class TestDiffuseLikelihood:
    def test_delta_limit_matches_specular(self):
        z = BistaticMeasurement(pseudo_range=10.0, variance=0.25)
        spec = specular_likelihood(z, 10.0)
        diff = diffuse_likelihood(z, 10.0, psi=1e-6)
        assert diff == pytest.approx(spec, rel=1e-5)

    def test_frozen_value_vs_quadrature(self):
        # Quadrature oracle of the Gaussian-uniform convolution at z = mu,
        # sigma = 1, psi = 2 gives (Phi(0) - Phi(-2)) / 2 = 0.23862494.
        z = BistaticMeasurement(pseudo_range=10.0, variance=1.0)
        val = diffuse_likelihood(z, 10.0, psi=2.0)
        oracle, _ = quad(lambda v: norm.pdf(10.0 - (10.0 + v)) / 2.0, 0.0, 2.0)
        assert val == pytest.approx(oracle, abs=1e-9)
        assert val == pytest.approx(0.23862494, abs=1e-6)

    def test_normalization(self):
        mu, sigma, psi = 50.0, 0.5, 4.0
        total, _ = quad(
            lambda zz: diffuse_likelihood(BistaticMeasurement(zz, sigma**2), mu, psi),
            mu - 10 * sigma, mu + psi + 10 * sigma, limit=200,
        )
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_nonnegative(self):
        rng = np.random.default_rng(12)
        for _ in range(200):
            zz = BistaticMeasurement(rng.uniform(0, 100), rng.uniform(0.01, 4.0))
            assert diffuse_likelihood(zz, rng.uniform(0, 100), rng.uniform(0.1, 10)) >= 0.0

    def test_bad_support(self):
        z = BistaticMeasurement(pseudo_range=1.0, variance=1.0)
        with pytest.raises(NonPositiveSupport):
            diffuse_likelihood(z, 1.0, psi=0.0)


def _degenerate_gaussian_oracle(z, va, p_bs):
    """Density of the rank-one Gaussian, evaluated via eigendecomposition on
    its 1D support."""
    plane = plane_from_va(p_bs, va)
    n = plane.normal
    P = np.outer(n, n)
    cov = P @ z.covariance @ P
    vals, vecs = np.linalg.eigh(cov)
    support = vals > 1e-15
    assert support.sum() == 1
    e = plane.signed_distance(z.pseudo_position) * n
    coord = (vecs[:, support].T @ e).item()
    var = vals[support].item()
    return math.exp(-0.5 * coord**2 / var) / math.sqrt(2 * math.pi * var)


class TestMonostaticLikelihood:
    def test_on_plane_isotropic(self):
        p_bs = np.array([10.0, 0.0, 0.0])
        va = np.array([-10.0, 0.0, 0.0])
        z = MonostaticMeasurement(np.array([0.0, 3.0, 2.0]), 0.01 * np.eye(3))
        assert monostatic_likelihood(z, va, p_bs) == pytest.approx(1.0 / (0.1 * math.sqrt(2 * math.pi)), rel=1e-12)

    def test_one_sigma_offset(self):
        p_bs = np.array([10.0, 0.0, 0.0])
        va = np.array([-10.0, 0.0, 0.0])
        z = MonostaticMeasurement(np.array([0.1, 0.0, 0.0]), 0.01 * np.eye(3))
        peak = 1.0 / (0.1 * math.sqrt(2 * math.pi))
        assert monostatic_likelihood(z, va, p_bs) == pytest.approx(peak * math.exp(-0.5), rel=1e-12)

    def test_in_plane_translation_invariance(self):
        rng = np.random.default_rng(13)
        p_bs = np.array([10.0, 5.0, 3.0])
        va = np.array([-7.0, 1.0, 2.0])
        plane = plane_from_va(p_bs, va)
        tangent = np.cross(plane.normal, [0.0, 0.0, 1.0])
        tangent /= np.linalg.norm(tangent)
        base_point = plane.anchor + 0.05 * plane.normal
        R = 0.01 * np.eye(3)
        ref = monostatic_likelihood(MonostaticMeasurement(base_point, R), va, p_bs)
        for _ in range(20):
            shifted = base_point + rng.uniform(-5, 5) * tangent
            val = monostatic_likelihood(MonostaticMeasurement(shifted, R), va, p_bs)
            assert val == pytest.approx(ref, rel=1e-12)

    def test_anisotropic_matches_degenerate_oracle(self):
        rng = np.random.default_rng(14)
        for _ in range(50):
            p_bs = rng.uniform(-20, 20, 3)
            va = rng.uniform(-20, 20, 3)
            if np.linalg.norm(p_bs - va) < 1.0:
                continue
            A = rng.standard_normal((3, 3)) * 0.2
            R = A @ A.T + 0.001 * np.eye(3)
            pos = rng.uniform(-20, 20, 3)
            z = MonostaticMeasurement(pos, R)
            assert monostatic_likelihood(z, va, p_bs) == pytest.approx(
                _degenerate_gaussian_oracle(z, va, p_bs), rel=1e-9
            )

    def test_degenerate_and_singular(self):
        p = np.array([1.0, 2.0, 3.0])
        z = MonostaticMeasurement(np.zeros(3), 0.01 * np.eye(3))
        with pytest.raises(DegenerateGeometry):
            monostatic_likelihood(z, p, p)
        n = np.array([1.0, 0.0, 0.0])
        R = np.diag([0.0, 1.0, 1.0])  # no variance along the normal
        z2 = MonostaticMeasurement(np.zeros(3), R)
        with pytest.raises(SingularVariance):
            monostatic_likelihood(z2, np.array([-10.0, 0, 0]), np.array([10.0, 0, 0]))


class TestClutterDensities:
    def test_values(self):
        cfg = NoiseConfig()
        assert clutter_density_bistatic(250.0, cfg) == pytest.approx(0.002)
        assert clutter_density_bistatic(600.0, cfg) == 0.0
        assert clutter_density_monostatic(np.zeros(3), cfg) == pytest.approx(1.0 / 2.7e7)
        assert clutter_density_monostatic(np.array([200.0, 0, 0]), cfg) == 0.0


class TestNoiseConfigValidation:
    def test_rejects_bad(self):
        with pytest.raises(ValueError):
            NoiseConfig(sigma_z=-0.1)
        with pytest.raises(ValueError):
            NoiseConfig(clutter_range_interval=(5.0, 5.0))

    def test_measurement_invariants(self):
        with pytest.raises(ValueError):
            BistaticMeasurement(pseudo_range=-1.0, variance=1.0)
        with pytest.raises(ValueError):
            BistaticMeasurement(pseudo_range=1.0, variance=0.0)
        with pytest.raises(ValueError):
            MonostaticMeasurement(np.zeros(3), np.diag([1.0, 1.0, -1.0]))
