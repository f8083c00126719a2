"""Bernoulli map-feature beliefs: weighted particle clouds with an existence
probability, their prediction kernels, birth proposals, pruning, and map
extraction.

The dead branch of each Bernoulli feature is never materialized; the
existence scalar carries all of its mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import chi2

from ..geometry import Vec3, as_vec3
from ..measurement import BistaticMeasurement, MonostaticMeasurement
from ..scene import EpochFrame

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class TransitionConfig:
    """Survival / cross-link kernel probabilities and the position random walk."""

    p_survive: float = 0.99
    p_crosslink: float = 1.0
    p_crossbirth: float = 0.0
    process_noise_std: float = 0.05

    def __post_init__(self):
        for name in ("p_survive", "p_crosslink", "p_crossbirth"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.process_noise_std < 0:
            raise ValueError("process_noise_std must be nonnegative")


@dataclass
class BirthConfig:
    """New-feature intensity and the uniform spherical region of interest."""

    mu_birth: float = 0.01
    roi_center: Vec3 = field(default_factory=lambda: np.zeros(3))
    roi_radius: float = 100.0
    proposal_trunc: float = 3.0   # monostatic proposal truncation, in sigmas

    def __post_init__(self):
        if self.mu_birth < 0:
            raise ValueError("mu_birth must be nonnegative")
        if self.roi_radius <= 0:
            raise ValueError("roi_radius must be positive")
        self.roi_center = as_vec3(self.roi_center)

    @property
    def roi_volume(self) -> float:
        return 4.0 / 3.0 * math.pi * self.roi_radius**3

    def in_roi(self, X: np.ndarray) -> np.ndarray:
        return np.linalg.norm(np.atleast_2d(X) - self.roi_center, axis=1) <= self.roi_radius

    def sample_roi(self, rng: np.random.Generator, n: int) -> np.ndarray:
        v = rng.standard_normal((n, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        r = self.roi_radius * rng.uniform(size=n) ** (1.0 / 3.0)
        return self.roi_center + r[:, None] * v


@dataclass
class PmfBelief:
    """One potential map feature: particle position belief + existence."""

    label: int
    particles: np.ndarray          # (N, 3)
    weights: np.ndarray            # (N,), normalized
    existence: float
    origin: str = "legacy"         # "legacy" | "new"
    birth_epoch: int = -1
    birth_link: str = ""
    birth_mass: float = 1.0        # importance mass of the birth prior (new features)

    def __post_init__(self):
        self.particles = np.atleast_2d(np.asarray(self.particles, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape[0] != self.particles.shape[0]:
            raise ValueError("weights and particles disagree in length")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")
        s = float(self.weights.sum())
        if abs(s - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")
        if not 0.0 <= self.existence <= 1.0:
            raise ValueError("existence must lie in [0, 1]")

    def mmse(self) -> Vec3:
        return self.weights @ self.particles


@dataclass
class FilterState:
    """Per-BS feature set; labels are unique and stable across epochs."""

    bs: int
    beliefs: list[PmfBelief] = field(default_factory=list)
    epoch: int = -1
    next_label: int = 0

    def copy_shallow(self) -> "FilterState":
        return FilterState(bs=self.bs, beliefs=list(self.beliefs), epoch=self.epoch, next_label=self.next_label)


@dataclass
class MapEstimate:
    """Declared features with their MMSE positions."""

    epoch: int
    bs: int
    labels: list[int]
    positions: np.ndarray        # (D, 3)
    existences: np.ndarray       # (D,)

    @property
    def size(self) -> int:
        return len(self.labels)


def predict_legacy_same_link(state: FilterState, cfg: TransitionConfig, rng: np.random.Generator) -> FilterState:
    """Temporal survival + random-walk position kernel on the same link."""
    out = []
    for b in state.beliefs:
        X = b.particles
        if cfg.process_noise_std > 0:
            X = X + cfg.process_noise_std * rng.standard_normal(X.shape)
        else:
            X = X.copy()
        out.append(replace(b, particles=X, weights=b.weights.copy(), existence=cfg.p_survive * b.existence, origin="legacy"))
    return FilterState(bs=state.bs, beliefs=out, epoch=state.epoch, next_label=state.next_label)


def predict_cross_link(
    state: FilterState,
    cfg: TransitionConfig,
    birth: BirthConfig,
    stage: int,
    rng: np.random.Generator,
) -> FilterState:
    """Cross-link hand-over kernel.

    Stage 1 (previous epoch, other link -> this link) applies survival,
    cross-link persistence, and the position random walk; stage 2 (same
    epoch hand-over) applies persistence only and leaves positions untouched.
    Cross-link birth moves the complementary existence mass onto fresh
    particles from the birth prior.
    """
    if stage not in (1, 2):
        raise ValueError("stage must be 1 or 2")
    keep = cfg.p_survive * cfg.p_crosslink if stage == 1 else cfg.p_crosslink
    out = []
    for b in state.beliefs:
        e_keep = keep * b.existence
        e_birth = cfg.p_crossbirth * (1.0 - b.existence)
        e_new = e_keep + e_birth
        X = b.particles
        w = b.weights
        if stage == 1 and cfg.process_noise_std > 0:
            X = X + cfg.process_noise_std * rng.standard_normal(X.shape)
        else:
            X = X.copy()
        if e_birth > 0.0 and e_new > 0.0:
            n = X.shape[0]
            n_fresh = int(round(n * e_birth / e_new))
            if n_fresh > 0:
                from ..kernels import systematic_resample

                idx = systematic_resample(w, rng.uniform())
                survivors = X[idx][: n - n_fresh]
                fresh = birth.sample_roi(rng, n_fresh)
                X = np.concatenate([survivors, fresh], axis=0)
                w = np.full(n, 1.0 / n)
        out.append(replace(b, particles=X, weights=w.copy(), existence=e_new, origin="legacy"))
    return FilterState(bs=state.bs, beliefs=out, epoch=state.epoch, next_label=state.next_label)


def prune(state: FilterState, p_prune: float) -> FilterState:
    """Drop features whose existence fell below the pruning threshold."""
    return FilterState(
        bs=state.bs,
        beliefs=[b for b in state.beliefs if b.existence >= p_prune],
        epoch=state.epoch,
        next_label=state.next_label,
    )


def merge_duplicates(state: FilterState, radius: float) -> FilterState:
    """Absorb co-located duplicate hypotheses.

    Since one facade may explain many measurements, nothing in the
    association itself forbids two surviving hypotheses of the same facade;
    they are collapsed here instead. The strongest feature within the merge
    radius keeps its belief and label; absorbed existence combines as the
    probability that at least one of the duplicates existed.
    """
    if radius <= 0 or len(state.beliefs) < 2:
        return state
    order = sorted(state.beliefs, key=lambda b: (-b.existence, b.label))
    kept: list[PmfBelief] = []
    centers: list[np.ndarray] = []
    for b in order:
        pos = b.mmse()
        merged = False
        for i, c in enumerate(centers):
            if float(np.linalg.norm(pos - c)) < radius:
                k = kept[i]
                kept[i] = replace(k, existence=1.0 - (1.0 - k.existence) * (1.0 - b.existence))
                merged = True
                break
        if not merged:
            kept.append(b)
            centers.append(pos)
    kept.sort(key=lambda b: b.label)
    return FilterState(bs=state.bs, beliefs=kept, epoch=state.epoch, next_label=state.next_label)


def extract_map(state: FilterState, p_th: float) -> MapEstimate:
    """Declared feature set: existence above threshold, MMSE positions."""
    declared = [b for b in state.beliefs if b.existence > p_th]
    positions = np.array([b.mmse() for b in declared]) if declared else np.zeros((0, 3))
    existences = np.array([b.existence for b in declared])
    return MapEstimate(
        epoch=state.epoch,
        bs=state.bs,
        labels=[b.label for b in declared],
        positions=positions,
        existences=existences,
    )


def _log_norm3(Xi_sq: np.ndarray) -> np.ndarray:
    return -0.5 * Xi_sq - 1.5 * _LOG_2PI


def _propose_bistatic(
    z: BistaticMeasurement,
    u: Vec3,
    birth: BirthConfig,
    psi: float,
    diffuse_prob: float,
    n_particles: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Spherical-shell proposal around the receiver.

    Radius = pseudo-range minus a diffuse excess back-off (with the prior
    diffuse probability) plus Gaussian thickness. Importance weights are
    taken against the uniform ROI birth density, so the returned mass
    estimates how much birth-prior probability the shell covers.
    """
    sigma = math.sqrt(z.variance)
    d = rng.standard_normal((n_particles, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    is_diffuse = rng.uniform(size=n_particles) < diffuse_prob
    backoff = np.where(is_diffuse, rng.uniform(0.0, max(psi, 1e-300), size=n_particles), 0.0)
    s = z.pseudo_range - backoff + sigma * rng.standard_normal(n_particles)
    X = np.asarray(u, dtype=float) + s[:, None] * d

    valid = (s > 1e-6) & birth.in_roi(X)
    # Radial proposal density: specular Gaussian / diffuse Gaussian-uniform mixture.
    t = z.pseudo_range - s
    spec = np.exp(-0.5 * (t / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))
    if diffuse_prob > 0 and psi > 0:
        from scipy.special import erfc

        phi = lambda x: 0.5 * erfc(-x / math.sqrt(2.0))
        diff = (phi(t / sigma) - phi((t - psi) / sigma)) / psi
        p_rad = (1.0 - diffuse_prob) * spec + diffuse_prob * diff
    else:
        p_rad = spec
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(valid & (p_rad > 0), (4.0 * math.pi * s**2) / (birth.roi_volume * p_rad), 0.0)
    mass = float(np.mean(w))
    if mass <= 0.0:
        return X, np.full(n_particles, 1.0 / n_particles), 0.0
    return X, w / w.sum(), mass


def _propose_monostatic(
    z: MonostaticMeasurement,
    p_bs: Vec3,
    birth: BirthConfig,
    n_particles: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Gaussian proposal around the normal-incidence VA identity 2 z - p_bs.

    The pseudo-position covariance maps to a doubled VA spread; samples are
    truncated at a few sigmas so the inverse-density importance weights stay
    bounded.
    """
    center = 2.0 * np.asarray(z.pseudo_position, dtype=float) - np.asarray(p_bs, dtype=float)
    evals, evecs = np.linalg.eigh(np.asarray(z.covariance, dtype=float))
    evals = np.maximum(evals, 0.0)
    if float(evals.max()) < 1e-24:
        X = np.tile(center, (n_particles, 1))
        mass = 1.0 / birth.roi_volume if birth.in_roi(center[None])[0] else 0.0
        return X, np.full(n_particles, 1.0 / n_particles), mass
    evals_c = np.maximum(evals, 1e-24)
    S = evecs @ np.diag(np.sqrt(evals_c))

    c = birth.proposal_trunc
    xi = np.empty((0, 3))
    while xi.shape[0] < n_particles:
        draw = rng.standard_normal((2 * n_particles, 3))
        draw = draw[np.sum(draw**2, axis=1) <= c * c]
        xi = np.concatenate([xi, draw], axis=0)
    xi = xi[:n_particles]
    X = center + xi @ (2.0 * S).T

    # density of X: N(xi) / (det(2S) * P(chi2_3 <= c^2)); det(2S) = 8 * prod(sqrt(evals))
    log_det = math.log(8.0) + float(np.sum(0.5 * np.log(evals_c)))
    trunc_mass = float(chi2.cdf(c * c, df=3))
    log_rho = _log_norm3(np.sum(xi**2, axis=1)) - log_det - math.log(trunc_mass)
    in_roi = birth.in_roi(X)
    with np.errstate(over="ignore"):
        w = np.where(in_roi, np.exp(-log_rho) / birth.roi_volume, 0.0)
    mass = float(np.mean(w))
    if mass <= 0.0:
        return X, np.full(n_particles, 1.0 / n_particles), 0.0
    return X, w / w.sum(), mass


def propose_new_pmfs(
    frame: EpochFrame,
    link: str,
    p_bs: Vec3,
    birth: BirthConfig,
    psi: float,
    diffuse_prob: float,
    n_particles: int,
    rng: np.random.Generator,
    birth_epoch: int,
) -> list[PmfBelief]:
    """One new-feature candidate per measurement of the given link.

    Labels are not assigned here; the update that accepts the candidates
    hands out labels in measurement order.
    """
    measurements = frame.bistatic if link == "bi" else frame.monostatic
    out = []
    for z in measurements:
        child = rng.spawn(1)[0]
        if link == "bi":
            X, w, mass = _propose_bistatic(z, frame.u, birth, psi, diffuse_prob, n_particles, child)
        else:
            X, w, mass = _propose_monostatic(z, p_bs, birth, n_particles, child)
        out.append(
            PmfBelief(
                label=-1,
                particles=X,
                weights=w,
                existence=0.0,
                origin="new",
                birth_epoch=birth_epoch,
                birth_link=link,
                birth_mass=mass,
            )
        )
    return out
