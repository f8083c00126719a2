"""Measurement-oriented sum-product data association.

One update round ("bank") couples the current feature set to the epoch's
measurements of one or two links. Features may explain several measurements
(no mutual-exclusion constraint); each measurement carries a categorical
association variable over {clutter, features}. Message passing is the
standard loopy schedule with extrinsic feature-to-factor messages: the weight
a feature offers a measurement excludes that measurement's own previous
message. (Feeding the full belief back instead makes co-located candidates
extinguish each other within two iterations.)

New-feature candidates are instantiated one per measurement of the
birth-capable link. A candidate born from measurement k also connects to the
later measurements l > k of its link (minimum-index rule), which is what
de-duplicates a cluster of same-facade measurements: by the second iteration
the first-born has claimed the later measurements and the remaining births
are stillborn. Those cross factors enter through closed-form scalar
expectations of the founding measurement's induced density, not through the
particle cloud, so the per-epoch particle cost stays bilinear: the newborn's
particles are reweighted by the founding factor alone.

All association algebra is kept in unnormalized "clutter-weight" form
(clutter entry mu_fa * f_fa, candidate entries e * mu_m * E[f]), which stays
well defined in clutter-free configurations where likelihood-ratio forms
would divide by zero. A measurement no candidate can explain falls back to
clutter with probability one.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc, logsumexp

from .. import kernels
from ..geometry import DegenerateGeometry, Vec3, plane_from_va
from ..measurement import (
    BistaticMeasurement,
    MonostaticMeasurement,
    NoiseConfig,
    clutter_density_bistatic,
    clutter_density_monostatic,
)
from ..scene import EpochFrame
from .beliefs import BirthConfig, FilterState, PmfBelief, propose_new_pmfs

_NEG_INF = -np.inf
_SQRT2PI = math.sqrt(2.0 * math.pi)


class NumericalUnderflow(Warning):
    """All association weights of a measurement underflowed to zero."""


@dataclass
class MeasurementGroup:
    """One link's measurements plus the likelihood/clutter parameters."""

    link: str                      # "bi" | "mo"
    z: np.ndarray                  # bi: (M,) ranges; mo: (M, 3) positions
    noise: np.ndarray              # bi: (M,) variances; mo: (M, 3, 3) covariances
    mu_m: float
    mu_fa: float
    fa_density: np.ndarray         # (M,)
    births: bool
    psi: float = 0.0
    diffuse_weight: float = 0.0

    def __len__(self) -> int:
        return int(self.z.shape[0])


def bi_group(frame: EpochFrame, noise: NoiseConfig, births: bool, diffuse_weight: float) -> MeasurementGroup:
    z = np.array([m.pseudo_range for m in frame.bistatic])
    var = np.array([m.variance for m in frame.bistatic])
    fa = np.array([clutter_density_bistatic(m.pseudo_range, noise) for m in frame.bistatic])
    return MeasurementGroup(
        link="bi",
        z=z,
        noise=var,
        mu_m=noise.mu_m_bi,
        mu_fa=noise.mu_fa_bi,
        fa_density=fa,
        births=births,
        psi=noise.psi_z,
        diffuse_weight=diffuse_weight,
    )


def mo_group(frame: EpochFrame, noise: NoiseConfig, births: bool) -> MeasurementGroup:
    z = np.array([m.pseudo_position for m in frame.monostatic]).reshape(-1, 3)
    R = np.array([m.covariance for m in frame.monostatic]).reshape(-1, 3, 3)
    fa = np.array([clutter_density_monostatic(m.pseudo_position, noise) for m in frame.monostatic])
    return MeasurementGroup(
        link="mo",
        z=z,
        noise=R,
        mu_m=noise.mu_m_mo,
        mu_fa=noise.mu_fa_mo,
        fa_density=fa,
        births=births,
    )


@dataclass
class AssociationTable:
    """Final association marginals: one row per measurement and link,
    columns = [clutter] + candidates (in bank order)."""

    labels: list[int] = field(default_factory=list)
    links: list[str] = field(default_factory=list)
    rows: list[np.ndarray] = field(default_factory=list)  # per link: (M, 1 + K)


def _phi(x):
    return 0.5 * erfc(-x / math.sqrt(2.0))


def _peak_density(g: MeasurementGroup) -> np.ndarray:
    """Per-measurement maximum of the link density, used to normalize the
    detectability gate."""
    if g.link == "bi":
        sigma = np.sqrt(g.noise)
        spec = 1.0 / (sigma * _SQRT2PI)
        if g.diffuse_weight <= 0.0 or g.psi <= 0.0:
            return spec
        half = 0.5 * g.psi / sigma
        diff = (_phi(half) - _phi(-half)) / g.psi
        return (1.0 - g.diffuse_weight) * spec + g.diffuse_weight * diff
    v = np.trace(g.noise, axis1=1, axis2=2) / 3.0
    return 1.0 / np.sqrt(2.0 * math.pi * np.maximum(v, 1e-300))


def _gate_log_penalty(g: MeasurementGroup, L: np.ndarray, peaks: np.ndarray) -> np.ndarray:
    """Pointwise zero-detection penalty, gated by detectability.

    The facade MPC rate is position dependent: a hypothesis the link can
    currently see should have produced about mu_m detections. Detectability
    is estimated from the data itself: the gate opens where some observed
    measurement sits at the hypothesis's predicted signature (density near
    its peak) and stays shut where nothing was ever observed, so features on
    facades a link cannot see pay nothing while co-located duplicates and
    hypotheses parasitic on another feature's measurements decay.
    """
    ratio = np.minimum(L / peaks[:, None], 1.0)
    with np.errstate(divide="ignore"):
        log_none = np.log1p(-ratio).sum(axis=0)
    gate = -np.expm1(log_none)   # 1 - prod(1 - ratio)
    return -g.mu_m * gate


def _bi_cross_expectation(g: MeasurementGroup, founder: int, rows: np.ndarray) -> np.ndarray:
    """Closed-form surrogate for E[f(z_l | x)] under the density a bistatic
    founding measurement induces on a newborn's mirror-path length.

    The cloud and the measurement kernel are both specular/diffuse mixtures;
    the diffuse parts (excess range and birth back-off) are folded into one
    symmetric box of half-width psi smoothed by the combined Gaussian widths.
    """
    delta = g.z[rows] - g.z[founder]
    s = np.sqrt(g.noise[rows] + g.noise[founder])
    spec = np.exp(-0.5 * (delta / s) ** 2) / (s * _SQRT2PI)
    w = g.diffuse_weight
    if w <= 0.0 or g.psi <= 0.0:
        return spec
    box = (_phi((delta + g.psi) / s) - _phi((delta - g.psi) / s)) / (2.0 * g.psi)
    spec_w = (1.0 - w) ** 2
    return spec_w * spec + (1.0 - spec_w) * box


def _mo_cross_expectation(g: MeasurementGroup, founder: int, rows: np.ndarray, p_bs: Vec3) -> np.ndarray:
    """Closed-form surrogate for the plane-residual density of later
    monostatic measurements under the founding measurement's VA hypothesis."""
    v0 = 2.0 * g.z[founder] - np.asarray(p_bs, dtype=float)
    try:
        plane = plane_from_va(p_bs, v0)
    except DegenerateGeometry:
        return np.zeros(len(rows))
    n = plane.normal
    d = (g.z[rows] - plane.anchor) @ n
    var = np.einsum("i,mij,j->m", n, g.noise[rows] + g.noise[founder], n)
    var = np.maximum(var, 1e-300)
    return np.exp(-0.5 * d * d / var) / np.sqrt(2.0 * math.pi * var)


class _Entry:
    """Mutable per-candidate working state during a bank update.

    Legacy candidates carry particle-level factor messages for every
    measurement. New candidates carry particle-level state for their founding
    factor only, plus scalar boosts for the later measurements of their link.
    """

    __slots__ = (
        "belief", "X", "lw_prior", "log_a", "log_b", "la1", "lb1",
        "edges", "is_new", "founder", "cross_rows", "cross_ebar", "cross_logB",
        "founder_lse", "L", "logM", "gate_msg", "msg", "forced",
    )

    def __init__(self, belief: PmfBelief, log_a: float, log_b: float, edges, is_new: bool):
        self.belief = belief
        self.X = belief.particles
        with np.errstate(divide="ignore"):
            lw = np.log(belief.weights)
        self.lw_prior = lw - logsumexp(lw)
        self.log_a = log_a
        self.log_b = log_b
        self.la1 = log_a
        self.lb1 = log_b
        self.edges = edges                 # dict group_idx -> measurement indices
        self.is_new = is_new
        self.founder: tuple[int, int] | None = None
        self.cross_rows = np.zeros(0, dtype=int)
        self.cross_ebar = np.zeros(0)
        self.cross_logB = np.zeros(0)
        self.founder_lse = 0.0
        self.L: dict[int, np.ndarray] = {}          # densities, (edges, N)
        self.logM: dict[int, np.ndarray] = {}       # last factor-to-feature log messages
        self.gate_msg: dict[int, np.ndarray] = {}   # pointwise zero-detection penalties
        self.msg = np.zeros(self.X.shape[0])        # sum of logM over particle edges
        self.forced = False

    def existence(self) -> float:
        if self.la1 == _NEG_INF and self.lb1 == _NEG_INF:
            return 0.0
        return float(np.exp(self.la1 - np.logaddexp(self.la1, self.lb1)))

    def posterior_logw(self) -> np.ndarray:
        lw = self.lw_prior + self.msg
        s = logsumexp(lw)
        if s == _NEG_INF:
            return np.full(self.X.shape[0], -math.log(self.X.shape[0]))
        return lw - s

    def weights(self) -> np.ndarray:
        w = np.exp(self.posterior_logw())
        return w / w.sum()


def _evaluate_likelihoods(entry: _Entry, groups: list[MeasurementGroup], u: Vec3, p_bs: Vec3) -> None:
    """Fill the per-edge density matrices for the entry's current particles."""
    entry.L.clear()
    for g_idx, rows in entry.edges.items():
        g = groups[g_idx]
        if g.link == "bi":
            L = kernels.bi_likelihood(g.z[rows], g.noise[rows], entry.X, u, g.psi, g.diffuse_weight)
        else:
            L = kernels.mo_likelihood(g.z[rows], g.noise[rows], entry.X, p_bs)
        entry.L[g_idx] = L


def _legacy_extrinsic_weight(e: _Entry, g_idx: int, row: int, mu_m: float) -> float:
    """Unnormalized association weight of a legacy candidate for one
    measurement, with that measurement's own message divided out."""
    if e.log_a == _NEG_INF:
        return 0.0
    logM_row = e.logM[g_idx][row]
    if np.isneginf(logM_row).any():
        # Rare forced-edge path: rebuild the other-edge message sum
        # explicitly (msg - logM_row would be NaN at -inf entries).
        lw = e.lw_prior.copy()
        for gj, Mj in e.logM.items():
            for rj in range(Mj.shape[0]):
                if gj == g_idx and rj == row:
                    continue
                lw += Mj[rj]
        for gm in e.gate_msg.values():
            lw = lw + gm
    else:
        lw = e.lw_prior + e.msg - logM_row
    s = float(logsumexp(lw))
    if s == _NEG_INF:
        return 0.0
    la = e.log_a + s
    lb = e.log_b if not e.forced else _NEG_INF
    w = np.exp(lw - s)
    ebar = float(e.L[g_idx][row] @ w)
    etil = float(np.exp(la - np.logaddexp(la, lb))) if lb != _NEG_INF else 1.0
    return etil * mu_m * ebar


def _new_extrinsic_weights(e: _Entry, mu_m: float) -> tuple[float, np.ndarray]:
    """(founding-row weight, cross-row weights) of a newborn candidate.

    The founding factor's no-feature branch carries only the unit dummy mass,
    so its weight uses plain odds; cross factors behave like legacy ones.
    """
    if e.log_a == _NEG_INF:
        return 0.0, np.zeros(len(e.cross_rows))
    ebar_f = float(e.L[e.founder[0]][0] @ np.exp(e.lw_prior))
    w_founder = math.exp(min(e.log_a + float(np.sum(e.cross_logB)), 700.0)) * mu_m * ebar_f
    if len(e.cross_rows) == 0:
        return w_founder, np.zeros(0)
    total = float(np.sum(e.cross_logB))
    log_odds = e.log_a + e.founder_lse + (total - e.cross_logB)
    odds = np.exp(np.minimum(log_odds, 700.0))
    etil = np.where(np.isinf(odds), 1.0, odds / (1.0 + odds))
    if e.forced:
        etil = np.ones_like(etil)
    return w_founder, etil * mu_m * e.cross_ebar


def association_update(
    state: FilterState,
    groups: list[MeasurementGroup],
    u: Vec3,
    p_bs: Vec3,
    birth: BirthConfig,
    n_particles: int,
    spa_iters: int,
    rng: np.random.Generator,
    birth_epoch: int,
    birth_cross_edges: bool = True,
) -> tuple[FilterState, AssociationTable]:
    """Run the fixed-iteration sum-product update for one bank.

    Per iteration: extrinsic expected-likelihood weights per (candidate,
    measurement), association marginals with the new-feature label available
    only from its founding measurement onward, extrinsic odds back to the
    candidates, then a pointwise particle reweight with existence update and
    systematic resampling at effective sample size below half the particle
    count.
    """
    if spa_iters < 1:
        raise ValueError("spa_iters must be >= 1")
    active = [gi for gi, g in enumerate(groups) if len(g) > 0]
    if not active:
        return state, AssociationTable(
            labels=[b.label for b in state.beliefs],
            links=[g.link for g in groups],
            rows=[np.zeros((0, 1 + len(state.beliefs))) for _ in groups],
        )

    own_idx = next((gi for gi in active if groups[gi].births), None)

    # The facade MPC mean is a position-independent constant here, so the
    # zero-detection factors of the legacy transition are treated as
    # normalization constants: a silent epoch costs a feature only the
    # survival decay, never an extra existence penalty. (Anything harsher
    # would extinguish features on facades a link cannot see at all.)
    entries: list[_Entry] = []
    for b in state.beliefs:
        log_a = math.log(b.existence) if b.existence > 0 else _NEG_INF
        log_b = math.log1p(-b.existence) if b.existence < 1.0 else _NEG_INF
        edges = {gi: np.arange(len(groups[gi])) for gi in active}
        entries.append(_Entry(b, log_a, log_b, edges, is_new=False))

    if own_idx is not None:
        g = groups[own_idx]
        frame_like = EpochFrame(epoch=birth_epoch, bs=state.bs, u=np.asarray(u, dtype=float))
        if g.link == "bi":
            frame_like.bistatic = [BistaticMeasurement(float(zz), float(vv)) for zz, vv in zip(g.z, g.noise)]
        else:
            frame_like.monostatic = [MonostaticMeasurement(zz, RR) for zz, RR in zip(g.z, g.noise)]
        proposals = propose_new_pmfs(
            frame_like, g.link, p_bs, birth, g.psi, g.diffuse_weight, n_particles, rng, birth_epoch
        )
        birth_scale = birth.mu_birth * math.exp(-g.mu_m) / (-math.expm1(-g.mu_m)) if g.mu_m > 0 else 0.0
        for l, cand in enumerate(proposals):
            a = birth_scale * cand.birth_mass
            log_a = math.log(a) if a > 0 else _NEG_INF
            e = _Entry(cand, log_a, 0.0, {own_idx: np.array([l])}, is_new=True)
            e.founder = (own_idx, l)
            e.cross_rows = np.arange(l + 1, len(g)) if birth_cross_edges else np.arange(0)
            if len(e.cross_rows):
                if g.link == "bi":
                    e.cross_ebar = _bi_cross_expectation(g, l, e.cross_rows)
                else:
                    e.cross_ebar = _mo_cross_expectation(g, l, e.cross_rows, p_bs)
            e.cross_logB = np.zeros(len(e.cross_rows))
            entries.append(e)

    for e in entries:
        _evaluate_likelihoods(e, groups, u, p_bs)
        e.logM = {gi: np.zeros_like(e.L[gi]) for gi in e.edges}

    peaks = {gi: _peak_density(groups[gi]) for gi in active}
    qtil: dict[int, np.ndarray] = {gi: np.zeros((len(entries), len(groups[gi]))) for gi in active}
    table = AssociationTable()
    degenerate_warned = False

    for it in range(spa_iters):
        # (i) extrinsic factor-to-association weights (clutter-weight form)
        for k, e in enumerate(entries):
            if e.is_new:
                gi, l = e.founder
                w_f, w_cross = _new_extrinsic_weights(e, groups[gi].mu_m)
                qtil[gi][k, :] = 0.0
                qtil[gi][k, l] = w_f
                if len(e.cross_rows):
                    qtil[gi][k, e.cross_rows] = w_cross
            else:
                for gi, rows in e.edges.items():
                    for r_idx, l in enumerate(rows):
                        qtil[gi][k, l] = _legacy_extrinsic_weight(e, gi, r_idx, groups[gi].mu_m)

        # (ii) association row sums and degeneracy screening
        S: dict[int, np.ndarray] = {}
        dead: dict[int, np.ndarray] = {}
        for gi in active:
            g = groups[gi]
            ref = g.mu_fa * g.fa_density
            S[gi] = ref + qtil[gi].sum(axis=0)
            dead[gi] = S[gi] <= 0.0
            if np.any(dead[gi]) and not degenerate_warned:
                warnings.warn(
                    "association row degenerated to clutter (all candidate weights zero)",
                    NumericalUnderflow,
                    stacklevel=2,
                )
                degenerate_warned = True

        # (iii)+(iv) extrinsic messages back to the candidates, belief rebuild,
        # existence update, resampling
        for k, e in enumerate(entries):
            if e.is_new:
                gi, l = e.founder
                g = groups[gi]
                L = e.L[gi]
                forced = False
                if dead[gi][l]:
                    e.logM[gi][0] = 0.0
                    e.founder_lse = 0.0
                else:
                    D = S[gi][l] - qtil[gi][k, l]
                    with np.errstate(divide="ignore"):
                        e.logM[gi][0] = np.log(g.mu_m * L[0])
                    if D <= 0.0:
                        forced = True
                    else:
                        e.logM[gi][0] -= math.log(D)
                    e.founder_lse = float(logsumexp(e.lw_prior + e.logM[gi][0]))
                if len(e.cross_rows):
                    Dc = S[gi][e.cross_rows] - qtil[gi][k, e.cross_rows]
                    okc = ~dead[gi][e.cross_rows]
                    boost = np.ones(len(e.cross_rows))
                    pos = okc & (Dc > 0.0)
                    boost[pos] = 1.0 + g.mu_m * e.cross_ebar[pos] / Dc[pos]
                    forced_c = okc & (Dc <= 0.0)
                    if np.any(forced_c):
                        boost[forced_c] = np.maximum(g.mu_m * e.cross_ebar[forced_c], 1e-300)
                        forced = True
                    e.cross_logB = np.log(boost)
                e.forced = forced
                e.msg = e.logM[gi][0]
                e.la1 = e.log_a + e.founder_lse + float(np.sum(e.cross_logB))
                if not np.isfinite(e.la1):
                    e.la1 = _NEG_INF if e.la1 == _NEG_INF or math.isnan(e.la1) else 700.0
                e.lb1 = _NEG_INF if forced else e.log_b
                continue

            msg = np.zeros(e.X.shape[0])
            forced = False
            for gi, rows in e.edges.items():
                g = groups[gi]
                L = e.L[gi]
                D = S[gi][rows] - qtil[gi][k, rows]
                ok = ~dead[gi][rows]
                logM = e.logM[gi]
                coeff = np.where(ok & (D > 0.0), g.mu_m / np.where(D > 0.0, D, 1.0), 0.0)
                with np.errstate(divide="ignore"):
                    logM[:] = np.log1p(coeff[:, None] * L)
                for r_idx in np.flatnonzero(ok & (D <= 0.0)):
                    with np.errstate(divide="ignore"):
                        logM[r_idx] = np.log(g.mu_m * L[r_idx])
                    forced = True
                msg += logM.sum(axis=0)
                e.gate_msg[gi] = _gate_log_penalty(g, L, peaks[gi])
                msg += e.gate_msg[gi]
            e.forced = forced
            e.msg = msg
            lw = e.lw_prior + msg
            lse = float(logsumexp(lw))
            e.la1 = e.log_a + lse if lse != _NEG_INF else _NEG_INF
            e.lb1 = _NEG_INF if forced else e.log_b
            if lse == _NEG_INF:
                continue
            w = np.exp(lw - lse)
            ess = 1.0 / float(np.sum(w * w))
            n = e.X.shape[0]
            if ess < n / 2.0:
                # Regularized resampling with variance-preserving shrinkage:
                # systematic selection, then positions are contracted toward
                # the posterior mean and re-jittered with the complementary
                # kernel bandwidth (a^2 + h^2 = 1). A static feature keeps
                # exploring at the scale of its remaining uncertainty without
                # the kernel noise re-inflating that uncertainty each epoch.
                idx = kernels.systematic_resample(w / w.sum(), rng.uniform())
                mean = w @ e.X
                sd = np.sqrt(np.maximum(w @ (e.X - mean) ** 2, 0.0))
                h = (4.0 / 5.0) ** (1.0 / 7.0) * n ** (-1.0 / 7.0)  # silverman, d=3
                shrink = math.sqrt(1.0 - h * h)
                e.X = mean + shrink * (e.X[idx] - mean) + h * sd * rng.standard_normal((n, 3))
                inv = -msg[idx]
                e.lw_prior = inv - logsumexp(inv)
                e.msg = msg[idx]
                for gi in e.logM:
                    e.logM[gi] = e.logM[gi][:, idx]
                    e.L[gi] = e.L[gi][:, idx]
                for gi in e.gate_msg:
                    e.gate_msg[gi] = e.gate_msg[gi][idx]
                if it < spa_iters - 1:
                    _evaluate_likelihoods(e, groups, u, p_bs)

        if it == spa_iters - 1:
            table.links = [g.link for g in groups]
            table.rows = []
            for gi, g in enumerate(groups):
                if gi in active:
                    ref = g.mu_fa * g.fa_density
                    raw = np.concatenate([ref[:, None], qtil[gi].T], axis=1)
                    dead_rows = dead[gi]
                    raw[dead_rows] = 0.0
                    raw[dead_rows, 0] = 1.0
                    table.rows.append(raw / raw.sum(axis=1, keepdims=True))
                else:
                    table.rows.append(np.zeros((0, 1 + len(entries))))

    out_beliefs: list[PmfBelief] = []
    next_label = state.next_label
    for e in entries:
        if e.is_new:
            label = next_label
            next_label += 1
        else:
            label = e.belief.label
        out_beliefs.append(
            PmfBelief(
                label=label,
                particles=e.X,
                weights=e.weights(),
                existence=e.existence(),
                origin="new" if e.is_new else "legacy",
                birth_epoch=e.belief.birth_epoch if not e.is_new else birth_epoch,
                birth_link=e.belief.birth_link,
                birth_mass=e.belief.birth_mass,
            )
        )
    table.labels = [b.label for b in out_beliefs]
    new_state = FilterState(bs=state.bs, beliefs=out_beliefs, epoch=birth_epoch, next_label=next_label)
    return new_state, table
