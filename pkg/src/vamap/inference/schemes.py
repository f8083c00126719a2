"""Per-epoch update schedules.

Three schedules share the prediction / association / pruning machinery:

* single link - the baseline, one link's measurements only;
* dominant fusion - one link maintains the feature set and proposes births,
  the other contributes likelihood factors only (its measurements associate
  to existing candidates, never spawn new ones);
* sequential fusion - per epoch the first link inherits the other link's
  posterior set through a cross-link kernel, updates it with its own
  measurements, then hands the result to the second link for its update.

All randomness is drawn from counter-based streams keyed by
(seed, epoch, BS, stage), so any execution order over epochs, base stations,
and Monte-Carlo runs reproduces identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import Vec3
from ..measurement import NoiseConfig
from ..scene import EpochFrame
from .association import AssociationTable, association_update, bi_group, mo_group
from .beliefs import (
    BirthConfig,
    FilterState,
    MapEstimate,
    TransitionConfig,
    extract_map,
    merge_duplicates,
    predict_cross_link,
    predict_legacy_same_link,
    prune,
)

_INF_DOMAIN = 1


class EpochMismatch(ValueError):
    pass


@dataclass
class InferenceConfig:
    """Everything the per-epoch update needs besides the measurements."""

    n_particles: int = 20000
    spa_iters: int = 2
    p_th: float = 0.5
    p_prune: float = 1e-3
    merge_radius: float = 4.0   # collapse duplicate hypotheses closer than this
    birth_cross_edges: bool = True   # newborns also claim later measurements at birth
    transition: TransitionConfig = field(default_factory=TransitionConfig)
    birth: BirthConfig = field(default_factory=BirthConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    diffuse_weight_bi: float | None = None   # None: derived from mu_m_bi

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be positive")
        if self.spa_iters < 1:
            raise ValueError("spa_iters must be >= 1")
        for name in ("p_th", "p_prune"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    @property
    def bi_diffuse_weight(self) -> float:
        if self.diffuse_weight_bi is not None:
            return self.diffuse_weight_bi
        mu = self.noise.mu_m_bi
        return max(0.0, (mu - 1.0) / mu) if mu > 1.0 else 0.0


def stage_rng(seed: int, epoch: int, bs: int, stage: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(_INF_DOMAIN, int(epoch), int(bs), int(stage)))
    return np.random.Generator(np.random.Philox(ss))


def _group(frame: EpochFrame, link: str, cfg: InferenceConfig, births: bool):
    if link == "bi":
        return bi_group(frame, cfg.noise, births, cfg.bi_diffuse_weight)
    if link == "mo":
        return mo_group(frame, cfg.noise, births)
    raise ValueError(f"unknown link {link!r}")


def _check_aligned(frame: EpochFrame, other: EpochFrame | None) -> EpochFrame:
    if other is None:
        return frame
    if other.epoch != frame.epoch or other.bs != frame.bs:
        raise EpochMismatch("frames disagree in epoch or base station")
    return other


def step_single_link(
    state: FilterState,
    frame: EpochFrame,
    link: str,
    p_bs: Vec3,
    cfg: InferenceConfig,
    seed: int,
) -> tuple[FilterState, AssociationTable]:
    """Predict, associate against one link's measurements, prune."""
    rng = stage_rng(seed, frame.epoch, frame.bs, 0)
    state = predict_legacy_same_link(state, cfg.transition, rng)
    state.epoch = frame.epoch
    state, table = association_update(
        state,
        [_group(frame, link, cfg, births=True)],
        frame.u,
        p_bs,
        cfg.birth,
        cfg.n_particles,
        cfg.spa_iters,
        rng,
        frame.epoch,
        cfg.birth_cross_edges,
    )
    return merge_duplicates(prune(state, cfg.p_prune), cfg.merge_radius), table


def step_dominant_fusion(
    state: FilterState,
    frame: EpochFrame,
    dominant: str,
    p_bs: Vec3,
    cfg: InferenceConfig,
    seed: int,
    aux_frame: EpochFrame | None = None,
) -> tuple[FilterState, AssociationTable]:
    """One joint update: dominant link proposes births, the other link adds
    likelihood factors over the same candidate set.

    With an empty auxiliary measurement set this reduces bit-exactly to the
    single-link baseline (same random draws, same beliefs).
    """
    aux_frame = _check_aligned(frame, aux_frame)
    aux = "mo" if dominant == "bi" else "bi"
    rng = stage_rng(seed, frame.epoch, frame.bs, 0)
    state = predict_legacy_same_link(state, cfg.transition, rng)
    state.epoch = frame.epoch
    groups = [
        _group(frame, dominant, cfg, births=True),
        _group(aux_frame, aux, cfg, births=False),
    ]
    state, table = association_update(
        state, groups, frame.u, p_bs, cfg.birth, cfg.n_particles, cfg.spa_iters, rng, frame.epoch,
        cfg.birth_cross_edges,
    )
    return merge_duplicates(prune(state, cfg.p_prune), cfg.merge_radius), table


def step_sequential_fusion(
    state: FilterState,
    frame: EpochFrame,
    order: tuple[str, str],
    p_bs: Vec3,
    cfg: InferenceConfig,
    seed: int,
    second_frame: EpochFrame | None = None,
) -> tuple[FilterState, list[AssociationTable]]:
    """Two-stage cross-link update.

    Stage 1 carries the other link's posterior from the previous epoch
    through the survival+persistence kernel and updates with the first
    link's measurements; stage 2 hands the enlarged set over (persistence
    only, positions untouched) and updates with the second link.
    """
    second_frame = _check_aligned(frame, second_frame)
    first, second = order
    tables = []

    rng1 = stage_rng(seed, frame.epoch, frame.bs, 0)
    state = predict_cross_link(state, cfg.transition, cfg.birth, stage=1, rng=rng1)
    state.epoch = frame.epoch
    state, t1 = association_update(
        state,
        [_group(frame, first, cfg, births=True)],
        frame.u,
        p_bs,
        cfg.birth,
        cfg.n_particles,
        cfg.spa_iters,
        rng1,
        frame.epoch,
        cfg.birth_cross_edges,
    )
    state = merge_duplicates(prune(state, cfg.p_prune), cfg.merge_radius)
    tables.append(t1)

    rng2 = stage_rng(seed, frame.epoch, frame.bs, 1)
    state = predict_cross_link(state, cfg.transition, cfg.birth, stage=2, rng=rng2)
    state.epoch = frame.epoch
    state, t2 = association_update(
        state,
        [_group(second_frame, second, cfg, births=True)],
        frame.u,
        p_bs,
        cfg.birth,
        cfg.n_particles,
        cfg.spa_iters,
        rng2,
        frame.epoch,
        cfg.birth_cross_edges,
    )
    state = merge_duplicates(prune(state, cfg.p_prune), cfg.merge_radius)
    tables.append(t2)
    return state, tables


def _step_method(method: str, state, frame, p_bs, cfg, seed):
    if method == "bi_only":
        return step_single_link(state, frame, "bi", p_bs, cfg, seed)[0]
    if method == "mo_only":
        return step_single_link(state, frame, "mo", p_bs, cfg, seed)[0]
    if method == "fusion1":
        return step_dominant_fusion(state, frame, "bi", p_bs, cfg, seed)[0]
    if method == "fusion2":
        return step_dominant_fusion(state, frame, "mo", p_bs, cfg, seed)[0]
    if method == "fusion3":
        return step_sequential_fusion(state, frame, ("bi", "mo"), p_bs, cfg, seed)[0]
    if method == "fusion4":
        return step_sequential_fusion(state, frame, ("mo", "bi"), p_bs, cfg, seed)[0]
    raise ValueError(f"unknown method {method!r}")


METHODS = ("bi_only", "mo_only", "fusion1", "fusion2", "fusion3", "fusion4")


def run_method(
    method: str,
    frames: list[EpochFrame],
    p_bs: Vec3,
    cfg: InferenceConfig,
    seed: int,
) -> tuple[list[MapEstimate], list[list[tuple[int, float]]]]:
    """Filter one BS's frame sequence; returns per-epoch declared maps and
    the (label, existence) pairs of every maintained feature."""
    if not frames:
        return [], []
    state = FilterState(bs=frames[0].bs)
    maps: list[MapEstimate] = []
    tracked: list[list[tuple[int, float]]] = []
    for frame in frames:
        state = _step_method(method, state, frame, p_bs, cfg, seed)
        maps.append(extract_map(state, cfg.p_th))
        tracked.append([(b.label, b.existence) for b in state.beliefs])
    return maps, tracked
