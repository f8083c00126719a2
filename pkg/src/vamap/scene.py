"""Synthetic single-bounce scene generator.

Replaces an external ray tracer: builds box-building scenarios (or
free-standing walls), derives vertical facades and their true virtual
anchors, computes per-epoch facade visibility with binary segment occlusion,
and generates noisy bistatic/monostatic measurement frames with diffuse
subpaths, missed detections, and Poisson clutter.

All randomness flows through counter-based substreams keyed by
(seed, epoch, base station), so serial and parallel generation agree
bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    Box,
    Facade,
    Plane,
    Segment,
    Vec3,
    as_vec3,
    bistatic_reflection_point,
    bistatic_specular_range,
    mirror_point,
    monostatic_specular_point,
    segment_occluded,
)
from .measurement import BistaticMeasurement, MonostaticMeasurement, NoiseConfig

_SIM_DOMAIN = 0
_MIN_RANGE_VAR = 1e-12


class ConfigError(ValueError):
    pass


def facades_of_box(box: Box) -> list[Facade]:
    """The four vertical faces of a box, normals pointing outward."""
    cx, cy, cz = box.center
    dx, dy, dz = box.dims
    ez = np.array([0.0, 0.0, 1.0])
    faces = []
    for sign in (+1.0, -1.0):
        n = np.array([sign, 0.0, 0.0])
        center = np.array([cx + sign * dx / 2.0, cy, cz])
        faces.append(
            Facade(
                plane=Plane(anchor=center, normal=n),
                center=center,
                axis_u=np.array([0.0, 1.0, 0.0]),
                axis_v=ez,
                half_width_u=dy / 2.0,
                half_width_v=dz / 2.0,
                id=f"{box.id}{'+x' if sign > 0 else '-x'}",
                building=box.id,
            )
        )
        n = np.array([0.0, sign, 0.0])
        center = np.array([cx, cy + sign * dy / 2.0, cz])
        faces.append(
            Facade(
                plane=Plane(anchor=center, normal=n),
                center=center,
                axis_u=np.array([1.0, 0.0, 0.0]),
                axis_v=ez,
                half_width_u=dx / 2.0,
                half_width_v=dz / 2.0,
                id=f"{box.id}{'+y' if sign > 0 else '-y'}",
                building=box.id,
            )
        )
    return faces


@dataclass
class Scenario:
    """Static scene: buildings, reflective facades, BS positions, UAV samples."""

    buildings: list[Box]
    facades: list[Facade]
    bs_positions: np.ndarray          # (J, 3)
    trajectory: np.ndarray            # (T, 3)
    epoch_dt: float = 0.1
    roi_center: Vec3 | None = None
    roi_radius: float = 100.0
    name: str = "custom"

    def __post_init__(self):
        self.bs_positions = np.atleast_2d(np.asarray(self.bs_positions, dtype=float))
        self.trajectory = np.atleast_2d(np.asarray(self.trajectory, dtype=float))
        if self.trajectory.shape[0] < 1:
            raise ConfigError("trajectory must contain at least one epoch")
        for j, p in enumerate(self.bs_positions):
            for box in self.buildings:
                if box.contains(p):
                    raise ConfigError(f"BS {j} lies inside building {box.id}")
        if self.roi_center is None:
            if self.buildings:
                self.roi_center = np.mean([b.center for b in self.buildings], axis=0)
            elif self.facades:
                self.roi_center = np.mean([f.center for f in self.facades], axis=0)
            else:
                self.roi_center = np.zeros(3)
        self.roi_center = as_vec3(self.roi_center)

    @property
    def n_epochs(self) -> int:
        return self.trajectory.shape[0]

    @property
    def n_bs(self) -> int:
        return self.bs_positions.shape[0]

    def facade_index(self) -> dict[str, Facade]:
        return {f.id: f for f in self.facades}

    def blockers_for(self, facade: Facade) -> list[Box]:
        return [b for b in self.buildings if b.id != facade.building or not facade.building]

    def true_va(self, j: int, facade: Facade) -> Vec3:
        return mirror_point(self.bs_positions[j], facade.plane)


@dataclass
class GroundTruth:
    """True VAs per (BS, facade) and the per-epoch/per-link visibility flags."""

    facade_ids: list[str]
    vas: np.ndarray          # (J, F, 3)
    visibility: np.ndarray   # (T, J, F, 2) bool, [..., 0]=bistatic, [..., 1]=monostatic

    def cumulative_visible(self, j: int, n: int) -> np.ndarray:
        """VAs of facades seen on any link at any epoch <= n (the map an
        omniscient observer could have accumulated so far)."""
        seen = self.visibility[: n + 1, j].any(axis=(0, 2))
        return self.vas[j][seen]


@dataclass
class EpochFrame:
    """Per-BS, per-epoch measurement bundle."""

    epoch: int
    bs: int
    u: Vec3
    bistatic: list[BistaticMeasurement] = field(default_factory=list)
    monostatic: list[MonostaticMeasurement] = field(default_factory=list)
    bistatic_kinds: list[str] = field(default_factory=list)   # simulator annotation only
    monostatic_kinds: list[str] = field(default_factory=list)


def resample_polyline(points: np.ndarray, spacing: float, n_samples: int) -> np.ndarray:
    """Sample a polyline at fixed arc-length spacing, starting at its head."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    seg = np.diff(pts, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]
    need = (n_samples - 1) * spacing
    if total + 1e-9 < need:
        raise ConfigError(f"polyline length {total:.3f} m too short for {n_samples} samples at {spacing} m")
    s = np.arange(n_samples) * spacing
    out = np.empty((n_samples, 3))
    for k, sk in enumerate(s):
        i = int(np.searchsorted(cum, sk, side="right") - 1)
        i = min(i, len(seg_len) - 1)
        t = 0.0 if seg_len[i] == 0 else (sk - cum[i]) / seg_len[i]
        out[k] = pts[i] + t * seg[i]
    return out


_PAPER_UAV_POLYLINE = np.array(
    [
        [77.0, -22.0, 15.0],
        [-60.0, -22.0, 15.0],
        [-60.0, 25.0, 15.0],
        [60.0, 25.0, 15.0],
    ]
)


def build_paper_scenario(uav_polyline: np.ndarray | None = None) -> Scenario:
    """The four-building urban scene with four base stations.

    UAV speed 10 m/s sampled every 0.1 s for 305 epochs, i.e. 1 m spacing
    along a configurable polyline threading the street canyon.
    """
    buildings = [
        Box(center=np.array([0.0, 48.0, 20.0]), dims=np.array([40.0, 20.0, 40.0]), id="B1"),
        Box(center=np.array([0.0, 0.0, 24.0]), dims=np.array([80.0, 30.0, 48.0]), id="B2"),
        Box(center=np.array([0.0, -40.0, 22.5]), dims=np.array([75.0, 20.0, 45.0]), id="B3"),
        Box(center=np.array([75.0, 0.0, 8.0]), dims=np.array([20.0, 20.0, 16.0]), id="B4"),
    ]
    facades = [f for b in buildings for f in facades_of_box(b)]
    bs = np.array(
        [
            [8.0, 23.0, 8.0],
            [-58.0, -7.0, 8.0],
            [-55.0, -32.0, 8.0],
            [50.0, -8.0, 8.0],
        ]
    )
    dt, speed, n_epochs = 0.1, 10.0, 305
    poly = _PAPER_UAV_POLYLINE if uav_polyline is None else np.asarray(uav_polyline, dtype=float)
    traj = resample_polyline(poly, speed * dt, n_epochs)
    return Scenario(
        buildings=buildings,
        facades=facades,
        bs_positions=bs,
        trajectory=traj,
        epoch_dt=dt,
        roi_radius=100.0,
        name="paper",
    )


def _wall(plane_point, normal, axis_u, half_u, half_v, wall_id) -> Facade:
    normal = np.asarray(normal, dtype=float)
    axis_u = np.asarray(axis_u, dtype=float)
    return Facade(
        plane=Plane(anchor=np.asarray(plane_point, dtype=float), normal=normal),
        center=np.asarray(plane_point, dtype=float),
        axis_u=axis_u,
        axis_v=np.cross(normal, axis_u),
        half_width_u=half_u,
        half_width_v=half_v,
        id=wall_id,
    )


def _line_trajectory(a, b, n) -> np.ndarray:
    return np.linspace(np.asarray(a, dtype=float), np.asarray(b, dtype=float), n)


def _bent_trajectory(waypoints, n) -> np.ndarray:
    """Equal-spacing samples along a polyline. Desk scenes use bent paths on
    purpose: range-only measurements from a straight pass cannot resolve the
    rotation ambiguity about the path axis."""
    pts = np.asarray(waypoints, dtype=float)
    if n == 1:
        return pts[:1].copy()
    total = float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))
    return resample_polyline(pts, total / (n - 1) * (1.0 - 1e-12), n)


def build_desk_single(n_epochs: int = 50) -> Scenario:
    """One free wall visible on both links along the whole pass.

    The pass slants in y and z so range-only sensing has aperture in both
    in-plane directions of the wall.
    """
    wall = _wall([0.0, 0.0, 10.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], 15.0, 10.0, "S1")
    return Scenario(
        buildings=[],
        facades=[wall],
        bs_positions=np.array([[30.0, 0.0, 5.0]]),
        trajectory=_bent_trajectory([[30.0, -12.0, 5.0], [26.0, 4.0, 10.0], [10.0, 10.0, 14.0]], n_epochs),
        roi_center=np.array([0.0, 5.0, 8.0]),
        roi_radius=60.0,
        name="desk_single",
    )


def build_desk_dual(n_epochs: int = 80) -> Scenario:
    """Two walls, both visible on both links: the accuracy-comparison scene."""
    wall_a = _wall([0.0, 0.0, 10.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], 15.0, 10.0, "S1")
    wall_b = _wall([25.0, 20.0, 10.0], [0.0, -1.0, 0.0], [1.0, 0.0, 0.0], 12.0, 10.0, "S2")
    return Scenario(
        buildings=[],
        facades=[wall_a, wall_b],
        bs_positions=np.array([[30.0, 0.0, 5.0]]),
        trajectory=_bent_trajectory([[30.0, -12.0, 5.0], [26.0, 4.0, 10.0], [10.0, 10.0, 14.0]], n_epochs),
        roi_center=np.array([5.0, 10.0, 8.0]),
        roi_radius=60.0,
        name="desk_dual",
    )


def build_desk_complementary(n_epochs: int = 60) -> Scenario:
    """One facade seen only by backscatter, one only by the bistatic link.

    Same geometry as the dual scene, with the visibilities split surgically:
    a small blocker denies wall S1's normal-incidence ray (bistatic-only),
    and S2 is a low parapet whose extent contains the backscatter foot but
    lies below every bounce point of the pass (monostatic-only). Keeping S2
    close to the BS also keeps its scatter sphere away from S1's birth
    shells.
    """
    wall_bi = _wall([0.0, 0.0, 10.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], 15.0, 10.0, "S1")
    wall_mono = _wall([25.0, 20.0, 3.35], [0.0, -1.0, 0.0], [1.0, 0.0, 0.0], 12.0, 1.85, "S2")
    blocker = Box(center=np.array([15.0, 0.0, 5.0]), dims=np.array([2.0, 0.6, 0.6]), id="P1")
    return Scenario(
        buildings=[blocker],
        facades=[wall_bi, wall_mono],
        bs_positions=np.array([[30.0, 0.0, 5.0]]),
        trajectory=_bent_trajectory(
            [[30.0, -12.0, 6.0], [24.0, 6.0, 10.0], [8.0, 10.0, 14.0], [4.0, -6.0, 8.0]], n_epochs
        ),
        roi_center=np.array([5.0, 10.0, 8.0]),
        roi_radius=60.0,
        name="desk_complementary",
    )


def build_desk_bi_only(n_epochs: int = 80) -> Scenario:
    """A wall whose backscatter foot misses the extent: zero monostatic
    visibility while the bistatic bounce stays valid along the pass."""
    wall = _wall([0.0, 20.0, 10.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], 8.0, 10.0, "S1")
    return Scenario(
        buildings=[],
        facades=[wall],
        bs_positions=np.array([[30.0, 45.0, 5.0]]),
        trajectory=_bent_trajectory([[30.0, 2.0, 5.0], [26.0, 8.0, 10.0], [14.0, 12.0, 14.0]], n_epochs),
        roi_center=np.array([0.0, 25.0, 8.0]),
        roi_radius=60.0,
        name="desk_bi_only",
    )


_BUILTIN_SCENES = {
    "paper": build_paper_scenario,
    "desk_single": build_desk_single,
    "desk_dual": build_desk_dual,
    "desk_complementary": build_desk_complementary,
    "desk_bi_only": build_desk_bi_only,
}


def load_scenario(spec: str) -> Scenario:
    """Resolve a scenario spec: a built-in name or a JSON file path."""
    if spec in _BUILTIN_SCENES:
        return _BUILTIN_SCENES[spec]()
    try:
        with open(spec) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"unknown scenario {spec!r}: {exc}") from exc
    return scenario_from_dict(doc)


def scenario_from_dict(doc: dict) -> Scenario:
    buildings = [
        Box(center=np.array(b["center"], dtype=float), dims=np.array(b["dims"], dtype=float), id=str(b.get("id", f"B{i+1}")))
        for i, b in enumerate(doc.get("buildings", []))
    ]
    facades = [f for b in buildings for f in facades_of_box(b)]
    for i, w in enumerate(doc.get("walls", [])):
        facades.append(
            _wall(
                w["center"],
                w["normal"],
                w["axis_u"],
                float(w["half_width_u"]),
                float(w["half_width_v"]),
                str(w.get("id", f"W{i+1}")),
            )
        )
    if "trajectory" in doc:
        traj = np.asarray(doc["trajectory"], dtype=float)
    else:
        dt = float(doc.get("epoch_dt", 0.1))
        speed = float(doc.get("speed", 10.0))
        traj = resample_polyline(np.asarray(doc["uav_polyline"], dtype=float), speed * dt, int(doc["n_epochs"]))
    return Scenario(
        buildings=buildings,
        facades=facades,
        bs_positions=np.asarray(doc["bs_positions"], dtype=float),
        trajectory=traj,
        epoch_dt=float(doc.get("epoch_dt", 0.1)),
        roi_center=np.asarray(doc["roi_center"], dtype=float) if "roi_center" in doc else None,
        roi_radius=float(doc.get("roi_radius", 100.0)),
        name=str(doc.get("name", "custom")),
    )


def scenario_to_dict(sc: Scenario) -> dict:
    derived = {f.id for b in sc.buildings for f in facades_of_box(b)}
    walls = [
        {
            "center": f.center.tolist(),
            "normal": f.plane.normal.tolist(),
            "axis_u": f.axis_u.tolist(),
            "half_width_u": f.half_width_u,
            "half_width_v": f.half_width_v,
            "id": f.id,
        }
        for f in sc.facades
        if f.id not in derived
    ]
    return {
        "name": sc.name,
        "buildings": [{"center": b.center.tolist(), "dims": b.dims.tolist(), "id": b.id} for b in sc.buildings],
        "walls": walls,
        "bs_positions": sc.bs_positions.tolist(),
        "trajectory": sc.trajectory.tolist(),
        "epoch_dt": sc.epoch_dt,
        "roi_center": sc.roi_center.tolist(),
        "roi_radius": sc.roi_radius,
    }


def compute_visibility(scenario: Scenario, n: int, j: int) -> dict[str, tuple[bool, bool]]:
    """Per-facade (bistatic, monostatic) visibility at epoch n for BS j.

    A facade is bistatically visible when its single-bounce reflection point
    exists and both sub-segments clear all other buildings; monostatically
    visible when its normal-incidence point exists and the BS segment clears.
    """
    u = scenario.trajectory[n]
    p_bs = scenario.bs_positions[j]
    out: dict[str, tuple[bool, bool]] = {}
    for f in scenario.facades:
        # Facades reflect on their outward-normal side only.
        if f.plane.signed_distance(p_bs) <= 0.0:
            out[f.id] = (False, False)
            continue
        blockers = scenario.blockers_for(f)
        bi = False
        q = bistatic_reflection_point(p_bs, u, f)
        if q is not None:
            bi = not (
                segment_occluded(Segment(p_bs, q), blockers)
                or segment_occluded(Segment(q, u), blockers)
            )
        mo = False
        qm = monostatic_specular_point(p_bs, f)
        if qm is not None and not np.array_equal(qm, p_bs):
            mo = not segment_occluded(Segment(p_bs, qm), blockers)
        out[f.id] = (bi, mo)
    return out


def frame_rng(seed: int, n: int, j: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(_SIM_DOMAIN, int(n), int(j)))
    return np.random.Generator(np.random.Philox(ss))


def _sample_on_facade_disk(rng, facade: Facade, q: np.ndarray, radius: float) -> np.ndarray:
    """Uniform point on the facade rectangle within a disk around q."""
    for _ in range(64):
        r = radius * np.sqrt(rng.uniform())
        ang = rng.uniform(0.0, 2.0 * np.pi)
        p = q + r * (np.cos(ang) * facade.axis_u + np.sin(ang) * facade.axis_v)
        if facade.contains(p):
            return p
    return q


def generate_epoch(
    scenario: Scenario,
    n: int,
    j: int,
    noise: NoiseConfig,
    p_detect: float = 0.95,
    seed: int = 0,
) -> EpochFrame:
    """One measurement frame: facade MPC clusters plus Poisson clutter.

    Per visible facade the MPC count is Poisson; when at least one MPC is
    drawn the first is the specular component and the rest are diffuse.
    Every MPC is independently thinned with the detection probability.
    """
    if not (0.0 <= p_detect <= 1.0):
        raise ConfigError("p_detect must lie in [0, 1]")
    rng = frame_rng(seed, n, j)
    u = scenario.trajectory[n]
    p_bs = scenario.bs_positions[j]
    vis = compute_visibility(scenario, n, j)

    range_var = noise.sigma_z**2 if noise.sigma_z > 0 else _MIN_RANGE_VAR
    R = noise.sigma_bs**2 * np.eye(3)

    bi_vals: list[tuple[float, str]] = []
    mo_vals: list[tuple[np.ndarray, str]] = []

    for f in scenario.facades:
        bi_ok, mo_ok = vis[f.id]
        if bi_ok:
            va = scenario.true_va(j, f)
            k = rng.poisson(noise.mu_m_bi)
            for m in range(k):
                kind = "specular" if m == 0 else "diffuse"
                rng_val = bistatic_specular_range(u, va)
                if kind == "diffuse":
                    rng_val += rng.uniform(0.0, noise.psi_z) if noise.psi_z > 0 else 0.0
                rng_val += rng.normal(0.0, noise.sigma_z) if noise.sigma_z > 0 else 0.0
                if rng.uniform() <= p_detect:
                    bi_vals.append((max(rng_val, 0.0), kind))
        if mo_ok:
            q = monostatic_specular_point(p_bs, f)
            k = rng.poisson(noise.mu_m_mo)
            for m in range(k):
                kind = "specular" if m == 0 else "diffuse"
                point = q if kind == "specular" else _sample_on_facade_disk(rng, f, q, noise.rho_diff)
                pos = point + (rng.normal(0.0, noise.sigma_bs, size=3) if noise.sigma_bs > 0 else 0.0)
                if rng.uniform() <= p_detect:
                    mo_vals.append((pos, kind))

    lo, hi = noise.clutter_range_interval
    for _ in range(rng.poisson(noise.mu_fa_bi)):
        bi_vals.append((rng.uniform(lo, hi), "clutter"))
    blo, bhi = noise.clutter_box
    for _ in range(rng.poisson(noise.mu_fa_mo)):
        mo_vals.append((rng.uniform(blo, bhi, size=3), "clutter"))

    frame = EpochFrame(epoch=n, bs=j, u=u)
    for idx in rng.permutation(len(bi_vals)):
        val, kind = bi_vals[idx]
        frame.bistatic.append(BistaticMeasurement(pseudo_range=val, variance=range_var))
        frame.bistatic_kinds.append(kind)
    for idx in rng.permutation(len(mo_vals)):
        pos, kind = mo_vals[idx]
        frame.monostatic.append(MonostaticMeasurement(pseudo_position=pos, covariance=R))
        frame.monostatic_kinds.append(kind)
    return frame


def ground_truth(scenario: Scenario) -> GroundTruth:
    ids = [f.id for f in scenario.facades]
    J, F, T = scenario.n_bs, len(scenario.facades), scenario.n_epochs
    vas = np.empty((J, F, 3))
    for j in range(J):
        for fi, f in enumerate(scenario.facades):
            vas[j, fi] = scenario.true_va(j, f)
    visibility = np.zeros((T, J, F, 2), dtype=bool)
    for n in range(T):
        for j in range(J):
            vis = compute_visibility(scenario, n, j)
            for fi, fid in enumerate(ids):
                visibility[n, j, fi] = vis[fid]
    return GroundTruth(facade_ids=ids, vas=vas, visibility=visibility)


def generate_dataset(
    scenario: Scenario,
    noise: NoiseConfig,
    p_detect: float = 0.95,
    seed: int = 0,
) -> tuple[list[EpochFrame], GroundTruth]:
    """All (epoch, BS) frames in deterministic order, plus ground truth."""
    frames = [
        generate_epoch(scenario, n, j, noise, p_detect, seed)
        for n in range(scenario.n_epochs)
        for j in range(scenario.n_bs)
    ]
    return frames, ground_truth(scenario)
