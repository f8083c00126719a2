"""Run configuration: flat dotted key=value files plus CLI overrides.

An empty config reproduces the reference setup (all defaults); every knob is
overridable. Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .evaluation import OspaConfig
from .inference import BirthConfig, InferenceConfig, TransitionConfig
from .measurement import NoiseConfig
from .scene import ConfigError, Scenario, load_scenario


@dataclass
class RunConfig:
    scenario_spec: str = "paper"
    seed: int = 0
    n_runs: int = 1
    method: str = "fusion3"
    out_dir: str = "out"
    p_detect: float = 0.95
    n_epochs: int | None = None          # cap; None = full scenario length

    sigma_z: float = 0.5
    sigma_bs: float = 0.1
    psi_z: float = 4.0
    clutter_range_lo: float = 0.0
    clutter_range_hi: float = 500.0
    clutter_box_lo: float = -150.0
    clutter_box_hi: float = 150.0
    mu_fa_bi: float = 1.0
    mu_fa_mo: float = 1.0
    mu_m_bi: float = 4.0
    mu_m_mo: float = 4.0
    rho_diff: float = 3.0

    p_survive: float = 0.99
    p_crosslink: float = 1.0
    p_crossbirth: float = 0.0
    process_noise_std: float = 0.05

    mu_birth: float = 0.01
    roi_center: tuple[float, float, float] | None = None
    roi_radius: float | None = None

    particles: int = 20000
    spa_iters: int = 2
    p_th: float = 0.5
    p_prune: float = 1e-3
    merge_radius: float = 4.0
    diffuse_weight_bi: float | None = None

    ospa_cutoff: float = 5.0
    ospa_order: float = 2.0

    map_height: float = 20.0
    map_fallback_width: float = 20.0
    smoothing_window: int = 5

    bench_epochs: int = 30
    bench_m_grid: tuple[int, ...] = (5, 10, 20)
    bench_np_grid: tuple[int, ...] = (5000, 10000, 20000)

    def noise_config(self) -> NoiseConfig:
        try:
            return NoiseConfig(
                sigma_z=self.sigma_z,
                sigma_bs=self.sigma_bs,
                psi_z=self.psi_z,
                clutter_range_interval=(self.clutter_range_lo, self.clutter_range_hi),
                clutter_box=(self.clutter_box_lo, self.clutter_box_hi),
                mu_fa_bi=self.mu_fa_bi,
                mu_fa_mo=self.mu_fa_mo,
                mu_m_bi=self.mu_m_bi,
                mu_m_mo=self.mu_m_mo,
                rho_diff=self.rho_diff,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def scenario(self) -> Scenario:
        sc = load_scenario(self.scenario_spec)
        if self.n_epochs is not None:
            if not 1 <= self.n_epochs <= sc.n_epochs:
                raise ConfigError(f"run.epochs must lie in [1, {sc.n_epochs}]")
            sc.trajectory = sc.trajectory[: self.n_epochs]
        return sc

    def inference_config(self, scenario: Scenario) -> InferenceConfig:
        center = np.asarray(self.roi_center, dtype=float) if self.roi_center is not None else scenario.roi_center
        radius = self.roi_radius if self.roi_radius is not None else scenario.roi_radius
        try:
            return InferenceConfig(
                n_particles=self.particles,
                spa_iters=self.spa_iters,
                p_th=self.p_th,
                p_prune=self.p_prune,
                merge_radius=self.merge_radius,
                transition=TransitionConfig(
                    p_survive=self.p_survive,
                    p_crosslink=self.p_crosslink,
                    p_crossbirth=self.p_crossbirth,
                    process_noise_std=self.process_noise_std,
                ),
                birth=BirthConfig(mu_birth=self.mu_birth, roi_center=center, roi_radius=radius),
                noise=self.noise_config(),
                diffuse_weight_bi=self.diffuse_weight_bi,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def ospa_config(self) -> OspaConfig:
        try:
            return OspaConfig(cutoff=self.ospa_cutoff, order=self.ospa_order)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


_KEY_MAP = {
    "scenario.spec": ("scenario_spec", str),
    "run.seed": ("seed", int),
    "run.runs": ("n_runs", int),
    "run.method": ("method", str),
    "run.out": ("out_dir", str),
    "run.epochs": ("n_epochs", int),
    "sim.p_detect": ("p_detect", float),
    "noise.sigma_z": ("sigma_z", float),
    "noise.sigma_bs": ("sigma_bs", float),
    "noise.psi_z": ("psi_z", float),
    "noise.clutter_range_lo": ("clutter_range_lo", float),
    "noise.clutter_range_hi": ("clutter_range_hi", float),
    "noise.clutter_box_lo": ("clutter_box_lo", float),
    "noise.clutter_box_hi": ("clutter_box_hi", float),
    "noise.mu_fa_bi": ("mu_fa_bi", float),
    "noise.mu_fa_mo": ("mu_fa_mo", float),
    "noise.mu_m_bi": ("mu_m_bi", float),
    "noise.mu_m_mo": ("mu_m_mo", float),
    "noise.rho_diff": ("rho_diff", float),
    "transition.p_survive": ("p_survive", float),
    "transition.p_crosslink": ("p_crosslink", float),
    "transition.p_crossbirth": ("p_crossbirth", float),
    "transition.process_noise_std": ("process_noise_std", float),
    "birth.mu_birth": ("mu_birth", float),
    "birth.roi_radius": ("roi_radius", float),
    "inference.particles": ("particles", int),
    "inference.spa_iters": ("spa_iters", int),
    "inference.p_th": ("p_th", float),
    "inference.p_prune": ("p_prune", float),
    "inference.merge_radius": ("merge_radius", float),
    "inference.diffuse_weight_bi": ("diffuse_weight_bi", float),
    "ospa.cutoff": ("ospa_cutoff", float),
    "ospa.order": ("ospa_order", float),
    "map.height": ("map_height", float),
    "map.fallback_width": ("map_fallback_width", float),
    "map.smoothing_window": ("smoothing_window", int),
    "bench.epochs": ("bench_epochs", int),
}


def _parse_scalar(cast, value: str):
    try:
        return cast(value)
    except ValueError as exc:
        raise ConfigError(f"bad value {value!r}: {exc}") from exc


def load_config(path: str | Path | None) -> RunConfig:
    """Parse a key=value config file; missing path means all defaults."""
    cfg = RunConfig()
    if path is None:
        return cfg
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "birth.roi_center":
            parts = [p for p in value.replace(",", " ").split() if p]
            if len(parts) != 3:
                raise ConfigError(f"{path}:{lineno}: birth.roi_center needs three numbers")
            cfg.roi_center = tuple(_parse_scalar(float, p) for p in parts)
            continue
        if key == "bench.m_grid":
            cfg.bench_m_grid = tuple(_parse_scalar(int, p) for p in value.split(","))
            continue
        if key == "bench.np_grid":
            cfg.bench_np_grid = tuple(_parse_scalar(int, p) for p in value.split(","))
            continue
        if key not in _KEY_MAP:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        attr, cast = _KEY_MAP[key]
        setattr(cfg, attr, _parse_scalar(cast, value))
    return cfg


def apply_overrides(cfg: RunConfig, seed=None, runs=None, method=None, out=None) -> RunConfig:
    if seed is not None:
        cfg.seed = int(seed)
    if runs is not None:
        cfg.n_runs = int(runs)
    if method is not None:
        cfg.method = str(method)
    if out is not None:
        cfg.out_dir = str(out)
    if cfg.n_runs < 1:
        raise ConfigError("run.runs must be >= 1")
    return cfg
