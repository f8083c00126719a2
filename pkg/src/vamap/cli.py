"""Command-line entry points: simulate, infer, eval, bench, all.

Every command is deterministic given (config, seed); the Monte-Carlo worker
pool honors RM_THREADS and merges results in (run, epoch, bs) order so the
written CSVs are byte-identical for any worker count. Exit codes: 0 success,
2 configuration error, 3 data/schema error.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io as vio
from .config import RunConfig, apply_overrides, load_config
from .evaluation import VaTrack, mospa, ospa, reconstruct_facades
from .inference import METHODS, run_method
from .io import SchemaError
from .scene import ConfigError, Scenario, generate_epoch, generate_dataset, ground_truth


def _threads() -> int:
    env = os.environ.get("RM_THREADS", "").strip()
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def _infer_task(args):
    """One (method, run, BS) filter pass; returns rows for the two CSVs."""
    cfg, scenario, method, run_idx, j, stored = args
    noise = cfg.noise_config()
    inf_cfg = cfg.inference_config(scenario)
    seed = cfg.seed + run_idx
    if stored is not None:
        frames = stored
    else:
        frames = [generate_epoch(scenario, n, j, noise, cfg.p_detect, seed) for n in range(scenario.n_epochs)]
    maps, tracked = run_method(method, frames, scenario.bs_positions[j], inf_cfg, seed)
    est_rows, exist_rows = [], []
    for m in maps:
        for lbl, pos, ex in zip(m.labels, m.positions, m.existences):
            est_rows.append((run_idx, m.epoch, j, lbl, pos[0], pos[1], pos[2], ex))
    for n, entries in enumerate(tracked):
        for lbl, ex in entries:
            exist_rows.append((run_idx, n, j, lbl, ex))
    return est_rows, exist_rows


def _run_pool(tasks):
    n_workers = _threads()
    if n_workers == 1 or len(tasks) <= 1:
        return [_infer_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(n_workers, len(tasks))) as pool:
        return list(pool.map(_infer_task, tasks))


def cmd_simulate(cfg: RunConfig) -> int:
    scenario = cfg.scenario()
    frames, gt = generate_dataset(scenario, cfg.noise_config(), cfg.p_detect, cfg.seed)
    out = Path(cfg.out_dir)
    vio.write_measurements(out / "measurements.csv", frames)
    vio.write_groundtruth(out / "groundtruth.csv", gt)
    vio.write_visibility(out / "visibility.csv", gt)
    print(f"simulate: wrote {scenario.n_epochs} epochs x {scenario.n_bs} BS to {out}")
    return 0


def _methods_of(cfg: RunConfig) -> list[str]:
    names = [m.strip() for m in cfg.method.split(",") if m.strip()]
    if names == ["all"]:
        return list(METHODS)
    for m in names:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from {', '.join(METHODS)} or 'all'")
    return names


def cmd_infer(cfg: RunConfig) -> int:
    scenario = cfg.scenario()
    out = Path(cfg.out_dir)
    methods = _methods_of(cfg)

    stored_by_bs: dict[int, list] | None = None
    if cfg.n_runs == 1:
        frames = vio.read_measurements(out / "measurements.csv", scenario)
        stored_by_bs = {j: [f for f in frames if f.bs == j] for j in range(scenario.n_bs)}

    for method in methods:
        tasks = [
            (cfg, scenario, method, r, j, stored_by_bs[j] if stored_by_bs is not None else None)
            for r in range(cfg.n_runs)
            for j in range(scenario.n_bs)
        ]
        results = _run_pool(tasks)
        est_rows = sorted(
            (row for est, _ in results for row in est), key=lambda r: (r[0], r[1], r[2], r[3])
        )
        exist_rows = sorted(
            (row for _, ex in results for row in ex), key=lambda r: (r[0], r[1], r[2], r[3])
        )
        mdir = out / method
        vio.write_estimates(mdir / "estimates.csv", est_rows)
        vio.write_existence(mdir / "existence.csv", exist_rows)
        print(f"infer: {method}: {cfg.n_runs} run(s), {len(est_rows)} declared rows -> {mdir}")
    return 0


def _truth_series(gt_map, vis_map, scenario: Scenario):
    """Cumulative observable truth per (bs, epoch): VAs of facades seen on any
    link at any epoch so far."""
    T = scenario.n_epochs
    facade_ids = sorted({fid for (_, fid) in gt_map.keys()})
    series: dict[int, list[np.ndarray]] = {}
    for j in range(scenario.n_bs):
        seen: set[str] = set()
        per_epoch = []
        for n in range(T):
            for fid in facade_ids:
                bi, mo = vis_map.get((n, j, fid), (False, False))
                if bi or mo:
                    seen.add(fid)
            pts = np.array([gt_map[(j, fid)] for fid in sorted(seen)]) if seen else np.zeros((0, 3))
            per_epoch.append(pts)
        series[j] = per_epoch
    return series


def cmd_eval(cfg: RunConfig) -> int:
    scenario = cfg.scenario()
    out = Path(cfg.out_dir)
    ospa_cfg = cfg.ospa_config()
    gt_map = vio.read_groundtruth(out / "groundtruth.csv")
    vis_map = vio.read_visibility(out / "visibility.csv")
    truth = _truth_series(gt_map, vis_map, scenario)
    T = scenario.n_epochs

    method_dirs = sorted(d for d in out.iterdir() if d.is_dir() and (d / "estimates.csv").exists())
    if not method_dirs:
        raise SchemaError(f"no method directories with estimates.csv under {out}")

    mospa_rows = []
    for mdir in method_dirs:
        method = mdir.name
        est = vio.read_estimates(mdir / "estimates.csv")
        n_runs = cfg.n_runs
        seen_runs = {r for r, *_ in est}
        if seen_runs and max(seen_runs) + 1 > n_runs:
            raise SchemaError(f"{mdir}: estimates contain run indices beyond run.runs={n_runs}")
        for j in range(scenario.n_bs):
            per_run = [[[] for _ in range(T)] for _ in range(n_runs)]
            for r, n, bs, lbl, pos, ex in est:
                if bs == j:
                    if n >= T:
                        raise SchemaError(f"{mdir}: epoch {n} outside scenario length {T}")
                    per_run[r][n].append(pos)
            sets = [[np.array(cell).reshape(-1, 3) for cell in run] for run in per_run]
            series = mospa(sets, truth[j], ospa_cfg)
            for n in range(T):
                mospa_rows.append((method, j, n, series[n], n_runs))

        tracks: dict[tuple[int, int], VaTrack] = {}
        for r, n, bs, lbl, pos, ex in est:
            if r != 0:
                continue
            tracks.setdefault((bs, lbl), VaTrack(label=lbl)).epochs.append(n)
            tracks[(bs, lbl)].positions.append(pos)
        map_rows = []
        for (bs, lbl) in sorted(tracks.keys()):
            recon = reconstruct_facades(
                [tracks[(bs, lbl)]],
                scenario.bs_positions[bs],
                scenario.trajectory,
                height=cfg.map_height,
                fallback_width=cfg.map_fallback_width,
                smoothing_window=cfg.smoothing_window,
            )
            map_rows.extend((bs, f) for f in recon)
        vio.write_map(mdir / "map.csv", map_rows)

    vio.write_mospa(out / "mospa.csv", sorted(mospa_rows, key=lambda r: (r[0], r[1], r[2])))
    print(f"eval: wrote mospa.csv for {len(method_dirs)} method(s), {cfg.n_runs} run(s) accounted")
    return 0


def cmd_bench(cfg: RunConfig, compare_backends: bool = False) -> int:
    from .benchmarks import kernel_backend_rows, scheme_grid, speedups

    out = Path(cfg.out_dir)
    rows = scheme_grid(
        m_grid=cfg.bench_m_grid,
        np_grid=cfg.bench_np_grid,
        n_epochs=cfg.bench_epochs,
        seed=cfg.seed,
    )
    vio.write_runtime(out / "runtime.csv", rows)
    for m, s in sorted(speedups(rows, at_np=max(cfg.bench_np_grid)).items()):
        print(f"bench: M={m}: sequential/dominant speedup {s:.2f}x at Np={max(cfg.bench_np_grid)}")
    if compare_backends:
        vio.write_backends(out / "backends.csv", kernel_backend_rows(seed=cfg.seed))
        print("bench: wrote backends.csv")
    return 0


def cmd_all(cfg: RunConfig) -> int:
    rc = cmd_simulate(cfg)
    if rc:
        return rc
    rc = cmd_infer(cfg)
    if rc:
        return rc
    return cmd_eval(cfg)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vamap", description="Facade mapping from fused multipath pseudo-measurements")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "generate a synthetic dataset"),
        ("infer", "run the filter on a dataset"),
        ("eval", "score estimates against ground truth"),
        ("bench", "runtime grid for the two fusion schedules"),
        ("all", "simulate + infer + eval pipeline"),
    ):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", type=str, default=None, help="key=value config file")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--runs", type=int, default=None)
        sp.add_argument("--method", type=str, default=None, help="method name, comma list, or 'all'")
        sp.add_argument("--out", type=str, default=None, help="output directory")
        if name == "bench":
            sp.add_argument("--compare-backends", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        cfg = apply_overrides(cfg, seed=args.seed, runs=args.runs, method=args.method, out=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "infer":
            return cmd_infer(cfg)
        if args.command == "eval":
            return cmd_eval(cfg)
        if args.command == "bench":
            return cmd_bench(cfg, compare_backends=args.compare_backends)
        if args.command == "all":
            return cmd_all(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SchemaError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    return 2


if __name__ == "__main__":
    sys.exit(main())
