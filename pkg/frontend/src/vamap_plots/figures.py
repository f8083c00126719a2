"""The three figure kinds: environment-map overlay, visibility + error
curves with a zoomed inset, and the runtime grid chart."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import readers


def _facade_segment(entry) -> tuple[np.ndarray, np.ndarray]:
    """Top-view endpoints of a reconstructed facade rectangle."""
    n = entry["normal"]
    along = np.array([n[1], -n[0], 0.0])
    norm = np.linalg.norm(along)
    along = along / norm if norm > 0 else np.array([1.0, 0.0, 0.0])
    c = entry["center"]
    half = 0.5 * entry["width"]
    return c - half * along, c + half * along


def render_map(in_dir: Path, out_file: Path, method: str | None = None) -> None:
    """Top-down overlay: true VAs, declared estimates, reconstructed facades."""
    gt = readers.read_groundtruth(in_dir / "groundtruth.csv")
    mdirs = sorted(d for d in in_dir.iterdir() if d.is_dir() and (d / "estimates.csv").exists())
    if method is not None:
        mdirs = [d for d in mdirs if d.name == method]
    fig, ax = plt.subplots(figsize=(7, 7))
    vas = np.array(list(gt.values()))
    ax.scatter(vas[:, 0], vas[:, 1], marker="x", c="k", s=40, label="true VAs")

    if mdirs:
        mdir = mdirs[0]
        est = readers.read_estimates(mdir / "estimates.csv")
        run0 = [e for e in est if e["run"] == 0]
        if run0:
            last = max(e["epoch"] for e in run0)
            pts = np.array([e["pos"] for e in run0 if e["epoch"] == last])
            ax.scatter(pts[:, 0], pts[:, 1], marker="o", facecolors="none",
                       edgecolors="tab:red", s=80, label=f"{mdir.name} estimates")
        map_path = mdir / "map.csv"
        if map_path.exists():
            for i, entry in enumerate(readers.read_map(map_path)):
                a, b = _facade_segment(entry)
                ax.plot([a[0], b[0]], [a[1], b[1]], c="tab:blue", lw=3,
                        label="reconstructed facade" if i == 0 else None)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title("environment map (top view)")
    ax.legend(loc="best", fontsize=8)
    ax.set_aspect("equal", adjustable="datalim")
    fig.tight_layout()
    fig.savefig(out_file, dpi=120)
    plt.close(fig)


def render_mospa(in_dir: Path, out_file: Path) -> None:
    """Visibility timeline on top, per-method error curves below, with an
    inset zooming into the low-error region."""
    rows = readers.read_mospa(in_dir / "mospa.csv")
    vis = readers.read_visibility(in_dir / "visibility.csv")
    bss = sorted({r["bs"] for r in rows})
    fig, axes = plt.subplots(2, len(bss), figsize=(5.5 * len(bss), 7), squeeze=False)

    for col, bs in enumerate(bss):
        ax_v, ax_m = axes[0][col], axes[1][col]
        facades = sorted({v["facade"] for v in vis if v["bs"] == bs})
        for i, fid in enumerate(facades):
            series = sorted((v["epoch"], v["bi"], v["mo"]) for v in vis if v["bs"] == bs and v["facade"] == fid)
            epochs = [s[0] for s in series]
            bi = [2 * i + (1 if s[1] else 0) for s in series]
            mo = [2 * i + (1 if s[2] else 0) for s in series]
            ax_v.step(epochs, mo, where="post", lw=1.2, label=f"{fid} backscatter")
            ax_v.step(epochs, bi, where="post", lw=1.2, ls="--", label=f"{fid} bistatic")
        ax_v.set_title(f"BS {bs}: facade visibility")
        ax_v.set_yticks([])
        if col == 0:
            ax_v.legend(fontsize=6, ncol=2)

        methods = sorted({r["method"] for r in rows})
        curves = {}
        for m in methods:
            series = sorted((r["epoch"], r["mospa"]) for r in rows if r["bs"] == bs and r["method"] == m)
            curves[m] = (np.array([s[0] for s in series]), np.array([s[1] for s in series]))
            ax_m.plot(curves[m][0], curves[m][1], lw=1.4, label=m)
        ax_m.set_xlabel("epoch")
        ax_m.set_ylabel("mean OSPA [m]")
        ax_m.legend(fontsize=7)
        if curves:
            tail = np.concatenate([v[1][len(v[1]) // 2:] for v in curves.values()])
            if tail.size and np.isfinite(tail).all():
                top = max(2.0 * float(np.median(tail)), 1e-3)
                axins = ax_m.inset_axes([0.45, 0.45, 0.52, 0.5])
                for m, (x, y) in curves.items():
                    axins.plot(x, y, lw=1.0)
                axins.set_xlim(x[len(x) // 2], x[-1])
                axins.set_ylim(0, top)
                axins.tick_params(labelsize=6)
                ax_m.indicate_inset_zoom(axins, edgecolor="gray")
    fig.tight_layout()
    fig.savefig(out_file, dpi=120)
    plt.close(fig)


def render_runtime(in_dir: Path, out_file: Path) -> None:
    """Grouped bars of per-epoch runtime over the (M, Np) grid."""
    rows = readers.read_runtime(in_dir / "runtime.csv")
    methods = sorted({r["method"] for r in rows})
    ms = sorted({r["M"] for r in rows})
    nps = sorted({r["Np"] for r in rows})
    fig, axes = plt.subplots(1, len(nps), figsize=(4 * len(nps), 4), squeeze=False, sharey=True)
    width = 0.8 / max(len(methods), 1)
    for col, n_p in enumerate(nps):
        ax = axes[0][col]
        xs = np.arange(len(ms))
        for i, m in enumerate(methods):
            vals = []
            for mm in ms:
                sel = [r["sec"] for r in rows if r["method"] == m and r["M"] == mm and r["Np"] == n_p]
                vals.append(sel[0] if sel else np.nan)
            ax.bar(xs + i * width, vals, width, label=m)
        ax.set_xticks(xs + width * (len(methods) - 1) / 2)
        ax.set_xticklabels([str(m) for m in ms])
        ax.set_xlabel("measurements per link M")
        ax.set_title(f"Np = {n_p}")
        if col == 0:
            ax.set_ylabel("sec / epoch")
            ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_file, dpi=120)
    plt.close(fig)
