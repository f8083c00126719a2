"""CSV schemas shared by the CLI, the evaluation harness, and the plotting
component. Headers are fixed; floats are written with shortest-roundtrip
repr so a rewrite of identical data is byte-identical.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .evaluation import ReconstructedFacade
from .measurement import BistaticMeasurement, MonostaticMeasurement
from .scene import EpochFrame, GroundTruth, Scenario

MEASUREMENTS_HEADER = ["epoch", "bs", "link", "kind", "v1", "v2", "v3", "var1", "var2", "var3", "var4", "var5", "var6"]
GROUNDTRUTH_HEADER = ["bs", "facade_id", "va_x", "va_y", "va_z"]
VISIBILITY_HEADER = ["epoch", "bs", "facade_id", "bi_visible", "mo_visible"]
ESTIMATES_HEADER = ["run", "epoch", "bs", "label", "x", "y", "z", "existence"]
EXISTENCE_HEADER = ["run", "epoch", "bs", "label", "existence"]
MOSPA_HEADER = ["method", "bs", "epoch", "mospa", "n_runs"]
RUNTIME_HEADER = ["method", "M", "Np", "sec_per_epoch"]
BACKENDS_HEADER = ["backend", "kernel", "M", "Np", "sec_per_call"]
MAP_HEADER = [
    "bs", "label", "va_x", "va_y", "va_z",
    "center_x", "center_y", "center_z",
    "normal_x", "normal_y", "normal_z",
    "width", "height",
]


class SchemaError(ValueError):
    pass


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_rows(path: Path, header: list[str], rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _read_rows(path: Path, header: list[str]) -> list[list[str]]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        got = next(r, None)
        if got != header:
            raise SchemaError(f"{path}: expected header {header}, got {got}")
        return [row for row in r]


def write_measurements(path: Path, frames: list[EpochFrame]) -> None:
    rows = []
    for f in frames:
        for m, kind in zip(f.bistatic, f.bistatic_kinds or [""] * len(f.bistatic)):
            rows.append([f.epoch, f.bs, "bi", kind, m.pseudo_range, "", "", m.variance, "", "", "", "", ""])
        for m, kind in zip(f.monostatic, f.monostatic_kinds or [""] * len(f.monostatic)):
            R = m.covariance
            p = m.pseudo_position
            rows.append(
                [f.epoch, f.bs, "mo", kind, p[0], p[1], p[2], R[0, 0], R[0, 1], R[0, 2], R[1, 1], R[1, 2], R[2, 2]]
            )
    _write_rows(path, MEASUREMENTS_HEADER, rows)


def read_measurements(path: Path, scenario: Scenario) -> list[EpochFrame]:
    """Rebuild frames in (epoch, bs) order. The kind column is ignored for
    inference purposes but kept as annotation when present."""
    frames = {
        (n, j): EpochFrame(epoch=n, bs=j, u=scenario.trajectory[n])
        for n in range(scenario.n_epochs)
        for j in range(scenario.n_bs)
    }
    for row in _read_rows(Path(path), MEASUREMENTS_HEADER):
        try:
            n, j, link, kind = int(row[0]), int(row[1]), row[2], row[3]
            frame = frames[(n, j)]
            if link == "bi":
                frame.bistatic.append(BistaticMeasurement(float(row[4]), float(row[7])))
                frame.bistatic_kinds.append(kind)
            elif link == "mo":
                p = np.array([float(row[4]), float(row[5]), float(row[6])])
                r11, r12, r13, r22, r23, r33 = (float(v) for v in row[7:13])
                R = np.array([[r11, r12, r13], [r12, r22, r23], [r13, r23, r33]])
                frame.monostatic.append(MonostaticMeasurement(p, R))
                frame.monostatic_kinds.append(kind)
            else:
                raise SchemaError(f"unknown link {link!r}")
        except (KeyError, ValueError, IndexError) as exc:
            raise SchemaError(f"{path}: bad row {row}: {exc}") from exc
    return [frames[(n, j)] for n in range(scenario.n_epochs) for j in range(scenario.n_bs)]


def write_groundtruth(path: Path, gt: GroundTruth) -> None:
    rows = []
    for j in range(gt.vas.shape[0]):
        for fi, fid in enumerate(gt.facade_ids):
            va = gt.vas[j, fi]
            rows.append([j, fid, va[0], va[1], va[2]])
    _write_rows(path, GROUNDTRUTH_HEADER, rows)


def read_groundtruth(path: Path) -> dict[tuple[int, str], np.ndarray]:
    out = {}
    for row in _read_rows(Path(path), GROUNDTRUTH_HEADER):
        try:
            out[(int(row[0]), row[1])] = np.array([float(row[2]), float(row[3]), float(row[4])])
        except (ValueError, IndexError) as exc:
            raise SchemaError(f"{path}: bad row {row}: {exc}") from exc
    return out


def write_visibility(path: Path, gt: GroundTruth) -> None:
    T, J, F, _ = gt.visibility.shape
    rows = []
    for n in range(T):
        for j in range(J):
            for fi, fid in enumerate(gt.facade_ids):
                bi, mo = gt.visibility[n, j, fi]
                rows.append([n, j, fid, int(bi), int(mo)])
    _write_rows(path, VISIBILITY_HEADER, rows)


def read_visibility(path: Path) -> dict[tuple[int, int, str], tuple[bool, bool]]:
    out = {}
    for row in _read_rows(Path(path), VISIBILITY_HEADER):
        try:
            out[(int(row[0]), int(row[1]), row[2])] = (row[3] == "1", row[4] == "1")
        except (ValueError, IndexError) as exc:
            raise SchemaError(f"{path}: bad row {row}: {exc}") from exc
    return out


def write_estimates(path: Path, rows) -> None:
    _write_rows(path, ESTIMATES_HEADER, rows)


def read_estimates(path: Path) -> list[tuple[int, int, int, int, np.ndarray, float]]:
    out = []
    for row in _read_rows(Path(path), ESTIMATES_HEADER):
        try:
            out.append(
                (
                    int(row[0]),
                    int(row[1]),
                    int(row[2]),
                    int(row[3]),
                    np.array([float(row[4]), float(row[5]), float(row[6])]),
                    float(row[7]),
                )
            )
        except (ValueError, IndexError) as exc:
            raise SchemaError(f"{path}: bad row {row}: {exc}") from exc
    return out


def write_existence(path: Path, rows) -> None:
    _write_rows(path, EXISTENCE_HEADER, rows)


def write_mospa(path: Path, rows) -> None:
    _write_rows(path, MOSPA_HEADER, rows)


def read_mospa(path: Path) -> list[tuple[str, int, int, float, int]]:
    out = []
    for row in _read_rows(Path(path), MOSPA_HEADER):
        out.append((row[0], int(row[1]), int(row[2]), float(row[3]), int(row[4])))
    return out


def write_runtime(path: Path, rows) -> None:
    _write_rows(path, RUNTIME_HEADER, rows)


def write_backends(path: Path, rows) -> None:
    _write_rows(path, BACKENDS_HEADER, rows)


def write_map(path: Path, facades: list[tuple[int, ReconstructedFacade]]) -> None:
    rows = []
    for bs, f in facades:
        rows.append(
            [
                bs, f.label, f.va[0], f.va[1], f.va[2],
                f.center[0], f.center[1], f.center[2],
                f.plane.normal[0], f.plane.normal[1], f.plane.normal[2],
                f.width, f.height,
            ]
        )
    _write_rows(path, MAP_HEADER, rows)
