"""Schema-checked readers for the CSV files the mapping pipeline writes.

This package talks to the engine only through these files; a header mismatch
is a hard error so silent schema drift cannot produce wrong figures.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

GROUNDTRUTH_HEADER = ["bs", "facade_id", "va_x", "va_y", "va_z"]
VISIBILITY_HEADER = ["epoch", "bs", "facade_id", "bi_visible", "mo_visible"]
ESTIMATES_HEADER = ["run", "epoch", "bs", "label", "x", "y", "z", "existence"]
MOSPA_HEADER = ["method", "bs", "epoch", "mospa", "n_runs"]
RUNTIME_HEADER = ["method", "M", "Np", "sec_per_epoch"]
MAP_HEADER = [
    "bs", "label", "va_x", "va_y", "va_z",
    "center_x", "center_y", "center_z",
    "normal_x", "normal_y", "normal_z",
    "width", "height",
]


class SchemaError(ValueError):
    pass


def _rows(path: Path, header: list[str]) -> list[list[str]]:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            got = next(reader, None)
            if got != header:
                raise SchemaError(f"{path}: expected header {header}, got {got}")
            return list(reader)
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc


@dataclass
class MapData:
    vas: dict[tuple[int, str], np.ndarray]
    facades: list[dict]
    estimates: list[dict]


def read_groundtruth(path: Path) -> dict[tuple[int, str], np.ndarray]:
    out = {}
    for r in _rows(path, GROUNDTRUTH_HEADER):
        out[(int(r[0]), r[1])] = np.array([float(r[2]), float(r[3]), float(r[4])])
    return out


def read_visibility(path: Path) -> list[dict]:
    return [
        {"epoch": int(r[0]), "bs": int(r[1]), "facade": r[2], "bi": r[3] == "1", "mo": r[4] == "1"}
        for r in _rows(path, VISIBILITY_HEADER)
    ]


def read_estimates(path: Path) -> list[dict]:
    return [
        {
            "run": int(r[0]), "epoch": int(r[1]), "bs": int(r[2]), "label": int(r[3]),
            "pos": np.array([float(r[4]), float(r[5]), float(r[6])]), "existence": float(r[7]),
        }
        for r in _rows(path, ESTIMATES_HEADER)
    ]


def read_mospa(path: Path) -> list[dict]:
    return [
        {"method": r[0], "bs": int(r[1]), "epoch": int(r[2]), "mospa": float(r[3]), "n_runs": int(r[4])}
        for r in _rows(path, MOSPA_HEADER)
    ]


def read_runtime(path: Path) -> list[dict]:
    return [
        {"method": r[0], "M": int(r[1]), "Np": int(r[2]), "sec": float(r[3])}
        for r in _rows(path, RUNTIME_HEADER)
    ]


def read_map(path: Path) -> list[dict]:
    out = []
    for r in _rows(path, MAP_HEADER):
        out.append(
            {
                "bs": int(r[0]),
                "label": int(r[1]),
                "va": np.array([float(r[2]), float(r[3]), float(r[4])]),
                "center": np.array([float(r[5]), float(r[6]), float(r[7])]),
                "normal": np.array([float(r[8]), float(r[9]), float(r[10])]),
                "width": float(r[11]),
                "height": float(r[12]),
            }
        )
    return out
