"""CSV and report writers.

All numbers are written with 17 significant digits so doubles survive a
round trip; files are UTF-8 with LF line endings.
"""
from __future__ import annotations

import os
from pathlib import Path
from typing import Dict, Iterable, Optional, Sequence

import numpy as np

from .model import Grid
from .solver import Trajectory, record_schedule

NUM_FMT = "%.17g"


def _fmt(v) -> str:
    return NUM_FMT % v


def _write_rows(path: Path, header: Sequence[str], rows: np.ndarray) -> Path:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        if len(rows):
            np.savetxt(fh, rows, fmt=NUM_FMT, delimiter=",", newline="\n")
    return path


def write_totals(path, trajectory: Trajectory, every: int = 1, t_max: Optional[float] = None) -> Path:
    """Columns t, rho_1..rho_M, s; every ``every``-th series sample plus the last."""
    idx = record_schedule(len(trajectory.series_times) - 1, every)
    if t_max is not None:
        idx = idx[trajectory.series_times[idx] <= t_max + 1e-9]
    M = trajectory.totals.shape[1]
    rows = np.column_stack([trajectory.series_times[idx], trajectory.totals[idx], trajectory.signal[idx]])
    header = ["t"] + [f"rho_{i}" for i in range(1, M + 1)] + ["s"]
    return _write_rows(Path(path), header, rows)


def normalized_snapshots(trajectory: Trajectory, grid: Grid, stage: int) -> np.ndarray:
    """n_i / rho_i at every snapshot, shape (snapshots, N)."""
    n = trajectory.snapshots[:, stage - 1, :]
    rho = n @ grid.weights
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(rho[:, None] > 0, n / rho[:, None], 0.0)
    return out


def write_heatmap(path, trajectory: Trajectory, grid: Grid, stage: int, every: int = 1, t_max: Optional[float] = None) -> Path:
    """Long-form (t, x, n_i/rho_i) rows for snapshots ``every`` apart plus the last."""
    idx = record_schedule(len(trajectory.times) - 1, every)
    if t_max is not None:
        idx = idx[trajectory.times[idx] <= t_max + 1e-9]
    norm = normalized_snapshots(trajectory, grid, stage)[idx]
    N = grid.num_points
    rows = np.column_stack([
        np.repeat(trajectory.times[idx], N),
        np.tile(grid.points, len(idx)),
        norm.ravel(),
    ])
    return _write_rows(Path(path), ["t", "x", "density"], rows)


def read_csv(path) -> Dict[str, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, j] for j, name in enumerate(header)}


def write_report(path, title: str, sections: Iterable, machine: Dict[str, object]) -> Path:
    """Human-readable text followed by a ``[machine]`` block of key=value lines."""
    lines = [title, "=" * len(title), ""]
    for heading, body in sections:
        lines.append(heading)
        lines += [f"  {line}" for line in body]
        lines.append("")
    lines.append("[machine]")
    for k, v in machine.items():
        if isinstance(v, float):
            v = _fmt(v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{k}={v}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return Path(path)


def read_machine_section(path) -> Dict[str, str]:
    out = {}
    in_block = False
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip() == "[machine]":
            in_block = True
            continue
        if in_block and "=" in line:
            k, v = line.split("=", 1)
            out[k] = v
    return out


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    if not os.access(p, os.W_OK):
        raise PermissionError(f"output directory {p} is not writable")
    return p
