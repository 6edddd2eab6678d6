"""CSV and JSON serialization for trajectories, censored series, grids and ABC output.

Numeric CSV cells use the shortest round-trip decimal representation; time
columns are written in fixed-point model-time seconds.  Structured metadata
(seeds, parameters, axes) lives in a JSON sidecar next to each CSV.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .censored import BinarySeries
from .epi import CtmcPath
from .estimators import PosteriorGrid
from .ou import Trajectory

__all__ = [
    "sidecar_path",
    "write_trajectory",
    "read_trajectory",
    "write_binary_series",
    "read_binary_series",
    "write_event_path",
    "write_grid",
    "write_marginal",
    "write_abc_generation",
    "read_abc_generation",
    "write_json",
    "read_json",
]


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def _fmt_time(t: float) -> str:
    return f"{t:.6f}"


def _fmt_value(v) -> str:
    return repr(float(v))


def write_trajectory(path, traj: Trajectory, metadata: dict | None = None) -> None:
    """Write `t,value` rows plus a JSON sidecar with step, seed and extras."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "value"])
        for t, v in zip(traj.times, traj.values):
            writer.writerow([_fmt_time(t), _fmt_value(v)])
    side = {"t0": traj.t0, "h": traj.h, "n": int(traj.values.size), "seed": traj.seed}
    side.update(metadata or {})
    write_json(sidecar_path(path), side)


def _read_two_columns(path, expected_header):
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [c.strip() for c in header] != expected_header:
            raise ValueError(f"{path}: expected header {','.join(expected_header)}")
        cols = ([], [])
        for row in reader:
            if not row:
                continue
            cols[0].append(float(row[0]))
            cols[1].append(float(row[1]))
    return np.asarray(cols[0]), np.asarray(cols[1])


def _uniform_step(times, fallback=None):
    if times.size > 1:
        steps = np.diff(times)
        h = float(steps[0])
        if not np.allclose(steps, h, rtol=1e-6, atol=1e-9):
            raise ValueError("time column is not uniformly spaced")
        return h
    if fallback is None:
        raise ValueError("cannot infer the step from a single row")
    return fallback


def read_trajectory(path) -> tuple[Trajectory, dict]:
    """Read a trajectory CSV; the sidecar (when present) restores seed and step."""
    times, values = _read_two_columns(path, ["t", "value"])
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        meta = read_json(side)
    h = _uniform_step(times, fallback=meta.get("h"))
    traj = Trajectory(t0=float(times[0]) if times.size else 0.0, h=h, values=values, seed=meta.get("seed"))
    return traj, meta


def write_binary_series(path, series: BinarySeries, metadata: dict | None = None) -> None:
    """Write `t,y` rows; thresholds go to the JSON sidecar."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "y"])
        for t, v in zip(series.times, series.values):
            writer.writerow([_fmt_time(t), int(v)])
    side = {
        "t0": series.t0,
        "h": series.h,
        "n": int(series.values.size),
        "thresholds": list(series.thresholds) if series.thresholds is not None else None,
    }
    side.update(metadata or {})
    write_json(sidecar_path(path), side)


def read_binary_series(path) -> tuple[BinarySeries, dict]:
    times, values = _read_two_columns(path, ["t", "y"])
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        meta = read_json(side)
    h = _uniform_step(times, fallback=meta.get("h"))
    thresholds = meta.get("thresholds")
    series = BinarySeries(
        h=h,
        values=values.astype(np.int8),
        thresholds=tuple(thresholds) if thresholds else None,
        t0=float(times[0]) if times.size else 0.0,
    )
    return series, meta


def write_event_path(path, ctmc: CtmcPath, metadata: dict | None = None) -> None:
    """Write the raw jump record `t,i_count[,phi]`."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        if ctmc.phis is None:
            writer.writerow(["t", "i_count"])
            for t, i in zip(ctmc.times, ctmc.i_counts):
                writer.writerow([_fmt_time(t), int(i)])
        else:
            writer.writerow(["t", "i_count", "phi"])
            for t, i, ph in zip(ctmc.times, ctmc.i_counts, ctmc.phis):
                writer.writerow([_fmt_time(t), int(i), _fmt_value(ph)])
    side = {
        "t_end": ctmc.t_end,
        "sigma_pop": ctmc.sigma_pop,
        "rho": ctmc.rho,
        "seed": ctmc.seed,
        "n_events": int(ctmc.times.size - 1),
    }
    side.update(metadata or {})
    write_json(sidecar_path(path), side)


def write_grid(path, grid: PosteriorGrid, metadata: dict | None = None) -> None:
    """Write the normalized log-density matrix; axes go to the JSON sidecar.

    Rows follow axis1, columns axis2; cell values are log densities minus the
    log normalization.
    """
    path = Path(path)
    normalized = grid.log_density - grid.normalization
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        for row in normalized:
            writer.writerow([_fmt_value(v) for v in row])
    side = {
        "axis1": {"name": grid.axis1_name, "values": [float(v) for v in grid.axis1]},
        "axis2": {"name": grid.axis2_name, "values": [float(v) for v in grid.axis2]},
        "normalization": grid.normalization,
    }
    side.update(metadata or {})
    write_json(sidecar_path(path), side)


def write_marginal(path, values, masses, name: str) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([name, "mass"])
        for v, m in zip(values, masses):
            writer.writerow([_fmt_value(v), _fmt_value(m)])


def write_abc_generation(path, population, param_names) -> None:
    """One row per particle: particle_id, parameters, weight, distance."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["particle_id", *param_names, "weight", "distance"])
        for idx in range(population.particles.shape[0]):
            writer.writerow(
                [
                    idx,
                    *[_fmt_value(v) for v in population.particles[idx]],
                    _fmt_value(population.weights[idx]),
                    _fmt_value(population.distances[idx]),
                ]
            )
    write_json(
        sidecar_path(path),
        {
            "generation": population.generation,
            "epsilon": population.epsilon,
            "n_attempts": population.n_attempts,
            "acceptance_rate": population.acceptance_rate,
            "param_names": list(param_names),
        },
    )


def read_abc_generation(path):
    """(particles, weights, distances, meta) from a generation CSV."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[0] != "particle_id" or header[-2:] != ["weight", "distance"]:
            raise ValueError(f"{path}: not an ABC generation file")
        rows = [row for row in reader if row]
    particles = np.array([[float(v) for v in row[1:-2]] for row in rows])
    weights = np.array([float(row[-2]) for row in rows])
    distances = np.array([float(row[-1]) for row in rows])
    meta = {}
    side = sidecar_path(path)
    if side.exists():
        meta = read_json(side)
    return particles, weights, distances, meta
