"""Scenario execution: solve, serialize artifacts, compare runs.

Every run writes four files into its output directory:

    trajectory.csv   t, x, y, phi, v, delta, cost_state_J1   (level-2 solution)
    controls.csv     interval_index, t_start, a, delta_s
    severity.csv     t, <one cs column per object id>, total_rate
    summary.json     objectives, epsilon, solver statuses, iterations, wall time

plus ``scenario.json``, the canonical serialization of the scenario that was
run (so a results directory is self-describing and comparable).  Numbers in
the CSVs carry 17 significant digits, enough for exact float round-trips,
and repeated runs produce byte-identical CSVs.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import GridMismatchError
from .ocp import SolveOptions, SolveReport, two_level_solve
from .scenario import Scenario, parse_scenario, serialize_scenario
from .severity import ShapeComponent, ShapeKind

_FMT = "{:.17g}"


def _fmt(x: float) -> str:
    return _FMT.format(float(x))


@dataclass
class RunArtifacts:
    out_dir: str
    trajectory_csv: str
    controls_csv: str
    severity_csv: str
    summary_path: str
    scenario_path: str
    summary: dict
    report: SolveReport


def _write_trajectory(path: str, report: SolveReport) -> None:
    traj = report.trajectory2
    with open(path, "w") as fh:
        fh.write("t,x,y,phi,v,delta,cost_state_J1\n")
        for i, t in enumerate(traj.times):
            row = [t] + list(traj.states[i]) + [traj.cost[i]]
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_controls(path: str, report: SolveReport, scenario: Scenario) -> None:
    z = report.z2
    dt = (scenario.tf - scenario.t0) / scenario.num_intervals
    with open(path, "w") as fh:
        fh.write("interval_index,t_start,a,delta_s\n")
        for k in range(scenario.num_intervals):
            fh.write(
                f"{k},{_fmt(scenario.t0 + k * dt)},{_fmt(z[2 * k])},{_fmt(z[2 * k + 1])}\n"
            )


def _write_severity(path: str, report: SolveReport) -> None:
    traj = report.trajectory2
    cs = report.severity2
    total = np.sum(cs * cs, axis=1)
    with open(path, "w") as fh:
        fh.write("t," + ",".join(report.obstacle_ids) + ",total_rate\n")
        for i, t in enumerate(traj.times):
            vals = [t] + list(cs[i]) + [total[i]]
            fh.write(",".join(_fmt(v) for v in vals) + "\n")


def _summary_dict(report: SolveReport) -> dict:
    return {
        "scenario": report.scenario_name,
        "J1_star": report.j1_star,
        "J2_level1": report.j2_level1,
        "J2_level2": report.j2_level2,
        "J1_at_z2": report.j1_at_z2,
        "epsilon": report.epsilon,
        "level1_statuses": [r.status.value for r in report.level1.solver_results],
        "level2_statuses": [r.status.value for r in report.level2.solver_results],
        "level1_iterations": report.level1.iterations,
        "level2_iterations": report.level2.iterations,
        "explore_J1": list(report.explore_j1),
        "converged": report.converged,
        "wall_time_seconds": report.wall_time_seconds,
    }


def run(scenario: Scenario, out_dir: str, options: Optional[SolveOptions] = None) -> RunArtifacts:
    """Solve the scenario's two-level problem and write all artifacts."""
    os.makedirs(out_dir, exist_ok=True)
    report = two_level_solve(scenario.to_ocp_spec(), options)
    paths = {
        "trajectory_csv": os.path.join(out_dir, "trajectory.csv"),
        "controls_csv": os.path.join(out_dir, "controls.csv"),
        "severity_csv": os.path.join(out_dir, "severity.csv"),
        "summary_path": os.path.join(out_dir, "summary.json"),
        "scenario_path": os.path.join(out_dir, "scenario.json"),
    }
    _write_trajectory(paths["trajectory_csv"], report)
    _write_controls(paths["controls_csv"], report, scenario)
    _write_severity(paths["severity_csv"], report)
    summary = _summary_dict(report)
    with open(paths["summary_path"], "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    with open(paths["scenario_path"], "w") as fh:
        fh.write(serialize_scenario(scenario))
    return RunArtifacts(out_dir=out_dir, summary=summary, report=report, **paths)


def _core_distance(comp: ShapeComponent, xp: float, yp: float) -> float:
    """Signed Euclidean distance from an obstacle-frame point to a component
    core boundary (negative inside)."""
    px = xp - comp.offset_x
    py = yp - comp.offset_y
    a = comp.params.half_length_a
    b = comp.params.half_width_b
    if comp.params.kind is ShapeKind.RECTANGLE:
        dx = abs(px) - a
        dy = abs(py) - b
        if dx > 0 or dy > 0:
            return math.hypot(max(dx, 0.0), max(dy, 0.0))
        return max(dx, dy)
    if abs(a - b) < 1e-12:
        return math.hypot(px, py) - a
    # Ellipse: minimize the distance to the parametrized boundary.
    px_, py_ = abs(px), abs(py)

    def dist(theta):
        return math.hypot(a * math.cos(theta) - px_, b * math.sin(theta) - py_)

    res = minimize_scalar(dist, bounds=(0.0, math.pi / 2), method="bounded",
                          options={"xatol": 1e-12})
    d = float(res.fun)
    inside = (px / a) ** 2 + (py / b) ** 2 <= 1.0
    return -d if inside else d


@dataclass
class _LoadedRun:
    scenario: Scenario
    times: np.ndarray
    states: np.ndarray
    summary: dict


def _load_run(out_dir: str) -> _LoadedRun:
    with open(os.path.join(out_dir, "scenario.json")) as fh:
        scenario = parse_scenario(fh.read())
    data = np.genfromtxt(
        os.path.join(out_dir, "trajectory.csv"), delimiter=",", names=True
    )
    times = np.asarray(data["t"], dtype=float)
    states = np.column_stack(
        [data["x"], data["y"], data["phi"], data["v"], data["delta"]]
    )
    with open(os.path.join(out_dir, "summary.json")) as fh:
        summary = json.load(fh)
    return _LoadedRun(scenario=scenario, times=times, states=states, summary=summary)


def _closest_approach(run: _LoadedRun, obj) -> dict:
    """Clearances and signed side-of-pass for one scene object."""
    xs = run.states[:, 0]
    ys = run.states[:, 1]
    phis = run.states[:, 2]
    cx = obj.motion.center_x0 + obj.motion.velocity()[0] * run.times
    cy = obj.motion.center_y0 + obj.motion.velocity()[1] * run.times
    dist = np.hypot(xs - cx, ys - cy)
    k = int(np.argmin(dist))
    # Ego lateral offset relative to the obstacle, resolved along the ego's
    # left axis at closest approach: positive = obstacle passed on the right.
    left = (-math.sin(phis[k]), math.cos(phis[k]))
    rel = (xs[k] - cx[k], ys[k] - cy[k])
    side_val = rel[0] * left[0] + rel[1] * left[1]
    # Core clearance: distance to the nearest component core at that moment.
    ch = math.cos(obj.motion.heading0)
    sh = math.sin(obj.motion.heading0)
    xp = rel[0] * ch + rel[1] * sh
    yp = -rel[0] * sh + rel[1] * ch
    comps = (ShapeComponent(obj.shape),) + tuple(obj.extra_shapes)
    core = min(_core_distance(c, xp, yp) for c in comps)
    return {
        "min_center_clearance": float(dist[k]),
        "min_core_clearance": float(core),
        "side_of_pass": int(np.sign(side_val)) if side_val != 0 else 0,
        "t_closest": float(run.times[k]),
    }


def compare(dir_a: str, dir_b: str) -> dict:
    """Per-obstacle clearances and side-of-pass for two runs, plus deltas.

    Both runs must share the integration time grid.  Objects are matched by
    id; per-run records are always reported, deltas only for shared ids.
    """
    run_a = _load_run(dir_a)
    run_b = _load_run(dir_b)
    if run_a.times.shape != run_b.times.shape or not np.array_equal(run_a.times, run_b.times):
        raise GridMismatchError(
            f"runs have different time grids ({run_a.times.shape[0]} vs "
            f"{run_b.times.shape[0]} nodes)"
        )
    rec_a = {o.id: _closest_approach(run_a, o) for o in run_a.scenario.all_objects()}
    rec_b = {o.id: _closest_approach(run_b, o) for o in run_b.scenario.all_objects()}
    shared = sorted(set(rec_a) & set(rec_b))
    deltas = {}
    for oid in shared:
        deltas[oid] = {
            "center_clearance_delta": rec_b[oid]["min_center_clearance"]
            - rec_a[oid]["min_center_clearance"],
            "core_clearance_delta": rec_b[oid]["min_core_clearance"]
            - rec_a[oid]["min_core_clearance"],
            "side_flipped": rec_a[oid]["side_of_pass"] != rec_b[oid]["side_of_pass"],
        }
    return {
        "a": {"dir": dir_a, "scenario": run_a.scenario.name, "objects": rec_a},
        "b": {"dir": dir_b, "scenario": run_b.scenario.name, "objects": rec_b},
        "deltas": deltas,
        "delta_J1": run_b.summary["J1_at_z2"] - run_a.summary["J1_at_z2"],
        "delta_J2": run_b.summary["J2_level2"] - run_a.summary["J2_level2"],
    }
