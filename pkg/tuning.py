# Scene-parameter tuning harness (dev tool, not part of the package).
# Builds candidate scenario variants programmatically, runs the steering-only
# optimizer from an up-seed and a down-seed, and reports basin costs, path
# depths, clearances, and speed drift.
import math
import time

import numpy as np

from sevplan.ocp import (
    OcpSpec, SolveOptions, default_seeds, eval_J1, rollout,
    _solve_j1_stage, _check_bounds,
)
from sevplan.severity import (
    FieldSet, Obstacle, ObstacleMotion, ShapeComponent, ShapeKind, ShapeParams,
)
from sevplan.vehicle import VehicleParams, VehicleState

PI = math.pi
HPI = math.pi / 2


def build_scene(name, p, cond2=False, setting2=False):
    ped_C = 200.0 if setting2 else 40.0
    ped2_C = 200.0 if (cond2 or setting2) else 40.0
    rect, circ = ShapeKind.RECTANGLE, ShapeKind.CIRCLE
    # Static hazard swath over pedestrian 2's crossing corridor: a
    # thin-skirted core over the swath plus a softer tail reaching below it
    # (the crossing is more uncertain the further it has progressed).
    zone = Obstacle(
        "ped_2_crossing", ShapeParams(rect, p["zone_a"], p["zone_b"], p["zone_d"]),
        ObstacleMotion(24.0, p["zone_yc"]), ped2_C,
        extra_components=(ShapeComponent(
            ShapeParams(rect, p["zone_a"], p["tail_b"], p["tail_d"]), 0.0, p["tail_off"]),),
    )
    obs = []
    if name == "s1":
        obs += [
            Obstacle("static_car_1", ShapeParams(rect, 2.25, 0.9, p["car_row_d"]), ObstacleMotion(21, -5), 20),
            Obstacle("static_car_2", ShapeParams(rect, 2.25, 0.9, p["car_row_d"]), ObstacleMotion(26, -5), 20),
        ]
    else:
        obs += [
            Obstacle("ped_3", ShapeParams(circ, 0.3, 0.3, p["ped_row_d"]), ObstacleMotion(23, -5), ped_C),
            Obstacle("ped_4", ShapeParams(circ, 0.3, 0.3, p["ped_row_d"]), ObstacleMotion(24, -5), ped_C),
            Obstacle("ped_5", ShapeParams(circ, 0.3, 0.3, p["ped_row_d"]), ObstacleMotion(25, -5), ped_C),
            Obstacle("ped_6", ShapeParams(circ, 0.3, 0.3, p["ped_row_d"]), ObstacleMotion(26, -5), ped_C),
        ]
    obs += [
        Obstacle("static_car_3", ShapeParams(rect, 2.25, 0.9, p["car3_d"]), ObstacleMotion(30, 1.75), 20),
        Obstacle("bus", ShapeParams(rect, 6.0, 1.25, p["bus_d"]), ObstacleMotion(16, 1.75), 30),
        Obstacle("ped_1", ShapeParams(circ, 0.3, 0.3, p["ped1_d"]), ObstacleMotion(20, 3.5), ped_C),
        Obstacle("ped_2", ShapeParams(circ, 0.3, 0.3, p["ped2_body_d"]),
                 ObstacleMotion(24, 3.5, -HPI, 1.0, -HPI), ped2_C),
        zone,
        Obstacle("moving_car_1", ShapeParams(rect, 2.25, 0.9, 1.2),
                 ObstacleMotion(-1.75, 18.5, -HPI, 10.0, -HPI), 20),
        Obstacle("moving_car_2", ShapeParams(rect, 2.25, 0.9, 1.2),
                 ObstacleMotion(1.75, -18.5, HPI, 10.0, HPI), 20),
        Obstacle("fence_north", ShapeParams(rect, 20.0, 0.8, p["fence_d"]), ObstacleMotion(30, p["fence_y"]), 10),
        Obstacle("building_north", ShapeParams(rect, 25.0, 5.0, 0.2), ObstacleMotion(27, 11.0), 10),
        Obstacle("building_south", ShapeParams(rect, 25.0, 5.0, 0.2), ObstacleMotion(27, -12.0), 10),
    ]
    if name == "s1":
        obs.append(Obstacle("bus_station", ShapeParams(rect, 2.0, 1.0, 0.5), ObstacleMotion(16, 4.6), 10))
    return OcpSpec(
        initial_state=VehicleState(50, 1.75, PI, 10, 0),
        vehicle=VehicleParams(),
        obstacles=tuple(obs),
        accel_bounds=(-0.5, 0.5),
        scenario_name=name,
    )


def basin_probe(spec, tol=1e-4, iters=60):
    from sevplan.ocp import severity_series

    fields = FieldSet(spec.obstacles)
    zero = spec.zero_vector()
    _, _, c = rollout(spec, zero[None, :], fields)
    scale = 1.0 + float(c[0, -1])
    cfg = SolveOptions().solver_config(optimality_tolerance=tol, max_inner_iterations=iters)
    seeds = default_seeds(spec)  # [zero, down, up]
    labels = ("zero", "down", "up")
    out = {}
    for label, seed in zip(labels, seeds):
        t0 = time.perf_counter()
        res = _solve_j1_stage(spec, _check_bounds(seed, spec), cfg, fields, scale, steer_only=True)
        j1, traj = eval_J1(res.x_best, spec, fields)
        xs, ys, vs = traj.states[:, 0], traj.states[:, 1], traj.states[:, 3]
        k24 = int(np.argmin(np.abs(xs - 24)))
        # per-obstacle shares of J1
        cs = severity_series(spec, traj, fields)
        shares = np.trapezoid(cs * cs, traj.times, axis=0)
        top = sorted(zip(fields.ids, shares), key=lambda kv: -kv[1])[:4]
        out[label] = dict(
            j1=j1, secs=time.perf_counter() - t0, it=res.iterations,
            status=res.status.value, ymin=float(ys.min()), ymax=float(ys.max()),
            y_at_24=float(ys[k24]), t_at_24=float(traj.times[k24]),
            z=res.x_best, top=top,
        )
    return out


def show(name, probe):
    print(f"--- {name}")
    for label, r in probe.items():
        tops = " ".join(f"{k}:{v:.3g}" for k, v in r["top"] if v > 1e-9)
        print(f"  {label:5s} J1={r['j1']:12.4g} it={r['it']:3d} {r['status'][:4]} "
              f"y[{r['ymin']:6.2f},{r['ymax']:5.2f}] y@24={r['y_at_24']:6.2f} "
              f"t@24={r['t_at_24']:.2f} ({r['secs']:.0f}s) | {tops}")


if __name__ == "__main__":
    import sys, json
    params = dict(
        car_row_d=0.6, ped_row_d=3.2, car3_d=0.5, bus_d=0.5,
        ped1_d=1.2, ped2_body_d=1.2,
        zone_a=0.55, zone_b=2.3, zone_d=0.18, zone_yc=1.2,
        tail_b=1.0, tail_d=0.6, tail_off=-2.8,
        fence_y=5.45, fence_d=0.4,
    )
    if len(sys.argv) > 1:
        params.update(json.loads(sys.argv[1]))
    print("params:", params)
    for scene, kw in (("s1", {}), ("s2", {}), ("s2c2", {"cond2": True})):
        nm = "s1" if scene == "s1" else "s2"
        probe = basin_probe(build_scene(nm, params, **kw))
        show(scene + (" (cond2)" if kw else ""), probe)
