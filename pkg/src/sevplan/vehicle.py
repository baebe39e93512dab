"""Kinematic single-track vehicle model with first-order steering lag.

State is (x, y, phi, v, delta): planar position of the rear-axle reference
point, yaw angle, speed, and the actual steering angle, which tracks the
commanded angle through a first-order lag with time constant dT.  Controls
are piecewise constant per interval: longitudinal acceleration and the
steering command.

Integration is classical fixed-step RK4.  The generic stepper
:func:`rk4_step_fn` is shared with the cost-augmented system used by the
optimal-control layer, so trajectory and running-cost quadrature always see
the same discretization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import SingularityError

DELTA_LIMIT = math.pi / 2 - 1e-3


@dataclass(frozen=True)
class VehicleParams:
    wheelbase_L: float = 2.7
    steering_lag_dT: float = 0.2

    def __post_init__(self):
        if not (self.wheelbase_L > 0 and self.steering_lag_dT > 0):
            raise ValueError(
                f"wheelbase and steering lag must be positive, got "
                f"L={self.wheelbase_L}, dT={self.steering_lag_dT}"
            )


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    phi: float
    v: float
    delta: float = 0.0

    def __post_init__(self):
        vals = (self.x, self.y, self.phi, self.v, self.delta)
        if not all(math.isfinite(c) for c in vals):
            raise ValueError(f"vehicle state must be finite, got {vals}")
        if abs(self.delta) >= math.pi / 2:
            raise ValueError(f"|steering angle| must be < pi/2, got {self.delta}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.phi, self.v, self.delta])


@dataclass(frozen=True)
class ControlSample:
    accel_a: float = 0.0
    steer_cmd_delta_s: float = 0.0


def dynamics(
    state: VehicleState, control: ControlSample, params: VehicleParams
) -> tuple[float, float, float, float, float]:
    """Right-hand side (xdot, ydot, phidot, vdot, deltadot) of the vehicle ODE."""
    if abs(state.delta) >= DELTA_LIMIT:
        raise SingularityError(
            f"steering angle {state.delta} too close to +-pi/2 for tan()"
        )
    return (
        state.v * math.cos(state.phi),
        state.v * math.sin(state.phi),
        state.v * math.tan(state.delta) / params.wheelbase_L,
        control.accel_a,
        (control.steer_cmd_delta_s - state.delta) / params.steering_lag_dT,
    )


def deriv_array(states: np.ndarray, accel, steer_cmd, params: VehicleParams) -> np.ndarray:
    """Vectorized vehicle ODE: states (..., 5) -> derivatives (..., 5).

    No singularity guard here; callers check delta bounds per interval.
    """
    phi = states[..., 2]
    v = states[..., 3]
    delta = states[..., 4]
    out = np.empty_like(states)
    out[..., 0] = v * np.cos(phi)
    out[..., 1] = v * np.sin(phi)
    out[..., 2] = v * np.tan(delta) / params.wheelbase_L
    out[..., 3] = accel
    out[..., 4] = (steer_cmd - delta) / params.steering_lag_dT
    return out


def rk4_step_fn(f: Callable, t: float, y: np.ndarray, h: float) -> np.ndarray:
    """One classical 4th-order Runge-Kutta step of y' = f(t, y)."""
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step(
    state: VehicleState, control: ControlSample, params: VehicleParams, h: float
) -> VehicleState:
    """Advance the vehicle one step of size h with the control held constant."""
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h}")
    if abs(state.delta) >= DELTA_LIMIT:
        raise SingularityError(
            f"steering angle {state.delta} too close to +-pi/2 for tan()"
        )

    def f(t, y):
        return deriv_array(y, control.accel_a, control.steer_cmd_delta_s, params)

    y = rk4_step_fn(f, 0.0, state.as_array(), h)
    return VehicleState(*y)


@dataclass(frozen=True)
class Trajectory:
    """States sampled on the integration grid; ``states[k]`` is at ``times[k]``."""

    times: np.ndarray
    states: np.ndarray

    def state_at(self, k: int) -> VehicleState:
        return VehicleState(*self.states[k])


def simulate(
    initial: VehicleState,
    controls: Sequence[ControlSample],
    params: VehicleParams,
    t0: float,
    tf: float,
    substeps_per_interval: int = 4,
) -> Trajectory:
    """Integrate piecewise-constant controls on a uniform grid.

    The trajectory starts exactly at ``initial`` and contains the state at
    every substep node, ``len(controls) * substeps_per_interval + 1`` rows.
    """
    if not tf > t0:
        raise ValueError(f"need tf > t0, got [{t0}, {tf}]")
    if len(controls) == 0:
        raise ValueError("need at least one control interval")
    if substeps_per_interval < 1:
        raise ValueError("substeps_per_interval must be >= 1")

    n = len(controls)
    h = (tf - t0) / (n * substeps_per_interval)
    m = n * substeps_per_interval + 1
    times = t0 + h * np.arange(m)
    states = np.empty((m, 5))
    states[0] = initial.as_array()
    y = states[0]
    row = 0
    for k, ctrl in enumerate(controls):
        if np.abs(y[4]) >= DELTA_LIMIT:
            raise SingularityError(
                f"steering angle {y[4]} at tan() singularity entering interval {k}",
                interval=k,
            )

        def f(t, s, a=ctrl.accel_a, ds=ctrl.steer_cmd_delta_s):
            return deriv_array(s, a, ds, params)

        for _ in range(substeps_per_interval):
            y = rk4_step_fn(f, times[row], y, h)
            row += 1
            states[row] = y
    return Trajectory(times=times, states=states)
