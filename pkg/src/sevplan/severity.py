"""Collision-severity fields for static and moving obstacles.

An obstacle is a normalized shape function (circular or rectangular plateau
with a quartic-exponential skirt), scaled to physical half-extents, placed by
a rigid pose that may translate with constant velocity.  The instantaneous
severity of being at a point is

    cs = C * V_r * f(x_p, y_p)

where C is the object-class rating, V_r the magnitude of the relative
velocity between ego and obstacle, and f the shape value at the point
expressed in the obstacle frame.  The per-time severity rate summed over
obstacles (sum of cs**2) is the running cost the planner integrates.

Scalar entry points validate their inputs; :class:`FieldSet` provides the
vectorized evaluation path used inside optimization loops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import DomainError


class ShapeKind(str, Enum):
    CIRCLE = "circle"
    RECTANGLE = "rectangle"


@dataclass(frozen=True)
class ShapeParams:
    """Normalized footprint: half extents in meters plus the fuzzy margin.

    ``fuzzy_d`` is expressed in normalized units (the frame in which the core
    is the unit disc or unit square), so the physical skirt width scales with
    the half extents.
    """

    kind: ShapeKind
    half_length_a: float
    half_width_b: float
    fuzzy_d: float = 0.5

    def __post_init__(self):
        if not (self.half_length_a > 0 and self.half_width_b > 0 and self.fuzzy_d > 0):
            raise DomainError(
                "shape half extents and fuzzy margin must be strictly positive, got "
                f"a={self.half_length_a}, b={self.half_width_b}, d={self.fuzzy_d}"
            )


@dataclass(frozen=True)
class ObstacleMotion:
    """Constant-velocity straight-line motion with a fixed field orientation.

    The pose at time t is ``(x0 + speed*t*cos(heading_of_travel),
    y0 + speed*t*sin(heading_of_travel))`` with orientation ``heading0``
    held constant.  ``speed = 0`` gives a static obstacle.
    """

    center_x0: float
    center_y0: float
    heading0: float = 0.0
    speed: float = 0.0
    heading_of_travel: float = 0.0

    def __post_init__(self):
        if self.speed < 0:
            raise DomainError(f"obstacle speed must be >= 0, got {self.speed}")

    def center_at(self, t: float) -> tuple[float, float]:
        return (
            self.center_x0 + self.speed * t * math.cos(self.heading_of_travel),
            self.center_y0 + self.speed * t * math.sin(self.heading_of_travel),
        )

    def velocity(self) -> tuple[float, float]:
        return (
            self.speed * math.cos(self.heading_of_travel),
            self.speed * math.sin(self.heading_of_travel),
        )


@dataclass(frozen=True)
class ShapeComponent:
    """A shape placed at an offset in the obstacle frame.

    Composite footprints are built by overlapping basic shapes; the offset is
    expressed in the obstacle's local frame (so it rotates with heading0).
    """

    params: ShapeParams
    offset_x: float = 0.0
    offset_y: float = 0.0


@dataclass(frozen=True)
class Obstacle:
    """A rated obstacle: footprint, motion, and severity rating C >= 0.

    ``shape`` is the primary footprint centered on the obstacle.
    ``extra_components`` may add further shapes at local-frame offsets; the
    combined field is the smooth union 1 - prod(1 - f_c), which stays in
    [0, 1] and reduces to the single shape value when there are no extras.
    A typical use is a prediction halo stretched ahead of a moving obstacle.
    """

    id: str
    shape: ShapeParams
    motion: ObstacleMotion
    severity_C: float
    extra_components: tuple[ShapeComponent, ...] = ()

    def __post_init__(self):
        if not (self.severity_C >= 0):
            raise DomainError(f"severity rating must be >= 0, got {self.severity_C}")

    def components(self) -> tuple[ShapeComponent, ...]:
        return (ShapeComponent(self.shape),) + tuple(self.extra_components)


def _check_field_inputs(x: float, y: float, d: float) -> None:
    if not (math.isfinite(x) and math.isfinite(y)):
        raise DomainError(f"non-finite field point ({x}, {y})")
    if not (d > 0 and math.isfinite(d)):
        raise DomainError(f"fuzzy margin must be a positive finite number, got {d}")


def unit_circle_shape(x: float, y: float, d: float) -> float:
    """Normalized circular field: 1 on the unit disc, quartic-exp skirt outside."""
    _check_field_inputs(x, y, d)
    r = math.hypot(x, y)
    if r <= 1.0:
        return 1.0
    return math.exp(-(((r - 1.0) / d) ** 4))


def unit_rect_shape(x: float, y: float, d: float) -> float:
    """Normalized rectangular field: unit-square core, edge bands, rounded corners.

    The plane is partitioned into three regions: the core (max-norm <= 1),
    four edge bands (outside the core with |x| <= 1 or |y| <= 1, decaying in
    the max-norm excess), and four corner quadrants (|x| > 1 and |y| > 1,
    decaying in the Euclidean distance to the nearest core corner).
    """
    _check_field_inputs(x, y, d)
    ax, ay = abs(x), abs(y)
    m = max(ax, ay)
    if m <= 1.0:
        return 1.0
    if ax <= 1.0 or ay <= 1.0:
        return math.exp(-(((m - 1.0) / d) ** 4))
    corner_dist = math.hypot(ax - 1.0, ay - 1.0)
    return math.exp(-((corner_dist / d) ** 4))


def scaled_shape(x: float, y: float, shape: ShapeParams) -> float:
    """Field value at a physical point for a footprint with half extents (a, b)."""
    if shape.kind is ShapeKind.CIRCLE:
        return unit_circle_shape(x / shape.half_length_a, y / shape.half_width_b, shape.fuzzy_d)
    return unit_rect_shape(x / shape.half_length_a, y / shape.half_width_b, shape.fuzzy_d)


def to_obstacle_frame(t: float, x: float, y: float, motion: ObstacleMotion) -> tuple[float, float]:
    """Express a world point in the obstacle frame at time t (rotate by -heading0)."""
    cx, cy = motion.center_at(t)
    c, s = math.cos(motion.heading0), math.sin(motion.heading0)
    dx, dy = x - cx, y - cy
    return (dx * c + dy * s, -dx * s + dy * c)


def severity(t: float, x: float, y: float, v: float, heading: float, obstacle: Obstacle) -> float:
    """Instantaneous collision severity cs = C * V_r * f at a world point.

    V_r is the Euclidean norm of the relative velocity between the ego
    (speed ``v`` along ``heading``) and the obstacle, so it vanishes exactly
    when both move with the same velocity vector and reduces to |v - v_o|
    for collinear motion.  Multi-component footprints enter through the
    smooth union of their shape values.
    """
    vox, voy = obstacle.motion.velocity()
    v_r = math.hypot(v * math.cos(heading) - vox, v * math.sin(heading) - voy)
    if obstacle.severity_C == 0.0 or v_r == 0.0:
        return 0.0
    xp, yp = to_obstacle_frame(t, x, y, obstacle.motion)
    q = 1.0
    for comp in obstacle.components():
        q *= 1.0 - scaled_shape(xp - comp.offset_x, yp - comp.offset_y, comp.params)
    return obstacle.severity_C * v_r * (1.0 - q)


def severity_rate(t: float, state, obstacles: Sequence[Obstacle]) -> float:
    """Sum of squared severities over all obstacles; the running-cost integrand.

    ``state`` is any object with x, y, phi, v attributes (a VehicleState).
    """
    total = 0.0
    for obs in obstacles:
        cs = severity(t, state.x, state.y, state.v, state.phi, obs)
        total += cs * cs
    return total


def severity_gradient(t: float, state, obstacles: Sequence[Obstacle]) -> tuple[float, float, float, float]:
    """Central finite-difference gradient of severity_rate w.r.t. (x, y, v, phi).

    Per-component step h = max(1e-6, 1e-6 * |component|).
    """
    from types import SimpleNamespace

    base = (state.x, state.y, state.v, state.phi)
    grads = []
    for i in range(4):
        h = max(1e-6, 1e-6 * abs(base[i]))
        lo = list(base)
        hi = list(base)
        lo[i] -= h
        hi[i] += h
        s_lo = SimpleNamespace(x=lo[0], y=lo[1], v=lo[2], phi=lo[3])
        s_hi = SimpleNamespace(x=hi[0], y=hi[1], v=hi[2], phi=hi[3])
        grads.append((severity_rate(t, s_hi, obstacles) - severity_rate(t, s_lo, obstacles)) / (2 * h))
    gx, gy, gv, gphi = grads
    return (gx, gy, gv, gphi)


class _ComponentGroup:
    """One shape kind's components, laid out for broadcast evaluation."""

    def __init__(self, entries, circle: bool):
        # entries: list of (column, Obstacle, ShapeComponent)
        self.circle = circle
        self.cols = np.array([col for col, _, _ in entries], dtype=int)
        a = np.array([c.params.half_length_a for _, _, c in entries])
        b = np.array([c.params.half_width_b for _, _, c in entries])
        cos_h = np.array([math.cos(o.motion.heading0) for _, o, _ in entries])
        sin_h = np.array([math.sin(o.motion.heading0) for _, o, _ in entries])
        # Row i of the obstacle-frame transform, folded with the axis scaling.
        self.ra1 = cos_h / a
        self.ra2 = sin_h / a
        self.rb1 = -sin_h / b
        self.rb2 = cos_h / b
        self.inv_d = 1.0 / np.array([c.params.fuzzy_d for _, _, c in entries])
        # Component world center at t = base center + rotated local offset.
        ox = np.array([c.offset_x for _, _, c in entries])
        oy = np.array([c.offset_y for _, _, c in entries])
        self.cx0 = np.array([o.motion.center_x0 for _, o, _ in entries]) + ox * cos_h - oy * sin_h
        self.cy0 = np.array([o.motion.center_y0 for _, o, _ in entries]) + ox * sin_h + oy * cos_h
        self.vx = np.array([o.motion.velocity()[0] for _, o, _ in entries])
        self.vy = np.array([o.motion.velocity()[1] for _, o, _ in entries])

    def f_into(self, F, t, x, y):
        """Write this group's shape values into their columns of F (B, n_comp)."""
        dx = x[:, None] - (self.cx0 + self.vx * t)
        dy = y[:, None] - (self.cy0 + self.vy * t)
        xp = dx * self.ra1
        xp += dy * self.ra2
        yp = dx * self.rb1
        yp += dy * self.rb2
        if self.circle:
            u = np.hypot(xp, yp)
            u -= 1.0
            np.maximum(u, 0.0, out=u)
        else:
            np.abs(xp, out=xp)
            np.abs(yp, out=yp)
            xp -= 1.0
            yp -= 1.0
            np.maximum(xp, 0.0, out=xp)
            np.maximum(yp, 0.0, out=yp)
            # 0 in the core, max-norm excess in the edge bands, Euclidean
            # corner distance in the corner quadrants: one formula, no masks.
            u = np.hypot(xp, yp)
        u *= self.inv_d
        u *= u
        u *= u
        np.negative(u, out=u)
        F[:, self.cols] = np.exp(u, out=u)


def _component_shape_value(t, x, y, obstacle, comp):
    """Shape value of one component at world points (reference path)."""
    cx, cy = obstacle.motion.center_at(t)
    ch, sh = math.cos(obstacle.motion.heading0), math.sin(obstacle.motion.heading0)
    dx, dy = x - cx, y - cy
    xp = dx * ch + dy * sh - comp.offset_x
    yp = -dx * sh + dy * ch - comp.offset_y
    xn = xp / comp.params.half_length_a
    yn = yp / comp.params.half_width_b
    if comp.params.kind is ShapeKind.CIRCLE:
        dist = np.maximum(np.hypot(xn, yn) - 1.0, 0.0)
    else:
        dist = np.hypot(
            np.maximum(np.abs(xn) - 1.0, 0.0),
            np.maximum(np.abs(yn) - 1.0, 0.0),
        )
    with np.errstate(over="ignore"):
        return np.exp(-((dist / comp.params.fuzzy_d) ** 4))


class FieldSet:
    """Vectorized severity evaluation over a fixed obstacle list.

    Per-component parameters are packed into arrays once (grouped by shape
    kind), so severity rates along whole batches of trajectory points cost a
    handful of numpy operations instead of a Python loop per obstacle.
    Multi-component footprints combine through the smooth union
    1 - prod(1 - f_c).  ``rate`` is the optimizer's hot path;
    ``per_obstacle`` keeps the readable reference evaluation used for
    reports and rasterization.
    """

    def __init__(self, obstacles: Iterable[Obstacle]):
        obstacles = list(obstacles)
        self.obstacles = obstacles
        self.ids = [o.id for o in obstacles]
        self.n = len(obstacles)
        entries_c = []
        entries_r = []
        starts = []
        col = 0
        for obs in obstacles:
            starts.append(col)
            for comp in obs.components():
                entry = (col, obs, comp)
                if comp.params.kind is ShapeKind.CIRCLE:
                    entries_c.append(entry)
                else:
                    entries_r.append(entry)
                col += 1
        self.n_comp = col
        self._starts = np.array(starts, dtype=int)
        self._simple = self.n_comp == self.n  # one component per obstacle
        self._groups = []
        if entries_c:
            self._groups.append(_ComponentGroup(entries_c, circle=True))
        if entries_r:
            self._groups.append(_ComponentGroup(entries_r, circle=False))
        self.ovx = np.array([o.motion.velocity()[0] for o in obstacles])
        self.ovy = np.array([o.motion.velocity()[1] for o in obstacles])
        self.C2 = np.array([o.severity_C for o in obstacles]) ** 2

    def _fields(self, t, x, y):
        """Union field value per obstacle at world points; x, y are (B,)."""
        F = np.empty((x.size, self.n_comp))
        for group in self._groups:
            group.f_into(F, t, x, y)
        if self._simple:
            return F
        np.subtract(1.0, F, out=F)
        Q = np.multiply.reduceat(F, self._starts, axis=1)
        return np.subtract(1.0, Q, out=Q)

    def per_obstacle(self, t: float, x, y, v, phi) -> np.ndarray:
        """Severity cs_i for every obstacle; result shape = broadcast(x) + (n,)."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        v = np.asarray(v, dtype=float)
        phi = np.asarray(phi, dtype=float)
        out = np.empty(np.broadcast(x, y, v, phi).shape + (self.n,))
        for i, obs in enumerate(self.obstacles):
            vox, voy = obs.motion.velocity()
            q = 1.0
            for comp in obs.components():
                q = q * (1.0 - _component_shape_value(t, x, y, obs, comp))
            v_r = np.hypot(v * np.cos(phi) - vox, v * np.sin(phi) - voy)
            out[..., i] = obs.severity_C * v_r * (1.0 - q)
        return out

    def rate(self, t: float, x, y, v, phi) -> np.ndarray:
        """Sum of squared severities over obstacles.

        Hot path: the inputs must be equal-length 1-D float arrays (no
        coercion happens here).  Use :meth:`per_obstacle` for flexible
        broadcasting.
        """
        if not self._groups:
            return np.zeros(x.shape)
        f = self._fields(t, x, y)
        vrx = (v * np.cos(phi))[:, None] - self.ovx
        vry = (v * np.sin(phi))[:, None] - self.ovy
        vrx *= vrx
        vry *= vry
        vrx += vry
        f *= f
        f *= vrx
        f *= self.C2
        return np.add.reduce(f, axis=1)


def write_severity_grid(
    out: TextIO,
    obstacles: Sequence[Obstacle],
    t: float,
    ego_speed: float,
    ego_heading: float,
    x_range: tuple[float, float],
    y_range: tuple[float, float],
    nx: int = 101,
    ny: int = 101,
) -> None:
    """Rasterize the summed severity map over a rectangle and emit CSV rows.

    Debug/plotting hook: columns are x, y, value where value is the
    superposition of per-obstacle severities for an ego moving at
    ``ego_speed`` along ``ego_heading``.
    """
    fields = FieldSet(obstacles)
    xs = np.linspace(x_range[0], x_range[1], nx)
    ys = np.linspace(y_range[0], y_range[1], ny)
    out.write("x,y,value\n")
    for yv in ys:
        cs = fields.per_obstacle(t, xs, np.full_like(xs, yv), ego_speed, ego_heading)
        total = np.sum(cs, axis=-1)
        for xv, val in zip(xs, total):
            out.write(f"{xv:.17g},{yv:.17g},{val:.17g}\n")
