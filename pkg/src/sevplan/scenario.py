"""Scenario files: schema, parsing, validation, and canonical serialization.

A scenario is one JSON document (full-line or trailing ``#`` comments are
allowed and stripped before parsing) with top-level keys::

    name        str
    ego         {x, y, heading, speed, steering}
    vehicle     {wheelbase, steering_lag}
    ocp         {t0, tf, num_intervals, substeps_per_interval,
                 accel_bounds, steer_bounds, epsilon}
    ratings     {setting, values}
    obstacles   [{id, class, shape, motion, rating_override, extra_shapes}]
    boundaries  same entry schema as obstacles; road-edge structures such as
                building fronts, kept separate from the scene objects

Unknown keys are rejected anywhere.  Missing optional keys take the
documented defaults; in particular an omitted ``shape`` falls back to the
object-class footprint defaults below.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional

from .errors import ScenarioFormatError, ScenarioValidationError
from .ocp import OcpSpec
from .severity import Obstacle, ObstacleMotion, ShapeComponent, ShapeKind, ShapeParams
from .vehicle import VehicleParams, VehicleState

OBJECT_CLASSES = ("pedestrian", "car", "bus", "bus_station", "building")

RATING_SETTINGS = {
    "1": {"pedestrian": 40.0, "bus": 30.0, "car": 20.0, "bus_station": 10.0, "building": 10.0},
    "2": {"pedestrian": 200.0, "bus": 30.0, "car": 20.0, "bus_station": 10.0, "building": 10.0},
}

# Fallback footprints per object class (half extents in meters, fuzzy margin
# in normalized units).  Buildings vary too much for a default and must give
# an explicit shape.
DEFAULT_FOOTPRINTS = {
    "car": ("rectangle", 2.25, 0.9, 0.5),
    "bus": ("rectangle", 6.0, 1.25, 0.5),
    "pedestrian": ("circle", 0.3, 0.3, 0.5),
    "bus_station": ("rectangle", 2.0, 1.0, 0.5),
}

DEFAULT_VEHICLE = VehicleParams(wheelbase_L=2.7, steering_lag_dT=0.2)

BUILTIN_NAMES = ("scenario1", "scenario2", "scenario2-cond2")


@dataclass(frozen=True)
class RatingTable:
    """Object-class severity ratings for the two named settings."""

    setting_1: dict = field(default_factory=lambda: dict(RATING_SETTINGS["1"]))
    setting_2: dict = field(default_factory=lambda: dict(RATING_SETTINGS["2"]))

    def values(self, setting: str) -> dict:
        table = {"1": self.setting_1, "2": self.setting_2}.get(str(setting))
        if table is None:
            raise ScenarioValidationError(f"unknown rating setting {setting!r}")
        return dict(table)

    def validate(self):
        for name, tab in (("1", self.setting_1), ("2", self.setting_2)):
            if set(tab) != set(OBJECT_CLASSES):
                raise ScenarioValidationError(f"rating setting {name} must rate every object class")
            if any(v < 0 for v in tab.values()):
                raise ScenarioValidationError(f"rating setting {name} has a negative rating")
            ordered = (
                tab["pedestrian"] >= tab["bus"] >= tab["car"]
                >= tab["bus_station"] == tab["building"]
            )
            if not ordered:
                raise ScenarioValidationError(
                    f"rating setting {name} must satisfy pedestrians >= buses >= cars"
                    " >= bus stations = buildings"
                )


@dataclass(frozen=True)
class ScenarioObject:
    """One rated scene entry (obstacle or road-boundary structure)."""

    id: str
    obj_class: str
    shape: ShapeParams
    motion: ObstacleMotion
    rating_override: Optional[float] = None
    extra_shapes: tuple[ShapeComponent, ...] = ()

    def rating(self, rating_values: dict) -> float:
        if self.rating_override is not None:
            return self.rating_override
        return rating_values[self.obj_class]

    def to_obstacle(self, rating_values: dict) -> Obstacle:
        return Obstacle(
            id=self.id,
            shape=self.shape,
            motion=self.motion,
            severity_C=self.rating(rating_values),
            extra_components=self.extra_shapes,
        )


@dataclass(frozen=True)
class Scenario:
    name: str
    ego: VehicleState
    vehicle: VehicleParams
    obstacles: tuple[ScenarioObject, ...]
    boundaries: tuple[ScenarioObject, ...] = ()
    t0: float = 0.0
    tf: float = 4.0
    num_intervals: int = 40
    substeps_per_interval: int = 4
    accel_bounds: tuple[float, float] = (-8.0, 3.0)
    steer_bounds: tuple[float, float] = (-0.5, 0.5)
    epsilon: Optional[float] = None
    rating_setting: str = "1"
    ratings: RatingTable = field(default_factory=RatingTable)

    def rating_values(self) -> dict:
        return self.ratings.values(self.rating_setting)

    def all_objects(self) -> tuple[ScenarioObject, ...]:
        return self.obstacles + self.boundaries

    def to_ocp_spec(self) -> OcpSpec:
        values = self.rating_values()
        return OcpSpec(
            initial_state=self.ego,
            vehicle=self.vehicle,
            obstacles=tuple(o.to_obstacle(values) for o in self.all_objects()),
            num_intervals=self.num_intervals,
            t0=self.t0,
            tf=self.tf,
            accel_bounds=self.accel_bounds,
            steer_bounds=self.steer_bounds,
            epsilon=self.epsilon,
            substeps_per_interval=self.substeps_per_interval,
            scenario_name=self.name,
        )

    def with_setting(self, setting: str) -> "Scenario":
        if str(setting) not in ("1", "2"):
            raise ScenarioValidationError(f"unknown rating setting {setting!r}")
        return replace(self, rating_setting=str(setting))


def _strip_comments(text: str) -> str:
    """Drop # comments (outside of double-quoted strings) from every line."""
    out_lines = []
    for line in text.splitlines():
        in_string = False
        escaped = False
        cut = len(line)
        for i, ch in enumerate(line):
            if escaped:
                escaped = False
                continue
            if ch == "\\" and in_string:
                escaped = True
            elif ch == '"':
                in_string = not in_string
            elif ch == "#" and not in_string:
                cut = i
                break
        out_lines.append(line[:cut])
    return "\n".join(out_lines)


def _take(mapping, context: str, known: dict) -> dict:
    """Extract known keys with defaults; reject anything else."""
    if not isinstance(mapping, dict):
        raise ScenarioFormatError(f"{context} must be a JSON object, got {type(mapping).__name__}")
    unknown = set(mapping) - set(known)
    if unknown:
        raise ScenarioFormatError(f"unknown key(s) {sorted(unknown)} in {context}")
    return {k: mapping.get(k, default) for k, default in known.items()}


_MISSING = object()


def _number(value, context: str, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioFormatError(f"{context} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise ScenarioFormatError(f"{context} must be finite, got {value!r}")
    return float(value)


def _pair(value, context: str):
    if not (isinstance(value, list) and len(value) == 2):
        raise ScenarioFormatError(f"{context} must be a [min, max] pair")
    return (_number(value[0], context + "[0]"), _number(value[1], context + "[1]"))


def _parse_shape(raw, context: str, obj_class: str) -> ShapeParams:
    if raw is _MISSING:
        default = DEFAULT_FOOTPRINTS.get(obj_class)
        if default is None:
            raise ScenarioValidationError(
                f"{context}: class {obj_class!r} has no default footprint; give a shape"
            )
        kind, a, b, d = default
        return ShapeParams(ShapeKind(kind), a, b, d)
    vals = _take(raw, context, {"kind": _MISSING, "a": _MISSING, "b": _MISSING, "d": 0.5})
    if vals["kind"] not in ("circle", "rectangle"):
        raise ScenarioFormatError(f"{context}: kind must be 'circle' or 'rectangle'")
    try:
        return ShapeParams(
            ShapeKind(vals["kind"]),
            _number(vals["a"], context + ".a"),
            _number(vals["b"], context + ".b"),
            _number(vals["d"], context + ".d"),
        )
    except ValueError as exc:
        raise ScenarioValidationError(f"{context}: {exc}") from exc


def _parse_object(raw, context: str) -> ScenarioObject:
    vals = _take(
        raw,
        context,
        {
            "id": _MISSING,
            "class": _MISSING,
            "shape": _MISSING,
            "motion": _MISSING,
            "rating_override": None,
            "extra_shapes": [],
        },
    )
    if vals["id"] is _MISSING or not isinstance(vals["id"], str) or not vals["id"]:
        raise ScenarioFormatError(f"{context}: every entry needs a nonempty string id")
    oid = vals["id"]
    if vals["class"] not in OBJECT_CLASSES:
        raise ScenarioFormatError(
            f"{context} ({oid}): class must be one of {OBJECT_CLASSES}, got {vals['class']!r}"
        )
    obj_class = vals["class"]
    shape = _parse_shape(vals["shape"], f"{context}.shape", obj_class)
    if vals["motion"] is _MISSING:
        raise ScenarioFormatError(f"{context} ({oid}): motion is required")
    mv = _take(
        vals["motion"],
        f"{context}.motion",
        {"x0": _MISSING, "y0": _MISSING, "heading0": 0.0, "speed": 0.0, "travel_heading": 0.0},
    )
    if mv["x0"] is _MISSING or mv["y0"] is _MISSING:
        raise ScenarioFormatError(f"{context} ({oid}): motion needs x0 and y0")
    try:
        motion = ObstacleMotion(
            center_x0=_number(mv["x0"], "x0"),
            center_y0=_number(mv["y0"], "y0"),
            heading0=_number(mv["heading0"], "heading0"),
            speed=_number(mv["speed"], "speed"),
            heading_of_travel=_number(mv["travel_heading"], "travel_heading"),
        )
    except ValueError as exc:
        raise ScenarioValidationError(f"{context} ({oid}): {exc}") from exc
    override = _number(vals["rating_override"], f"{context}.rating_override", allow_none=True)
    if override is not None and override < 0:
        raise ScenarioValidationError(f"{context} ({oid}): rating_override must be >= 0")
    extras = []
    for j, er in enumerate(vals["extra_shapes"]):
        ev = _take(
            er,
            f"{context}.extra_shapes[{j}]",
            {"kind": _MISSING, "a": _MISSING, "b": _MISSING, "d": 0.5, "offset": [0.0, 0.0]},
        )
        shape_raw = {k: ev[k] for k in ("kind", "a", "b", "d")}
        params = _parse_shape(shape_raw, f"{context}.extra_shapes[{j}]", obj_class)
        off = _pair(ev["offset"], f"{context}.extra_shapes[{j}].offset")
        extras.append(ShapeComponent(params, off[0], off[1]))
    return ScenarioObject(
        id=oid,
        obj_class=obj_class,
        shape=shape,
        motion=motion,
        rating_override=override,
        extra_shapes=tuple(extras),
    )


def parse_scenario(text: str) -> Scenario:
    """Parse and fully validate a scenario document."""
    try:
        raw = json.loads(_strip_comments(text))
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"scenario is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ScenarioFormatError("scenario document must be a JSON object")
    vals = _take(
        raw,
        "scenario",
        {
            "name": _MISSING,
            "ego": _MISSING,
            "vehicle": {},
            "ocp": {},
            "ratings": {},
            "obstacles": _MISSING,
            "boundaries": [],
        },
    )
    if vals["name"] is _MISSING or not isinstance(vals["name"], str):
        raise ScenarioFormatError("scenario needs a string name")
    if vals["ego"] is _MISSING:
        raise ScenarioFormatError("scenario needs an ego block")
    ev = _take(
        vals["ego"],
        "ego",
        {"x": _MISSING, "y": _MISSING, "heading": _MISSING, "speed": _MISSING, "steering": 0.0},
    )
    for k in ("x", "y", "heading", "speed"):
        if ev[k] is _MISSING:
            raise ScenarioFormatError(f"ego needs {k}")
    try:
        ego = VehicleState(
            x=_number(ev["x"], "ego.x"),
            y=_number(ev["y"], "ego.y"),
            phi=_number(ev["heading"], "ego.heading"),
            v=_number(ev["speed"], "ego.speed"),
            delta=_number(ev["steering"], "ego.steering"),
        )
    except ValueError as exc:
        raise ScenarioValidationError(f"ego: {exc}") from exc

    vv = _take(
        vals["vehicle"],
        "vehicle",
        {"wheelbase": DEFAULT_VEHICLE.wheelbase_L, "steering_lag": DEFAULT_VEHICLE.steering_lag_dT},
    )
    try:
        vehicle = VehicleParams(
            wheelbase_L=_number(vv["wheelbase"], "vehicle.wheelbase"),
            steering_lag_dT=_number(vv["steering_lag"], "vehicle.steering_lag"),
        )
    except ValueError as exc:
        raise ScenarioValidationError(f"vehicle: {exc}") from exc

    ov = _take(
        vals["ocp"],
        "ocp",
        {
            "t0": 0.0,
            "tf": 4.0,
            "num_intervals": 40,
            "substeps_per_interval": 4,
            "accel_bounds": [-8.0, 3.0],
            "steer_bounds": [-0.5, 0.5],
            "epsilon": None,
        },
    )
    num_intervals = ov["num_intervals"]
    substeps = ov["substeps_per_interval"]
    if not isinstance(num_intervals, int) or isinstance(num_intervals, bool):
        raise ScenarioFormatError("ocp.num_intervals must be an integer")
    if not isinstance(substeps, int) or isinstance(substeps, bool):
        raise ScenarioFormatError("ocp.substeps_per_interval must be an integer")
    epsilon = _number(ov["epsilon"], "ocp.epsilon", allow_none=True)
    if epsilon is not None and epsilon < 0:
        raise ScenarioValidationError("ocp.epsilon must be >= 0")

    rv = _take(vals["ratings"], "ratings", {"setting": "1", "values": {}})
    setting = str(rv["setting"])
    if setting not in ("1", "2"):
        raise ScenarioValidationError(f"ratings.setting must be '1' or '2', got {rv['setting']!r}")
    overrides = rv["values"]
    if not isinstance(overrides, dict):
        raise ScenarioFormatError("ratings.values must be an object")
    tables = {k: dict(RATING_SETTINGS[k]) for k in ("1", "2")}
    for cls, val in overrides.items():
        if cls not in OBJECT_CLASSES:
            raise ScenarioFormatError(f"ratings.values: unknown object class {cls!r}")
        tables[setting][cls] = _number(val, f"ratings.values.{cls}")
    ratings = RatingTable(setting_1=tables["1"], setting_2=tables["2"])
    ratings.validate()

    if vals["obstacles"] is _MISSING or not isinstance(vals["obstacles"], list):
        raise ScenarioFormatError("scenario needs an obstacles list")
    obstacles = tuple(
        _parse_object(o, f"obstacles[{i}]") for i, o in enumerate(vals["obstacles"])
    )
    boundaries = tuple(
        _parse_object(o, f"boundaries[{i}]") for i, o in enumerate(vals["boundaries"])
    )
    ids = [o.id for o in obstacles + boundaries]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ScenarioValidationError(f"duplicate object id(s): {dupes}")

    scenario = Scenario(
        name=vals["name"],
        ego=ego,
        vehicle=vehicle,
        obstacles=obstacles,
        boundaries=boundaries,
        t0=_number(ov["t0"], "ocp.t0"),
        tf=_number(ov["tf"], "ocp.tf"),
        num_intervals=num_intervals,
        substeps_per_interval=substeps,
        accel_bounds=_pair(ov["accel_bounds"], "ocp.accel_bounds"),
        steer_bounds=_pair(ov["steer_bounds"], "ocp.steer_bounds"),
        epsilon=epsilon,
        rating_setting=setting,
        ratings=ratings,
    )
    # Surface OcpSpec-level invariant violations as validation errors now.
    try:
        scenario.to_ocp_spec()
    except ValueError as exc:
        raise ScenarioValidationError(str(exc)) from exc
    return scenario


def _shape_dict(params: ShapeParams) -> dict:
    return {
        "kind": params.kind.value,
        "a": params.half_length_a,
        "b": params.half_width_b,
        "d": params.fuzzy_d,
    }


def _object_dict(obj: ScenarioObject) -> dict:
    out = {
        "id": obj.id,
        "class": obj.obj_class,
        "shape": _shape_dict(obj.shape),
        "motion": {
            "x0": obj.motion.center_x0,
            "y0": obj.motion.center_y0,
            "heading0": obj.motion.heading0,
            "speed": obj.motion.speed,
            "travel_heading": obj.motion.heading_of_travel,
        },
    }
    if obj.rating_override is not None:
        out["rating_override"] = obj.rating_override
    if obj.extra_shapes:
        out["extra_shapes"] = [
            dict(_shape_dict(c.params), offset=[c.offset_x, c.offset_y])
            for c in obj.extra_shapes
        ]
    return out


def serialize_scenario(scenario: Scenario) -> str:
    """Canonical JSON form; parse(serialize(s)) == s."""
    doc = {
        "name": scenario.name,
        "ego": {
            "x": scenario.ego.x,
            "y": scenario.ego.y,
            "heading": scenario.ego.phi,
            "speed": scenario.ego.v,
            "steering": scenario.ego.delta,
        },
        "vehicle": {
            "wheelbase": scenario.vehicle.wheelbase_L,
            "steering_lag": scenario.vehicle.steering_lag_dT,
        },
        "ocp": {
            "t0": scenario.t0,
            "tf": scenario.tf,
            "num_intervals": scenario.num_intervals,
            "substeps_per_interval": scenario.substeps_per_interval,
            "accel_bounds": list(scenario.accel_bounds),
            "steer_bounds": list(scenario.steer_bounds),
            "epsilon": scenario.epsilon,
        },
        "ratings": {
            "setting": scenario.rating_setting,
            "values": {
                cls: scenario.ratings.values(scenario.rating_setting)[cls]
                for cls in OBJECT_CLASSES
            },
        },
        "obstacles": [_object_dict(o) for o in scenario.obstacles],
        "boundaries": [_object_dict(o) for o in scenario.boundaries],
    }
    return json.dumps(doc, indent=2) + "\n"


def load_builtin(name: str) -> Scenario:
    """Load one of the built-in scenario files by CLI name."""
    if name not in BUILTIN_NAMES:
        raise ScenarioFormatError(
            f"unknown builtin {name!r}; choose from {', '.join(BUILTIN_NAMES)}"
        )
    from importlib.resources import files

    fname = name.replace("-", "_") + ".json"
    text = files("sevplan.scenarios").joinpath(fname).read_text()
    return parse_scenario(text)
