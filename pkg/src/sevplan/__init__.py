"""Severity-aware trajectory planning for a kinematic vehicle.

The library plans minimum-collision-severity paths among static and moving
obstacles by solving a two-level optimal control problem with direct
shooting: first minimize the integrated squared collision severity, then
minimize steering effort subject to a severity budget.
"""

from .errors import (
    DomainError,
    GridMismatchError,
    ScenarioFormatError,
    ScenarioValidationError,
    SingularityError,
    SolverInputError,
)
from .severity import (
    FieldSet,
    Obstacle,
    ObstacleMotion,
    ShapeKind,
    ShapeParams,
    scaled_shape,
    severity,
    severity_gradient,
    severity_rate,
    to_obstacle_frame,
    unit_circle_shape,
    unit_rect_shape,
    write_severity_grid,
)
from .vehicle import (
    ControlSample,
    Trajectory,
    VehicleParams,
    VehicleState,
    dynamics,
    rk4_step,
    simulate,
)
from .solver import (
    KktReport,
    NlpProblem,
    SolverConfig,
    SolverResult,
    SolverStatus,
    check_kkt,
    minimize,
)
from .ocp import (
    CostedTrajectory,
    ObjectiveReport,
    OcpSpec,
    SolveOptions,
    SolveReport,
    eval_J1,
    eval_J2,
    objective_report,
    rollout,
    severity_series,
    solve_ocp1,
    solve_ocp2,
    two_level_solve,
)
from .scenario import (
    RatingTable,
    Scenario,
    ScenarioObject,
    load_builtin,
    parse_scenario,
    serialize_scenario,
)
from .runner import RunArtifacts, compare, run

__version__ = "0.1.0"
