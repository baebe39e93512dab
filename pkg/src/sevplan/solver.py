"""Small dense NLP solver: bounds, inequality constraints, FD gradients.

The method is an augmented-Lagrangian outer loop over the inequality
constraints (feasible iff g_i(x) <= 0) around a projected quasi-Newton
(BFGS) inner loop with backtracking line search.  Bound feasibility is exact
at every iterate via projection.  Gradients are central finite differences;
problems may supply batched evaluators so all FD perturbations of one
gradient are computed in a single vectorized call.

Everything is deterministic: identical problems and configs replay the
identical iterate sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import nnls

from .errors import SolverInputError


@dataclass
class NlpProblem:
    """Minimize objective(x) s.t. g_i(x) <= 0 and lower <= x <= upper.

    ``objective_batch`` / ``constraints_batch``, when given, map an (m, n)
    matrix of points to an (m,) vector / (m, k) matrix and must agree with
    the scalar callables row by row.
    """

    dimension: int
    objective: Callable[[np.ndarray], float]
    lower: np.ndarray
    upper: np.ndarray
    inequality_constraints: Sequence[Callable[[np.ndarray], float]] = ()
    objective_batch: Optional[Callable[[np.ndarray], np.ndarray]] = None
    constraints_batch: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != (self.dimension,) or self.upper.shape != (self.dimension,):
            raise SolverInputError("bound arrays must have shape (dimension,)")
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise SolverInputError("bounds must be finite")
        if np.any(self.lower > self.upper):
            raise SolverInputError("need lower <= upper for every coordinate")


@dataclass
class SolverConfig:
    max_outer_iterations: int = 20
    max_inner_iterations: int = 200
    optimality_tolerance: float = 1e-6
    constraint_tolerance: float = 1e-6
    fd_step: float = 1e-6
    penalty_initial: float = 10.0
    penalty_growth: float = 10.0
    trace_csv: Optional[str] = None
    progress_every: int = 0  # print f/pg every N inner iterations (debug)

    def __post_init__(self):
        if min(
            self.max_outer_iterations,
            self.max_inner_iterations,
        ) <= 0 or min(
            self.optimality_tolerance,
            self.constraint_tolerance,
            self.fd_step,
            self.penalty_initial,
        ) <= 0:
            raise SolverInputError("solver config values must be positive")
        if self.penalty_growth <= 1:
            raise SolverInputError("penalty_growth must exceed 1")


class SolverStatus(str, Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    STALLED = "stalled"


@dataclass
class SolverResult:
    x_best: np.ndarray
    objective_value: float
    max_constraint_violation: float
    status: SolverStatus
    iterations: int
    function_evaluations: int
    outer_iterations: int = 0
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    projected_gradient_norm: float = math.inf
    complementarity: float = 0.0
    outer_violations: list = field(default_factory=list)
    message: str = ""


@dataclass
class KktReport:
    projected_gradient_norm: float
    max_violation: float
    complementarity: float
    multipliers: np.ndarray


class _Evaluator:
    """Counts evaluations and hides the batched/scalar split."""

    def __init__(self, problem: NlpProblem):
        self.p = problem
        self.m = len(problem.inequality_constraints)
        self.count = 0

    def rows(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        X = np.atleast_2d(X)
        self.count += X.shape[0]
        if self.p.objective_batch is not None:
            f = np.asarray(self.p.objective_batch(X), dtype=float)
        else:
            f = np.array([self.p.objective(row) for row in X], dtype=float)
        if self.m == 0:
            g = np.zeros((X.shape[0], 0))
        elif self.p.constraints_batch is not None:
            g = np.atleast_2d(np.asarray(self.p.constraints_batch(X), dtype=float))
        else:
            g = np.array(
                [[gi(row) for gi in self.p.inequality_constraints] for row in X],
                dtype=float,
            )
        return f, g

    def point(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        f, g = self.rows(x[None, :])
        return float(f[0]), g[0]


def _merit(f, g, lam, rho):
    """Augmented Lagrangian for inequalities (Powell-Hestenes-Rockafellar)."""
    if g.shape[-1] == 0:
        return f
    t = np.maximum(0.0, lam + rho * g)
    return f + np.sum(t * t - lam * lam, axis=-1) / (2.0 * rho)


def _violation(g: np.ndarray) -> float:
    if g.size == 0:
        return 0.0
    return float(max(0.0, np.max(g)))


class _BestTracker:
    """Keeps the best feasible accepted iterate, plus a min-violation fallback."""

    def __init__(self, ctol: float):
        self.ctol = ctol
        self.feasible_x = None
        self.feasible_f = math.inf
        self.fallback_x = None
        self.fallback_viol = math.inf
        self.fallback_f = math.inf

    def accept(self, x, f, viol):
        if viol <= self.ctol and f < self.feasible_f:
            self.feasible_f = f
            self.feasible_x = x.copy()
        if (viol, f) < (self.fallback_viol, self.fallback_f):
            self.fallback_viol = viol
            self.fallback_f = f
            self.fallback_x = x.copy()


def _fd_gradient(merit_rows, x, free, fd_step, value=None, curvature_out=None):
    """Central-difference gradient over the free coordinates (others get 0).

    When ``value`` (the merit at x) and ``curvature_out`` are given, the same
    evaluations also yield the diagonal second differences, written into
    ``curvature_out`` for free coordinates.
    """
    n = x.size
    idx = np.flatnonzero(free)
    if idx.size == 0:
        return np.zeros(n)
    h = fd_step * (1.0 + np.abs(x[idx]))
    X = np.repeat(x[None, :], 2 * idx.size, axis=0)
    X[np.arange(idx.size), idx] += h
    X[idx.size + np.arange(idx.size), idx] -= h
    vals = merit_rows(X)
    grad = np.zeros(n)
    grad[idx] = (vals[: idx.size] - vals[idx.size :]) / (2.0 * h)
    if value is not None and curvature_out is not None:
        curvature_out[idx] = (vals[: idx.size] - 2.0 * value + vals[idx.size :]) / (h * h)
    return grad


_LADDER = 0.5 ** np.arange(40)  # backtracking step sizes, evaluated in one batch


class _Quasi:
    """Inverse-Hessian BFGS state, kept across augmented-Lagrangian outers."""

    def __init__(self, n):
        self.n = n
        self.H = np.eye(n)
        self.scaled = False

    def reset(self):
        self.H = np.eye(self.n)
        self.scaled = False

    def seed_diagonal(self, curvature):
        """Initialize H from FD diagonal curvature (badly scaled problems)."""
        pos = curvature[curvature > 0]
        fallback = 1.0 / np.median(pos) if pos.size else 1.0
        diag = np.where(curvature > 0, 1.0 / np.maximum(curvature, 1e-300), fallback)
        self.H = np.diag(np.clip(diag, 1e-12, 1e12))
        self.scaled = True

    def direction(self, grad):
        return -(self.H @ grad)

    def update(self, s, yv):
        sy = float(s @ yv)
        if sy <= 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(yv) + 1e-300):
            return
        if not self.scaled:
            self.H = (sy / float(yv @ yv)) * np.eye(self.n)
            self.scaled = True
        Hy = self.H @ yv
        r = 1.0 / sy
        self.H += (r * r * float(yv @ Hy) + r) * np.outer(s, s)
        self.H -= r * (np.outer(s, Hy) + np.outer(Hy, s))


def _inner_minimize(ev, x, f, g, lam, rho, lb, ub, tol, max_iter, cfg, tracker, trace, quasi):
    """Projected BFGS descent on the current augmented-Lagrangian merit.

    The whole backtracking ladder is evaluated in a single batched call; the
    accepted step is exactly the one sequential backtracking would pick.
    Returns (x, f, g, iterations, converged, stalled, pg_norm).
    """
    free = ub > lb
    merit_rows = lambda X: _merit(*ev.rows(X), lam, rho)
    merit = float(_merit(f, g, lam, rho))
    curvature = np.zeros(x.size)
    grad = _fd_gradient(merit_rows, x, free, cfg.fd_step, value=merit, curvature_out=curvature)
    if not quasi.scaled:
        quasi.seed_diagonal(curvature)
    n = x.size
    # Largest per-coordinate move allowed in one step: a raw steepest-descent
    # step on a badly scaled objective can otherwise jump across the scene.
    step_cap = 0.1 * float(np.max(ub - lb)) if np.any(free) else 1.0
    it = 0
    while it < max_iter:
        pg = float(np.max(np.abs(x - np.clip(x - grad, lb, ub)))) if n else 0.0
        if pg <= tol:
            return x, f, g, it, True, False, pg
        accepted = False
        for d in (quasi.direction(grad), -grad):
            dmax = float(np.max(np.abs(d)))
            if dmax == 0.0:
                continue
            alpha0 = min(1.0, step_cap / dmax)
            X = np.clip(x[None, :] + (alpha0 * _LADDER)[:, None] * d[None, :], lb, ub)
            S = X - x[None, :]
            moved = np.max(np.abs(S), axis=1) > 0.0
            if not np.any(moved):
                continue
            fK, gK = ev.rows(X[moved])
            meritK = _merit(fK, gK, lam, rho)
            refK = merit + 1e-4 * np.minimum(0.0, S[moved] @ grad)
            ok = np.isfinite(meritK) & (meritK < refK)
            if np.any(ok):
                j = int(np.argmax(ok))
                row = int(np.flatnonzero(moved)[j])
                x_t = X[row]
                f_t = float(fK[j])
                g_t = gK[j]
                merit_t = float(meritK[j])
                accepted = True
                break
        if not accepted:
            pg = float(np.max(np.abs(x - np.clip(x - grad, lb, ub))))
            return x, f, g, it, False, True, pg
        grad_t = _fd_gradient(merit_rows, x_t, free, cfg.fd_step)
        s = x_t - x
        quasi.update(s, grad_t - grad)
        x, f, g, merit, grad = x_t, f_t, g_t, merit_t, grad_t
        it += 1
        viol = _violation(g)
        if cfg.progress_every and it % cfg.progress_every == 0:
            pgv = float(np.max(np.abs(x - np.clip(x - grad, lb, ub))))
            print(f"      it={it} f={f:.6g} merit={merit:.6g} pg={pgv:.3g} viol={viol:.3g}", flush=True)
        tracker.accept(x, f, viol)
        if trace is not None:
            trace.write(
                f"{trace.iteration},{f:.17g},{viol:.17g},{float(np.linalg.norm(s)):.17g}\n"
            )
            trace.iteration += 1
    pg = float(np.max(np.abs(x - np.clip(x - grad, lb, ub))))
    return x, f, g, it, False, False, pg


class _Trace:
    def __init__(self, path):
        self.fh = open(path, "w")
        self.fh.write("iteration,objective,violation,step_norm\n")
        self.iteration = 0

    def write(self, row):
        self.fh.write(row)

    def close(self):
        self.fh.close()


def minimize(problem: NlpProblem, x0, config: Optional[SolverConfig] = None) -> SolverResult:
    """Minimize the problem from x0 (projected into the bounds first).

    Unconstrained problems get a single projected-BFGS solve; problems with
    inequality constraints run the augmented-Lagrangian outer loop with
    multiplier updates lam <- max(0, lam + rho * g) and penalty growth when
    the violation does not shrink fast enough.  The returned point is the
    best feasible accepted iterate (falling back to the least-violating one),
    and ``status == CONVERGED`` is asserted only after :func:`check_kkt`
    re-verifies stationarity and feasibility at that point.
    """
    cfg = config or SolverConfig()
    ev = _Evaluator(problem)
    lb, ub = problem.lower, problem.upper
    x = np.clip(np.asarray(x0, dtype=float), lb, ub)
    if x.shape != (problem.dimension,):
        raise SolverInputError(f"x0 must have shape ({problem.dimension},)")
    f, g = ev.point(x)
    if not math.isfinite(f):
        raise SolverInputError(f"objective is not finite at the start point ({f})")

    m = ev.m
    lam = np.zeros(m)
    rho = cfg.penalty_initial
    tracker = _BestTracker(cfg.constraint_tolerance)
    tracker.accept(x, f, _violation(g))
    trace = _Trace(cfg.trace_csv) if cfg.trace_csv else None

    total_inner = 0
    outer_violations = []
    exit_reason = SolverStatus.MAX_ITERATIONS
    prev_viol = math.inf
    stall_streak = 0
    quasi = _Quasi(problem.dimension)
    try:
        if m == 0:
            x, f, g, it, converged, stalled, pg = _inner_minimize(
                ev, x, f, g, lam, rho, lb, ub,
                cfg.optimality_tolerance, cfg.max_inner_iterations, cfg, tracker, trace, quasi,
            )
            total_inner = it
            outer_count = 1
            outer_violations.append(0.0)
            exit_reason = (
                SolverStatus.CONVERGED if converged
                else SolverStatus.STALLED if stalled
                else SolverStatus.MAX_ITERATIONS
            )
        else:
            outer_count = 0
            prev_f = math.inf
            for outer in range(cfg.max_outer_iterations):
                outer_count += 1
                inner_tol = max(cfg.optimality_tolerance, 1e-4 * 0.1 ** outer)
                x, f, g, it, converged, stalled, pg = _inner_minimize(
                    ev, x, f, g, lam, rho, lb, ub,
                    inner_tol, cfg.max_inner_iterations, cfg, tracker, trace, quasi,
                )
                total_inner += it
                viol = _violation(g)
                outer_violations.append(viol)
                lam = np.maximum(0.0, lam + rho * g)
                if viol <= cfg.constraint_tolerance and converged and inner_tol <= cfg.optimality_tolerance:
                    exit_reason = SolverStatus.CONVERGED
                    break
                stall_streak = stall_streak + 1 if stalled else 0
                if stall_streak >= 2:
                    exit_reason = SolverStatus.STALLED
                    break
                # Feasible but no objective progress across outers: more
                # multiplier updates cannot help, stop honestly.
                if viol <= cfg.constraint_tolerance and abs(f - prev_f) <= 1e-10 * (1 + abs(f)):
                    exit_reason = SolverStatus.STALLED
                    break
                prev_f = f
                if viol > 0.25 * prev_viol and viol > cfg.constraint_tolerance:
                    rho *= cfg.penalty_growth
                    # the penalty part of the merit curvature just jumped
                    quasi.reset()
                prev_viol = viol
    finally:
        if trace is not None:
            trace.close()

    # Candidate: prefer the final iterate when it is feasible and not worse,
    # otherwise the best feasible accepted iterate, otherwise least violation.
    final_viol = _violation(g)
    if tracker.feasible_x is not None:
        if final_viol <= cfg.constraint_tolerance and f <= tracker.feasible_f + 1e-12 * (1 + abs(f)):
            x_ret, f_ret, viol_ret = x, f, final_viol
        else:
            x_ret, f_ret, viol_ret = tracker.feasible_x, tracker.feasible_f, 0.0
            _, g_ret = ev.point(x_ret)
            viol_ret = _violation(g_ret)
    else:
        x_ret, viol_ret = tracker.fallback_x, tracker.fallback_viol
        f_ret = tracker.fallback_f

    kkt = check_kkt(problem, x_ret, cfg, multipliers=lam, _evaluator=ev)
    if (
        kkt.projected_gradient_norm <= cfg.optimality_tolerance
        and kkt.max_violation <= cfg.constraint_tolerance
    ):
        status = SolverStatus.CONVERGED
        message = "KKT verified at returned point"
    else:
        status = exit_reason if exit_reason is not SolverStatus.CONVERGED else SolverStatus.STALLED
        message = (
            f"KKT not verified (pg={kkt.projected_gradient_norm:.3e}, "
            f"viol={kkt.max_violation:.3e})"
        )

    return SolverResult(
        x_best=x_ret,
        objective_value=f_ret,
        max_constraint_violation=viol_ret,
        status=status,
        iterations=total_inner,
        function_evaluations=ev.count,
        outer_iterations=outer_count,
        multipliers=lam,
        projected_gradient_norm=kkt.projected_gradient_norm,
        complementarity=kkt.complementarity,
        outer_violations=outer_violations,
        message=message,
    )


def check_kkt(
    problem: NlpProblem,
    x,
    config: Optional[SolverConfig] = None,
    multipliers: Optional[np.ndarray] = None,
    _evaluator: Optional[_Evaluator] = None,
) -> KktReport:
    """FD-based stationarity report at a point inside the bounds.

    Reports the projected gradient norm of the Lagrangian, the maximum
    constraint violation, and the complementarity residual max |lam_i g_i|.
    When multipliers are not supplied they are estimated by nonnegative least
    squares on the free coordinates.
    """
    cfg = config or SolverConfig()
    ev = _evaluator or _Evaluator(problem)
    lb, ub = problem.lower, problem.upper
    x = np.asarray(x, dtype=float)
    free = ub > lb
    _, gvals = ev.point(x)
    m = gvals.size

    def obj_rows(X):
        f, _ = ev.rows(X)
        return f

    gf = _fd_gradient(obj_rows, x, free, cfg.fd_step)

    grads = np.zeros((m, x.size))
    for i in range(m):
        def one_rows(X, i=i):
            _, G = ev.rows(X)
            return G[:, i]

        grads[i] = _fd_gradient(one_rows, x, free, cfg.fd_step)

    if multipliers is None:
        if m == 0:
            lam = np.zeros(0)
        else:
            interior = free & (x > lb + 1e-9 * (1 + np.abs(lb))) & (x < ub - 1e-9 * (1 + np.abs(ub)))
            A = grads[:, interior].T
            if A.size == 0:
                lam = np.zeros(m)
            else:
                lam, _ = nnls(A, -gf[interior])
    else:
        lam = np.asarray(multipliers, dtype=float)

    gL = gf + (lam @ grads if m else 0.0)
    pg = float(np.max(np.abs(x - np.clip(x - gL, lb, ub)))) if x.size else 0.0
    viol = _violation(gvals)
    compl = float(np.max(np.abs(lam * gvals))) if m else 0.0
    return KktReport(
        projected_gradient_norm=pg,
        max_violation=viol,
        complementarity=compl,
        multipliers=lam,
    )
