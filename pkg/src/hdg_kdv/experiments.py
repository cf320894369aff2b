"""Experiment drivers: convergence studies, soliton runs and user-configured runs."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import local, problems, trace_system
from .flux import FluxSpec, StabilizationParams, TauFRule
from .mesh import build_uniform_mesh
from .stepper import (
    Discretization,
    NewtonSettings,
    ProblemSpec,
    RunResult,
    SolutionState,
    initial_state,
    integrate,
)
from .verify import ExperimentReport, LevelRecord, l2_error

log = logging.getLogger(__name__)

SCHEMES = {"midpoint": "midpoint", "be": "backward_euler", "backward_euler": "backward_euler"}

# finest-level entries (e_u, e_q, e_p) of the published tables, per k
TABLE_1 = {
    0: (1.07e-2, 1.03e-2, 1.85e-2),
    1: (5.44e-5, 4.80e-5, 3.06e-5),
    2: (8.86e-8, 8.73e-8, 1.90e-7),
    3: (2.55e-10, 2.32e-10, 5.68e-9),
}
TABLE_2 = {
    0: (7.11e-2, 1.59e-1, 3.71e-1),
    1: (1.98e-4, 3.67e-4, 7.92e-4),
    2: (7.74e-7, 1.44e-6, 3.10e-6),
    3: (2.33e-9, 4.36e-9, 1.03e-8),
}


@dataclass(frozen=True)
class DtRule:
    """Time-step rule: ``degree`` (0.1 h^2 for k <= 1, 0.1 h^3 otherwise), ``h2``, ``h3`` or ``fixed``."""

    kind: str = "degree"
    value: float = 0.1

    def __post_init__(self):
        if self.kind not in ("degree", "h2", "h3", "fixed"):
            raise ValueError(f"unknown dt rule {self.kind!r}")
        if not self.value > 0:
            raise ValueError("dt rule coefficient must be positive")

    def step(self, h: float, k: int) -> float:
        if self.kind == "fixed":
            return self.value
        power = {"h2": 2, "h3": 3}.get(self.kind, 2 if k <= 1 else 3)
        return self.value * h**power

    def describe(self) -> str:
        if self.kind == "degree":
            return f"{self.value:g}*h^2 (k<=1), {self.value:g}*h^3 (k>=2)"
        if self.kind == "fixed":
            return f"{self.value:g}"
        return f"{self.value:g}*h^{self.kind[1]}"


@dataclass
class RunConfig:
    experiment: str = "1"  # "1", "2", "soliton", "two_soliton" or "custom"
    k: int = 1
    levels: tuple = (1, 5)  # level n uses 2^n uniform elements
    N: Optional[int] = None  # element count for single runs
    dt_rule: DtRule = field(default_factory=DtRule)
    scheme: str = "midpoint"
    params: StabilizationParams = field(default_factory=StabilizationParams)
    T: float = 0.1
    out_dir: Optional[str] = None
    snapshot_every: Optional[int] = None
    init: str = "auto"
    newton: NewtonSettings = field(default_factory=NewtonSettings)
    problem: Optional[ProblemSpec] = None  # custom runs only
    n_q: Optional[int] = None

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 0:
            raise ValueError(f"k must be a non-negative integer, got {self.k}")
        if not self.T > 0:
            raise ValueError("final time T must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        n0, n1 = self.levels
        if n0 > n1 or n0 < 0:
            raise ValueError(f"invalid level range {n0}..{n1}")

    def metadata(self) -> dict:
        return {
            "experiment": self.experiment,
            "k": self.k,
            "tau": self.params.constants,
            "tau_F": self.params.tau_F_rule.describe(),
            "dt_rule": self.dt_rule.describe(),
            "scheme": SCHEMES[self.scheme],
            "T": self.T,
        }


def time_grid(T: float, dt: float) -> tuple[float, int]:
    """Largest step <= dt that divides T exactly, and the number of steps."""
    n = max(1, math.ceil(T / dt - 1e-9))
    return T / n, n


def run_convergence(problem: ProblemSpec, config: RunConfig) -> ExperimentReport:
    """Solve on levels n0..n1 (2^n elements each) and record errors and observed orders."""
    report = ExperimentReport(config.k, metadata=config.metadata())
    scheme = SCHEMES[config.scheme]
    n0, n1 = config.levels
    for n in range(n0, n1 + 1):
        mesh = build_uniform_mesh(problem.a, problem.b, 2**n)
        h = float(mesh.h)
        disc = Discretization(mesh, config.k, problem.flux, config.params, config.n_q)
        dt, steps = time_grid(config.T, config.dt_rule.step(h, config.k))
        state, trace = initial_state(problem, disc, config.newton, config.init)
        result = integrate(disc, problem, state, dt, steps, scheme, config.newton, snapshot_every=None)
        rec = _level_record(n, disc, problem, result, dt, config.T)
        rec.init_mode = trace.mode
        rec.newton_max = max(result.newton_iterations, default=0)
        rec.newton_min = min(result.newton_iterations, default=0)
        report.levels.append(rec)
        log.info("level %d: N=%d dt=%.3g e_u=%.3e", n, mesh.N, dt, rec.e_u)
    report.fill_orders()
    return report


def _level_record(n, disc, problem, result: RunResult, dt, T) -> LevelRecord:
    ex = problem.exact
    st = result.state
    e = [l2_error(getattr(st, f), getattr(ex, f), disc.mesh, disc.basis, T) for f in "uqp"]
    e_ut = None
    if result.previous_u is not None:
        # difference quotient, second-order accurate at the half step
        ut = (st.u - result.previous_u) / dt
        e_ut = l2_error(ut, ex.u_t, disc.mesh, disc.basis, T - 0.5 * dt)
    return LevelRecord(n, disc.N, float(disc.mesh.h), dt, *e, e_ut=e_ut)


def experiment_1_config(k: int, **kw) -> RunConfig:
    kw.setdefault("levels", (1, 5))
    return RunConfig(experiment="1", k=k, **kw)


def experiment_2_config(k: int, **kw) -> RunConfig:
    kw.setdefault("levels", (3, 7))
    kw.setdefault("params", StabilizationParams(tau_F_rule=TauFRule.constant(3.0)))
    return RunConfig(experiment="2", k=k, **kw)


def run_experiment_1(config: RunConfig) -> ExperimentReport:
    """Linear problem with u = sin(x + t) on (0, 1), errors at T."""
    return run_convergence(problems.experiment_1(), config)


def run_experiment_2(config: RunConfig) -> ExperimentReport:
    """Nonlinear problem F(u) = 3u^2 with u = sin(2x + t) on (0, pi), errors at T."""
    return run_convergence(problems.experiment_2(), config)


def trace_operator(problem: ProblemSpec, k: int, N: int, params=StabilizationParams(),
                   dt_eff: float = 1.0) -> trace_system.GlobalSystem:
    """Condensed trace matrix of one implicit stage, linearized at u = 0.

    With the default ``dt_eff = 1`` this is the operator of the stationary
    initialization solve; small ``dt_eff`` lets the mass term dominate.
    """
    mesh = build_uniform_mesh(problem.a, problem.b, N)
    disc = Discretization(mesh, k, problem.flux, params)
    zero = SolutionState.zeros(N, k + 1)
    blocks = local.element_jacobians(disc.h, disc.basis, disc.element_state(zero), params, problem.flux, dt_eff)
    E = np.zeros((N, 3 * (k + 1)))
    T = np.zeros((N, 4))
    cond = local.condense(local.LocalBlocks(*blocks, E, T))
    bc = {"u_D_left": 0.0, "u_D_right": 0.0, "q_N_right": 0.0}
    return trace_system.assemble_global(cond, bc, N, zero.uhat)


@dataclass
class ConditionStudy:
    hs: list
    conds: list
    slope: float  # least-squares slope of log(cond) against log(1/h)


def condition_study(problem: ProblemSpec, k: int, levels=(3, 6), params=StabilizationParams(),
                    dt_eff: float = 1.0) -> ConditionStudy:
    hs, conds = [], []
    for n in range(levels[0], levels[1] + 1):
        system = trace_operator(problem, k, 2**n, params, dt_eff)
        hs.append((problem.b - problem.a) / 2**n)
        conds.append(trace_system.condition_estimate(system))
    slope = float(np.polyfit(np.log(1.0 / np.asarray(hs)), np.log(conds), 1)[0])
    return ConditionStudy(hs, conds, slope)


@dataclass
class TemporalStudy:
    dts: list
    errors: list
    slope: float  # least-squares slope of log(e_u) against log(dt)


def temporal_study(problem: ProblemSpec, k: int, N: int, steps=(10, 20, 40, 80), scheme: str = "midpoint",
                   T: float = 0.1, params=StabilizationParams()) -> TemporalStudy:
    """Fixed mesh, successively halved time steps; errors of u at T against the exact solution."""
    mesh = build_uniform_mesh(problem.a, problem.b, N)
    disc = Discretization(mesh, k, problem.flux, params)
    start, _ = initial_state(problem, disc)
    dts, errs = [], []
    for m in steps:
        res = integrate(disc, problem, start.copy(), T / m, m, SCHEMES[scheme])
        dts.append(T / m)
        errs.append(l2_error(res.state.u, problem.exact.u, mesh, disc.basis, T))
    slope = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])
    return TemporalStudy(dts, errs, slope)


@dataclass
class SingleRun:
    """Outcome of one fixed-mesh run."""

    disc: Discretization
    problem: ProblemSpec
    result: RunResult
    errors: dict  # field -> absolute L2 error at the final time (empty without exact solution)
    relative_errors: dict
    init_mode: str
    config: RunConfig

    @property
    def snapshots(self):
        return self.result.snapshots


def run_single(problem: ProblemSpec, config: RunConfig) -> SingleRun:
    if config.N is None:
        raise ValueError("single runs need the element count N")
    mesh = build_uniform_mesh(problem.a, problem.b, config.N)
    disc = Discretization(mesh, config.k, problem.flux, config.params, config.n_q)
    dt, steps = time_grid(config.T, config.dt_rule.step(float(mesh.h), config.k))
    state, trace = initial_state(problem, disc, config.newton, config.init)
    result = integrate(
        disc, problem, state, dt, steps, SCHEMES[config.scheme], config.newton, config.snapshot_every
    )
    errors, rel = {}, {}
    if problem.exact is not None:
        for f in "uqp":
            ref = getattr(problem.exact, f)
            errors[f] = l2_error(getattr(result.state, f), ref, mesh, disc.basis, config.T)
            scale = l2_error(np.zeros_like(result.state.u), ref, mesh, disc.basis, config.T)
            rel[f] = errors[f] / scale if scale > 0 else errors[f]
    return SingleRun(disc, problem, result, errors, rel, trace.mode, config)


def soliton_config(**kw) -> RunConfig:
    kw.setdefault("N", 100)
    kw.setdefault("k", 3)
    kw.setdefault("dt_rule", DtRule("fixed", 1e-3))
    kw.setdefault("T", 2.0)
    kw.setdefault("params", StabilizationParams(tau_F_rule=TauFRule.derivative_squared_plus_quarter()))
    kw.setdefault("snapshot_every", 100)
    return RunConfig(experiment="soliton", **kw)


def two_soliton_config(**kw) -> RunConfig:
    kw.setdefault("N", 50)
    kw.setdefault("dt_rule", DtRule("fixed", 1e-4))
    kw.setdefault("snapshot_every", 500)
    return replace(soliton_config(**kw), experiment="two_soliton")


def run_experiment_3(config: RunConfig) -> SingleRun:
    """Single solitary wave 2 sech^2(x - 4t + 4) on (-10, 0)."""
    return run_single(problems.soliton(), config)


def run_experiment_4(config: RunConfig) -> SingleRun:
    """Two interacting solitary waves on (-20, 0)."""
    return run_single(problems.two_soliton(), config)


def run_custom(config: RunConfig):
    """Run a configured problem: a convergence study when N is unset, otherwise a single run."""
    if config.problem is None:
        raise ValueError("custom runs need a problem")
    if config.N is None:
        return run_convergence(config.problem, config)
    return run_single(config.problem, config)


# -- soliton diagnostics ---------------------------------------------------------


def peak_positions(disc: Discretization, u: np.ndarray, min_height: float = 0.5, n_plot: int = 8):
    """x-locations of the local maxima of u_h above ``min_height``, sorted by x."""
    # interior points only: endpoint samples duplicate x with discontinuous values
    pts = np.linspace(-1.0, 1.0, n_plot + 2)[1:-1]
    x, v = disc.sample(u, pts)
    x, v = x.ravel(), v.ravel()
    order = np.argsort(x, kind="stable")
    x, v = x[order], v[order]
    inner = (v[1:-1] >= v[:-2]) & (v[1:-1] > v[2:]) & (v[1:-1] > min_height)
    idx = np.flatnonzero(inner) + 1
    return x[idx], v[idx]


@dataclass
class InteractionSummary:
    times: list
    separations: list  # x(tall peak) - x(short peak); NaN when only one peak is visible
    single_peak_times: list
    tall_behind_at_start: bool
    tall_ahead_later: bool
    overlap_time: Optional[float]

    @property
    def crossing_detected(self) -> bool:
        return self.tall_behind_at_start and self.tall_ahead_later and self.overlap_time is not None


def interaction_summary(disc: Discretization, snapshots) -> InteractionSummary:
    """Track the two largest peaks through the snapshots and locate the overlap.

    The faster wave starts as the taller one behind the slower wave. During
    the interaction the humps exchange amplitude, so the taller peak jumps
    from the rear hump to the front one; the overlap time is the linear
    interpolant of the sign change of (x_tall - x_short), or the middle of the
    stretch in which only one hump is visible.
    """
    times, seps, singles = [], [], []
    for t, st in snapshots:
        xs, vs = peak_positions(disc, st.u)
        times.append(t)
        if len(xs) >= 2:
            top = np.argsort(vs)[-2:]
            tall, short = top[1], top[0]
            seps.append(float(xs[tall] - xs[short]))
        else:
            seps.append(float("nan"))
            if len(xs) == 1:
                singles.append(t)
    finite = [(t, s) for t, s in zip(times, seps) if np.isfinite(s)]
    behind = bool(finite) and finite[0][1] < 0
    ahead = any(s > 0 for _, s in finite)
    overlap = None
    for (t0, s0), (t1, s1) in zip(finite, finite[1:]):
        if s0 < 0 <= s1:
            overlap = t0 + (t1 - t0) * (-s0) / (s1 - s0)
            break
    if overlap is None and finite:
        # merged humps: single-peak snapshots between two-peak ones (not a wave leaving the window)
        inside = [t for t in singles if finite[0][0] < t < finite[-1][0]]
        if inside:
            overlap = 0.5 * (inside[0] + inside[-1])
    return InteractionSummary(times, seps, singles, behind, ahead, overlap)
