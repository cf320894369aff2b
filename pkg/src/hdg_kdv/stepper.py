"""Newton iteration, implicit time stepping and initialization of the discrete solution."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import local, trace_system
from .flux import FluxSpec, StabilizationParams, flux_value
from .mesh import Mesh
from .polybasis import ReferenceBasis, build_reference_basis, default_quadrature_count, legendre_table

log = logging.getLogger(__name__)


class NewtonError(RuntimeError):
    def __init__(self, history):
        self.history = list(history)
        hist = ", ".join(f"{r:.2e}" for r in self.history)
        super().__init__(f"Newton iteration did not converge; residual history: {hist}")


@dataclass(frozen=True)
class ExactSolution:
    """Closed-form (u, q = u_x, p = u_xx) with the extra derivatives used to build data."""

    u: Callable
    q: Callable
    p: Callable
    u_xxx: Callable
    u_t: Callable


@dataclass
class ProblemSpec:
    """u_t + u_xxx + F(u)_x = f on (a, b) with u = u_D at both ends and u_x = q_N at b."""

    a: float
    b: float
    flux: FluxSpec
    u_left: Callable[[float], float]
    u_right: Callable[[float], float]
    q_right: Callable[[float], float]
    u0: Callable
    source: Optional[Callable] = None
    u0_xxx: Optional[Callable] = None
    exact: Optional[ExactSolution] = None
    name: str = "custom"

    def boundary(self, t: float) -> dict:
        return {
            "u_D_left": float(self.u_left(t)),
            "u_D_right": float(self.u_right(t)),
            "q_N_right": float(self.q_right(t)),
        }


@dataclass(frozen=True)
class NewtonSettings:
    abs_tol: float = 1e-11
    rel_tol: float = 1e-12
    max_iters: int = 25

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0 and self.max_iters >= 1):
            raise ValueError("Newton tolerances must be positive and max_iters >= 1")


@dataclass
class SolutionState:
    u: np.ndarray  # (N, k+1)
    q: np.ndarray
    p: np.ndarray
    uhat: np.ndarray  # (N+1,)
    phat: np.ndarray  # (N,), p_hat^- at x_1..x_N
    t: float = 0.0

    @property
    def traces(self) -> np.ndarray:
        return trace_system.join_traces(self.uhat, self.phat)

    def copy(self) -> "SolutionState":
        return SolutionState(self.u.copy(), self.q.copy(), self.p.copy(), self.uhat.copy(), self.phat.copy(), self.t)

    def combine(self, other: "SolutionState", a: float, b: float, t: float) -> "SolutionState":
        """a * self + b * other, field by field."""
        return SolutionState(
            a * self.u + b * other.u,
            a * self.q + b * other.q,
            a * self.p + b * other.p,
            a * self.uhat + b * other.uhat,
            a * self.phat + b * other.phat,
            t,
        )

    @classmethod
    def zeros(cls, N: int, nb: int, t: float = 0.0) -> "SolutionState":
        z = np.zeros((N, nb))
        return cls(z, z.copy(), z.copy(), np.zeros(N + 1), np.zeros(N), t)


@dataclass
class NewtonTrace:
    residuals: list = field(default_factory=list)
    mode: str = "newton"

    @property
    def iterations(self) -> int:
        return max(len(self.residuals) - 1, 0)


class Discretization:
    """Mesh, basis, flux and trace constants, plus cached operators for affine fluxes."""

    def __init__(
        self,
        mesh: Mesh,
        k: int,
        flux: FluxSpec,
        params: StabilizationParams,
        n_q: int | None = None,
    ):
        self.mesh = mesh
        self.flux = flux
        self.params = params
        if n_q is None:
            n_q = default_quadrature_count(k, flux.m)
        self.basis: ReferenceBasis = build_reference_basis(k, n_q)
        self.h = mesh.sizes
        self.N = mesh.N
        self._epts, self._ewts, self._evals, self._eders = self.basis.elevated()
        self._xq = mesh.map_to_physical(self._epts)
        layout = trace_system.trace_layout(self.N)
        self._rows = layout.element_rows()
        self._cols = layout.element_columns()
        self._linear_cache: dict = {}

    @property
    def k(self) -> int:
        return self.basis.k

    @property
    def nb(self) -> int:
        return self.basis.nb

    # -- data -------------------------------------------------------------

    def moments(self, values: np.ndarray) -> np.ndarray:
        """(g, P_i) per element from samples of g at the elevated quadrature points."""
        return 0.5 * self.h[:, None] * ((values * self._ewts) @ self._evals)

    def source_moments(self, source, t: float) -> np.ndarray:
        if source is None:
            return np.zeros((self.N, self.nb))
        return self.moments(source(self._xq, t))

    def project(self, func: Callable, t: float | None = None) -> np.ndarray:
        """Elementwise L2 projection onto P_k (modal coefficients)."""
        vals = func(self._xq) if t is None else func(self._xq, t)
        return self.moments(vals) / (0.5 * self.h[:, None] * self.basis.mass[None, :])

    def stationary_source_moments(self, problem: ProblemSpec) -> np.ndarray:
        """(g, w) with g = u0 + u0''' + F(u0)_x; the flux term is integrated by parts."""
        x = self._xq
        u0 = problem.u0(x)
        if problem.u0_xxx is not None:
            u3 = problem.u0_xxx(x)
        else:
            u3 = problem.exact.u_xxx(x, 0.0)
        mom = self.moments(u0 + u3)
        F = flux_value(self.flux, u0)
        mom -= (F * self._ewts) @ self._eders
        L, Rv = self.basis.left_vals, self.basis.right_vals
        Fl = flux_value(self.flux, problem.u0(self.mesh.left))
        Fr = flux_value(self.flux, problem.u0(self.mesh.right))
        mom += Fr[:, None] * Rv - Fl[:, None] * L
        return mom

    # -- residuals ----------------------------------------------------------

    def element_state(self, state: SolutionState) -> local.ElementState:
        return local.ElementState(
            state.u, state.q, state.p, state.uhat[:-1], state.uhat[1:], state.phat
        )

    def residual(self, state, dt_eff, u_prev, src, bc):
        """Local residuals (N, 3(k+1)) and the assembled trace residual (2N+1)."""
        E, T = local.element_residuals(
            self.h, self.basis, self.element_state(state), self.params, self.flux, dt_eff, src, u_prev
        )
        return E, trace_system.assemble_trace_residual(T, bc, self.N, state.uhat), T

    def residual_norm(self, state, dt_eff, u_prev, src, bc) -> float:
        E, res, _ = self.residual(state, dt_eff, u_prev, src, bc)
        return float(max(np.abs(E).max(), np.abs(res).max()))

    # -- Newton -------------------------------------------------------------

    def _linear_operator(self, dt_eff: float):
        key = float(dt_eff)
        if key not in self._linear_cache:
            zero = SolutionState.zeros(self.N, self.nb)
            A, D, G, Dt = local.element_jacobians(
                self.h, self.basis, self.element_state(zero), self.params, self.flux, dt_eff
            )
            Ainv = np.linalg.inv(A)
            AinvD = Ainv @ D
            K = Dt - G @ AinvD
            system = trace_system.assemble_global(
                local.CondensedElement(K, np.zeros((self.N, 4)), AinvD, None),
                {"u_D_left": 0.0, "u_D_right": 0.0, "q_N_right": 0.0},
                self.N,
            )
            factor = trace_system.BandedFactor(system)
            self._linear_cache[key] = (Ainv, AinvD, G, factor)
        return self._linear_cache[key]

    def _apply_increment(self, state, dtraces, dp, dq, du) -> SolutionState:
        duhat, dphat = trace_system.split_traces(dtraces)
        return SolutionState(
            state.u + du, state.q + dq, state.p + dp, state.uhat + duhat, state.phat + dphat, state.t
        )

    def newton_solve(
        self,
        state: SolutionState,
        bc: dict,
        dt_eff: float,
        u_prev,
        src,
        settings: NewtonSettings = NewtonSettings(),
    ) -> tuple[SolutionState, NewtonTrace]:
        """Solve the implicit stage system by Newton-Raphson with static condensation.

        Stops once the max-norm of all residuals drops below
        ``abs_tol + rel_tol * (initial residual)``.
        """
        trace = NewtonTrace()
        tol = None
        affine = self.flux.is_affine
        for it in range(settings.max_iters + 1):
            E, res, T = self.residual(state, dt_eff, u_prev, src, bc)
            norm = float(max(np.abs(E).max(), np.abs(res).max()))
            trace.residuals.append(norm)
            if tol is None:
                tol = settings.abs_tol + settings.rel_tol * norm
            if norm <= tol:
                return state, trace
            if it == settings.max_iters or not np.isfinite(norm):
                raise NewtonError(trace.residuals)
            if affine:
                state = self._affine_update(state, E, T, bc, dt_eff)
            else:
                state = self._full_update(state, E, T, bc, dt_eff)
        raise NewtonError(trace.residuals)  # pragma: no cover

    def consistent_solve(
        self, state: SolutionState, bc: dict, settings: NewtonSettings = NewtonSettings()
    ) -> tuple[SolutionState, NewtonTrace]:
        """Newton solve for q, p and the traces with u held fixed.

        Only the two gradient equations and the trace rows are kept. The midpoint
        extrapolation carries any mismatch between (q, p) and u forward without
        damping, so a projected start has to be made consistent first.
        """
        nb = self.nb
        keep = slice(0, 2 * nb)
        src = np.zeros_like(state.u)
        trace = NewtonTrace(mode="projection")
        tol = None
        for it in range(settings.max_iters + 1):
            E, res, T = self.residual(state, 1.0, state.u, src, bc)
            E = E[:, keep]
            norm = float(max(np.abs(E).max(), np.abs(res).max()))
            trace.residuals.append(norm)
            if tol is None:
                tol = settings.abs_tol + settings.rel_tol * norm
            if norm <= tol:
                return state, trace
            if it == settings.max_iters or not np.isfinite(norm):
                raise NewtonError(trace.residuals)
            A, D, G, Dt = local.element_jacobians(
                self.h, self.basis, self.element_state(state), self.params, self.flux, 1.0
            )
            cond = local.condense(local.LocalBlocks(A[:, keep, keep], D[:, keep], G[:, :, keep], Dt, -E, -T))
            dx = trace_system.solve_banded(trace_system.assemble_global(cond, bc, self.N, state.uhat))
            dw = cond.AinvR - np.einsum("eij,ej->ei", cond.AinvD, dx[self._cols])
            state = self._apply_increment(state, dx, dw[:, :nb], dw[:, nb:], 0.0)
        raise NewtonError(trace.residuals)  # pragma: no cover

    def _full_update(self, state, E, T, bc, dt_eff):
        A, D, G, Dt = local.element_jacobians(
            self.h, self.basis, self.element_state(state), self.params, self.flux, dt_eff
        )
        cond = local.condense(local.LocalBlocks(A, D, G, Dt, -E, -T))
        system = trace_system.assemble_global(cond, bc, self.N, state.uhat)
        dx = trace_system.solve_banded(system)
        dp, dq, du = local.recover_interior(cond, dx[self._cols])
        return self._apply_increment(state, dx, dp, dq, du)

    def _affine_update(self, state, E, T, bc, dt_eff):
        Ainv, AinvD, G, factor = self._linear_operator(dt_eff)
        AinvR = -np.einsum("eij,ej->ei", Ainv, E)
        F = -T - np.einsum("eij,ej->ei", G, AinvR)
        rhs = np.zeros(2 * self.N + 1)
        keep = self._rows >= 0
        np.add.at(rhs, self._rows[keep], F[keep])
        rhs[2 * self.N - 1] += bc["q_N_right"]
        rhs[0] = bc["u_D_left"] - state.uhat[0]
        rhs[-1] = bc["u_D_right"] - state.uhat[-1]
        dx = factor.solve(rhs)
        cond = local.CondensedElement(None, None, AinvD, AinvR)
        dp, dq, du = local.recover_interior(cond, dx[self._cols])
        return self._apply_increment(state, dx, dp, dq, du)

    # -- post-processing helpers -------------------------------------------

    def sample(self, coeffs: np.ndarray, points: np.ndarray | None = None):
        """Values of a field at reference ``points`` on every element: (x, values), both (N, n)."""
        if points is None:
            points = self.basis.quad_points
        vals, _ = legendre_table(self.k, points)
        return self.mesh.map_to_physical(points), coeffs @ vals.T


# -- time stepping -------------------------------------------------------------


def newton_solve(disc: Discretization, state, stage_time, dt_eff, u_prev, settings, problem: ProblemSpec):
    """Newton solve of one implicit stage with data evaluated at ``stage_time``."""
    src = disc.source_moments(problem.source, stage_time)
    return disc.newton_solve(state, problem.boundary(stage_time), dt_eff, u_prev, src, settings)


def backward_euler_step(disc, state, t_j, dt, problem, settings=NewtonSettings()):
    if not dt > 0:
        raise ValueError("time step must be positive")
    new, trace = newton_solve(disc, state, t_j + dt, dt, state.u, settings, problem)
    new.t = t_j + dt
    return new, trace


def midpoint_step(disc, state, t_j, dt, problem, settings=NewtonSettings()):
    """Solve the half-step stage at t_j + dt/2, then extrapolate w^{j+1} = 2 w^{j,1} - w^j."""
    if not dt > 0:
        raise ValueError("time step must be positive")
    stage, trace = newton_solve(disc, state, t_j + 0.5 * dt, 0.5 * dt, state.u, settings, problem)
    return stage.combine(state, 2.0, -1.0, t_j + dt), trace


STEPPERS = {"backward_euler": backward_euler_step, "be": backward_euler_step, "midpoint": midpoint_step}


def initial_state(problem: ProblemSpec, disc: Discretization, settings=NewtonSettings(), mode: str = "auto"):
    """Discrete initial data.

    ``mode="stationary"`` solves v + v_xxx + F(v)_x = g with
    g = u0 + u0''' + F(u0)_x; ``mode="projection"`` takes the elementwise L2
    projection of u0 and solves for matching q, p and traces (weaker initial
    accuracy); ``"auto"`` picks the stationary
    solve whenever k >= 1 and the third derivative of u0 is available, and
    falls back to the projection if that nonlinear solve has no converging
    Newton sequence. For k = 0 with a nonlinear flux the stationary problem can
    diverge or settle on a spurious root, so ``"auto"`` projects. The returned
    trace's ``mode`` records the choice.
    """
    have_third = problem.u0_xxx is not None or problem.exact is not None
    if mode not in ("auto", "stationary", "projection"):
        raise ValueError(f"unknown initialization mode {mode!r}")
    if mode == "stationary" and not have_third:
        raise ValueError("stationary initialization needs the third derivative of u0")
    if mode == "auto" and disc.k == 0 and not disc.flux.is_affine:
        return _consistent_projection(problem, disc, settings)
    if mode != "projection" and have_third:
        guess = _projected_state(problem, disc)
        g = disc.stationary_source_moments(problem)
        try:
            state, trace = disc.newton_solve(
                guess, problem.boundary(0.0), 1.0, np.zeros_like(guess.u), g, settings
            )
        except NewtonError:
            if mode == "stationary":
                raise
            log.warning("stationary initialization did not converge; falling back to L2 projection")
        else:
            state.t = 0.0
            trace.mode = "stationary"
            return state, trace
    log.warning("initial data from L2 projection; initial-error guarantees are weaker")
    return _consistent_projection(problem, disc, settings)


def _consistent_projection(problem: ProblemSpec, disc: Discretization, settings) -> tuple:
    start = _projected_state(problem, disc)
    try:
        state, trace = disc.consistent_solve(start, problem.boundary(0.0), settings)
    except NewtonError:
        log.warning("could not match q, p and traces to the projected u; keeping averaged gradients")
        return start, NewtonTrace(mode="projection")
    state.t = 0.0
    return state, trace


def _projected_state(problem: ProblemSpec, disc: Discretization) -> SolutionState:
    """L2 projection of u0, then q and p from the discrete gradient equations with averaged traces."""
    basis, mesh = disc.basis, disc.mesh
    L, Rv = basis.left_vals, basis.right_vals
    mass = 0.5 * disc.h[:, None] * basis.mass[None, :]
    S = basis.stiffness
    bc = problem.boundary(0.0)

    def node_means(c, left_value=None, right_value=None):
        vl, vr = c @ L, c @ Rv
        out = np.empty(disc.N + 1)
        out[1:-1] = 0.5 * (vr[:-1] + vl[1:])
        out[0] = vl[0] if left_value is None else left_value
        out[-1] = vr[-1] if right_value is None else right_value
        return out

    def gradient(c, hat):
        # (g, v) = -(c, v_x) + <c_hat, v n>
        rhs = -(c @ S.T) + hat[1:, None] * Rv - hat[:-1, None] * L
        return rhs / mass

    u = disc.project(problem.u0)
    uhat = node_means(u, bc["u_D_left"], bc["u_D_right"])
    q = gradient(u, uhat)
    qhat = node_means(q, right_value=bc["q_N_right"])
    p = gradient(q, qhat)
    phat = node_means(p)[1:]
    return SolutionState(u, q, p, uhat, phat, 0.0)


@dataclass
class RunResult:
    state: SolutionState
    times: list
    norms: list
    newton_iterations: list
    snapshots: list  # (t, SolutionState)
    stage_residuals: list
    previous_u: Optional[np.ndarray] = None  # u_h one step before the end


def l2_norm(disc: Discretization, coeffs) -> float:
    return float(np.sqrt(np.sum(0.5 * disc.h[:, None] * disc.basis.mass[None, :] * coeffs**2)))


def integrate(
    disc: Discretization,
    problem: ProblemSpec,
    state: SolutionState,
    dt: float,
    n_steps: int,
    scheme: str = "midpoint",
    settings: NewtonSettings = NewtonSettings(),
    snapshot_every: int | None = None,
    keep_residuals: bool = False,
) -> RunResult:
    """March ``n_steps`` steps of size ``dt`` from ``state``."""
    try:
        step = STEPPERS[scheme]
    except KeyError:
        raise ValueError(f"unknown time scheme {scheme!r}") from None
    t0 = t = state.t
    times, norms, iters, snaps, resid = [t], [l2_norm(disc, state.u)], [], [], []
    if snapshot_every:
        snaps.append((t, state.copy()))
    prev = None
    for j in range(n_steps):
        prev = state.u
        state, trace = step(disc, state, t, dt, problem, settings)
        t = state.t = t0 + (j + 1) * dt
        iters.append(trace.iterations)
        if keep_residuals:
            resid.append(list(trace.residuals))
        times.append(t)
        norms.append(l2_norm(disc, state.u))
        if snapshot_every and ((j + 1) % snapshot_every == 0 or j + 1 == n_steps):
            snaps.append((t, state.copy()))
    return RunResult(state, times, norms, iters, snaps, resid, prev)


__all__ = [
    "Discretization",
    "ExactSolution",
    "NewtonError",
    "NewtonSettings",
    "NewtonTrace",
    "ProblemSpec",
    "RunResult",
    "SolutionState",
    "backward_euler_step",
    "initial_state",
    "integrate",
    "midpoint_step",
    "newton_solve",
]
