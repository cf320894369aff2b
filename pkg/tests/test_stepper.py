import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdg_kdv import problems
from hdg_kdv.flux import FluxSpec, StabilizationParams, check_stability_conditions
from hdg_kdv.mesh import build_uniform_mesh
from hdg_kdv.stepper import (
    Discretization,
    NewtonError,
    NewtonSettings,
    SolutionState,
    backward_euler_step,
    initial_state,
    integrate,
    l2_norm,
    midpoint_step,
    newton_solve,
)
from hdg_kdv.verify import l2_error


def _disc(problem, N, k, params=StabilizationParams()):
    return Discretization(build_uniform_mesh(problem.a, problem.b, N), k, problem.flux, params)


# -- scalar surrogate ---------------------------------------------------------------
# One element of length h, k = 0, F = 0, homogeneous data: eliminating p, q and
# the traces by hand leaves h u_t + 2 u = 0, i.e. lambda = 2 / h.


@pytest.mark.parametrize("dt", [0.1, 0.03, 1.0])
def test_backward_euler_scalar_surrogate(dt):
    zero = problems.zero_problem()
    disc = _disc(zero, 1, 0)
    state = SolutionState.zeros(1, 1)
    state.u[:] = 1.0
    new, _ = backward_euler_step(disc, state, 0.0, dt, zero)
    lam = 2.0 / disc.h[0]
    assert new.u[0, 0] == pytest.approx(1.0 / (1.0 + lam * dt), rel=1e-13)
    assert new.t == dt


@pytest.mark.parametrize("dt", [0.1, 0.03])
def test_midpoint_scalar_surrogate(dt):
    zero = problems.zero_problem()
    disc = _disc(zero, 1, 0)
    state = SolutionState.zeros(1, 1)
    state.u[:] = 1.0
    new, _ = midpoint_step(disc, state, 0.0, dt, zero)
    z = 2.0 / disc.h[0] * dt
    assert new.u[0, 0] == pytest.approx((1 - z / 2) / (1 + z / 2), rel=1e-13)


def test_midpoint_is_extrapolated_stage():
    prob = problems.experiment_2()
    disc = _disc(prob, 4, 1)
    state, _ = initial_state(prob, disc)
    dt = 0.01
    stage, _ = newton_solve(disc, state, 0.5 * dt, 0.5 * dt, state.u, NewtonSettings(), prob)
    new, _ = midpoint_step(disc, state, 0.0, dt, prob)
    for f in ("u", "q", "p", "uhat", "phat"):
        assert np.allclose(getattr(new, f), 2 * getattr(stage, f) - getattr(state, f), rtol=0, atol=1e-13)


# -- Newton behaviour ---------------------------------------------------------------


def test_linear_problem_takes_one_iteration():
    prob = problems.experiment_1()
    disc = _disc(prob, 8, 2)
    state, trace = initial_state(prob, disc)
    assert trace.iterations == 1 and trace.mode == "stationary"
    res = integrate(disc, prob, state, 0.01, 5, "midpoint")
    assert res.newton_iterations == [1] * 5


def test_converged_state_takes_zero_iterations():
    prob = problems.experiment_2()
    disc = _disc(prob, 8, 2)
    state, _ = initial_state(prob, disc)
    src = disc.source_moments(prob.source, 0.3)
    bc = prob.boundary(0.3)
    solved, tr1 = disc.newton_solve(state, bc, 0.05, state.u, src)
    assert tr1.iterations >= 1
    again, tr2 = disc.newton_solve(solved, bc, 0.05, state.u, src)
    assert tr2.iterations == 0
    # the reported residual is what re-assembly gives
    assert disc.residual_norm(solved, 0.05, state.u, src, bc) == pytest.approx(tr1.residuals[-1], rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("scheme", ["midpoint", "be"])
def test_zero_state_stays_zero(scheme):
    prob = problems.zero_problem(flux=FluxSpec(3.0, 2))
    disc = _disc(prob, 6, 2)
    res = integrate(disc, prob, SolutionState.zeros(6, 3), 0.01, 4, scheme)
    assert not res.state.u.any() and not res.state.uhat.any()
    assert res.newton_iterations == [0] * 4


def _quadratic_ratios(residuals, floor=1e-11):
    return [b / a**2 for a, b in zip(residuals, residuals[1:]) if b > floor]


def test_newton_converges_quadratically_from_zero():
    prob = problems.experiment_2()
    disc = _disc(prob, 16, 2)
    g = disc.source_moments(prob.source, 0.0)
    _, trace = disc.newton_solve(SolutionState.zeros(16, 3), prob.boundary(0.0), 0.05, np.zeros((16, 3)), g)
    ratios = _quadratic_ratios(trace.residuals)
    assert len(ratios) >= 2
    assert max(ratios) <= 10.0
    assert trace.residuals[-1] <= 1e-11


def test_newton_error_carries_history():
    prob = problems.experiment_2()
    disc = _disc(prob, 16, 2)
    g = disc.source_moments(prob.source, 0.0)
    with pytest.raises(NewtonError) as err:
        disc.newton_solve(SolutionState.zeros(16, 3), prob.boundary(0.0), 0.05, np.zeros((16, 3)), g,
                          NewtonSettings(max_iters=1))
    assert len(err.value.history) == 2


def test_bad_settings_and_steps():
    with pytest.raises(ValueError):
        NewtonSettings(abs_tol=0.0)
    prob = problems.experiment_1()
    disc = _disc(prob, 2, 1)
    state = SolutionState.zeros(2, 2)
    with pytest.raises(ValueError):
        backward_euler_step(disc, state, 0.0, 0.0, prob)
    with pytest.raises(ValueError):
        integrate(disc, prob, state, 0.1, 1, "rk4")
    with pytest.raises(ValueError):
        initial_state(prob, disc, mode="exact")


# -- initialization -----------------------------------------------------------------


@pytest.mark.parametrize("beta", [0.0, 3.0])
@pytest.mark.parametrize("k", [2, 3])
def test_stationary_init_reproduces_polynomials(beta, k):
    prob = problems.manufactured_problem("x**2 - x/2 + 3/10 + t", 0.0, 1.0, FluxSpec(beta, 2), "poly")
    disc = _disc(prob, 5, k)
    state, trace = initial_state(prob, disc, mode="stationary")
    assert trace.mode == "stationary"
    ex = prob.exact
    assert l2_error(state.u, ex.u, disc.mesh, disc.basis, 0.0) <= 1e-10
    assert l2_error(state.q, ex.q, disc.mesh, disc.basis, 0.0) <= 1e-10
    assert l2_error(state.p, ex.p, disc.mesh, disc.basis, 0.0) <= 1e-10
    assert np.allclose(state.uhat, ex.u(disc.mesh.nodes, 0.0), atol=1e-10)


@pytest.mark.parametrize("k", [1, 2])
def test_stationary_init_error_order(k):
    prob = problems.experiment_2()
    errs, hs = [], []
    # below N = 16 the k = 1 stationary solve has no converging Newton sequence
    for N in (16, 32, 64):
        disc = _disc(prob, N, k)
        state, trace = initial_state(prob, disc)
        assert trace.mode == "stationary"
        errs.append(l2_error(state.u, prob.exact.u, disc.mesh, disc.basis, 0.0))
        hs.append(disc.mesh.h)
    order = math.log(errs[-2] / errs[-1]) / math.log(hs[-2] / hs[-1])
    assert order >= k + 0.8


@pytest.mark.parametrize("k", [1, 2, 3])
def test_linear_init_error_order(k):
    prob = problems.experiment_1()
    errs, hs = [], []
    for n in range(1, 6):
        disc = _disc(prob, 2**n, k)
        state, _ = initial_state(prob, disc)
        errs.append(l2_error(state.u, prob.exact.u, disc.mesh, disc.basis, 0.0))
        hs.append(disc.mesh.h)
    assert math.log(errs[-2] / errs[-1]) / math.log(hs[-2] / hs[-1]) >= k + 0.8


def test_auto_init_projects_for_k0_nonlinear():
    prob = problems.experiment_2()
    _, trace = initial_state(prob, _disc(prob, 4, 0))
    assert trace.mode == "projection"
    _, trace = initial_state(problems.experiment_1(), _disc(problems.experiment_1(), 4, 0))
    assert trace.mode == "stationary"


@pytest.mark.parametrize("k", [0, 1, 2])
@pytest.mark.parametrize("name", ["experiment_1", "experiment_2"])
def test_projection_init_is_consistent(name, k):
    prob = getattr(problems, name)()
    disc = _disc(prob, 8, k)
    state, trace = initial_state(prob, disc, mode="projection")
    assert trace.mode == "projection"
    assert np.array_equal(state.u, disc.project(prob.u0))
    # the gradient equations and every trace row hold; only the evolution equation is left open
    E, res, _ = disc.residual(state, 1.0, state.u, np.zeros_like(state.u), prob.boundary(0.0))
    assert np.abs(E[:, : 2 * disc.nb]).max() <= 1e-11
    assert np.abs(res).max() <= 1e-11


def test_consistent_solve_failure_raises():
    prob = problems.experiment_2()
    disc = _disc(prob, 8, 1)
    start = SolutionState.zeros(8, 2)
    start.u[:] = disc.project(prob.u0)
    tight = NewtonSettings(abs_tol=1e-300, rel_tol=1e-300, max_iters=1)
    with pytest.raises(NewtonError):
        disc.consistent_solve(start, prob.boundary(0.0), tight)


# -- energy stability of backward Euler ---------------------------------------------

tau_strategy = st.tuples(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.1, 10.0))


@settings(max_examples=15, deadline=None)
@given(tau_strategy, st.integers(0, 2**31 - 1))
def test_backward_euler_energy_non_increasing(tau, seed):
    qu_p, frac, qu_m = tau
    lo, hi = -1.0 - math.sqrt(1.0 - qu_p**2), -0.5 - 0.5 * qu_p**2
    params = StabilizationParams(qu_p, lo + frac * (hi - lo), qu_m, 1.0 / qu_m)
    assert check_stability_conditions(params, 0.0).energy_stable_linear
    prob = problems.zero_problem()
    disc = _disc(prob, 4, 2, params)
    state = SolutionState.zeros(4, 3)
    state.u[:] = np.random.default_rng(seed).normal(size=(4, 3))
    res = integrate(disc, prob, state, 0.01, 20, "be")
    norms = np.array(res.norms)
    assert np.all(np.diff(norms) <= 1e-10)
    assert norms[0] == pytest.approx(l2_norm(disc, state.u))
