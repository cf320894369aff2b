"""Closed-form test problems: the four reference experiments and manufactured families.

Each problem is built from a sympy expression for u(x, t); derivatives, the
manufactured source u_t + u_xxx + F(u)_x and the boundary data follow from it.
"""

from __future__ import annotations

from functools import lru_cache

import mpmath
import numpy as np
import sympy as sp

from .flux import FluxSpec
from .stepper import ExactSolution, ProblemSpec

x_, t_ = sp.symbols("x t", real=True)


def _lambdify(expr):
    f = sp.lambdify((x_, t_), expr, modules="numpy", cse=True)
    if expr.free_symbols:
        return f

    const = float(expr)

    def g(x, t):
        return np.full(np.shape(x), const) if np.ndim(x) else const

    return g


@lru_cache(maxsize=None)
def _derivatives(expr_str: str, beta: float, m: int):
    u = sp.sympify(expr_str, locals={"x": x_, "t": t_})
    ux = sp.diff(u, x_)
    uxx = sp.diff(ux, x_)
    uxxx = sp.diff(uxx, x_)
    ut = sp.diff(u, t_)
    f = ut + uxxx + sp.diff(beta * u**m, x_)
    if _vanishes(f):
        f = sp.Integer(0)
    return u, ux, uxx, uxxx, ut, f


def _vanishes(expr, samples: int = 12, digits: int = 40) -> bool:
    """Identity test by 40-digit evaluation at fixed pseudo-random points.

    Symbolic simplification of sech/tanh expressions can take minutes; a
    nonzero analytic expression vanishing at all samples to 1e-25 is not a
    practical concern here.
    """
    if not expr.free_symbols:
        return bool(expr == 0)
    f = sp.lambdify((x_, t_), expr, modules="mpmath", cse=True)
    rng = np.random.default_rng(12345)
    with mpmath.workdps(digits):
        for x, t in zip(rng.uniform(-3.0, 3.0, samples), rng.uniform(0.0, 1.0, samples)):
            if abs(f(mpmath.mpf(x), mpmath.mpf(t))) > 1e-25:
                return False
    return True


def manufactured_problem(expr: str, a: float, b: float, flux: FluxSpec, name: str = "manufactured") -> ProblemSpec:
    """Problem whose exact solution is the sympy expression ``expr`` in x and t."""
    u, ux, uxx, uxxx, ut, f = _derivatives(expr, float(flux.beta), int(flux.m))
    U, Q, P, U3, UT = (_lambdify(e) for e in (u, ux, uxx, uxxx, ut))
    exact = ExactSolution(U, Q, P, U3, UT)
    source = None if f == 0 else _lambdify(f)
    return ProblemSpec(
        a=a,
        b=b,
        flux=flux,
        u_left=lambda t: U(a, t),
        u_right=lambda t: U(b, t),
        q_right=lambda t: Q(b, t),
        u0=lambda x: U(x, 0.0),
        source=source,
        u0_xxx=lambda x: U3(x, 0.0),
        exact=exact,
        name=name,
    )


def experiment_1() -> ProblemSpec:
    """Linear problem u_t + u_xxx = 0 with u = sin(x + t) on (0, 1)."""
    return manufactured_problem("sin(x + t)", 0.0, 1.0, FluxSpec(0.0, 2), "experiment1")


def experiment_2() -> ProblemSpec:
    """u_t + u_xxx + (3u^2)_x = f with u = sin(2x + t) on (0, pi)."""
    return manufactured_problem("sin(2*x + t)", 0.0, float(np.pi), FluxSpec(3.0, 2), "experiment2")


SOLITON = "2*sech(x - 4*t + 4)**2"
# multiplied through by sinh^2 of the fast phase to remove the csch/coth poles
TWO_SOLITON = (
    "5*(9/2 + 2*sech(x - 4*t + 12)**2*sinh(3*(x - 9*t + 29/2)/2)**2)"
    "/(3*cosh(3*(x - 9*t + 29/2)/2) - 2*tanh(x - 4*t + 12)*sinh(3*(x - 9*t + 29/2)/2))**2"
)


def soliton() -> ProblemSpec:
    """Single solitary wave of u_t + u_xxx + (3u^2)_x = 0 on (-10, 0)."""
    return manufactured_problem(SOLITON, -10.0, 0.0, FluxSpec(3.0, 2), "soliton")


def two_soliton() -> ProblemSpec:
    """Two interacting solitary waves (speeds 9 and 4) on (-20, 0)."""
    return manufactured_problem(TWO_SOLITON, -20.0, 0.0, FluxSpec(3.0, 2), "two_soliton")


def two_soliton_reference(x, t):
    """The two-soliton profile written with csch and coth; singular where the fast phase vanishes."""
    a = 1.5 * (x - 9 * t + 14.5)
    b = x - 4 * t + 12
    num = 4.5 / np.sinh(a) ** 2 + 2 / np.cosh(b) ** 2
    den = (3 / np.tanh(a) - 2 * np.tanh(b)) ** 2
    return 5 * num / den


def trig_problem(
    amplitude: float = 1.0,
    wavenumber: float = 1.0,
    frequency: float = 1.0,
    phase: float = 0.0,
    a: float = 0.0,
    b: float = 1.0,
    flux: FluxSpec = FluxSpec(0.0, 2),
) -> ProblemSpec:
    """Manufactured family u = A sin(kx + wt + phi)."""
    expr = f"{amplitude!r}*sin({wavenumber!r}*x + {frequency!r}*t + {phase!r})"
    return manufactured_problem(expr, a, b, flux, "trig")


def zero_problem(a: float = 0.0, b: float = 1.0, flux: FluxSpec = FluxSpec(0.0, 2)) -> ProblemSpec:
    return manufactured_problem("0", a, b, flux, "zero")


REGISTRY = {
    "experiment1": experiment_1,
    "experiment2": experiment_2,
    "soliton": soliton,
    "two_soliton": two_soliton,
}
