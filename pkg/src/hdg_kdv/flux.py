"""Polynomial flux F(u) = beta u^m and the stabilization function of the numerical traces.

All evaluation functions broadcast over numpy arrays and accept complex input,
which the complex-step Jacobian checks in the test-suite rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class FluxSpec:
    beta: float = 0.0
    m: int = 2

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 0:
            raise ValueError(f"flux exponent must be a non-negative integer, got {self.m}")

    @property
    def is_zero(self) -> bool:
        return self.beta == 0.0

    @property
    def is_affine(self) -> bool:
        """True when F' is constant, so the Newton Jacobian does not depend on the state."""
        return self.beta == 0.0 or self.m <= 1


def _power(u, e: int):
    # u**0 must be 1 even at u = 0; keeps complex dtype
    if e == 0:
        return np.ones_like(u)
    return u**e


def flux_value(spec: FluxSpec, u):
    return spec.beta * _power(u, spec.m)


def flux_derivative(spec: FluxSpec, u):
    if spec.m == 0:
        return np.zeros_like(u) * spec.beta
    return spec.beta * spec.m * _power(u, spec.m - 1)


def flux_second_derivative(spec: FluxSpec, u):
    if spec.m <= 1:
        return np.zeros_like(u) * spec.beta
    return spec.beta * spec.m * (spec.m - 1) * _power(u, spec.m - 2)


def tau_tilde(spec: FluxSpec, u, u_hat, n=1.0):
    """(u - u_hat)^{-2} * int_{u_hat}^{u} (F(s) - F(u_hat)) n ds.

    With d = u - u_hat the integral expands to
    beta * sum_{j=2}^{m+1} C(m+1, j)/(m+1) u_hat^{m+1-j} d^j,
    so dividing by d^2 leaves a polynomial in d. No cancellation occurs for
    small d and the value at d = 0 is the limit n F'(u_hat) / 2.
    """
    u = np.asarray(u)
    u_hat = np.asarray(u_hat)
    d = u - u_hat
    m = spec.m
    total = np.zeros(np.broadcast(u, u_hat).shape, dtype=np.result_type(u, u_hat, float))
    for j in range(2, m + 2):
        total = total + math.comb(m + 1, j) / (m + 1) * _power(u_hat, m + 1 - j) * _power(d, j - 2)
    return n * spec.beta * total


@dataclass(frozen=True)
class TauFRule:
    """Rule for tau_F(u_hat, u).

    ``kind`` is one of ``"zero"``, ``"constant"`` (uses ``value``) or
    ``"derivative_squared_plus_quarter"``, i.e. F'(u_hat)^2 + 1/4.
    """

    kind: str = "zero"
    value: float = 0.0

    KINDS = ("zero", "constant", "derivative_squared_plus_quarter")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown tau_F rule {self.kind!r}; expected one of {self.KINDS}")

    @classmethod
    def zero(cls) -> "TauFRule":
        return cls("zero")

    @classmethod
    def constant(cls, c: float) -> "TauFRule":
        return cls("constant", float(c))

    @classmethod
    def derivative_squared_plus_quarter(cls) -> "TauFRule":
        return cls("derivative_squared_plus_quarter")

    def describe(self) -> str:
        if self.kind == "constant":
            return f"constant({self.value:g})"
        return self.kind


@dataclass(frozen=True)
class StabilizationParams:
    tau_qu_plus: float = 0.0
    tau_pu_plus: float = -1.0
    tau_qu_minus: float = 1.0
    tau_qp_minus: float = 1.0
    tau_F_rule: TauFRule = field(default_factory=TauFRule)

    @property
    def constants(self) -> tuple[float, float, float, float]:
        return (self.tau_qu_plus, self.tau_pu_plus, self.tau_qu_minus, self.tau_qp_minus)

    @property
    def projection_determinant(self) -> float:
        """tau_qu^+ + tau_qu^- - tau_pu^+ tau_qp^-; must be nonzero for the projection."""
        return self.tau_qu_plus + self.tau_qu_minus - self.tau_pu_plus * self.tau_qp_minus


DEFAULT_TAU = (0.0, -1.0, 1.0, 1.0)


def tau_F_value(params: StabilizationParams, spec: FluxSpec, u_hat, u=None):
    rule = params.tau_F_rule
    u_hat = np.asarray(u_hat)
    if rule.kind == "zero":
        return np.zeros_like(u_hat, dtype=np.result_type(u_hat, float))
    if rule.kind == "constant":
        return np.full_like(u_hat, rule.value, dtype=np.result_type(u_hat, float))
    return flux_derivative(spec, u_hat) ** 2 + 0.25


def tau_F_partials(params: StabilizationParams, spec: FluxSpec, u_hat, u=None):
    """Partial derivatives of tau_F with respect to u_hat (first) and u (second)."""
    u_hat = np.asarray(u_hat)
    zero = np.zeros_like(u_hat, dtype=np.result_type(u_hat, float))
    if params.tau_F_rule.kind != "derivative_squared_plus_quarter":
        return zero, zero
    return 2.0 * flux_derivative(spec, u_hat) * flux_second_derivative(spec, u_hat), zero


@dataclass(frozen=True)
class StabilityReport:
    energy_stable_nonlinear: bool
    energy_stable_linear: bool
    optimal_error_condition: bool
    projection_well_posed: bool

    def lines(self) -> list[str]:
        return [
            f"energy stability (nonlinear, with delta): {self.energy_stable_nonlinear}",
            f"energy stability (linear flux):           {self.energy_stable_linear}",
            f"optimal error estimate condition:         {self.optimal_error_condition}",
            f"projection well-posedness:                {self.projection_well_posed}",
        ]


def check_stability_conditions(
    params: StabilizationParams, tauF_minus_tautilde_lower_bound: float = 0.0, tol: float = 1e-12
) -> StabilityReport:
    """Evaluate the four admissibility predicates for the trace constants.

    ``tauF_minus_tautilde_lower_bound`` (delta) is a caller-supplied lower bound of
    tau_F - tau_tilde over the run; it is 0 for F = 0.
    """
    qu_p, pu_p, qu_m, qp_m = params.constants
    delta = float(tauF_minus_tautilde_lower_bound)

    ntau = (
        delta - pu_p - 0.5 * qu_p**2 >= -tol
        and delta + 0.5 * qu_m**2 >= -tol
        and delta * qp_m**2 + qu_m * qp_m - 0.5 >= -tol
    )
    tau = -pu_p - 0.5 * qu_p**2 >= -tol and qu_m * qp_m - 0.5 >= -tol
    if 0.0 <= qu_p <= 1.0:
        lo = -1.0 - math.sqrt(1.0 - qu_p**2)
        hi = -0.5 - 0.5 * qu_p**2
        pu_ok = lo - tol <= pu_p <= hi + tol
    else:
        pu_ok = False
    tau_new = qu_m > 0.0 and abs(qu_m * qp_m - 1.0) <= tol and pu_ok
    cond = params.projection_determinant != 0.0
    return StabilityReport(bool(ntau), bool(tau), bool(tau_new), bool(cond))
