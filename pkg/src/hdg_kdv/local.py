"""Element-local Newton blocks, residuals and static condensation.

Every routine works on a batch of elements at once: arrays carry a leading
element axis of length ``ne``. Per element the local unknowns are ordered
``[p, q, u]`` (k+1 modal coefficients each), the local equations
``[eq1 (test v), eq2 (test z), eq3 (test w)]`` and the three trace unknowns
``[u_hat at x_left, u_hat at x_right, p_hat^- at x_right]``.

Each element also contributes to four trace equations, ordered
``[q-jump at left node, q-jump at right node, (p+F)-jump at left node,
(p+F)-jump at right node]``; a jump is (value from the element on the left)
minus (value from the element on the right), so the left-node rows carry a
minus sign.

Endpoint conventions: tau_qu^+ and tau_pu^+ act at the left endpoint x_{i-1}^+
(outward normal -1); tau_qu^- and tau_qp^- act at the right endpoint x_i^-
(normal +1), which is also where the trace unknown p_hat^- lives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .flux import (
    FluxSpec,
    StabilizationParams,
    flux_derivative,
    flux_value,
    tau_F_partials,
    tau_F_value,
)
from .polybasis import ReferenceBasis


class LocalSolveError(RuntimeError):
    def __init__(self, element: int, pivot: float):
        self.element = element
        self.pivot = pivot
        super().__init__(
            f"local matrix of element {element} is singular (smallest pivot {pivot:.3e}); "
            "check the stabilization constants and the time step"
        )


@dataclass
class ElementState:
    """Current Newton iterate restricted to a batch of elements."""

    u: np.ndarray  # (ne, k+1)
    q: np.ndarray
    p: np.ndarray
    uhat_left: np.ndarray  # (ne,)
    uhat_right: np.ndarray
    phat_right: np.ndarray

    def __post_init__(self):
        nb = np.shape(self.u)[-1]
        if np.shape(self.q)[-1] != nb or np.shape(self.p)[-1] != nb:
            raise ValueError("u, q and p coefficient arrays must have the same length k+1")


@dataclass
class LocalBlocks:
    A: np.ndarray  # (ne, 3nb, 3nb)
    D: np.ndarray  # (ne, 3nb, 3)
    G: np.ndarray  # (ne, 4, 3nb)
    Dt: np.ndarray  # (ne, 4, 3)
    R: np.ndarray  # (ne, 3nb)
    R_trace: np.ndarray  # (ne, 4)


@dataclass
class CondensedElement:
    K: np.ndarray  # (ne, 4, 3)
    F: np.ndarray  # (ne, 4)
    AinvD: np.ndarray  # (ne, 3nb, 3)
    AinvR: np.ndarray  # (ne, 3nb)


def _check_dt(dt_eff: float) -> float:
    if not dt_eff > 0.0:
        raise ValueError(f"dt_eff must be positive (got {dt_eff}); the mass scaling 1/dt would be singular")
    return 1.0 / dt_eff


def _trace_quantities(basis, st):
    L, Rv = basis.left_vals, basis.right_vals
    ul, ur = st.u @ L, st.u @ Rv
    ql, qr = st.q @ L, st.q @ Rv
    pl, pr = st.p @ L, st.p @ Rv
    return ul, ur, ql, qr, pl, pr


def element_residuals(
    h,
    basis: ReferenceBasis,
    state: ElementState,
    params: StabilizationParams,
    spec: FluxSpec,
    dt_eff: float,
    source_moments,
    u_prev,
):
    """Residuals (equation minus right-hand side) at the current iterate.

    Returns ``(E, T)``: ``E`` of shape (ne, 3(k+1)) for the three local
    equations, ``T`` of shape (ne, 4) for the element's trace-equation
    contributions (the Neumann datum is added at assembly).
    """
    inv_dt = _check_dt(dt_eff)
    h = np.asarray(h, dtype=float)
    st = state
    L, Rv = basis.left_vals, basis.right_vals
    mass = 0.5 * h[:, None] * basis.mass[None, :]
    S = basis.stiffness
    ul, ur, ql, qr, pl, pr = _trace_quantities(basis, st)
    uhl, uhr, phr = st.uhat_left, st.uhat_right, st.phat_right

    qhat_l = ql - params.tau_qu_plus * (uhl - ul)
    qhat_r = qr + params.tau_qu_minus * (uhr - ur) + params.tau_qp_minus * (phr - pr)
    phat_l = pl - params.tau_pu_plus * (uhl - ul)
    Fhat_l = flux_value(spec, uhl) + tau_F_value(params, spec, uhl, ul) * (uhl - ul)
    Fhat_r = flux_value(spec, uhr) - tau_F_value(params, spec, uhr, ur) * (uhr - ur)

    U = st.u @ basis.V.T
    flux_moments = (flux_value(spec, U) * basis.quad_weights) @ basis.Vx

    e1 = mass * st.q + st.u @ S.T - uhr[:, None] * Rv + uhl[:, None] * L
    e2 = mass * st.p + st.q @ S.T - qhat_r[:, None] * Rv + qhat_l[:, None] * L
    e3 = (
        inv_dt * mass * (st.u - u_prev)
        - st.p @ S.T
        - flux_moments
        + (phr + Fhat_r)[:, None] * Rv
        - (phat_l + Fhat_l)[:, None] * L
        - source_moments
    )
    E = np.concatenate([e1, e2, e3], axis=-1)
    T = np.stack([-qhat_l, qhat_r, -(phat_l + Fhat_l), phr + Fhat_r], axis=-1)
    return E, T


def element_jacobians(
    h,
    basis: ReferenceBasis,
    state: ElementState,
    params: StabilizationParams,
    spec: FluxSpec,
    dt_eff: float,
):
    """Derivatives of ``element_residuals`` with respect to the local and trace unknowns.

    Returns ``(A, D, G, Dt)`` where A = dE/d[p,q,u], D = dE/d[traces],
    G = dT/d[p,q,u] and Dt = dT/d[traces].
    """
    inv_dt = _check_dt(dt_eff)
    h = np.asarray(h, dtype=float)
    ne = h.shape[0]
    nb = basis.nb
    st = state
    L, Rv = basis.left_vals, basis.right_vals
    LL = np.outer(L, L)
    RR = np.outer(Rv, Rv)
    S = basis.stiffness
    M = 0.5 * h[:, None, None] * np.diag(basis.mass)[None]
    qu_p, pu_p, qu_m, qp_m = params.constants

    ul, ur = st.u @ L, st.u @ Rv
    uhl, uhr = st.uhat_left, st.uhat_right
    tFl = tau_F_value(params, spec, uhl, ul)
    tFr = tau_F_value(params, spec, uhr, ur)
    d1l, d2l = tau_F_partials(params, spec, uhl, ul)
    d1r, d2r = tau_F_partials(params, spec, uhr, ur)
    # d F_hat / d u at each end (sign already folded in for the left end)
    cu_l = tFl - d2l * (uhl - ul)
    cu_r = tFr - d2r * (uhr - ur)
    # d F_hat / d u_hat, outward-normal form
    cuh_l = -flux_derivative(spec, uhl) - d1l * (uhl - ul) - tFl
    cuh_r = flux_derivative(spec, uhr) - d1r * (uhr - ur) - tFr

    U = st.u @ basis.V.T
    dF = flux_derivative(spec, U) * basis.quad_weights
    NFJ = np.einsum("eq,qi,qj->eij", dF, basis.Vx, basis.V)

    dtype = np.result_type(U, float)
    A = np.zeros((ne, 3 * nb, 3 * nb), dtype=dtype)
    P, Q, W = slice(0, nb), slice(nb, 2 * nb), slice(2 * nb, 3 * nb)
    A[:, P, Q] = M
    A[:, P, W] = S
    A[:, Q, P] = M + qp_m * RR
    A[:, Q, Q] = S - RR + LL
    A[:, Q, W] = qu_m * RR + qu_p * LL
    A[:, W, P] = -S - LL
    A[:, W, W] = (
        inv_dt * M
        - NFJ
        + cu_r[:, None, None] * RR
        + cu_l[:, None, None] * LL
        - pu_p * LL
    )

    D = np.zeros((ne, 3 * nb, 3), dtype=dtype)
    D[:, P, 0] = L
    D[:, P, 1] = -Rv
    D[:, Q, 0] = -qu_p * L
    D[:, Q, 1] = -qu_m * Rv
    D[:, Q, 2] = -qp_m * Rv
    D[:, W, 0] = (pu_p + cuh_l)[:, None] * L
    D[:, W, 1] = cuh_r[:, None] * Rv
    D[:, W, 2] = Rv

    G = np.zeros((ne, 4, 3 * nb), dtype=dtype)
    G[:, 0, Q] = -L
    G[:, 0, W] = -qu_p * L
    G[:, 1, P] = -qp_m * Rv
    G[:, 1, Q] = Rv
    G[:, 1, W] = -qu_m * Rv
    G[:, 2, P] = -L
    G[:, 2, W] = (cu_l - pu_p)[:, None] * L
    G[:, 3, W] = cu_r[:, None] * Rv

    Dt = np.zeros((ne, 4, 3), dtype=dtype)
    Dt[:, 0, 0] = qu_p
    Dt[:, 1, 1] = qu_m
    Dt[:, 1, 2] = qp_m
    Dt[:, 2, 0] = pu_p + cuh_l
    Dt[:, 3, 1] = cuh_r
    Dt[:, 3, 2] = 1.0
    return A, D, G, Dt


def assemble_local_blocks(
    h,
    basis: ReferenceBasis,
    state: ElementState,
    params: StabilizationParams,
    spec: FluxSpec,
    dt_eff: float,
    source_moments,
    u_prev,
) -> LocalBlocks:
    """Newton blocks and right-hand sides for a batch of elements.

    ``dt_eff`` scales the mass term as 1/dt_eff; the stationary problem
    v + v_xxx + F(v)_x = g uses dt_eff = 1 with ``u_prev`` = 0.
    """
    E, T = element_residuals(h, basis, state, params, spec, dt_eff, source_moments, u_prev)
    A, D, G, Dt = element_jacobians(h, basis, state, params, spec, dt_eff)
    return LocalBlocks(A, D, G, Dt, -E, -T)


def _locate_singular(A) -> tuple[int, float]:
    worst = (0, np.inf)
    for e in range(A.shape[0]):
        lu, _ = scipy.linalg.lu_factor(A[e], check_finite=False)
        pivot = float(np.min(np.abs(np.diag(lu))))
        if pivot < worst[1]:
            worst = (e, pivot)
    return worst[0] + 1, worst[1]


def factor_local(A, D) -> np.ndarray:
    """Batched solve A^{-1} D; raises LocalSolveError naming the offending element."""
    try:
        with np.errstate(all="raise"):
            return np.linalg.solve(A, D)
    except (np.linalg.LinAlgError, FloatingPointError):
        raise LocalSolveError(*_locate_singular(A)) from None


def condense(blocks: LocalBlocks) -> CondensedElement:
    """Eliminate the interior unknowns: K = Dt - G A^{-1} D, F = R_trace - G A^{-1} R."""
    rhs = np.concatenate([blocks.D, blocks.R[..., None]], axis=-1)
    sol = factor_local(blocks.A, rhs)
    AinvD, AinvR = sol[..., :3], sol[..., 3]
    K = blocks.Dt - blocks.G @ AinvD
    F = blocks.R_trace - np.einsum("eij,ej->ei", blocks.G, AinvR)
    return CondensedElement(K, F, AinvD, AinvR)


def recover_interior(cond: CondensedElement, delta_traces):
    """Interior increments A^{-1}(R - D dtraces), returned as (dp, dq, du)."""
    delta_traces = np.asarray(delta_traces)
    dw = cond.AinvR - np.einsum("eij,ej->ei", cond.AinvD, delta_traces)
    nb = dw.shape[-1] // 3
    return dw[..., :nb], dw[..., nb : 2 * nb], dw[..., 2 * nb :]
