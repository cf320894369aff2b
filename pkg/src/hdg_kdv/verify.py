"""Verification instruments: the trace-tailored projection, L2 errors, convergence orders."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .flux import StabilizationParams
from .mesh import Mesh
from .polybasis import ReferenceBasis, legendre_table


class ProjectionError(ValueError):
    def __init__(self, determinant: float):
        self.determinant = determinant
        super().__init__(
            "projection system is singular: tau_qu^+ + tau_qu^- - tau_pu^+ tau_qp^- = "
            f"{determinant:g}"
        )


@dataclass
class ProjectionResult:
    u: np.ndarray  # (N, k+1) coefficients of the projection of u
    q: np.ndarray
    p: np.ndarray
    residuals: np.ndarray  # (6,) max abs residual of each defining equation

    @property
    def max_residual(self) -> float:
        return float(self.residuals.max())


def _quadrature(mesh: Mesh, basis: ReferenceBasis, extra: int = 3):
    pts, wts, vals, _ = basis.elevated(extra)
    return mesh.map_to_physical(pts), wts, vals


def _moments(mesh, func, x, wts, vals):
    return 0.5 * mesh.sizes[:, None] * ((func(x) * wts) @ vals)


def hdg_projection(
    mesh: Mesh,
    basis: ReferenceBasis,
    u: Callable,
    q: Callable,
    p: Callable,
    params: StabilizationParams,
) -> ProjectionResult:
    """Projection of (u, q, p) defined element by element.

    The differences d_w = w - Pi w are L2-orthogonal to P_{k-1} for w = u, q, p,
    and satisfy the trace-like endpoint conditions
        d_p + tau_pu^+ d_u = 0 and d_q + tau_qu^+ d_u = 0 at x_{i-1}^+,
        d_q - tau_qu^- d_u - tau_qp^- d_p = 0 at x_i^-.
    Well defined iff tau_qu^+ + tau_qu^- - tau_pu^+ tau_qp^- != 0.
    """
    qu_p, pu_p, qu_m, qp_m = params.constants
    det = params.projection_determinant
    scale = abs(qu_p) + abs(qu_m) + abs(pu_p * qp_m)
    if abs(det) <= 1e-14 * max(scale, 1.0):
        raise ProjectionError(det)

    k, nb, N = basis.k, basis.nb, mesh.N
    L, Rv = basis.left_vals, basis.right_vals
    x, wts, vals = _quadrature(mesh, basis)
    mom = [_moments(mesh, f, x, wts, vals) for f in (u, q, p)]
    xl, xr = mesh.left, mesh.right
    ul, ql, pl = u(xl), q(xl), p(xl)
    ur, qr, pr = u(xr), q(xr), p(xr)

    n = 3 * nb
    A = np.zeros((N, n, n))
    b = np.zeros((N, n))
    U, Q, P = 0, nb, 2 * nb
    row = 0
    for off, m in zip((U, Q, P), mom):
        for j in range(k):
            A[:, row, off + j] = 0.5 * mesh.sizes * basis.mass[j]
            b[:, row] = m[:, j]
            row += 1
    A[:, row, P : P + nb] = L
    A[:, row, U : U + nb] = pu_p * L
    b[:, row] = pl + pu_p * ul
    row += 1
    A[:, row, Q : Q + nb] = L
    A[:, row, U : U + nb] = qu_p * L
    b[:, row] = ql + qu_p * ul
    row += 1
    A[:, row, Q : Q + nb] = Rv
    A[:, row, U : U + nb] = -qu_m * Rv
    A[:, row, P : P + nb] = -qp_m * Rv
    b[:, row] = qr - qu_m * ur - qp_m * pr
    try:
        sol = np.linalg.solve(A, b[..., None])[..., 0]
    except np.linalg.LinAlgError:
        raise ProjectionError(det) from None
    cu, cq, cp = sol[:, U : U + nb], sol[:, Q : Q + nb], sol[:, P : P + nb]

    res = np.zeros(6)
    if k > 0:
        for i, (c, m) in enumerate(zip((cu, cq, cp), mom)):
            d = m[:, :k] - 0.5 * mesh.sizes[:, None] * basis.mass[None, :k] * c[:, :k]
            res[i] = np.abs(d).max() / max(np.abs(m).max(), 1e-300)
    du_l, dq_l, dp_l = ul - cu @ L, ql - cq @ L, pl - cp @ L
    du_r, dq_r, dp_r = ur - cu @ Rv, qr - cq @ Rv, pr - cp @ Rv
    res[3] = np.abs(dp_l + pu_p * du_l).max()
    res[4] = np.abs(dq_l + qu_p * du_l).max()
    res[5] = np.abs(dq_r - qu_m * du_r - qp_m * dp_r).max()
    return ProjectionResult(cu, cq, cp, res)


def l2_error(coeffs, exact: Callable, mesh: Mesh, basis: ReferenceBasis, t: float | None = None) -> float:
    """sqrt(sum_i int_{I_i} (field - exact)^2) with an (n_q + 3)-point rule.

    ``exact`` is called as exact(x, t), or exact(x) when ``t`` is None.
    """
    x, wts, vals = _quadrature(mesh, basis)
    field_vals = np.asarray(coeffs) @ vals.T
    ref = exact(x) if t is None else exact(x, t)
    err2 = 0.5 * mesh.sizes[:, None] * wts * (field_vals - ref) ** 2
    return float(np.sqrt(err2.sum()))


def eoc(errors: Sequence[float], hs: Sequence[float]) -> list[float]:
    """Orders log(e_{j-1}/e_j) / log(h_{j-1}/h_j) between consecutive levels."""
    e = np.asarray(errors, dtype=float)
    h = np.asarray(hs, dtype=float)
    if e.shape != h.shape or e.size < 2:
        raise ValueError("need matching error and mesh-size sequences of length >= 2")
    if np.any(e <= 0) or np.any(h <= 0):
        raise ValueError("errors and mesh sizes must be positive")
    return list(np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:]))


def energy_monitor(history, mesh: Mesh, basis: ReferenceBasis) -> list[float]:
    """Discrete L2 norms ||u_h(t_j)|| of a sequence of coefficient arrays."""
    w = 0.5 * mesh.sizes[:, None] * basis.mass[None, :]
    return [float(np.sqrt(np.sum(w * np.asarray(c) ** 2))) for c in history]


def sample_field(coeffs, mesh: Mesh, basis: ReferenceBasis, points=None):
    """Field values at reference ``points`` (default: the quadrature points) of every element."""
    if points is None:
        points = basis.quad_points
    vals, _ = legendre_table(basis.k, points)
    return mesh.map_to_physical(points).ravel(), (np.asarray(coeffs) @ vals.T).ravel()


@dataclass
class LevelRecord:
    level: int
    N: int
    h: float
    dt: float
    e_u: float
    e_q: float
    e_p: float
    e_ut: float | None = None
    order_u: float | None = None
    order_q: float | None = None
    order_p: float | None = None
    order_ut: float | None = None
    newton_max: int = 0
    newton_min: int = 0
    init_mode: str = ""


@dataclass
class ExperimentReport:
    k: int
    levels: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def fill_orders(self) -> None:
        for prev, cur in zip(self.levels, self.levels[1:]):
            ratio = np.log(prev.h / cur.h)
            cur.order_u = float(np.log(prev.e_u / cur.e_u) / ratio)
            cur.order_q = float(np.log(prev.e_q / cur.e_q) / ratio)
            cur.order_p = float(np.log(prev.e_p / cur.e_p) / ratio)
            if prev.e_ut and cur.e_ut:
                cur.order_ut = float(np.log(prev.e_ut / cur.e_ut) / ratio)

    @property
    def finest(self) -> LevelRecord:
        return self.levels[-1]
