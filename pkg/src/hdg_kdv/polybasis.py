"""Modal Legendre basis and Gauss-Legendre quadrature on the reference element [-1, 1]."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre


def gauss_quadrature(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre rule on [-1, 1], exact for degree 2n - 1."""
    if int(n) != n or n < 1:
        raise ValueError(f"quadrature needs at least one point, got {n}")
    return legendre.leggauss(int(n))


def legendre_table(k: int, x) -> tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of P_0..P_k at ``x``.

    Uses the three-term recurrence
    (j+1) P_{j+1} = (2j+1) x P_j - j P_{j-1} and
    P'_{j+1} = P'_{j-1} + (2j+1) P_j.
    Returns two arrays of shape ``x.shape + (k+1,)``.
    """
    x = np.asarray(x, dtype=float)
    vals = np.zeros(x.shape + (k + 1,))
    ders = np.zeros(x.shape + (k + 1,))
    vals[..., 0] = 1.0
    if k >= 1:
        vals[..., 1] = x
        ders[..., 1] = 1.0
    for j in range(1, k):
        vals[..., j + 1] = ((2 * j + 1) * x * vals[..., j] - j * vals[..., j - 1]) / (j + 1)
        ders[..., j + 1] = ders[..., j - 1] + (2 * j + 1) * vals[..., j]
    return vals, ders


def default_quadrature_count(k: int, m: int = 2) -> int:
    """Points needed to integrate F(u_h) w_x exactly for F(u) = beta u^m."""
    return max(k + 2, math.ceil((m + 2) * k / 2) + 1)


@dataclass(frozen=True)
class ReferenceBasis:
    k: int
    n_q: int
    quad_points: np.ndarray
    quad_weights: np.ndarray
    V: np.ndarray  # (n_q, k+1) values P_j(xi_q)
    Vx: np.ndarray  # (n_q, k+1) reference derivatives P_j'(xi_q)
    left_vals: np.ndarray  # P_j(-1) = (-1)^j
    right_vals: np.ndarray  # P_j(1) = 1
    mass: np.ndarray = field(repr=False)  # diagonal of the reference mass matrix
    stiffness: np.ndarray = field(repr=False)  # S[i, j] = int P_j P_i' dxi

    @property
    def nb(self) -> int:
        return self.k + 1

    def evaluate(self, coeffs, x_hat) -> np.ndarray:
        """Evaluate sum_j c_j P_j(x_hat); ``coeffs`` may carry leading batch axes."""
        vals, _ = legendre_table(self.k, x_hat)
        return np.asarray(coeffs) @ vals.T

    def elevated(self, extra: int = 3):
        """A finer rule (n_q + extra points) for non-polynomial data.

        Returns ``(points, weights, values, derivatives)``.
        """
        pts, wts = gauss_quadrature(self.n_q + extra)
        vals, ders = legendre_table(self.k, pts)
        return pts, wts, vals, ders


def build_reference_basis(k: int, n_q: int | None = None) -> ReferenceBasis:
    if int(k) != k or k < 0:
        raise ValueError(f"polynomial degree must be a non-negative integer, got {k}")
    k = int(k)
    if n_q is None:
        n_q = default_quadrature_count(k)
    if n_q < k + 1:
        raise ValueError(f"n_q={n_q} < k+1={k + 1}: the mass matrix would be singular")
    pts, wts = gauss_quadrature(n_q)
    V, Vx = legendre_table(k, pts)
    left, _ = legendre_table(k, -1.0)
    right, _ = legendre_table(k, 1.0)
    # exact when n_q >= k + 1 (integrand degree 2k - 1)
    stiffness = (Vx * wts[:, None]).T @ V
    mass = 2.0 / (2.0 * np.arange(k + 1) + 1.0)
    arrays = (pts, wts, V, Vx, left, right, mass, stiffness)
    for arr in arrays:
        arr.setflags(write=False)
    return ReferenceBasis(k, int(n_q), *arrays)


def eval_field_on_element(coeffs, x_hat: float) -> float:
    coeffs = np.asarray(coeffs, dtype=float)
    if abs(x_hat) > 1.0:
        raise ValueError("reference coordinate must lie in [-1, 1]")
    vals, _ = legendre_table(coeffs.size - 1, x_hat)
    return float(coeffs @ vals)
