"""Global trace system: numbering, banded assembly, solve and conditioning.

Unknowns are interleaved as [u_hat_0, p_hat_1, u_hat_1, ..., p_hat_N, u_hat_N]
(size 2N+1). Row ``2j-1`` holds the q-jump equation at node x_j (j = 1..N,
the x_N row carries the Neumann datum), row ``2j`` the (p+F)-jump equation at
interior node x_j, and rows 0 and 2N pin the Dirichlet increments.

Every row couples at most five consecutive unknowns. Because both equations of
a node touch the same five unknowns, the q-jump rows sit one position off
centre, so banded storage uses 2 sub- and 3 super-diagonals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

KL = 2
KU = 3


class SingularSystemError(RuntimeError):
    def __init__(self, pivot_index: int):
        self.pivot_index = pivot_index
        super().__init__(f"global trace matrix is singular (zero pivot at row {pivot_index})")


@dataclass(frozen=True)
class TraceLayout:
    N: int

    @property
    def size(self) -> int:
        return 2 * self.N + 1

    @staticmethod
    def uhat(i):
        return 2 * np.asarray(i)

    @staticmethod
    def phat(i):
        return 2 * np.asarray(i) - 1

    def order(self) -> list[str]:
        names = ["uhat0"]
        for i in range(1, self.N + 1):
            names += [f"phat{i}", f"uhat{i}"]
        return names

    def element_columns(self) -> np.ndarray:
        """Global columns of each element's traces (u_hat left, u_hat right, p_hat right)."""
        e = np.arange(self.N)
        return np.stack([2 * e, 2 * e + 2, 2 * e + 1], axis=1)

    def element_rows(self) -> np.ndarray:
        """Global rows of each element's four trace contributions; -1 where the row does not exist."""
        e = np.arange(self.N)
        rows = np.stack([2 * e - 1, 2 * e + 1, 2 * e, 2 * e + 2], axis=1)
        rows[0, 0] = -1  # x_0 is a Dirichlet node
        rows[0, 2] = -1
        rows[-1, 3] = -1  # no (p+F)-jump equation at x_N
        return rows


def trace_layout(N: int) -> TraceLayout:
    if int(N) != N or N < 1:
        raise ValueError(f"element count must be a positive integer, got {N}")
    return TraceLayout(int(N))


def split_traces(values) -> tuple[np.ndarray, np.ndarray]:
    """Interleaved trace vector -> (u_hat of length N+1, p_hat of length N)."""
    values = np.asarray(values)
    return values[0::2], values[1::2]


def join_traces(uhat, phat) -> np.ndarray:
    out = np.empty(uhat.size + phat.size, dtype=np.result_type(uhat, phat))
    out[0::2] = uhat
    out[1::2] = phat
    return out


@dataclass
class GlobalSystem:
    """Banded matrix in LAPACK ``gbsv`` layout plus right-hand side."""

    ab: np.ndarray  # (2*KL + KU + 1, n); rows KL.. hold the band
    rhs: np.ndarray
    kl: int = KL
    ku: int = KU

    @property
    def n(self) -> int:
        return self.rhs.size

    def to_dense(self) -> np.ndarray:
        n = self.n
        dense = np.zeros((n, n), dtype=self.ab.dtype)
        off = self.kl + self.ku
        for c in range(n):
            lo, hi = max(0, c - self.ku), min(n, c + self.kl + 1)
            for r in range(lo, hi):
                dense[r, c] = self.ab[off + r - c, c]
        return dense

    def matvec(self, x) -> np.ndarray:
        return self.to_dense() @ x

    @classmethod
    def from_dense(cls, dense, rhs, kl: int = KL, ku: int = KU) -> "GlobalSystem":
        dense = np.asarray(dense, dtype=float)
        n = dense.shape[0]
        ab = np.zeros((2 * kl + ku + 1, n))
        for r in range(n):
            for c in range(max(0, r - kl), min(n, r + ku + 1)):
                ab[kl + ku + r - c, c] = dense[r, c]
        if np.any(np.abs(np.triu(dense, ku + 1)) > 0) or np.any(np.abs(np.tril(dense, -kl - 1)) > 0):
            raise ValueError("matrix has entries outside the declared band")
        return cls(ab, np.asarray(rhs, dtype=float).copy(), kl, ku)


def _scatter_pattern(layout: TraceLayout):
    rows = layout.element_rows()
    cols = layout.element_columns()
    rr = np.broadcast_to(rows[:, :, None], (layout.N, 4, 3))
    cc = np.broadcast_to(cols[:, None, :], (layout.N, 4, 3))
    keep = rr >= 0
    return rows, rr[keep], cc[keep], keep


def assemble_global(elements, bc: dict, N: int, uhat_current=None) -> GlobalSystem:
    """Scatter condensed element contributions into the banded trace system.

    ``bc`` holds ``u_D_left``, ``u_D_right`` and ``q_N_right``; ``uhat_current``
    (length N+1) is the iterate the Dirichlet increments are measured from.
    """
    K, F = elements.K, elements.F
    if K.shape[0] != N or F.shape[0] != N:
        raise ValueError(f"expected {N} condensed elements, got {K.shape[0]}")
    layout = trace_layout(N)
    n = layout.size
    rows, rr, cc, keep = _scatter_pattern(layout)
    ab = np.zeros((2 * KL + KU + 1, n), dtype=K.dtype)
    np.add.at(ab, (KL + KU + rr - cc, cc), K[keep])
    rhs = np.zeros(n, dtype=F.dtype)
    frow = rows >= 0
    np.add.at(rhs, rows[frow], F[frow])
    rhs[2 * N - 1] += bc["q_N_right"]

    uhat_current = np.zeros(N + 1) if uhat_current is None else np.asarray(uhat_current)
    for r, datum in ((0, bc["u_D_left"]), (2 * N, bc["u_D_right"])):
        cs = np.arange(max(0, r - KL), min(n, r + KU + 1))
        ab[KL + KU + r - cs, cs] = 0.0
        ab[KL + KU, r] = 1.0
        rhs[r] = datum - uhat_current[r // 2]
    return GlobalSystem(ab, rhs)


def assemble_trace_residual(T, bc: dict, N: int, uhat) -> np.ndarray:
    """Residual of the 2N+1 trace equations, in the same row order as ``assemble_global``."""
    layout = trace_layout(N)
    rows = layout.element_rows()
    res = np.zeros(layout.size, dtype=np.result_type(T, uhat))
    keep = rows >= 0
    np.add.at(res, rows[keep], T[keep])
    res[2 * N - 1] -= bc["q_N_right"]
    res[0] = uhat[0] - bc["u_D_left"]
    res[2 * N] = uhat[N] - bc["u_D_right"]
    return res


def solve_banded(system: GlobalSystem) -> np.ndarray:
    """Banded LU with partial pivoting (LAPACK gbsv)."""
    _, _, x, info = lapack.dgbsv(system.kl, system.ku, system.ab, system.rhs)
    if info > 0:
        raise SingularSystemError(int(info) - 1)
    if info < 0:
        raise ValueError(f"illegal argument {-info} passed to gbsv")
    return x


class BandedFactor:
    """Reusable banded LU for repeated solves with a fixed matrix."""

    def __init__(self, system: GlobalSystem):
        self.kl, self.ku = system.kl, system.ku
        self.lu, self.piv, info = lapack.dgbtrf(system.ab, system.kl, system.ku)
        if info > 0:
            raise SingularSystemError(int(info) - 1)

    def solve(self, rhs) -> np.ndarray:
        x, info = lapack.dgbtrs(self.lu, self.kl, self.ku, rhs, self.piv)
        if info != 0:
            raise ValueError(f"gbtrs failed with info={info}")
        return x


def dirichlet_free(dense: np.ndarray) -> np.ndarray:
    """Drop the two Dirichlet rows and columns."""
    return dense[1:-1, 1:-1]


def condition_estimate(system: GlobalSystem, include_dirichlet: bool = True, cap: int = 4001) -> float:
    """2-norm condition number from the extreme singular values of the dense matrix."""
    if system.n > cap:
        raise ValueError(f"system of size {system.n} exceeds the dense-conversion cap {cap}")
    dense = system.to_dense()
    if not include_dirichlet:
        dense = dirichlet_free(dense)
    s = np.linalg.svd(dense, compute_uv=False)
    return float(s[0] / s[-1])


def bandwidth(dense: np.ndarray, tol: float = 0.0) -> tuple[int, int]:
    """(lower, upper) bandwidth of a dense matrix."""
    r, c = np.nonzero(np.abs(dense) > tol)
    if r.size == 0:
        return 0, 0
    return int(max(0, np.max(r - c))), int(max(0, np.max(c - r)))


def row_stencil_width(dense: np.ndarray, tol: float = 0.0) -> int:
    """Largest number of consecutive columns spanned by the nonzeros of any row."""
    width = 0
    for row in np.abs(dense) > tol:
        idx = np.flatnonzero(row)
        if idx.size:
            width = max(width, int(idx[-1] - idx[0] + 1))
    return width
