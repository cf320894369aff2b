"""One-dimensional partitions of an interval (a, b)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Mesh:
    """Ordered partition a = x_0 < x_1 < ... < x_N = b.

    Elements are numbered 1..N in the public API (element ``i`` is
    ``(x_{i-1}, x_i)``); internally arrays are indexed from zero.
    """

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("a mesh needs at least two nodes")
        if np.any(np.diff(nodes) <= 0.0):
            raise ValueError("mesh nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def a(self) -> float:
        return float(self.nodes[0])

    @property
    def b(self) -> float:
        return float(self.nodes[-1])

    @property
    def N(self) -> int:
        return self.nodes.size - 1

    @property
    def sizes(self) -> np.ndarray:
        """Element lengths h_i, shape (N,)."""
        return np.diff(self.nodes)

    @property
    def h(self) -> float:
        """Mesh size max_i h_i."""
        return float(self.sizes.max())

    @property
    def left(self) -> np.ndarray:
        return self.nodes[:-1]

    @property
    def right(self) -> np.ndarray:
        return self.nodes[1:]

    def element_of(self, i: int) -> tuple[float, float, float]:
        """Return ``(x_left, x_right, h_i)`` for the 1-based element index ``i``."""
        if not 1 <= i <= self.N:
            raise IndexError(f"element index {i} outside 1..{self.N}")
        xl, xr = self.nodes[i - 1], self.nodes[i]
        return float(xl), float(xr), float(xr - xl)

    def map_to_physical(self, xi: np.ndarray) -> np.ndarray:
        """Physical coordinates of reference points ``xi`` on every element, shape (N, len(xi))."""
        xi = np.asarray(xi, dtype=float)
        return self.left[:, None] + 0.5 * self.sizes[:, None] * (xi[None, :] + 1.0)


def build_uniform_mesh(a: float, b: float, N: int) -> Mesh:
    if not a < b:
        raise ValueError(f"need a < b, got a={a}, b={b}")
    if int(N) != N or N < 1:
        raise ValueError(f"element count must be a positive integer, got {N}")
    return Mesh(np.linspace(a, b, int(N) + 1))
