"""Finite-difference kernels for two-point boundary-value problems on (0, 1).

Homogeneous Dirichlet conditions, uniform grid, states stored on the ``n``
interior nodes. The conductivity coefficient lives on all ``n + 2`` nodes
(boundary included) because the flux at the first and last half-cells needs
its boundary values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

POTENTIAL = "potential"
CONDUCTIVITY = "conductivity"


class ZeroPivotError(np.linalg.LinAlgError):
    """Elimination hit a (numerically) zero pivot."""


class EllipticityError(ValueError):
    """Coefficient outside the range where the operator stays elliptic."""


@dataclass(frozen=True)
class Grid1D:
    n: int

    def __post_init__(self):
        if self.n < 3:
            raise ValueError(f"need at least 3 interior nodes, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / (self.n + 1)

    @property
    def nodes(self):
        """Interior nodes ``x_1 .. x_n``."""
        return np.arange(1, self.n + 1) * self.h

    @property
    def all_nodes(self):
        """All nodes ``x_0 .. x_{n+1}`` including the boundary."""
        return np.arange(0, self.n + 2) * self.h

    @property
    def midpoints(self):
        return (np.arange(0, self.n + 1) + 0.5) * self.h


@dataclass(frozen=True, eq=False)
class TridiagonalSystem:
    """Bands of a tridiagonal matrix: ``sub[i] = A[i+1, i]``, ``sup[i] = A[i, i+1]``."""

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=float)
        lo = np.asarray(self.sub, dtype=float)
        up = np.asarray(self.sup, dtype=float)
        if d.ndim != 1 or lo.shape != (d.size - 1,) or up.shape != (d.size - 1,):
            raise ValueError("bands must have lengths n-1, n, n-1")
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "sub", lo)
        object.__setattr__(self, "sup", up)

    @property
    def n(self) -> int:
        return self.diag.size

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        y = self.diag[:, None] * x if x.ndim == 2 else self.diag * x
        if x.ndim == 2:
            y[:-1] += self.sup[:, None] * x[1:]
            y[1:] += self.sub[:, None] * x[:-1]
        else:
            y[:-1] += self.sup * x[1:]
            y[1:] += self.sub * x[:-1]
        return y

    def to_dense(self):
        return np.diag(self.diag) + np.diag(self.sup, 1) + np.diag(self.sub, -1)

    def solve(self, rhs):
        return solve_tridiagonal(self, rhs)


@numba.njit(cache=True)
def _thomas(a, b, c, d, tiny):
    n, m = d.shape
    cp = np.empty(max(n - 1, 0))
    x = np.empty_like(d)
    piv = b[0]
    if abs(piv) <= tiny:
        return x, 0
    if n > 1:
        cp[0] = c[0] / piv
    for k in range(m):
        x[0, k] = d[0, k] / piv
    for i in range(1, n):
        piv = b[i] - a[i - 1] * cp[i - 1]
        if abs(piv) <= tiny:
            return x, i
        if i < n - 1:
            cp[i] = c[i] / piv
        for k in range(m):
            x[i, k] = (d[i, k] - a[i - 1] * x[i - 1, k]) / piv
    for i in range(n - 2, -1, -1):
        for k in range(m):
            x[i, k] -= cp[i] * x[i + 1, k]
    return x, -1


def solve_tridiagonal(sys: TridiagonalSystem, rhs):
    """Thomas elimination for ``sys x = rhs``; ``rhs`` may hold several columns.

    No pivoting: intended for SPD or strictly diagonally dominant systems.
    """
    rhs = np.asarray(rhs, dtype=float)
    n = sys.n
    if rhs.shape[0] != n:
        raise ValueError(f"rhs has {rhs.shape[0]} rows, system has {n}")
    tiny = 1e-14 * float(np.max(np.abs(sys.diag)))
    x, bad = _thomas(sys.sub, sys.diag, sys.sup, np.ascontiguousarray(rhs.reshape(n, -1)), tiny)
    if bad >= 0:
        raise ZeroPivotError(f"zero pivot at row {bad}")
    return x.reshape(rhs.shape)


def laplacian(grid: Grid1D) -> TridiagonalSystem:
    """``(-1, 2, -1) / h^2`` with homogeneous Dirichlet conditions."""
    n, h2 = grid.n, grid.h**2
    off = np.full(n - 1, -1.0 / h2)
    return TridiagonalSystem(off, np.full(n, 2.0 / h2), off.copy(), symmetric=True)


def midpoint_average(u):
    """Arithmetic means ``(u_i + u_{i+1}) / 2`` of a full-node vector."""
    u = np.asarray(u, dtype=float)
    return 0.5 * (u[:-1] + u[1:])


def assemble_operator(grid: Grid1D, u, kind: str, c0: float = 0.0) -> TridiagonalSystem:
    """Assemble ``A(u)`` for ``(-Δ + u) y`` or ``-(u y')'``.

    ``kind="potential"`` takes ``u`` on the interior nodes and requires
    ``u >= 0``. ``kind="conductivity"`` takes ``u`` on all ``n + 2`` nodes,
    uses arithmetic midpoint averages and requires them to exceed ``c0``
    (and be positive).
    """
    u = np.asarray(u, dtype=float)
    n, h2 = grid.n, grid.h**2
    if kind == POTENTIAL:
        if u.shape != (n,):
            raise ValueError(f"potential needs {n} nodal values, got {u.shape}")
        if np.any(u < 0):
            raise EllipticityError(f"negative potential at nodes {np.flatnonzero(u < 0).tolist()}")
        off = np.full(n - 1, -1.0 / h2)
        return TridiagonalSystem(off, 2.0 / h2 + u, off.copy(), symmetric=True)
    if kind == CONDUCTIVITY:
        if u.shape != (n + 2,):
            raise ValueError(f"conductivity needs {n + 2} nodal values, got {u.shape}")
        a = midpoint_average(u)
        if np.any(a <= 0) or np.any(u < c0):
            raise EllipticityError(f"conductivity below {max(c0, 0.0)} (min {u.min():.3g})")
        off = -a[1:-1] / h2
        return TridiagonalSystem(off, (a[:-1] + a[1:]) / h2, off.copy(), symmetric=True)
    raise ValueError(f"unknown operator kind {kind!r}")


def gradient_matrix(grid: Grid1D):
    """Forward differences ``(y_{i+1} - y_i)/h`` on all ``n + 1`` cells, zero boundary values."""
    n, h = grid.n, grid.h
    G = np.zeros((n + 1, n))
    idx = np.arange(n)
    G[idx, idx] = -1.0 / h
    G[idx + 1, idx] = 1.0 / h
    return G


def averaging_matrix(grid: Grid1D):
    """Map full-node values to the ``n + 1`` cell midpoints."""
    n = grid.n
    M = np.zeros((n + 1, n + 2))
    idx = np.arange(n + 1)
    M[idx, idx] = 0.5
    M[idx, idx + 1] = 0.5
    return M


def discrete_h1_norms(grid: Grid1D):
    """Stiffness and mass weights for interior-node vectors (zero boundary values).

    ``v^T S v`` approximates ``∫ |v'|^2`` by forward differences and
    ``v^T M v`` approximates ``∫ v^2`` by the trapezoid rule.
    """
    n, h = grid.n, grid.h
    off = np.full(n - 1, -1.0 / h)
    stiffness = TridiagonalSystem(off, np.full(n, 2.0 / h), off.copy(), symmetric=True)
    mass = TridiagonalSystem(np.zeros(n - 1), np.full(n, h), np.zeros(n - 1), symmetric=True)
    return stiffness, mass


def discrete_h1_norms_full(grid: Grid1D):
    """Stiffness (pure Neumann) and trapezoid mass weights on all ``n + 2`` nodes."""
    m, h = grid.n + 2, grid.h
    off = np.full(m - 1, -1.0 / h)
    d = np.full(m, 2.0 / h)
    d[0] = d[-1] = 1.0 / h
    stiffness = TridiagonalSystem(off, d, off.copy(), symmetric=True)
    w = np.full(m, h)
    w[0] = w[-1] = 0.5 * h
    mass = TridiagonalSystem(np.zeros(m - 1), w, np.zeros(m - 1), symmetric=True)
    return stiffness, mass


def add(a: TridiagonalSystem, b: TridiagonalSystem) -> TridiagonalSystem:
    return TridiagonalSystem(a.sub + b.sub, a.diag + b.diag, a.sup + b.sup,
                             symmetric=a.symmetric and b.symmetric)
