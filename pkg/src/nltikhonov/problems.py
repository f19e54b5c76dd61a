"""Concrete forward problems.

* :class:`ScalarQuadratic` -- ``K(u) = eps_scale * u * (1 - u)`` on ``R``, with
  every quantity (exact solution, representer, Tikhonov minimizer) in
  closed form.
* :class:`Potential1D` -- ``(-y'' + u y) = f``, ``K(u) = y``; the derivative of
  the operator in ``u`` acts pointwise, so the problem is bilinear with a
  local ``e_u``.
* :class:`Conductivity1D` -- ``-(u y')' = f``, ``K(u) = y``; bilinear with a
  nonlocal ``e_u``. Penalty in the full H^1 norm, fidelity in the H^1_0
  seminorm.

Both PDE problems observe the full interior state (distributed measurement).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ConstraintSet, ForwardProblem, InnerProduct
from . import pde1d
from .pde1d import CONDUCTIVITY, POTENTIAL, Grid1D


# ----------------------------------------------------------------------------
# scalar quadratic operator


class ScalarQuadratic(ForwardProblem):
    """``K(u) = eps_scale * u * (1 - u)`` with the Euclidean metric on both sides."""

    name = "scalar"

    def __init__(self, eps_scale: float = 0.1):
        if not eps_scale > 0:
            raise ValueError("eps_scale must be positive")
        self.eps_scale = float(eps_scale)
        self.param_ip = InnerProduct.identity(1)
        self.data_ip = InnerProduct.identity(1)

    def __repr__(self):
        return f"ScalarQuadratic(eps_scale={self.eps_scale})"

    def k(self, u):
        return self.eps_scale * u * (1.0 - u)

    def dk(self, u):
        return self.eps_scale * (1.0 - 2.0 * u)

    def evaluate(self, u):
        return np.atleast_1d(self.k(np.asarray(u, dtype=float)))

    def deriv_apply(self, u, du):
        return np.atleast_1d(self.dk(np.asarray(u, dtype=float)) * np.asarray(du, dtype=float))

    def adjoint_apply(self, u, v):
        return self.deriv_apply(u, v)

    def jacobian(self, u):
        return np.atleast_2d(self.dk(np.asarray(u, dtype=float)[0]))

    @property
    def lipschitz(self) -> float:
        """Exact Lipschitz constant of ``u -> K'(u)``."""
        return 2.0 * self.eps_scale

    def secant(self, u, u_ref):
        """Slope of the chord, ``(K(u) - K(u_ref)) / (u - u_ref)``."""
        return self.eps_scale * (1.0 - np.asarray(u) - np.asarray(u_ref))


def scalar_exact_solution(eps_scale: float, g_exact: float) -> float:
    """Minimum-norm solution of ``eps_scale * u * (1 - u) = g_exact``."""
    if g_exact < 0 or g_exact >= eps_scale / 4.0:
        raise ValueError(f"need 0 <= g_exact < eps_scale/4 = {eps_scale / 4}, got {g_exact}")
    s = math.sqrt(1.0 - 4.0 * g_exact / eps_scale)
    # 0.5*(1 - s) rewritten to avoid cancellation for small data
    return (2.0 * g_exact / eps_scale) / (1.0 + s)


def scalar_source_representer(eps_scale: float, g_exact: float) -> float:
    """``w = u† / (eps_scale (1 - 2 u†))``, solving ``K'(u†) w = u†``."""
    u = scalar_exact_solution(eps_scale, g_exact)
    if 1.0 - 2.0 * u == 0.0:
        raise ValueError("K'(u†) vanishes at u† = 1/2; no source representer")
    return u / (eps_scale * (1.0 - 2.0 * u))


def real_cubic_roots(a: float, b: float, c: float, d: float):
    """Real roots of ``a x^3 + b x^2 + c x + d`` (trigonometric / Cardano form)."""
    if a == 0.0:
        if b == 0.0:
            return [] if c == 0.0 else [-d / c]
        disc = c * c - 4 * b * d
        if disc < 0:
            return []
        sq = math.sqrt(disc)
        return sorted({(-c - sq) / (2 * b), (-c + sq) / (2 * b)})
    b, c, d = b / a, c / a, d / a
    shift = b / 3.0
    p = c - b * b / 3.0
    q = 2.0 * b**3 / 27.0 - b * c / 3.0 + d
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if p == 0.0 and q == 0.0:
        roots = [0.0]
    elif disc > 0:
        sq = math.sqrt(disc)
        roots = [math.copysign(abs(-q / 2 + sq) ** (1 / 3), -q / 2 + sq)
                 + math.copysign(abs(-q / 2 - sq) ** (1 / 3), -q / 2 - sq)]
    else:
        m = 2.0 * math.sqrt(-p / 3.0)
        arg = 3.0 * q / (p * m) if p != 0 else 0.0
        theta = math.acos(max(-1.0, min(1.0, arg))) / 3.0
        roots = [m * math.cos(theta - 2.0 * math.pi * k / 3.0) for k in range(3)]
    out = []
    for t in roots:
        x = t - shift
        # Newton polish against the original (monic) polynomial
        for _ in range(3):
            f = ((x + b) * x + c) * x + d
            df = (3 * x + 2 * b) * x + c
            if df == 0.0:
                break
            step = f / df
            x -= step
            if abs(step) <= 1e-16 * max(1.0, abs(x)):
                break
        out.append(x)
    return sorted(out)


def scalar_tikhonov_value(eps_scale: float, g: float, eta: float, u: float) -> float:
    r = eps_scale * u * (1.0 - u) - g
    return 0.5 * r * r + 0.5 * eta * u * u


def scalar_tikhonov_minimizer(eps_scale: float, g: float, eta: float, c: ConstraintSet | None = None) -> float:
    """Global minimizer of the scalar Tikhonov functional over a box.

    Stationary points solve the cubic
    ``2e^2 u^3 - 3e^2 u^2 + (e^2 + 2eg + eta) u - eg = 0``; the candidates are
    its real roots inside the box plus the finite box endpoints.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    e = eps_scale
    lo, hi = (-np.inf, np.inf) if c is None else (float(c.lower[0]), float(c.upper[0]))
    cands = [r for r in real_cubic_roots(2 * e * e, -3 * e * e, e * e + 2 * e * g + eta, -e * g)
             if lo <= r <= hi]
    cands += [x for x in (lo, hi) if np.isfinite(x)]
    best = min(cands, key=lambda x: (scalar_tikhonov_value(e, g, eta, x), abs(x)))
    return float(best)


# ----------------------------------------------------------------------------
# PDE problems


class _EllipticProblem(ForwardProblem):
    """Shared machinery for ``A(u) y = f``, ``K(u) = y``."""

    kind: str

    def __init__(self, grid: Grid1D, f=None):
        self.grid = grid
        self.f = np.full(grid.n, 2.0) if f is None else np.broadcast_to(np.asarray(f, dtype=float), (grid.n,)).copy()
        self._G = pde1d.gradient_matrix(grid)

    def __repr__(self):
        return f"{type(self).__name__}(n={self.grid.n})"

    @property
    def value_resolution(self) -> float:
        # state solves lose about cond(A) ~ 4 / (pi h)^2 digits
        return 10 * np.finfo(float).eps * 4.0 / (np.pi * self.grid.h) ** 2

    def operator(self, u) -> pde1d.TridiagonalSystem:
        return pde1d.assemble_operator(self.grid, u, self.kind, c0=getattr(self, "ellipticity_floor", 0.0))

    def state(self, u):
        return self.operator(u).solve(self.f)

    def evaluate(self, u):
        return self.state(u)

    # e_u(u, y): the linear map du -> A'(u)[du] y, and its Euclidean transpose
    def e_u_matrix(self, y):
        raise NotImplementedError

    def deriv_apply(self, u, du):
        A = self.operator(u)
        y = A.solve(self.f)
        return -A.solve(self.e_u_matrix(y) @ np.asarray(du, dtype=float))

    def adjoint_apply(self, u, v):
        A = self.operator(u)
        y = A.solve(self.f)
        adj = A.solve(self.data_ip.apply(np.asarray(v, dtype=float)))  # A symmetric
        return -self.param_ip.solve(self.e_u_matrix(y).T @ adj)

    def jacobian(self, u):
        A = self.operator(u)
        y = A.solve(self.f)
        return -A.solve(self.e_u_matrix(y))

    def linearize(self, u):
        """State, operator and Jacobian at ``u`` with a single state solve."""
        A = self.operator(u)
        y = A.solve(self.f)
        return y, A, -A.solve(self.e_u_matrix(y))


class Potential1D(_EllipticProblem):
    """Recover ``u >= 0`` in ``-y'' + u y = f`` from interior values of ``y``.

    Both spaces carry the trapezoid L^2 weight ``h I`` on interior nodes.
    """

    name = "potential"
    kind = POTENTIAL

    def __init__(self, grid: Grid1D, f=None):
        super().__init__(grid, f)
        _, mass = pde1d.discrete_h1_norms(grid)
        self.param_ip = InnerProduct(mass)
        self.data_ip = InnerProduct(mass)

    def default_constraints(self) -> ConstraintSet:
        return ConstraintSet.box(self.grid.n, lower=0.0)

    def e_u_matrix(self, y):
        return np.diag(y)

    def e_u_local(self, y):
        """Pointwise multiplier of ``e_u``: here ``e_u(u, y) du = y * du``."""
        return np.asarray(y, dtype=float)

    def jacobian(self, u):
        A = self.operator(u)
        y = A.solve(self.f)
        return -A.solve(np.diag(y))


class Conductivity1D(_EllipticProblem):
    """Recover ``c0 <= u <= c1`` in ``-(u y')' = f`` from interior values of ``y``.

    The coefficient is a vector on all ``n + 2`` nodes. The penalty uses the
    full H^1 norm (trapezoid mass plus pure-Neumann stiffness), the fidelity
    the H^1_0 seminorm of the state.
    """

    name = "conductivity"
    kind = CONDUCTIVITY

    def __init__(self, grid: Grid1D, f=None, c0: float = 0.1, c1: float = 10.0):
        super().__init__(grid, f)
        if not 0 < c0 < c1:
            raise ValueError("need 0 < c0 < c1")
        self.c0, self.c1 = float(c0), float(c1)
        self.ellipticity_floor = 0.0
        self._M = pde1d.averaging_matrix(grid)
        stiff_full, mass_full = pde1d.discrete_h1_norms_full(grid)
        stiff, _ = pde1d.discrete_h1_norms(grid)
        self.param_ip = InnerProduct(pde1d.add(mass_full, stiff_full))
        self.data_ip = InnerProduct(stiff)

    def default_constraints(self) -> ConstraintSet:
        return ConstraintSet.box(self.grid.n + 2, lower=self.c0, upper=self.c1)

    def e_u_matrix(self, y):
        # A'(u)[du] y = G^T diag(G y) M du
        return self._G.T @ ((self._G @ y)[:, None] * self._M)

    def state_gradient(self, y):
        """Cell gradients ``(y_{i+1} - y_i)/h`` including the boundary cells."""
        return self._G @ y


def pde_forward(p: _EllipticProblem, u):
    return p.evaluate(u)


def pde_deriv_apply(p: _EllipticProblem, u, du):
    return p.deriv_apply(u, du)


def pde_adjoint_apply(p: _EllipticProblem, u, v):
    return p.adjoint_apply(u, v)


# ----------------------------------------------------------------------------
# exact-solution profiles and problem setups


PROFILES = ("constant", "one-plus-half-sine", "sine-squared", "custom")


def make_profile(name: str, x, value: float = 1.0, nodes=None):
    """Nodal values of a named coefficient profile at the points ``x``."""
    x = np.asarray(x, dtype=float)
    if name == "constant":
        return np.full(x.shape, float(value))
    if name == "one-plus-half-sine":
        return 1.0 + 0.5 * np.sin(2.0 * np.pi * x)
    if name == "sine-squared":
        return float(value) * np.sin(np.pi * x) ** 2
    if name == "custom":
        arr = np.asarray(nodes, dtype=float)
        if arr.shape != x.shape:
            raise ValueError(f"custom profile needs {x.size} values, got {arr.size}")
        return arr
    raise ValueError(f"unknown profile {name!r}; choose from {PROFILES}")


@dataclass(frozen=True, eq=False)
class InverseSetup:
    """A forward problem, its constraint set and a known exact solution."""

    problem: ForwardProblem
    constraints: ConstraintSet
    u_exact: np.ndarray

    def __post_init__(self):
        u = np.atleast_1d(np.asarray(self.u_exact, dtype=float))
        if not self.constraints.is_feasible(u, tol=1e-12):
            raise ValueError("exact solution is not feasible")
        object.__setattr__(self, "u_exact", u)

    @property
    def g_exact(self):
        return self.problem.evaluate(self.u_exact)

    def param_error(self, u) -> float:
        return self.problem.param_ip.norm(np.asarray(u) - self.u_exact)

    def residual_exact(self, u) -> float:
        return self.problem.data_ip.norm(self.problem.evaluate(u) - self.g_exact)


def scalar_setup(eps_scale: float = 0.1, g_exact: float = 0.016, lower=-np.inf, upper=np.inf) -> InverseSetup:
    p = ScalarQuadratic(eps_scale)
    return InverseSetup(p, ConstraintSet.box(1, lower, upper), np.array([scalar_exact_solution(eps_scale, g_exact)]))


def potential_setup(n: int = 99, profile: str = "sine-squared", value: float = 1.0, nodes=None, f=None) -> InverseSetup:
    p = Potential1D(Grid1D(n), f)
    u = make_profile(profile, p.grid.nodes, value=value, nodes=nodes)
    return InverseSetup(p, p.default_constraints(), u)


def conductivity_setup(n: int = 99, profile: str = "one-plus-half-sine", value: float = 1.0, nodes=None,
                       f=None, c0: float = 0.1, c1: float = 10.0) -> InverseSetup:
    p = Conductivity1D(Grid1D(n), f, c0=c0, c1=c1)
    u = make_profile(profile, p.grid.all_nodes, value=value, nodes=nodes)
    return InverseSetup(p, p.default_constraints(), u)
