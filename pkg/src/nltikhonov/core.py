"""Spaces, box constraints, the forward-problem contract and the Tikhonov functional.

Vectors are plain 1-D numpy arrays. Both Hilbert spaces are realized as
``R^n`` with a symmetric positive-definite weight ``W`` so that
``<a, b> = a^T W b``. Lagrange multipliers are kept in *dual* form, i.e. as
vectors paired with primal directions through the plain Euclidean dot
product; for box constraints this makes the sign structure componentwise.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


class InfeasibleError(ValueError):
    """Raised when a point violates the constraint set it must lie in."""


class InnerProduct:
    """Weighted inner product ``<a, b>_W = a^T W b``.

    Parameters
    ----------
    weight : ndarray or TridiagonalSystem
        Symmetric positive-definite weight. Tridiagonal operators from
        :mod:`nltikhonov.pde1d` are densified.
    """

    def __init__(self, weight):
        if hasattr(weight, "to_dense"):
            weight = weight.to_dense()
        weight = np.atleast_2d(np.asarray(weight, dtype=float))
        if weight.shape[0] != weight.shape[1]:
            raise ValueError(f"weight must be square, got {weight.shape}")
        if not np.allclose(weight, weight.T, rtol=1e-13, atol=0.0):
            raise ValueError("weight must be symmetric")
        self.weight = 0.5 * (weight + weight.T)
        self._chol = scipy.linalg.cho_factor(self.weight)  # raises if not SPD
        self._diagonal = np.count_nonzero(self.weight - np.diag(np.diag(self.weight))) == 0

    @classmethod
    def identity(cls, n: int, scale: float = 1.0) -> "InnerProduct":
        return cls(scale * np.eye(n))

    @property
    def dim(self) -> int:
        return self.weight.shape[0]

    def apply(self, a):
        """Return ``W a`` (the Riesz map from primal to dual)."""
        return self.weight @ a

    def solve(self, b):
        """Return ``W^{-1} b`` (the inverse Riesz map)."""
        if self._diagonal:
            d = np.diag(self.weight)
            return b / (d if np.ndim(b) == 1 else d[:, None])
        return scipy.linalg.cho_solve(self._chol, b)

    def inner(self, a, b) -> float:
        return float(np.dot(a, self.weight @ b))

    def norm(self, a) -> float:
        return float(np.sqrt(max(self.inner(a, a), 0.0)))

    def dual_norm(self, r) -> float:
        """Norm of a dual vector, ``sqrt(r^T W^{-1} r)``."""
        return float(np.sqrt(max(np.dot(r, self.solve(r)), 0.0)))


# sign codes returned by ConstraintSet.sign_pattern
FREE = 0          # mu must vanish
NONNEG = 1        # active lower bound: mu >= 0
NONPOS = -1       # active upper bound: mu <= 0
UNRESTRICTED = 2  # lower == upper: any sign


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Componentwise box ``lower <= u <= upper``; infinite bounds allowed."""

    lower: np.ndarray
    upper: np.ndarray
    active_tol: float = 1e-12

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        lo, hi = np.broadcast_arrays(lo, hi)
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo.copy())
        object.__setattr__(self, "upper", hi.copy())

    @classmethod
    def unconstrained(cls, n: int) -> "ConstraintSet":
        return cls(np.full(n, -np.inf), np.full(n, np.inf))

    @classmethod
    def box(cls, n: int, lower=-np.inf, upper=np.inf) -> "ConstraintSet":
        return cls(np.full(n, float(lower)), np.full(n, float(upper)))

    @property
    def dim(self) -> int:
        return self.lower.size

    def _check_dim(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape != self.lower.shape:
            raise ValueError(f"dimension mismatch: point {u.shape} vs constraint {self.lower.shape}")
        return u

    def project(self, u):
        return np.clip(self._check_dim(u), self.lower, self.upper)

    def is_feasible(self, u, tol: float = 0.0) -> bool:
        u = self._check_dim(u)
        return bool(np.all(u >= self.lower - tol) and np.all(u <= self.upper + tol))

    def require_feasible(self, u, what: str = "point"):
        if not self.is_feasible(u, tol=self.active_tol):
            raise InfeasibleError(f"{what} violates the constraint set")
        return np.asarray(u, dtype=float)

    def _slack(self, bound):
        b = np.where(np.isfinite(bound), bound, 0.0)
        return self.active_tol * np.maximum(1.0, np.abs(b))

    def active_lower(self, u):
        with np.errstate(invalid="ignore"):
            return np.isfinite(self.lower) & (u <= self.lower + self._slack(self.lower))

    def active_upper(self, u):
        with np.errstate(invalid="ignore"):
            return np.isfinite(self.upper) & (u >= self.upper - self._slack(self.upper))

    def sign_pattern(self, u):
        """Admissible sign of each multiplier component at the feasible point ``u``.

        Returns an int array with codes ``NONNEG`` (active lower bound),
        ``NONPOS`` (active upper bound), ``UNRESTRICTED`` (both active) and
        ``FREE`` (inactive; the component must vanish). Any dual ``mu`` obeying
        the pattern satisfies ``mu . (v - u) >= 0`` for every feasible ``v``.
        """
        u = self.require_feasible(u)
        lo = self.active_lower(u)
        hi = self.active_upper(u)
        pattern = np.full(u.shape, FREE, dtype=int)
        pattern[lo] = NONNEG
        pattern[hi] = NONPOS
        pattern[lo & hi] = UNRESTRICTED
        return pattern

    def project_multiplier(self, mu, pattern):
        """Project a dual vector onto the cone allowed by ``pattern``."""
        mu = np.array(mu, dtype=float)
        mu[pattern == FREE] = 0.0
        mu[pattern == NONNEG] = np.maximum(mu[pattern == NONNEG], 0.0)
        mu[pattern == NONPOS] = np.minimum(mu[pattern == NONPOS], 0.0)
        return mu


def multiplier_sign_pattern(c: ConstraintSet, u):
    return c.sign_pattern(u)


def project(c: ConstraintSet, u):
    return c.project(u)


class ForwardProblem(abc.ABC):
    """Contract for a differentiable forward operator ``K: X -> H``.

    Subclasses set ``param_ip`` and ``data_ip`` and implement the three
    hooks. ``adjoint_apply`` must be the exact adjoint of ``deriv_apply``
    with respect to the two weighted inner products.
    """

    param_ip: InnerProduct
    data_ip: InnerProduct
    name = "problem"
    # relative accuracy to which J can be evaluated
    value_resolution = 1e-14

    @property
    def dim_param(self) -> int:
        return self.param_ip.dim

    @property
    def dim_data(self) -> int:
        return self.data_ip.dim

    @abc.abstractmethod
    def evaluate(self, u):
        """Return ``K(u)``."""

    @abc.abstractmethod
    def deriv_apply(self, u, du):
        """Return ``K'(u) du``."""

    @abc.abstractmethod
    def adjoint_apply(self, u, v):
        """Return ``K'(u)^* v`` (adjoint in the weighted inner products)."""

    def jacobian(self, u):
        """Dense matrix of ``K'(u)`` in coordinates; column-by-column fallback."""
        eye = np.eye(self.dim_param)
        return np.column_stack([self.deriv_apply(u, eye[:, j]) for j in range(self.dim_param)])

    def check_domain(self, u):
        """Hook for problems whose operator is only defined on part of ``R^n``."""
        return np.asarray(u, dtype=float)


@dataclass(frozen=True, eq=False)
class TikhonovResult:
    """Minimizer of the Tikhonov functional at a fixed ``eta`` plus telemetry."""

    u: np.ndarray
    eta: float
    residual_norm: float
    penalty: float
    value: float
    iterations: int
    converged: bool
    stationarity: float = float("nan")
    status: str = ""
    telemetry: dict = field(default_factory=dict)

    @classmethod
    def from_point(cls, p: ForwardProblem, eta: float, g, u, **kwargs) -> "TikhonovResult":
        residual_norm = p.data_ip.norm(p.evaluate(u) - g)
        penalty = 0.5 * p.param_ip.inner(u, u)
        value = 0.5 * residual_norm**2 + eta * penalty
        return cls(u=np.array(u, dtype=float), eta=float(eta), residual_norm=residual_norm,
                   penalty=penalty, value=value, **kwargs)


def tikhonov_value(p: ForwardProblem, c: ConstraintSet, eta: float, g, u) -> float:
    """``1/2 ||K(u) - g||_H^2 + eta/2 ||u||_X^2`` at a feasible ``u``."""
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    u = c.require_feasible(u)
    r = p.evaluate(u) - np.asarray(g, dtype=float)
    return 0.5 * p.data_ip.inner(r, r) + 0.5 * eta * p.param_ip.inner(u, u)
