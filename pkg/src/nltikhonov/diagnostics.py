"""Numerical checks of the structural conditions behind the convergence theory.

Everything here works in coordinates. Multipliers ``mu`` are dual vectors
(paired with primal directions by the Euclidean dot product), so the source
condition ``K'(u†)^* w + mu† = u†`` reads ``J^T W_H w + mu = W_X u†`` with
``J`` the Jacobian matrix. Its state-space variant replaces ``J^T W_H w`` by
``E_u^T rho``, where ``E_u`` is the matrix of ``du -> A'(u)[du] y``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .core import FREE, ConstraintSet, ForwardProblem
from .problems import Conductivity1D, Potential1D, ScalarQuadratic, _EllipticProblem

FIT_MAX_SWEEPS = 100
FIT_STAGNATION = 1e-10
RIDGE_FACTOR = 1e-10


class DegenerateDenominatorError(ZeroDivisionError):
    """The pointwise representation divides by a vanishing component."""

    def __init__(self, index):
        super().__init__(f"e_u(u_ref, y(u_ref)) vanishes at index {index}")
        self.index = index


@dataclass(frozen=True, eq=False)
class SourceFit:
    """Least-squares representer for a source condition.

    ``representer`` is ``w`` (data space) or ``rho`` (state space);
    ``multiplier`` the dual ``mu``. ``relative_residual`` is the X-norm of
    the misfit over ``||u†||_X``; ``masked_relative_residual`` restricts the
    misfit to the rows kept in the fit.
    """

    representer: np.ndarray
    multiplier: np.ndarray
    relative_residual: float
    fit_regularization: float
    residual: np.ndarray = field(default=None)
    masked_relative_residual: float = float("nan")
    mask: np.ndarray = field(default=None)
    sweeps: int = 0
    kind: str = "scon"

    @property
    def flagged(self) -> bool:
        """Heuristic flag: the fit explains less than 99% of ``u†``."""
        return bool(self.relative_residual > 1e-2)


@dataclass(frozen=True, eq=False)
class ConditionMargin:
    """Minimum of LHS - RHS of a sampled inequality and where it occurred."""

    samples: int
    min_margin: float
    worst_point: np.ndarray
    parameters: dict
    margins: np.ndarray = field(default=None)
    extra: dict = field(default_factory=dict)


def _require(c: ConstraintSet | None, u, what):
    u = np.asarray(u, dtype=float)
    if c is not None:
        c.require_feasible(u, what)
    return u


def second_order_error(p: ForwardProblem, u, u_ref, c: ConstraintSet | None = None):
    """``E(u, u_ref) = K(u) - K(u_ref) - K'(u_ref)(u - u_ref)``."""
    u = _require(c, u, "u")
    u_ref = _require(c, u_ref, "u_ref")
    return p.evaluate(u) - p.evaluate(u_ref) - p.deriv_apply(u_ref, u - u_ref)


def nonlinearity_term_direct(p: ForwardProblem, w, u, u_ref, c: ConstraintSet | None = None) -> float:
    """``<w, E(u, u_ref)>_H``."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if w.shape != (p.dim_data,):
        raise ValueError(f"w has shape {w.shape}, data space has dimension {p.dim_data}")
    return p.data_ip.inner(w, second_order_error(p, u, u_ref, c))


def nonlinearity_term_bilinear(p, u, u_ref, mu=None) -> float:
    """The ``w``-free form of ``<w, E(u, u†)>`` for problems with local ``e_u``.

    With ``W_X u† - mu = E_u(u†)^T rho`` and ``e_u`` acting pointwise,

        <w, E(u, u†)> = sum_i (W_X u† - mu)_i (u - u†)_i (e_i(u) - e_i(u†)) / e_i(u†)

    where ``e(u) = y(u)`` for the potential problem. For the scalar problem
    ``e`` is the derivative and ``e(u)`` the chord slope, giving
    ``(u† - mu) (S(u, u†) - K'(u†)) / K'(u†) (u - u†)``.

    Raises
    ------
    DegenerateDenominatorError
        If ``e(u†)`` has a zero component.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    u_ref = np.atleast_1d(np.asarray(u_ref, dtype=float))
    mu = np.zeros_like(u_ref) if mu is None else np.atleast_1d(np.asarray(mu, dtype=float))
    if isinstance(p, ScalarQuadratic):
        num = p.secant(u, u_ref) - p.dk(u_ref)
        den = p.dk(u_ref)
    elif isinstance(p, Potential1D):
        den = p.state(u_ref)
        num = p.state(u) - den
    else:
        raise TypeError(f"{type(p).__name__} has no pointwise e_u; the representation does not apply")
    bad = np.flatnonzero(den == 0)
    if bad.size:
        raise DegenerateDenominatorError(int(bad[0]))
    weighted = p.param_ip.apply(u_ref) - mu
    return float(np.dot(weighted, (u - u_ref) * num / den))


def representation_tolerance(p, fit: SourceFit, u, u_ref) -> float:
    """Bound on ``|direct - bilinear|`` implied by a fit's residual.

    The two forms differ by ``r . ((u - u†) (e(u) - e(u†)) / e(u†))`` with ``r``
    the dual misfit, which is at most ``||r||_{X*}`` times the X-norm of the
    second factor. A round-off allowance covers the cancellation in forming
    ``E`` from values of size ``||K(u)||``.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    u_ref = np.atleast_1d(np.asarray(u_ref, dtype=float))
    if isinstance(p, ScalarQuadratic):
        v = (u - u_ref) * (p.secant(u, u_ref) - p.dk(u_ref)) / p.dk(u_ref)
    else:
        y_ref = p.state(u_ref)
        v = (u - u_ref) * (p.state(u) - y_ref) / y_ref
    fit_part = fit.relative_residual * p.param_ip.norm(u_ref) * p.param_ip.norm(v)
    size = p.data_ip.norm(p.evaluate(u)) + p.data_ip.norm(p.evaluate(u_ref))
    return fit_part + p.value_resolution * p.data_ip.norm(fit.representer) * size


# ----------------------------------------------------------------------------
# source-condition fits


def _quadratic_cd(Q, t, mu, pattern, sweeps=50):
    """Coordinate descent for ``min (mu - t)^T Q (mu - t)`` under the sign pattern."""
    free = pattern == FREE
    mu = np.where(free, 0.0, mu)
    idx = np.flatnonzero(~free & (np.diag(Q) > 0))
    for _ in range(sweeps):
        moved = 0.0
        for i in idx:
            g_i = Q[i] @ (mu - t)
            new = mu[i] - g_i / Q[i, i]
            if pattern[i] == 1:
                new = max(new, 0.0)
            elif pattern[i] == -1:
                new = min(new, 0.0)
            moved = max(moved, abs(new - mu[i]))
            mu[i] = new
        if moved <= 1e-15 * max(1.0, np.max(np.abs(mu), initial=0.0)):
            break
    return mu


def _fit(B, b, WX, R, pattern, ridge, keep):
    """Alternating fit of ``B v + mu = b`` in the metric ``D W_X^{-1} D``.

    ``D`` zeroes the rows not in ``keep``. Each representer step solves the
    whitened, ridge-stacked least-squares problem by SVD rather than through
    normal equations, whose conditioning would be squared. Starts with a
    multiplier step from ``v = 0``.
    """
    m = B.shape[1]
    D = keep.astype(float)
    # W_X^{-1} = C^{-1} C^{-T} with C the upper Cholesky factor of W_X
    C = scipy.linalg.cholesky(WX)
    whiten = lambda z: scipy.linalg.solve_triangular(C, D[:, None] * z if z.ndim == 2 else D * z, trans="T")
    WB = whiten(B)
    Rh = scipy.linalg.cholesky(R)
    if ridge is None:
        top = scipy.linalg.svdvals(scipy.linalg.solve_triangular(Rh, WB.T, trans="T"))[0] ** 2
        ridge = RIDGE_FACTOR * max(top, np.finfo(float).tiny)
    stacked = np.vstack([WB, np.sqrt(ridge) * Rh])
    Winv = scipy.linalg.cho_solve((C, False), np.eye(b.size))
    Q = D[:, None] * Winv * D[None, :]
    v = np.zeros(m)
    mu = np.zeros_like(b)
    only_free = bool(np.all(pattern == FREE))
    prev = np.inf
    sweeps = 0
    for sweeps in range(1, FIT_MAX_SWEEPS + 1):
        if not only_free:
            mu = _quadratic_cd(Q, b - B @ v, mu, pattern)
        rhs = np.concatenate([whiten(b - mu), np.zeros(m)])
        v = scipy.linalg.lstsq(stacked, rhs, lapack_driver="gelsd")[0]
        r = B @ v + mu - b
        obj = float(r @ Q @ r) + ridge * float(v @ R @ v)
        if only_free or prev - obj <= FIT_STAGNATION * max(prev, np.finfo(float).tiny):
            break
        prev = obj
    return v, mu, ridge, sweeps


def _finish(p, u_exact, v, mu, ridge, sweeps, B, keep, kind):
    b = p.param_ip.apply(u_exact)
    r = B @ v + mu - b
    scale = p.param_ip.norm(u_exact)
    if scale == 0:
        rel = masked = 0.0 if not np.any(r) else float("inf")
    else:
        rel = p.param_ip.dual_norm(r) / scale
        masked = p.param_ip.dual_norm(np.where(keep, r, 0.0)) / scale
    return SourceFit(representer=v, multiplier=mu, relative_residual=rel, fit_regularization=ridge,
                     residual=r, masked_relative_residual=masked, mask=keep, sweeps=sweeps, kind=kind)


def _rows(n, exclude):
    if exclude is None:
        return np.ones(n, dtype=bool)
    exclude = np.asarray(exclude, dtype=bool)
    if exclude.shape != (n,):
        raise ValueError(f"exclude mask must have length {n}")
    return ~exclude


def source_fit_scon(p: ForwardProblem, c: ConstraintSet, u_exact, ridge: float | None = None,
                    exclude=None) -> SourceFit:
    """Fit ``K'(u†)^* w + mu = u†`` with ``mu`` obeying the sign pattern at ``u†``.

    Minimizes ``||K'(u†)^* w + mu - u†||_X^2 + ridge ||w||_H^2``. The default
    ridge is ``1e-10`` times the largest eigenvalue of the normal operator.
    """
    u_exact = c.require_feasible(np.atleast_1d(u_exact), "u_exact")
    pattern = c.sign_pattern(u_exact)
    J = p.jacobian(u_exact)
    B = J.T @ p.data_ip.weight
    keep = _rows(p.dim_param, exclude)
    v, mu, ridge, sweeps = _fit(B, p.param_ip.apply(u_exact), p.param_ip.weight,
                                p.data_ip.weight, pattern, ridge, keep)
    return _finish(p, u_exact, v, mu, ridge, sweeps, B, keep, "scon")


def source_fit_nscon(p: _EllipticProblem, c: ConstraintSet, u_exact, ridge: float | None = None,
                     exclude=None) -> SourceFit:
    """Fit the state-space form ``E_u(u†)^T rho + mu = W_X u†``.

    ``exclude`` drops rows (parameter nodes) from the fit, e.g. around
    points where the state gradient vanishes; the masked residual then
    measures the fit on the remaining rows only.
    """
    if not isinstance(p, _EllipticProblem):
        raise TypeError("the state-space source condition needs an elliptic problem")
    u_exact = c.require_feasible(np.atleast_1d(u_exact), "u_exact")
    pattern = c.sign_pattern(u_exact)
    B = p.e_u_matrix(p.state(u_exact)).T
    keep = _rows(p.dim_param, exclude)
    v, mu, ridge, sweeps = _fit(B, p.param_ip.apply(u_exact), p.param_ip.weight,
                                p.data_ip.weight, pattern, ridge, keep)
    return _finish(p, u_exact, v, mu, ridge, sweeps, B, keep, "nscon")


def state_representer(p: _EllipticProblem, u_exact, w):
    """``rho = -A(u†)^{-1} W_H w``, the state-space image of a data-space ``w``."""
    return -p.operator(u_exact).solve(p.data_ip.apply(w))


def degeneracy_mask(p: Conductivity1D, u_exact, width: float = 1.0, rel_tol: float = 0.0):
    """Nodes within ``width`` cells of a sign change (or near-zero) of ``y'(u†)``.

    Returns a boolean mask over the ``n + 2`` parameter nodes.
    """
    gy = p.state_gradient(p.state(u_exact))
    mid = p.grid.midpoints
    h = p.grid.h
    flips = np.flatnonzero(np.sign(gy[:-1]) * np.sign(gy[1:]) < 0)
    # a sign change between cells c and c+1 sits at node c+1
    centres = list(p.grid.all_nodes[flips + 1])
    if rel_tol > 0:
        centres += list(mid[np.abs(gy) <= rel_tol * np.max(np.abs(gy))])
    x = p.grid.all_nodes
    mask = np.zeros(x.size, dtype=bool)
    for x0 in centres:
        mask |= np.abs(x - x0) <= width * h + 1e-12
    return mask


# ----------------------------------------------------------------------------
# sampled condition scans


def _directions(p: ForwardProblem, samples: int, radius: float, seed):
    """Seeded unit directions (X-norm) with radius-stratified step lengths."""
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((samples, p.dim_param))
    norms = np.sqrt(np.einsum("ij,jk,ik->i", d, p.param_ip.weight, d))
    d /= norms[:, None]
    # stratify over log radius from radius*1e-3 to radius
    s = (np.arange(samples) + rng.random(samples)) / samples
    r = radius * 10.0 ** (-3.0 * (1.0 - s))
    return d, r


def ncon_margin_scan(p: ForwardProblem, c: ConstraintSet, u_exact, w, mu, c_r: float = 0.0,
                     eps_coercive: float = 1.0, samples: int = 200, radius: float = 1.0, seed=0) -> ConditionMargin:
    """Sample the nonlinearity condition at feasible ``u`` around ``u†``.

    Margin = ``c_r/2 ||K(u)-K(u†)||^2 + (1-eps)/2 ||u-u†||^2 - <w, E(u,u†)> + mu.(u-u†)``.
    """
    if samples < 100:
        raise ValueError("need at least 100 samples")
    u_exact = c.require_feasible(np.atleast_1d(u_exact), "u_exact")
    w = np.atleast_1d(np.asarray(w, dtype=float))
    mu = np.zeros_like(u_exact) if mu is None else np.atleast_1d(np.asarray(mu, dtype=float))
    d, r = _directions(p, samples, radius, seed)
    k_ref = p.evaluate(u_exact)
    margins = np.empty(samples)
    points = np.empty((samples, u_exact.size))
    for i in range(samples):
        u = c.project(u_exact + r[i] * d[i])
        du = u - u_exact
        dk = p.evaluate(u) - k_ref
        E = dk - p.deriv_apply(u_exact, du)
        margins[i] = (0.5 * c_r * p.data_ip.inner(dk, dk) + 0.5 * (1.0 - eps_coercive) * p.param_ip.inner(du, du)
                      - p.data_ip.inner(w, E) + float(mu @ du))
        points[i] = u
    k = int(np.argmin(margins))
    return ConditionMargin(samples=samples, min_margin=float(margins[k]), worst_point=points[k],
                           parameters={"c_r": c_r, "eps": eps_coercive, "radius": radius, "seed": seed},
                           margins=margins)


def tikhonov_multiplier(p: ForwardProblem, eta: float, u_eta, g):
    """Dual ``mu_eta = W_X u_eta + (1/eta) J^T W_H (K(u_eta) - g)``."""
    u_eta = np.atleast_1d(np.asarray(u_eta, dtype=float))
    r = p.evaluate(u_eta) - np.asarray(g, dtype=float)
    return p.param_ip.apply(u_eta) + p.jacobian(u_eta).T @ p.data_ip.apply(r) / eta


def sosc_margin_scan(p: ForwardProblem, c: ConstraintSet, eta: float, u_eta, g_exact, c_s: float = 0.5,
                     eps_prime: float = 0.5, samples: int = 200, radius: float = 1.0, seed=0) -> ConditionMargin:
    """Sample the strengthened second-order condition at a Tikhonov minimizer.

    Margin = ``(1-c_s)/2 ||K(u_eta)-K(u)||^2 + (1-eps')eta/2 ||u-u_eta||^2
    + <K(u_eta)-g†, E(u,u_eta)> + eta mu_eta.(u-u_eta)``.
    On the scalar problem the scan also checks the closed form of the
    nonlinearity term, reported as ``extra["scalar_identity_max_error"]``.
    """
    if samples < 100:
        raise ValueError("need at least 100 samples")
    if not eta > 0:
        raise ValueError("eta must be positive")
    u_eta = c.require_feasible(np.atleast_1d(u_eta), "u_eta")
    g_exact = np.atleast_1d(np.asarray(g_exact, dtype=float))
    mu = tikhonov_multiplier(p, eta, u_eta, g_exact)
    # multipliers vanish on inactive components; drop solver round-off there
    mu = c.project_multiplier(mu, c.sign_pattern(u_eta))
    k_eta = p.evaluate(u_eta)
    r_eta = k_eta - g_exact
    d, r = _directions(p, samples, radius, seed)
    margins = np.empty(samples)
    points = np.empty((samples, u_eta.size))
    scalar = isinstance(p, ScalarQuadratic)
    ident_err = 0.0
    for i in range(samples):
        u = c.project(u_eta + r[i] * d[i])
        du = u - u_eta
        dk = p.evaluate(u) - k_eta
        E = dk - p.deriv_apply(u_eta, du)
        term = p.data_ip.inner(r_eta, E)
        margins[i] = (0.5 * (1.0 - c_s) * p.data_ip.inner(dk, dk) + 0.5 * (1.0 - eps_prime) * eta * p.param_ip.inner(du, du)
                      + term + eta * float(mu @ du))
        points[i] = u
        if scalar:
            ue = float(u_eta[0])
            closed = eta * ue / (1.0 - 2.0 * ue) * float(du[0]) ** 2
            ident_err = max(ident_err, abs(term - closed))
    k = int(np.argmin(margins))
    extra = {"scalar_identity_max_error": ident_err} if scalar else {}
    return ConditionMargin(samples=samples, min_margin=float(margins[k]), worst_point=points[k],
                           parameters={"c_s": c_s, "eps_prime": eps_prime, "eta": eta, "radius": radius, "seed": seed},
                           margins=margins, extra=extra)


def classical_condition_report(p: ForwardProblem, c: ConstraintSet, u_exact, w, probes: int = 20, seed=0,
                               radius: float = 0.5) -> dict:
    """Compare ``L ||w||`` with 1, the classical smallness condition.

    ``L`` is exact for the scalar problem and otherwise estimated from
    probe pairs as ``max ||(K'(a) - K'(b)) v|| / ||a - b||`` over random
    unit directions ``v``; the estimate is a lower bound.
    """
    if probes < 10:
        raise ValueError("need at least 10 probes")
    u_exact = c.require_feasible(np.atleast_1d(u_exact), "u_exact")
    w = np.atleast_1d(np.asarray(w, dtype=float))
    w_norm = p.data_ip.norm(w)
    if isinstance(p, ScalarQuadratic):
        L, exact = p.lipschitz, True
    else:
        rng = np.random.default_rng(seed)
        L, exact = 0.0, False
        for _ in range(probes):
            da, db, v = (rng.standard_normal(p.dim_param) for _ in range(3))
            a = c.project(u_exact + radius * rng.random() * da / p.param_ip.norm(da))
            b = c.project(u_exact + radius * rng.random() * db / p.param_ip.norm(db))
            gap = p.param_ip.norm(a - b)
            if gap == 0:
                continue
            v /= p.param_ip.norm(v)
            diff = p.deriv_apply(a, v) - p.deriv_apply(b, v)
            L = max(L, p.data_ip.norm(diff) / gap)
    return {"L_est": float(L), "L_exact": exact, "w_norm": w_norm, "L_times_w": float(L * w_norm),
            "satisfied": bool(L * w_norm < 1.0), "probes": probes}
