"""Projected Gauss-Newton for the box-constrained Tikhonov functional."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import ConstraintSet, ForwardProblem, TikhonovResult

log = logging.getLogger(__name__)

# relative increase of J tolerated for steps taken in the round-off regime
VALUE_SLACK = 1e-14
# |grad| / (|fit grad| + |penalty grad|) accepted at the resolution limit
RESOLUTION_CANCELLATION = 1e-6


class NonFiniteValueError(FloatingPointError):
    """The functional evaluated to inf/nan at a feasible point."""


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = 200
    grad_tol: float = 1e-10
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    max_backtracks: int = 40
    gn_damping: float = 0.0

    def __post_init__(self):
        if self.max_iter <= 0 or self.grad_tol <= 0 or self.armijo_c <= 0 or self.max_backtracks <= 0:
            raise ValueError("solver options must be positive")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if self.gn_damping < 0:
            raise ValueError("gn_damping must be nonnegative")


class _Objective:
    """Functional, Euclidean gradient and Gauss-Newton matrix at a point."""

    def __init__(self, p: ForwardProblem, eta: float, g):
        self.p, self.eta, self.g = p, float(eta), np.asarray(g, dtype=float)
        self.WX = p.param_ip.weight
        self.WH = p.data_ip.weight

    def value(self, u) -> float:
        r = self.p.evaluate(u) - self.g
        val = 0.5 * float(r @ (self.WH @ r)) + 0.5 * self.eta * float(u @ (self.WX @ u))
        if not np.isfinite(val):
            raise NonFiniteValueError(f"non-finite functional value {val}")
        return val

    def linearize(self, u):
        p = self.p
        if hasattr(p, "linearize"):
            y, _, J = p.linearize(u)
        else:
            y, J = p.evaluate(u), p.jacobian(u)
        r = y - self.g
        WHr = self.WH @ r
        val = 0.5 * float(r @ WHr) + 0.5 * self.eta * float(u @ (self.WX @ u))
        if not np.isfinite(val):
            raise NonFiniteValueError(f"non-finite functional value {val}")
        fit_grad = J.T @ WHr
        pen_grad = self.eta * (self.WX @ u)
        # the two gradient parts cancel at a minimizer; below this the measure is noise
        self.grad_scale = np.linalg.norm(fit_grad) + np.linalg.norm(pen_grad)
        self.floor = 100 * np.finfo(float).eps * self.grad_scale
        return val, fit_grad + pen_grad, J


def stationarity(c: ConstraintSet, u, grad) -> float:
    """Projected-gradient measure ``||u - P(u - grad)||``; zero iff KKT holds."""
    return float(np.linalg.norm(u - c.project(u - grad)))


def _gn_direction(obj: _Objective, J, grad, free, damping):
    n = grad.size
    H = J.T @ (obj.WH @ J) + obj.eta * obj.WX
    if damping > 0:
        H = H + damping * np.diag(np.diag(obj.WX))
    s = np.zeros(n)
    idx = np.flatnonzero(free)
    if idx.size == 0:
        return s
    Hff = H[np.ix_(idx, idx)]
    try:
        cf = scipy.linalg.cho_factor(Hff)
        s[idx] = -scipy.linalg.cho_solve(cf, grad[idx])
    except np.linalg.LinAlgError:
        shift = 1e-8 * obj.eta * np.diag(obj.WX)[idx]
        cf = scipy.linalg.cho_factor(Hff + np.diag(np.maximum(shift, 1e-300)))
        s[idx] = -scipy.linalg.cho_solve(cf, grad[idx])
    return s


def _armijo(obj, c, u, val, grad, direction, opts):
    """Backtrack along the projection arc ``P(u + t d)``."""
    t = 1.0
    for k in range(opts.max_backtracks):
        trial = c.project(u + t * direction)
        step = trial - u
        if not np.any(step):
            return None, None, k + 1
        tval = obj.value(trial)
        slope = float(grad @ step)
        if tval <= val + opts.armijo_c * slope and tval <= val:
            return trial, tval, k + 1
        # predicted decrease below the round-off of J: accept within the slack
        if -slope <= 100 * np.finfo(float).eps * abs(val) and tval <= val + VALUE_SLACK * abs(val):
            return trial, tval, k + 1
        t *= opts.backtrack_factor
    return None, None, opts.max_backtracks


def minimize(p: ForwardProblem, c: ConstraintSet, eta: float, g, u0=None, opts: SolverOptions | None = None) -> TikhonovResult:
    """Minimize ``1/2||K(u)-g||_H^2 + eta/2||u||_X^2`` over the box ``c``.

    Search direction: Gauss-Newton step on the variables not pinned at an
    active bound, then backtracking along the projection arc. If the
    Gauss-Newton step fails to produce an Armijo decrease, a scaled
    projected-gradient step is tried before giving up.
    """
    opts = opts or SolverOptions()
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    g = np.asarray(g, dtype=float)
    u = c.project(c.project(np.zeros(c.dim)) if u0 is None else np.asarray(u0, dtype=float))
    obj = _Objective(p, eta, g)

    # tolerance scale independent of the warm start
    zero = c.project(np.zeros(c.dim))
    _, grad0, _ = obj.linearize(zero)
    val, grad, J = obj.linearize(u)
    scale = max(stationarity(c, zero, grad0), stationarity(c, u, grad), np.finfo(float).tiny)
    tol = opts.grad_tol * scale

    history = [val]
    status = "max_iter"
    converged = False
    backtracks = 0
    it = 0
    for it in range(opts.max_iter + 1):
        meas = stationarity(c, u, grad)
        # small eta or a close warm start: the gradient parts are tiny, so
        # judge the measure against them rather than the cold-start gradient
        if meas <= max(min(tol, opts.grad_tol * obj.grad_scale), obj.floor):
            converged, status = True, "converged"
            break
        if it == opts.max_iter:
            break
        # variables held at a bound where the gradient points outward
        at_lo = c.active_lower(u) & (grad > 0)
        at_hi = c.active_upper(u) & (grad < 0)
        free = ~(at_lo | at_hi)
        d = _gn_direction(obj, J, grad, free, opts.gn_damping)
        if -float(grad @ d) <= p.value_resolution * abs(val):
            # The model decrease is below what evaluations of J resolve, so J
            # cannot referee the step; use the stationarity measure instead.
            trial = c.project(u + d)
            tval = obj.value(trial)
            if tval > val + p.value_resolution * abs(val):
                status = "resolution_limit"
                break
            tv, tg, tJ = obj.linearize(trial)
            if stationarity(c, trial, tg) >= meas:
                obj.linearize(u)
                status = "resolution_limit"
                break
            u, val, grad, J = trial, tv, tg, tJ
            history.append(val)
            continue
        trial, tval, nb = _armijo(obj, c, u, val, grad, d, opts)
        backtracks += nb
        if trial is None:
            # fallback: projected gradient in the parameter metric, GN-scaled
            dg = -p.param_ip.solve(grad)
            Jd = J @ dg
            curv = float(Jd @ (obj.WH @ Jd)) + eta * float(dg @ (obj.WX @ dg))
            t0 = -float(grad @ dg) / curv if curv > 0 else 1.0
            trial, tval, nb = _armijo(obj, c, u, val, grad, t0 * dg, opts)
            backtracks += nb
        if trial is None:
            status = "line_search_failed"
            break
        u = trial
        val, grad, J = obj.linearize(u)
        history.append(val)

    meas = stationarity(c, u, grad)
    if not converged and status in ("line_search_failed", "resolution_limit"):
        # accept when the gradient vanishes relative to its two cancelling parts
        converged = meas <= RESOLUTION_CANCELLATION * obj.grad_scale
    return TikhonovResult.from_point(
        p, eta, g, u, iterations=it, converged=converged, stationarity=meas, status=status,
        telemetry={"backtracks": backtracks, "history": history, "tolerance": tol},
    )


def value_function_sweep(p: ForwardProblem, c: ConstraintSet, g, etas, opts: SolverOptions | None = None, u0=None):
    """Solve along a descending list of ``eta``, warm-starting each solve."""
    etas = np.asarray(etas, dtype=float)
    if np.any(etas <= 0):
        raise ValueError("etas must be positive")
    if np.any(np.diff(etas) > 0):
        raise ValueError("etas must be sorted in descending order")
    results = []
    u = u0
    for eta in etas:
        try:
            res = minimize(p, c, eta, g, u, opts)
        except (NonFiniteValueError, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("solve failed at eta=%g: %s", eta, exc)
            res = TikhonovResult(u=np.full(c.dim, np.nan), eta=float(eta), residual_norm=np.nan, penalty=np.nan,
                                 value=np.nan, iterations=0, converged=False, status=f"error: {exc}")
            results.append(res)
            continue
        results.append(res)
        u = res.u
    return results
