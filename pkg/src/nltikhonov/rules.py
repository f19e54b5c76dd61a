"""Regularization-parameter choice rules built on warm-started solver sweeps.

Four rules: a priori (``eta = c * delta``), the discrepancy principle, the
balancing principle (minimize ``F(eta)^(1+gamma) / eta``) and the Hanke-Raus
rule (minimize ``residual^2 / eta``). All a posteriori rules search a finite
geometric grid ``[eta_min, eta_max]`` in place of ``[0, ||K||^2]``, since the
operator norm of a nonlinear ``K`` is not defined.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import ConstraintSet, ForwardProblem, TikhonovResult
from .solver import SolverOptions, minimize, value_function_sweep

log = logging.getLogger(__name__)

A_PRIORI = "a-priori"
DISCREPANCY = "discrepancy"
BALANCING = "balancing"
HANKE_RAUS = "hanke-raus"
RULES = (A_PRIORI, DISCREPANCY, BALANCING, HANKE_RAUS)


class RuleFailure(RuntimeError):
    """A parameter-choice rule could not select an ``eta``.

    ``side`` names what went wrong: ``"eta_max"`` when the residual is
    already below the target at the largest ``eta`` (noise too large for the
    data), ``"eta_min"`` when it stays above the target at the smallest
    ``eta``, ``"solver"`` when no grid solve succeeded and ``"degenerate"``
    when the rule is undefined for the data.
    """

    def __init__(self, message: str, side: str):
        super().__init__(message)
        self.side = side


@dataclass(frozen=True)
class EtaGrid:
    """Geometric grid of regularization parameters, stored largest first."""

    eta_min: float = 1e-12
    eta_max: float = 1e2
    count: int = 60

    def __post_init__(self):
        if not 0 < self.eta_min < self.eta_max:
            raise ValueError(f"need 0 < eta_min < eta_max, got {self.eta_min}, {self.eta_max}")
        if self.count < 8:
            raise ValueError(f"grid needs at least 8 points, got {self.count}")

    def values(self):
        """Descending grid, ``eta_max`` first."""
        return np.geomspace(self.eta_max, self.eta_min, self.count)

    def refined(self, factor: int = 10) -> "EtaGrid":
        return EtaGrid(self.eta_min, self.eta_max, (self.count - 1) * factor + 1)

    @classmethod
    def parse(cls, text: str) -> "EtaGrid":
        """Read ``"min,max,count"``."""
        parts = [s.strip() for s in text.split(",")]
        if len(parts) != 3:
            raise ValueError(f"grid must be 'min,max,count', got {text!r}")
        return cls(float(parts[0]), float(parts[1]), int(parts[2]))


@dataclass(frozen=True, eq=False)
class ChosenParameter:
    """Selected ``eta``, the Tikhonov solution there, and rule diagnostics."""

    rule: str
    eta_star: float
    result: TikhonovResult
    realized_residual: float
    rule_diagnostics: dict = field(default_factory=dict)

    @property
    def u(self):
        return self.result.u


def _chosen(rule, res: TikhonovResult, diagnostics) -> ChosenParameter:
    return ChosenParameter(rule=rule, eta_star=res.eta, result=res, realized_residual=res.residual_norm,
                           rule_diagnostics=diagnostics)


def choose_a_priori(delta: float, c_ap: float = 1.0) -> float:
    """The a priori choice ``eta = c_ap * delta``."""
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if not c_ap > 0:
        raise ValueError(f"c_ap must be positive, got {c_ap}")
    return c_ap * delta


def _usable(results):
    return np.array([np.isfinite(r.residual_norm) for r in results])


def choose_discrepancy(p: ForwardProblem, c: ConstraintSet, g, delta: float, c_m: float = 1.1,
                       grid: EtaGrid | None = None, opts: SolverOptions | None = None,
                       rel_tol: float = 1e-3, max_bisections: int = 60) -> ChosenParameter:
    """Find ``eta`` with ``||K(u_eta) - g|| = c_m * delta``.

    A warm-started sweep down the grid brackets the first crossing of the
    target; bisection in ``log eta`` then shrinks the bracket to relative
    width ``rel_tol``. The bracket end whose residual is closest to the
    target is returned.

    Raises
    ------
    RuleFailure
        If the grid does not bracket the target.
    """
    if c_m < 1:
        raise ValueError(f"c_m must be >= 1, got {c_m}")
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    grid = grid or EtaGrid()
    target = c_m * delta
    etas = grid.values()

    # sweep from the top until the residual drops below the target
    results: list[TikhonovResult] = []
    u = None
    hit = None
    for k, eta in enumerate(etas):
        res = value_function_sweep(p, c, g, [eta], opts, u0=u)[0]
        results.append(res)
        if not np.isfinite(res.residual_norm):
            continue
        u = res.u
        if k == 0 and res.residual_norm <= target:
            raise RuleFailure(
                f"residual {res.residual_norm:.3g} at eta_max={grid.eta_max:g} is already below "
                f"c_m*delta={target:.3g}; noise level too large for the data", side="eta_max")
        if res.residual_norm < target:
            hit = k
            break
    if hit is None:
        if not np.any(_usable(results)):
            raise RuleFailure("every grid solve failed", side="solver")
        raise RuleFailure(
            f"residual stays above c_m*delta={target:.3g} down to eta_min={grid.eta_min:g}", side="eta_min")
    # last finite entry above the target
    above = next(j for j in range(hit - 1, -1, -1) if np.isfinite(results[j].residual_norm))
    hi, lo = results[above], results[hit]
    swept = np.array([r.residual_norm for r in results])
    finite = swept[np.isfinite(swept)]
    monotone = bool(np.all(np.diff(finite) <= 1e-12 * np.maximum(1.0, finite[:-1])))
    if not monotone:
        log.warning("residual not monotone along the sweep; local minima suspected")

    steps = 0
    while steps < max_bisections and hi.eta / lo.eta - 1.0 > rel_tol:
        mid = float(np.sqrt(hi.eta * lo.eta))
        res = minimize(p, c, mid, g, hi.u, opts)
        steps += 1
        if res.residual_norm >= target:
            hi = res
        else:
            lo = res
    best = min((hi, lo), key=lambda r: abs(r.residual_norm - target))
    diag = {
        "target": target,
        "bracket": [lo.eta, hi.eta],
        "bracket_residuals": [lo.residual_norm, hi.residual_norm],
        "bisection_steps": steps,
        "relative_mismatch": abs(best.residual_norm - target) / target,
        "sweep_eta": [r.eta for r in results],
        "sweep_residual": swept.tolist(),
        "monotone_sweep": monotone,
    }
    return _chosen(DISCREPANCY, best, diag)


def balancing_surrogate(values, etas, gamma: float):
    """``log Phi = (1 + gamma) log F - log eta``; ``-inf`` where ``F = 0``."""
    values = np.asarray(values, dtype=float)
    with np.errstate(divide="ignore"):
        return (1.0 + gamma) * np.log(values) - np.log(np.asarray(etas, dtype=float))


def balancing_mismatch(p: ForwardProblem, res: TikhonovResult, gamma: float) -> float:
    """``|gamma eta ||u||^2 - residual^2| / residual^2`` (inf for zero residual)."""
    lhs = gamma * res.eta * p.param_ip.inner(res.u, res.u)
    rhs = res.residual_norm**2
    if rhs == 0:
        return float("inf") if lhs > 0 else 0.0
    return abs(lhs - rhs) / rhs


def _argmin_smaller_eta(values, etas):
    """Index of the minimum; ties go to the smaller ``eta``."""
    values = np.asarray(values, dtype=float)
    ok = ~np.isnan(values)
    best = np.min(values[ok])
    ties = np.flatnonzero(ok & (values == best))
    return int(ties[np.argmin(np.asarray(etas)[ties])])


def choose_balancing(p: ForwardProblem, c: ConstraintSet, g, gamma: float = 1.0, grid: EtaGrid | None = None,
                     opts: SolverOptions | None = None, rel_tol: float = 1e-3, max_refine: int = 30) -> ChosenParameter:
    """Balancing principle: minimize ``Phi(eta) = F(eta)^(1+gamma) / eta``.

    Phase 1 takes the argmin of ``Phi`` over the grid. Phase 2 runs the
    fixed point ``eta <- ||K(u) - g||^2 / (gamma ||u||_X^2)`` from there,
    clamped to the grid range, and keeps its end point only if it lowers
    ``Phi``. ``Phi`` is compared through its logarithm to avoid underflow.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    grid = grid or EtaGrid()
    etas = grid.values()
    results = value_function_sweep(p, c, g, etas, opts)
    ok = _usable(results)
    if not np.any(ok):
        raise RuleFailure("every grid solve failed", side="solver")
    values = np.array([r.value if r_ok else np.nan for r, r_ok in zip(results, ok)])
    log_phi = balancing_surrogate(values, etas, gamma)
    k = _argmin_smaller_eta(log_phi, etas)
    best = results[k]
    best_log_phi = log_phi[k]

    # fixed-point refinement of the balancing relation
    trajectory = [best.eta]
    res, note = best, ""
    for _ in range(max_refine):
        norm2 = p.param_ip.inner(res.u, res.u)
        if norm2 == 0:
            note = "zero solution norm; fixed point undefined"
            break
        new_eta = float(np.clip(res.residual_norm**2 / (gamma * norm2), grid.eta_min, grid.eta_max))
        change = abs(new_eta - res.eta) / res.eta
        if change == 0:
            break
        res = minimize(p, c, new_eta, g, res.u, opts)
        trajectory.append(new_eta)
        if change <= rel_tol:
            break
    refined_log_phi = balancing_surrogate([res.value], [res.eta], gamma)[0]
    accepted = bool(res is not best and refined_log_phi < best_log_phi)
    chosen = res if accepted else best
    diag = {
        "gamma": gamma,
        "grid_argmin_eta": best.eta,
        "grid_argmin_index": k,
        "log_phi": log_phi.tolist(),
        "sweep_eta": etas.tolist(),
        "sweep_value": values.tolist(),
        "refinement_trajectory": trajectory,
        "refinement_accepted": accepted,
        "refinement_note": note,
        "balancing_mismatch": balancing_mismatch(p, chosen, gamma),
        "at_grid_boundary": k in (0, len(etas) - 1) and not accepted,
    }
    return _chosen(BALANCING, chosen, diag)


def choose_hanke_raus(p: ForwardProblem, c: ConstraintSet, g, grid: EtaGrid | None = None,
                      opts: SolverOptions | None = None) -> ChosenParameter:
    """Hanke-Raus rule: grid argmin of ``||K(u_eta) - g||^2 / eta``.

    Grid points with zero residual are excluded, since the rule's error
    estimate needs a nonzero realized residual.
    """
    grid = grid or EtaGrid()
    etas = grid.values()
    results = value_function_sweep(p, c, g, etas, opts)
    ok = _usable(results)
    if not np.any(ok):
        raise RuleFailure("every grid solve failed", side="solver")
    resid = np.array([r.residual_norm if r_ok else np.nan for r, r_ok in zip(results, ok)])
    zero = ok & (resid == 0)
    if np.all(zero[ok]):
        raise RuleFailure("all residuals vanish; data exactly attainable", side="degenerate")
    surrogate = np.where(ok & ~zero, resid**2 / etas, np.nan)
    k = _argmin_smaller_eta(surrogate, etas)
    diag = {
        "surrogate": surrogate.tolist(),
        "sweep_eta": etas.tolist(),
        "sweep_residual": resid.tolist(),
        "excluded_zero_residual": int(np.count_nonzero(zero)),
        "at_grid_boundary": k in (0, len(etas) - 1),
    }
    return _chosen(HANKE_RAUS, results[k], diag)


def choose(rule: str, p: ForwardProblem, c: ConstraintSet, g, delta: float | None = None, *, c_ap: float = 1.0,
           c_m: float = 1.1, gamma: float = 1.0, grid: EtaGrid | None = None,
           opts: SolverOptions | None = None) -> ChosenParameter:
    """Dispatch to one of the four rules by name."""
    if rule == A_PRIORI:
        eta = choose_a_priori(delta, c_ap)
        res = minimize(p, c, eta, g, None, opts)
        return _chosen(A_PRIORI, res, {"c_ap": c_ap})
    if rule == DISCREPANCY:
        return choose_discrepancy(p, c, g, delta, c_m, grid, opts)
    if rule == BALANCING:
        return choose_balancing(p, c, g, gamma, grid, opts)
    if rule == HANKE_RAUS:
        return choose_hanke_raus(p, c, g, grid, opts)
    raise ValueError(f"unknown rule {rule!r}; choose from {RULES}")
