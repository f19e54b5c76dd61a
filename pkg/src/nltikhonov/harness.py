"""Experiment driver: calibrated noise, rate studies, slope fits and persistence."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.stats

from .core import InnerProduct
from .problems import InverseSetup, scalar_exact_solution, scalar_source_representer, scalar_tikhonov_minimizer
from .rules import A_PRIORI, BALANCING, DISCREPANCY, HANKE_RAUS, RULES, EtaGrid, RuleFailure, choose
from .solver import SolverOptions

log = logging.getLogger(__name__)

__version__ = "0.1.0"

CSV_COLUMNS = ("delta", "seed", "eta", "param_error", "residual_exact", "realized_residual", "converged")
DEFAULT_DELTAS = (1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5)
MIN_FIT_LEVELS = 4


@dataclass(frozen=True)
class NoiseSpec:
    delta: float
    seed: int = 0
    shape: str = "gaussian-direction"

    def __post_init__(self):
        if not self.delta >= 0:
            raise ValueError(f"delta must be nonnegative, got {self.delta}")
        if self.shape != "gaussian-direction":
            raise ValueError(f"unsupported noise shape {self.shape!r}")


def noise_vector(shape, spec: NoiseSpec, ip: InnerProduct, max_redraws: int = 16):
    """``delta * e / ||e||_H`` with a seeded standard-normal ``e``, and the seed used.

    A zero draw is redrawn with the next seed.
    """
    seed = spec.seed
    for _ in range(max_redraws):
        e = np.random.default_rng(seed).standard_normal(shape)
        norm = ip.norm(e)
        if norm > 0:
            return spec.delta * (e / norm), seed
        log.warning("zero noise direction for seed %d; redrawing", seed)
        seed += 1
    raise RuntimeError("could not draw a nonzero noise direction")


def make_noisy_data(g_exact, spec: NoiseSpec, ip: InnerProduct, max_redraws: int = 16):
    """``g + noise_vector(...)``; returns the data and the seed actually used.

    The noise vector has H-norm ``delta`` to round-off. The stored sum can
    only resolve it to about ``eps * ||g||`` in absolute terms.
    """
    g_exact = np.atleast_1d(np.asarray(g_exact, dtype=float))
    if spec.delta == 0:
        return g_exact.copy(), spec.seed
    noise, seed = noise_vector(g_exact.shape, spec, ip, max_redraws)
    return g_exact + noise, seed


@dataclass(frozen=True)
class RuleSpec:
    """A choice rule and its constant."""

    name: str
    c_ap: float = 1.0
    c_m: float = 1.1
    gamma: float = 1.0

    def __post_init__(self):
        if self.name not in RULES:
            raise ValueError(f"unknown rule {self.name!r}; choose from {RULES}")

    def describe(self) -> dict:
        key = {A_PRIORI: "c_ap", DISCREPANCY: "c_m", BALANCING: "gamma"}.get(self.name)
        return {"rule": self.name, **({key: getattr(self, key)} if key else {})}


@dataclass(frozen=True)
class RateRow:
    delta: float
    seed: int
    eta: float
    param_error: float
    residual_exact: float
    realized_residual: float
    converged: bool
    failure: str = ""


@dataclass(frozen=True, eq=False)
class RateStudyResult:
    rows: list
    slope_error: float
    slope_residual: float
    fit_r2: float
    levels: list = field(default_factory=list)
    medians: dict = field(default_factory=dict)
    fit_r2_residual: float = float("nan")

    def median(self, column: str):
        """Median over successful seeds of ``column`` at each level."""
        return np.array(self.medians[column])


def fit_loglog_slope(points, robust: bool = False):
    """Slope, intercept and r^2 of ``log y`` against ``log x``.

    OLS by default; ``robust`` uses the median of pairwise slopes (Theil-Sen).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two (x, y) points")
    if np.any(pts <= 0) or not np.all(np.isfinite(pts)):
        raise ValueError("log-log fit needs positive finite coordinates")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    if robust:
        slope, intercept, _, _ = scipy.stats.theilslopes(y, x)
    else:
        slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    if ss_tot == 0:
        r2 = 1.0 if ss_res <= 1e-30 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), float(r2)


def _one_row(setup: InverseSetup, rule: RuleSpec, delta: float, seed: int, grid, opts) -> RateRow:
    p, c = setup.problem, setup.constraints
    g, _ = make_noisy_data(setup.g_exact, NoiseSpec(delta, seed), p.data_ip)
    try:
        chosen = choose(rule.name, p, c, g, delta, c_ap=rule.c_ap, c_m=rule.c_m, gamma=rule.gamma,
                        grid=grid, opts=opts)
    except RuleFailure as exc:
        nan = float("nan")
        return RateRow(delta, seed, nan, nan, nan, nan, False, failure=f"{exc.side}: {exc}")
    u = chosen.u
    return RateRow(delta=float(delta), seed=int(seed), eta=chosen.eta_star, param_error=setup.param_error(u),
                   residual_exact=setup.residual_exact(u), realized_residual=chosen.realized_residual,
                   converged=bool(chosen.result.converged))


def _row_task(args):
    return _one_row(*args)


def run_rate_study(setup: InverseSetup, rule: RuleSpec, deltas=DEFAULT_DELTAS, seeds=range(5),
                   grid: EtaGrid | None = None, opts: SolverOptions | None = None, workers: int = 1,
                   robust: bool = False) -> RateStudyResult:
    """Apply ``rule`` to calibrated noisy data over a sweep of noise levels.

    Slopes are fitted to the median over seeds at each level; rows where
    the rule failed are kept in ``rows`` and left out of the medians. With
    fewer than four usable levels the slopes are NaN.
    """
    deltas = [float(d) for d in deltas]
    if not deltas or any(d <= 0 for d in deltas):
        raise ValueError("deltas must be positive")
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be strictly descending")
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("need at least one seed")
    grid = grid or EtaGrid()
    tasks = [(setup, rule, d, s, grid, opts) for d in deltas for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_row_task, tasks))
    else:
        rows = [_row_task(t) for t in tasks]
    order = {d: i for i, d in enumerate(deltas)}
    rows.sort(key=lambda r: (order[r.delta], r.seed))

    levels, medians = [], {k: [] for k in ("eta", "param_error", "residual_exact", "realized_residual")}
    for d in deltas:
        ok = [r for r in rows if r.delta == d and not r.failure]
        if not ok:
            continue
        levels.append(d)
        for k in medians:
            medians[k].append(float(np.median([getattr(r, k) for r in ok])))
    nan = float("nan")
    slope_e = slope_r = r2 = r2_r = nan
    if len(levels) >= MIN_FIT_LEVELS:
        pe = np.array(medians["param_error"])
        pr = np.array(medians["residual_exact"])
        lv = np.array(levels)
        if np.all(pe > 0):
            slope_e, _, r2 = fit_loglog_slope(np.column_stack([lv, pe]), robust)
        if np.all(pr > 0):
            slope_r, _, r2_r = fit_loglog_slope(np.column_stack([lv, pr]), robust)
    else:
        log.warning("only %d usable noise levels; slopes not fitted", len(levels))
    return RateStudyResult(rows=rows, slope_error=slope_e, slope_residual=slope_r, fit_r2=r2, levels=levels,
                           medians=medians, fit_r2_residual=r2_r)


# ----------------------------------------------------------------------------
# closed-form bound checks on the scalar problem


def lemma23_bound_check(eps_scale: float, g_exact: float, etas) -> dict:
    """Check the approximation-error bounds for exact data with ``eps = 1``, ``c_r = 0``.

    ``|u_eta - u†| <= |w| sqrt(eta)`` and ``|K(u_eta) - g†| <= 2 eta |w|``
    with ``u_eta`` the global minimizer from the cubic.
    """
    u_dag = scalar_exact_solution(eps_scale, g_exact)
    if u_dag >= 0.5:
        raise ValueError("the sign argument needs u† < 1/2")
    w = abs(scalar_source_representer(eps_scale, g_exact))
    rows = []
    for eta in np.asarray(etas, dtype=float):
        u = scalar_tikhonov_minimizer(eps_scale, g_exact, eta)
        err = abs(u - u_dag)
        res = abs(eps_scale * u * (1.0 - u) - g_exact)
        b_err, b_res = w * math.sqrt(eta), 2.0 * eta * w
        rows.append({"eta": float(eta), "u_eta": u, "error": err, "error_bound": b_err, "residual": res,
                     "residual_bound": b_res, "error_margin": b_err - err, "residual_margin": b_res - res})
    violations = sum(r["error_margin"] < 0 or r["residual_margin"] < 0 for r in rows)
    return {"u_exact": u_dag, "w": w, "rows": rows, "violations": int(violations)}


def theorem31_error_bound(delta: float, eta: float, w_norm: float) -> float:
    """``delta/sqrt(eta) + sqrt(eta) ||w|| + sqrt(2 ||w|| delta)`` (``eps = 1``, ``c_r = 0``)."""
    return delta / math.sqrt(eta) + math.sqrt(eta) * w_norm + math.sqrt(2.0 * w_norm * delta)


# ----------------------------------------------------------------------------
# persistence


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow([_fmt(getattr(r, k)) for k in CSV_COLUMNS])
    return buf.getvalue()


def write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        fh.write(rows_to_csv(rows))


def jsonable(obj):
    """Convert numpy types and non-finite floats (to ``None``) for strict JSON."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def report(inputs: dict, result: dict, diagnostics: dict) -> dict:
    return jsonable({"inputs": inputs, "result": result, "diagnostics": diagnostics, "version": __version__})


def write_json(path, payload: dict):
    with open(path, "w") as fh:
        json.dump(jsonable(payload), fh, indent=2, sort_keys=False, allow_nan=False)
        fh.write("\n")


def rate_study_summary(res: RateStudyResult) -> dict:
    return {
        "slope_error": res.slope_error,
        "slope_residual": res.slope_residual,
        "fit_r2": res.fit_r2,
        "fit_r2_residual": res.fit_r2_residual,
        "levels": res.levels,
        "medians": res.medians,
        "failures": [asdict(r) for r in res.rows if r.failure],
    }
