"""Command-line entry point: ``solve``, ``choose``, ``rate-study`` and ``diagnose``.

Exit codes: 0 success, 2 the parameter-choice rule failed, 3 bad
configuration or arguments.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import diagnostics as dg
from .config import ConfigError, ProblemConfig, load_config
from .harness import (DEFAULT_DELTAS, NoiseSpec, RuleSpec, make_noisy_data, rate_study_summary, report,
                      run_rate_study, write_csv, write_json)
from .problems import Conductivity1D, Potential1D, ScalarQuadratic, _EllipticProblem
from .rules import RULES, EtaGrid, RuleFailure, choose
from .solver import minimize

EXIT_OK, EXIT_RULE, EXIT_CONFIG = 0, 2, 3
CHECKS = ("scon", "nscon", "ncon", "sosc", "classical", "bilinear-identity")

log = logging.getLogger("nltikhonov")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def _grid(text):
    try:
        return EtaGrid.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _deltas(text):
    try:
        vals = [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad delta list {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty delta list")
    return vals


def _common(sp, problem_required=True):
    sp.add_argument("--problem", choices=("scalar", "potential", "conductivity"), required=problem_required)
    sp.add_argument("--config", help="flat key = value file with problem parameters")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="nltikhonov", description="Constrained nonlinear Tikhonov regularization")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="minimize the Tikhonov functional at one eta")
    _common(s)
    s.add_argument("--eta", type=float, required=True)
    s.add_argument("--data", default="synthetic", help="'synthetic' or a text file of data values")
    s.add_argument("--delta", type=float, default=0.0, help="noise level for synthetic data")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)

    c = sub.add_parser("choose", help="select eta by a parameter-choice rule")
    _common(c)
    c.add_argument("--rule", choices=RULES, required=True)
    c.add_argument("--delta", type=float, required=True)
    c.add_argument("--c-m", type=float, default=1.1)
    c.add_argument("--gamma", type=float, default=1.0)
    c.add_argument("--c-ap", type=float, default=1.0)
    c.add_argument("--grid", type=_grid, default=EtaGrid())
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", required=True)

    r = sub.add_parser("rate-study", help="apply a rule over a sweep of noise levels and fit log-log slopes")
    _common(r)
    r.add_argument("--rule", choices=RULES, required=True)
    r.add_argument("--deltas", type=_deltas, default=list(DEFAULT_DELTAS))
    r.add_argument("--seeds", type=int, default=5)
    r.add_argument("--c-m", type=float, default=1.1)
    r.add_argument("--gamma", type=float, default=1.0)
    r.add_argument("--c-ap", type=float, default=1.0)
    r.add_argument("--grid", type=_grid, default=EtaGrid())
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--robust", action="store_true", help="Theil-Sen slope instead of least squares")
    r.add_argument("--out-csv", required=True)
    r.add_argument("--out-json", required=True)

    d = sub.add_parser("diagnose", help="numerical check of a source or nonlinearity condition")
    _common(d)
    d.add_argument("--check", choices=CHECKS, required=True)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", required=True)
    return ap


def _load_data(path, n):
    try:
        vals = np.array([float(t) for t in open(path).read().replace(",", " ").split()])
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read data file {path}: {exc}") from exc
    if vals.size != n:
        raise ConfigError(f"data file has {vals.size} values, problem expects {n}")
    return vals


def _result_dict(res):
    return {"eta": res.eta, "u": res.u, "residual_norm": res.residual_norm, "penalty": res.penalty,
            "value": res.value, "iterations": res.iterations, "converged": res.converged,
            "stationarity": res.stationarity, "status": res.status}


def _errors(setup, u):
    return {"param_error": setup.param_error(u), "residual_exact": setup.residual_exact(u)}


def cmd_solve(args, cfg: ProblemConfig):
    setup = cfg.build()
    p, c = setup.problem, setup.constraints
    if not args.eta > 0:
        raise ConfigError("--eta must be positive")
    if args.data == "synthetic":
        g, seed = make_noisy_data(setup.g_exact, NoiseSpec(args.delta, args.seed), p.data_ip)
    else:
        g, seed = _load_data(args.data, p.dim_data), None
    res = minimize(p, c, args.eta, g)
    inputs = {"command": "solve", "config": vars(cfg), "eta": args.eta, "data": args.data,
              "delta": args.delta, "seed": seed}
    diag = {**_errors(setup, res.u), "history": res.telemetry.get("history", [])}
    return report(inputs, _result_dict(res), diag)


def cmd_choose(args, cfg: ProblemConfig):
    setup = cfg.build()
    p, c = setup.problem, setup.constraints
    g, seed = make_noisy_data(setup.g_exact, NoiseSpec(args.delta, args.seed), p.data_ip)
    chosen = choose(args.rule, p, c, g, args.delta, c_ap=args.c_ap, c_m=args.c_m, gamma=args.gamma,
                    grid=args.grid)
    inputs = {"command": "choose", "config": vars(cfg), "rule": RuleSpec(args.rule, args.c_ap, args.c_m,
                                                                          args.gamma).describe(),
              "delta": args.delta, "seed": seed, "grid": vars(args.grid)}
    result = {"eta_star": chosen.eta_star, "realized_residual": chosen.realized_residual,
              **_result_dict(chosen.result)}
    return report(inputs, result, {**_errors(setup, chosen.u), **chosen.rule_diagnostics})


def cmd_rate_study(args, cfg: ProblemConfig):
    setup = cfg.build()
    if args.seeds < 1:
        raise ConfigError("--seeds must be at least 1")
    rule = RuleSpec(args.rule, args.c_ap, args.c_m, args.gamma)
    res = run_rate_study(setup, rule, args.deltas, range(args.seeds), args.grid, workers=args.workers,
                         robust=args.robust)
    write_csv(args.out_csv, res.rows)
    inputs = {"command": "rate-study", "config": vars(cfg), "rule": rule.describe(), "deltas": args.deltas,
              "seeds": args.seeds, "grid": vars(args.grid), "robust": args.robust}
    summary = rate_study_summary(res)
    result = {k: summary[k] for k in ("slope_error", "slope_residual", "fit_r2")}
    return report(inputs, result, summary)


def _exclusion(cfg: ProblemConfig, setup):
    p = setup.problem
    if not isinstance(p, Conductivity1D):
        return None
    mask = dg.degeneracy_mask(p, setup.u_exact, width=cfg.exclude_width)
    if cfg.exclude_boundary:
        mask[[0, -1]] = True
    return mask


def _fit_dict(fit: dg.SourceFit):
    return {"kind": fit.kind, "representer": fit.representer, "multiplier": fit.multiplier,
            "relative_residual": fit.relative_residual,
            "masked_relative_residual": fit.masked_relative_residual, "flagged": fit.flagged,
            "fit_regularization": fit.fit_regularization, "sweeps": fit.sweeps}


def _margin_dict(m: dg.ConditionMargin):
    return {"min_margin": m.min_margin, "samples": m.samples, "worst_point": m.worst_point,
            "parameters": m.parameters, **m.extra}


def cmd_diagnose(args, cfg: ProblemConfig):
    setup = cfg.build()
    p, c, u = setup.problem, setup.constraints, setup.u_exact
    ridge = cfg.ridge or None
    inputs = {"command": "diagnose", "config": vars(cfg), "check": args.check, "seed": args.seed}
    diag = {}
    if args.check == "nscon":
        if not isinstance(p, _EllipticProblem):
            raise ConfigError("nscon needs an elliptic problem (potential or conductivity)")
        mask = _exclusion(cfg, setup)
        fit = dg.source_fit_nscon(p, c, u, ridge, mask)
        result = _fit_dict(fit)
        diag["excluded_nodes"] = [] if mask is None else np.flatnonzero(mask)
        return report(inputs, result, diag)

    if args.check == "sosc":
        res = minimize(p, c, cfg.eta, setup.g_exact)
        m = dg.sosc_margin_scan(p, c, cfg.eta, res.u, setup.g_exact, cfg.c_s, cfg.eps_prime, cfg.samples,
                                cfg.radius, args.seed)
        diag["solver"] = _result_dict(res)
        return report(inputs, _margin_dict(m), diag)

    fit = dg.source_fit_scon(p, c, u, ridge)
    diag["source_fit"] = _fit_dict(fit)
    if args.check == "scon":
        return report(inputs, _fit_dict(fit), {})
    if args.check == "ncon":
        m = dg.ncon_margin_scan(p, c, u, fit.representer, fit.multiplier, cfg.c_r, cfg.eps_coercive,
                                cfg.samples, cfg.radius, args.seed)
        return report(inputs, _margin_dict(m), diag)
    if args.check == "classical":
        return report(inputs, dg.classical_condition_report(p, c, u, fit.representer, seed=args.seed), diag)
    # bilinear-identity
    if not isinstance(p, (ScalarQuadratic, Potential1D)):
        raise ConfigError("bilinear-identity applies to the scalar and potential problems only")
    rng = np.random.default_rng(args.seed)
    diffs, tols = [], []
    for _ in range(50):
        step = rng.standard_normal(p.dim_param)
        v = c.project(u + cfg.radius * rng.random() * step / p.param_ip.norm(step))
        direct = dg.nonlinearity_term_direct(p, fit.representer, v, u)
        bil = dg.nonlinearity_term_bilinear(p, v, u, fit.multiplier)
        diffs.append(abs(direct - bil))
        tols.append(dg.representation_tolerance(p, fit, v, u))
    diffs, tols = np.array(diffs), np.array(tols)
    result = {"samples": 50, "max_abs_difference": diffs.max(), "max_ratio_to_tolerance": np.max(diffs / tols),
              "within_tolerance": bool(np.all(diffs <= tols))}
    return report(inputs, result, diag)


COMMANDS = {"solve": cmd_solve, "choose": cmd_choose, "rate-study": cmd_rate_study, "diagnose": cmd_diagnose}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.problem)
        payload = COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuleFailure as exc:
        print(f"rule failure ({exc.side}): {exc}", file=sys.stderr)
        return EXIT_RULE
    if args.command != "rate-study":
        write_json(args.out, payload)
    else:
        write_json(args.out_json, payload)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
