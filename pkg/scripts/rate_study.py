"""Rate studies for every rule on a chosen problem; writes one CSV per rule.

    python3 scripts/rate_study.py --config scripts/configs/potential.cfg --out runs/
"""

import argparse
import logging
from pathlib import Path

from nltikhonov.config import load_config
from nltikhonov.harness import DEFAULT_DELTAS, RuleSpec, run_rate_study, write_csv, write_json, report, \
    rate_study_summary
from nltikhonov.rules import RULES


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True)
    ap.add_argument("--rules", default=",".join(RULES))
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="runs")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = load_config(args.config)
    setup = cfg.build()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.rules.split(","):
        rule = RuleSpec(name.strip())
        res = run_rate_study(setup, rule, DEFAULT_DELTAS, range(args.seeds), workers=args.workers)
        stem = f"{cfg.problem}_{rule.name}"
        write_csv(out / f"{stem}.csv", res.rows)
        write_json(out / f"{stem}.json", report({"config": vars(cfg), "rule": rule.describe()}, {},
                                                 rate_study_summary(res)))
        failed = sum(bool(r.failure) for r in res.rows)
        print(f"{stem:32s} error slope {res.slope_error:7.3f}  residual slope {res.slope_residual:7.3f}"
              f"  r2 {res.fit_r2:.3f}  failed rows {failed}")


if __name__ == "__main__":
    main()
