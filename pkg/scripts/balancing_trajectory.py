"""Log eta*(delta) and the realized residual of the balancing rule; no assertions."""

import numpy as np

from nltikhonov.harness import DEFAULT_DELTAS, RuleSpec, run_rate_study
from nltikhonov.problems import potential_setup, scalar_setup


def main(seeds=range(5)):
    for label, setup in (("scalar", scalar_setup(0.1, 0.016)), ("potential", potential_setup(99, f=60.0))):
        res = run_rate_study(setup, RuleSpec("balancing"), DEFAULT_DELTAS, seeds)
        print(label)
        print("  delta        median eta*   median residual   error")
        for d, eta, r, e in zip(res.levels, res.median("eta"), res.median("realized_residual"),
                                res.median("param_error")):
            print(f"  {d:.1e}     {eta:.4e}    {r:.4e}        {e:.4e}")
        mono = bool(np.all(np.diff(res.median("realized_residual")) < 0))
        print(f"  realized residual strictly decreasing: {mono}")


if __name__ == "__main__":
    main()
