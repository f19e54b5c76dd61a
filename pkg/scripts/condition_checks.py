"""Source-condition fits, nonlinearity margins and the classical smallness test.

Prints one line per check for the scalar, potential and conductivity problems.
"""

import numpy as np

from nltikhonov import diagnostics as dg
from nltikhonov.problems import ScalarQuadratic, conductivity_setup, potential_setup, scalar_setup


def show(label, setup, nscon_mask=None):
    p, c, u = setup.problem, setup.constraints, setup.u_exact
    fit = dg.source_fit_scon(p, c, u)
    print(f"[{label}] scon relative residual {fit.relative_residual:.3e} flagged={fit.flagged}")
    if not isinstance(p, ScalarQuadratic):
        nfit = dg.source_fit_nscon(p, c, u, exclude=nscon_mask)
        print(f"[{label}] nscon relative residual {nfit.relative_residual:.3e}"
              f" masked {nfit.masked_relative_residual:.3e}")
    m = dg.ncon_margin_scan(p, c, u, fit.representer, fit.multiplier, samples=100)
    print(f"[{label}] ncon min margin {m.min_margin:.3e} over {m.samples} samples")
    rep = dg.classical_condition_report(p, c, u, fit.representer)
    print(f"[{label}] classical: " + ", ".join(f"{k}={v:.4g}" for k, v in rep.items()
                                              if isinstance(v, (float, np.floating))))


def main():
    show("scalar", scalar_setup(0.1, 0.016))
    show("scalar-w>1", scalar_setup(0.1, 0.024))
    show("potential", potential_setup(99, f=60.0))
    s = conductivity_setup(99)
    mask = dg.degeneracy_mask(s.problem, s.u_exact)
    mask[[0, -1]] = True
    show("conductivity", s, mask)


if __name__ == "__main__":
    main()
