import numpy as np
import pytest

from nltikhonov.problems import potential_setup, scalar_setup, scalar_tikhonov_minimizer, scalar_tikhonov_value
from nltikhonov.rules import (EtaGrid, RuleFailure, balancing_surrogate, choose, choose_a_priori, choose_balancing,
                              choose_discrepancy, choose_hanke_raus)


def _scalar_noisy(delta):
    s = scalar_setup(0.1, 0.016)
    return s, s.g_exact + delta


def _closed_form_sweep(g, etas):
    u = np.array([scalar_tikhonov_minimizer(0.1, g, e) for e in etas])
    res = np.abs(0.1 * u * (1 - u) - g)
    F = scalar_tikhonov_value(0.1, g, etas, u)
    return u, res, F


def test_a_priori():
    assert choose_a_priori(1e-3, 1) == 1e-3
    assert choose_a_priori(1e-4, 2) == 2e-4
    with pytest.raises(ValueError):
        choose_a_priori(0.0)


def test_discrepancy_scalar_target():
    s, g = _scalar_noisy(1e-3)
    ch = choose_discrepancy(s.problem, s.constraints, g, 1e-3, c_m=1.1)
    assert 1.099e-3 <= ch.realized_residual <= 1.101e-3
    # dense oracle: the closed-form residual crosses the target next to eta*
    etas = np.geomspace(1e-12, 1e2, 10_000)
    _, res, _ = _closed_form_sweep(g[0], etas)
    k = np.argmin(np.abs(res - 1.1e-3))
    assert ch.eta_star == pytest.approx(etas[k], rel=5e-3)


def test_discrepancy_noise_too_large():
    s = scalar_setup(0.1, 0.016)
    g = s.g_exact - 0.01
    with pytest.raises(RuleFailure) as info:
        choose_discrepancy(s.problem, s.constraints, g, 0.01, c_m=1.1)
    assert info.value.side == "eta_max"


def test_discrepancy_target_below_grid():
    s, g = _scalar_noisy(1e-3)
    with pytest.raises(RuleFailure) as info:
        choose_discrepancy(s.problem, s.constraints, g, 1e-3, grid=EtaGrid(1e-2, 1e2, 10))
    assert info.value.side == "eta_min"


def test_balancing_is_grid_minimum_against_dense_oracle():
    s, g = _scalar_noisy(1e-3)
    grid = EtaGrid(1e-8, 1e2, 30)
    ch = choose_balancing(s.problem, s.constraints, g, gamma=1.0, grid=grid)
    dense = grid.refined(10).values()
    _, _, F = _closed_form_sweep(g[0], dense)
    phi_dense = balancing_surrogate(F, dense, 1.0)
    phi_star = balancing_surrogate([ch.result.value], [ch.eta_star], 1.0)[0]
    # log Phi: 5% in Phi is log(1.05)
    assert np.min(phi_dense) >= phi_star - np.log(1.05)
    assert "balancing_mismatch" in ch.rule_diagnostics


def test_balancing_with_residual_floor():
    # the positivity bound keeps the residual away from zero, so Phi has an interior minimum
    s = potential_setup(99, f=60.0)
    rng = np.random.default_rng(0)
    e = rng.standard_normal(99)
    g = s.g_exact + 1e-3 * e / s.problem.data_ip.norm(e)
    ch = choose_balancing(s.problem, s.constraints, g)
    assert not ch.rule_diagnostics["at_grid_boundary"]
    assert ch.rule_diagnostics["balancing_mismatch"] <= 1e-2


def test_balancing_rejects_gamma():
    s, g = _scalar_noisy(1e-3)
    with pytest.raises(ValueError):
        choose_balancing(s.problem, s.constraints, g, gamma=0.0)


def test_hanke_raus_oracle_and_determinism():
    s, g = _scalar_noisy(1e-3)
    grid = EtaGrid(1e-8, 1e2, 30)
    a = choose_hanke_raus(s.problem, s.constraints, g, grid)
    b = choose_hanke_raus(s.problem, s.constraints, g, grid)
    assert a.eta_star == b.eta_star and np.array_equal(a.u, b.u)
    etas = grid.values()
    _, res, _ = _closed_form_sweep(g[0], etas)
    assert a.eta_star == etas[np.argmin(res**2 / etas)]
    dense = grid.refined(10).values()
    _, res_d, _ = _closed_form_sweep(g[0], dense)
    assert a.realized_residual**2 / a.eta_star <= 1.05 * np.min(res_d**2 / dense)


def test_hanke_raus_degenerate_data():
    s = scalar_setup(0.1, 0.016)
    with pytest.raises(RuleFailure) as info:
        choose_hanke_raus(s.problem, s.constraints, np.zeros(1), EtaGrid(1e-6, 1, 10))
    assert info.value.side == "degenerate"


@pytest.mark.parametrize("rule", ["a-priori", "discrepancy", "balancing", "hanke-raus"])
def test_eta_in_range(rule):
    s, g = _scalar_noisy(1e-3)
    grid = EtaGrid(1e-8, 1e1, 20)
    ch = choose(rule, s.problem, s.constraints, g, 1e-3, grid=grid)
    assert grid.eta_min <= ch.eta_star <= grid.eta_max


def test_unknown_rule():
    s, g = _scalar_noisy(1e-3)
    with pytest.raises(ValueError):
        choose("l-curve", s.problem, s.constraints, g, 1e-3)


def test_grid():
    grid = EtaGrid.parse("1e-6, 1, 13")
    v = grid.values()
    assert v[0] == 1.0 and v[-1] == pytest.approx(1e-6) and v.size == 13
    assert np.all(np.diff(v) < 0)
    assert grid.refined(10).count == 121
    for bad in ("1,2", "2,1,10", "1e-3,1,3"):
        with pytest.raises(ValueError):
            EtaGrid.parse(bad)
