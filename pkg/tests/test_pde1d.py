import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from nltikhonov import pde1d
from nltikhonov.pde1d import EllipticityError, Grid1D, TridiagonalSystem, ZeroPivotError


def _random_spd(rng, n):
    off = rng.uniform(-1, 1, n - 1)
    diag = np.abs(np.concatenate([[0], off])) + np.abs(np.concatenate([off, [0]])) + rng.uniform(0.1, 2, n)
    return TridiagonalSystem(off, diag, off.copy(), symmetric=True)


def test_identity_solve():
    r = np.arange(5.0)
    eye = TridiagonalSystem(np.zeros(4), np.ones(5), np.zeros(4))
    np.testing.assert_array_equal(pde1d.solve_tridiagonal(eye, r), r)


def test_laplacian_reproduces_quadratic():
    g = Grid1D(99)
    y = pde1d.laplacian(g).solve(np.full(99, 2.0))
    x = g.nodes
    assert np.max(np.abs(y - x * (1 - x))) <= 1e-10


def test_random_spd_matches_dense():
    rng = np.random.default_rng(0)
    for n in (3, 10, 57):
        A = _random_spd(rng, n)
        b = rng.standard_normal(n)
        ref = scipy.linalg.solve(A.to_dense(), b)
        np.testing.assert_allclose(A.solve(b), ref, rtol=0, atol=1e-12 * np.max(np.abs(ref)))


def test_multiple_right_hand_sides():
    rng = np.random.default_rng(1)
    A = _random_spd(rng, 20)
    B = rng.standard_normal((20, 3))
    np.testing.assert_allclose(A.matvec(A.solve(B)), B, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 60), st.integers(0, 2**32 - 1))
def test_solve_is_inverse(n, seed):
    rng = np.random.default_rng(seed)
    A = _random_spd(rng, n)
    b = rng.standard_normal(n)
    x = A.solve(b)
    assert np.linalg.norm(A.matvec(x) - b) <= 1e-12 * max(np.linalg.norm(b), 1.0) * 10


def test_zero_pivot_raises():
    A = TridiagonalSystem(np.ones(2), np.array([0.0, 1.0, 1.0]), np.ones(2))
    with pytest.raises(ZeroPivotError):
        A.solve(np.ones(3))


def test_band_length_check():
    with pytest.raises(ValueError):
        TridiagonalSystem(np.ones(3), np.ones(3), np.ones(2))


def test_conductivity_unit_coefficient_is_laplacian():
    g = Grid1D(20)
    A = pde1d.assemble_operator(g, np.ones(22), "conductivity")
    np.testing.assert_allclose(A.to_dense(), pde1d.laplacian(g).to_dense(), rtol=1e-15)


def test_potential_zero_is_laplacian():
    g = Grid1D(20)
    A = pde1d.assemble_operator(g, np.zeros(20), "potential")
    np.testing.assert_array_equal(A.to_dense(), pde1d.laplacian(g).to_dense())


def test_conductivity_operator_positive_pivots():
    g = Grid1D(49)
    A = pde1d.assemble_operator(g, 1 + g.all_nodes, "conductivity")
    # LDL^T pivots of a symmetric tridiagonal matrix
    piv = [A.diag[0]]
    for i in range(1, A.n):
        piv.append(A.diag[i] - A.sub[i - 1] ** 2 / piv[-1])
    assert min(piv) > 0


def test_operator_rejects_bad_coefficients():
    g = Grid1D(5)
    with pytest.raises(EllipticityError):
        pde1d.assemble_operator(g, -np.ones(5), "potential")
    with pytest.raises(EllipticityError):
        pde1d.assemble_operator(g, np.full(7, 0.05), "conductivity", c0=0.1)
    with pytest.raises(ValueError):
        pde1d.assemble_operator(g, np.ones(5), "conductivity")
    with pytest.raises(ValueError):
        pde1d.assemble_operator(g, np.ones(5), "wave")


def test_h1_forms():
    g = Grid1D(199)
    S, M = pde1d.discrete_h1_norms(g)
    v = np.sin(np.pi * g.nodes)
    assert v @ S.matvec(v) == pytest.approx(np.pi**2 / 2, rel=1e-2)
    z = np.zeros(g.n)
    assert z @ S.matvec(z) == 0 and z @ M.matvec(z) == 0
    one = np.ones(g.n)
    assert abs(one @ M.matvec(one) - 1.0) <= g.h


def test_full_h1_forms_constant():
    g = Grid1D(30)
    S, M = pde1d.discrete_h1_norms_full(g)
    one = np.ones(g.n + 2)
    assert one @ S.matvec(one) == pytest.approx(0.0, abs=1e-10)
    assert one @ M.matvec(one) == pytest.approx(1.0, rel=1e-14)


def test_mesh_convergence_second_order():
    def solve(n):
        g = Grid1D(n)
        return g, pde1d.assemble_operator(g, 1 + g.all_nodes, "conductivity").solve(np.full(n, 2.0))

    gr, yr = solve(1599)
    errs = []
    for n in (49, 99, 199):
        g, y = solve(n)
        errs.append(np.max(np.abs(y - np.interp(g.nodes, gr.nodes, yr))))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.8), rates


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid1D(2)
