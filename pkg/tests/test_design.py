import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lsqfi.basis import BasisSpec, eval_basis
from lsqfi.design import (BasisCurves, Dataset, GridCurves, assemble, build_design, center_columns)


def _data(n=5, q=2, p=41, seed=0):
    rng = np.random.default_rng(seed)
    grid = np.linspace(0, 1, p)
    return Dataset(GridCurves(grid, rng.normal(size=(n, p))), rng.normal(size=(n, q)), rng.normal(size=n))


def test_dimensions():
    data = _data(n=8)
    D = build_design(data, BasisSpec(3, 70))
    assert (D.q_n, D.d_n) == (219, 221)
    assert D.psi.shape == (8, 219)
    D1 = build_design(data, BasisSpec(3, 70), intercept=True)
    assert D1.d_n == 222 and np.all(D1.phi[:, -1] == 1)


def test_unit_scalar_gives_copy_of_x():
    x = np.arange(12.0).reshape(2, 6)
    D = assemble(x, np.array([[1.0, 0.0], [1.0, 0.0]]))
    assert np.array_equal(D.u_mat, np.hstack([x, np.zeros_like(x)]))


def test_kronecker_matches_double_loop():
    data = _data(n=5, q=2)
    spec = BasisSpec(3, 4)
    D = build_design(data, spec)
    nb = spec.n_basis
    oracle = np.zeros((5, 2 * nb))
    for i in range(5):
        for k in range(2):
            for j in range(nb):
                oracle[i, k * nb + j] = data.scalars[i, k] * D.x_mat[i, j]
    assert np.array_equal(D.u_mat, oracle)
    assert np.array_equal(D.phi, np.hstack([D.x_mat, oracle, data.scalars]))


def test_basis_curves_agree_with_sampled_curves():
    rng = np.random.default_rng(1)
    gen = BasisSpec(4, 12)
    coefs = rng.normal(size=(3, gen.n_basis))
    grid = np.linspace(0, 1, 40001)
    sampled = coefs @ eval_basis(gen, grid).T
    est = BasisSpec(3, 7)
    a = BasisCurves(gen, coefs).inner_products(est)
    b = GridCurves(grid, sampled).inner_products(est)
    assert np.max(np.abs(a - b)) < 1e-7


def test_center_small_example():
    data = Dataset(GridCurves(np.linspace(0, 1, 3), np.ones((3, 3))), np.zeros((3, 1)), [1.0, 2.0, 3.0])
    c, off = center_columns(data)
    assert np.allclose(c.response, [-1, 0, 1])
    assert off.response == 2.0


@given(arrays(np.float64, (6, 2), elements=st.floats(-1e3, 1e3)),
       arrays(np.float64, 6, elements=st.floats(-1e3, 1e3)))
def test_centering_means_and_idempotence(Z, y):
    grid = np.linspace(0, 1, 4)
    data = Dataset(GridCurves(grid, np.outer(y, grid)), Z, y)
    c, _ = center_columns(data)
    tol = 1e-12 * max(1.0, np.abs(Z).max(), np.abs(y).max())
    assert np.all(np.abs(c.scalars.mean(axis=0)) < tol)
    assert abs(c.response.mean()) < tol
    assert np.all(np.abs(c.curves.values.mean(axis=0)) < tol)
    c2, _ = center_columns(c)
    assert np.allclose(c2.response, c.response, atol=tol)


def test_row_count_mismatch():
    grid = np.linspace(0, 1, 5)
    with pytest.raises(ValueError, match="row counts"):
        Dataset(GridCurves(grid, np.zeros((4, 5))), np.zeros((3, 1)), np.zeros(4))


def test_centering_needs_two_rows():
    with pytest.raises(ValueError):
        center_columns(_data(n=1))


def test_subset_keeps_layout():
    D = build_design(_data(n=6), BasisSpec(3, 4), intercept=True)
    S = D.subset([0, 2])
    assert S.layout() == D.layout() and S.n == 2
