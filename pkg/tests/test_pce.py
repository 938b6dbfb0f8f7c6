from math import comb, factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgwave.pce import (
    PceBasis,
    eval_basis,
    gauss_hermite,
    hermite_triple_1d,
    multi_indices,
    tensor_gauss_hermite,
    triple_products,
)


@pytest.mark.parametrize("L,p", [(1, 0), (1, 5), (2, 3), (3, 3), (5, 3)])
def test_multi_index_count_and_order(L, p):
    A = multi_indices(L, p)
    assert len(A) == comb(L + p, p)
    assert len({tuple(a) for a in A}) == len(A)
    deg = A.sum(axis=1)
    assert deg.max() == p and np.all(np.diff(deg) >= 0)
    assert np.all(A[0] == 0)


def test_gauss_hermite_moments():
    x, w = gauss_hermite(10)
    assert w.sum() == pytest.approx(1.0)
    assert w @ x**2 == pytest.approx(1.0)
    assert w @ x**4 == pytest.approx(3.0)


@settings(max_examples=60, deadline=None)
@given(a=st.integers(0, 6), b=st.integers(0, 6), c=st.integers(0, 6))
def test_triple_1d_matches_quadrature(a, b, c):
    x, w = gauss_hermite(12)
    He = np.polynomial.hermite_e.hermeval
    q = w @ (He(x, [0] * a + [1]) * He(x, [0] * b + [1]) * He(x, [0] * c + [1]))
    assert hermite_triple_1d(a, b, c) == pytest.approx(q, rel=1e-10, abs=1e-9)


def test_triple_1d_selection_rules():
    assert hermite_triple_1d(1, 1, 1) == 0.0  # odd total
    assert hermite_triple_1d(0, 4, 1) == 0.0  # triangle inequality
    assert hermite_triple_1d(0, 3, 3) == pytest.approx(factorial(3))


@pytest.mark.parametrize("L,p_in,p_out", [(1, 2, 4), (2, 2, 3), (3, 2, 3)])
def test_triple_tensor_structure(L, p_in, p_out):
    G = triple_products(L, p_in, p_out).dense()
    np.testing.assert_allclose(G, np.swapaxes(G, 1, 2), atol=1e-15)
    np.testing.assert_allclose(G[0], np.eye(G.shape[1]), atol=1e-14)
    # G[i, 0, k] = delta_ik for the input terms
    np.testing.assert_allclose(G[:, 0, : G.shape[0]], np.eye(G.shape[0]), atol=1e-14)


def test_triple_tensor_sparse_views():
    T = triple_products(2, 1, 2)
    np.testing.assert_allclose(T.matrix(1), T.dense()[1])
    assert len(T) == np.count_nonzero(T.dense())
    with pytest.raises(ValueError):
        triple_products(2, 3, 2)


@settings(max_examples=10, deadline=None)
@given(L=st.integers(1, 3), p=st.integers(0, 4))
def test_basis_orthonormal(L, p):
    x, w = tensor_gauss_hermite(L, p + 2)
    P = PceBasis(L, p).eval(x)
    np.testing.assert_allclose(P.T @ (w[:, None] * P), np.eye(P.shape[1]), atol=1e-10)


def test_basis_eval_shapes_and_single_term():
    b = PceBasis(2, 3)
    xi = np.random.default_rng(0).standard_normal((7, 2))
    P = b.eval(xi)
    assert P.shape == (7, b.size)
    np.testing.assert_allclose(b.eval(xi, 4), P[:, 4])
    np.testing.assert_allclose(eval_basis(b, 0, xi), 1.0)
    with pytest.raises(IndexError):
        eval_basis(b, b.size, xi)
    with pytest.raises(ValueError):
        b.eval(np.zeros((3, 3)))
    np.testing.assert_allclose(b.norms, np.sqrt([np.prod([factorial(int(v)) for v in a]) for a in b.multi_indices]))


def test_basis_matches_hermite_e():
    b = PceBasis(1, 5)
    x = np.linspace(-2, 2, 9)[:, None]
    for k in range(6):
        ref = np.polynomial.hermite_e.hermeval(x[:, 0], [0] * k + [1]) / np.sqrt(factorial(k))
        np.testing.assert_allclose(b.eval(x, k), ref, atol=1e-12)


def test_basis_export(tmp_path):
    p = tmp_path / "basis.csv"
    PceBasis(2, 1).export_csv(p)
    assert p.read_text().splitlines() == ["k,alpha_1,alpha_2,norm", "0,0,0,1.0", "1,1,0,1.0", "2,0,1,1.0"]
