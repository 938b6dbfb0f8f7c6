import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgwave.kle import (
    constant_mode_kle,
    exponential_modes_1d,
    kle_exponential,
    lognormal_pce,
    sample_gaussian_field,
    sample_speed,
)
from sgwave.mesh import build_interval_mesh, build_unit_square_mesh
from sgwave.pce import PceBasis


@settings(max_examples=10, deadline=None)
@given(b=st.floats(0.2, 5.0))
def test_modes_solve_the_integral_equation(b):
    # int_0^1 exp(-|x-y|/b) phi(y) dy = lam phi(x), checked by fine trapezoid quadrature
    y = np.linspace(0.0, 1.0, 4001)
    w = np.full(len(y), y[1] - y[0])
    w[[0, -1]] *= 0.5
    x = np.array([0.1, 0.37, 0.8])
    H = np.exp(-np.abs(x[:, None] - y[None, :]) / b)
    modes = exponential_modes_1d(4, b)
    lams = [m.lam for m in modes]
    assert all(a > c for a, c in zip(lams[:-1], lams[1:])) and lams[-1] > 0
    for m in modes:
        np.testing.assert_allclose(H @ (w * m(y)), m.lam * m(x), atol=2e-6)
        assert w @ m(y) ** 2 == pytest.approx(1.0, abs=1e-6)


def test_modes_reject_bad_length():
    with pytest.raises(ValueError):
        exponential_modes_1d(3, 0.0)


def test_modes_parity_alternates():
    modes = exponential_modes_1d(6, 1.0)
    assert [m.even for m in modes] == [True, False, True, False, True, False]


def test_2d_eigenvalues_are_sorted_products():
    mesh = build_unit_square_mesh(6, 6)
    k = kle_exponential(0.5, 1.0, 0.5, 5, mesh)
    lx = [m.lam for m in exponential_modes_1d(5, 1.0)]
    ly = [m.lam for m in exponential_modes_1d(5, 0.5)]
    ref = sorted((a * c for a in lx for c in ly), reverse=True)[:5]
    np.testing.assert_allclose(k.lam, 0.25 * np.array(ref))
    assert k.phi.shape == (5, mesh.n_nodes) and k.L == 5


def test_field_variance_bounded_by_sigma():
    mesh = build_unit_square_mesh(8, 8)
    k = kle_exponential(0.7, 1.0, 1.0, 20, mesh)
    var = np.sum(k.g**2, axis=0)
    assert np.all(var <= 0.49 + 1e-12) and var.max() > 0.4


def test_sampling_shapes():
    mesh = build_interval_mesh(10)
    k = kle_exponential(0.2, 1.0, 1.0, 3, mesh, g0=1.0)
    xi = np.zeros((4, 3))
    np.testing.assert_allclose(sample_gaussian_field(k, xi), 1.0)
    np.testing.assert_allclose(sample_speed(k, xi[0]), np.e)
    with pytest.raises(ValueError):
        sample_gaussian_field(k, np.zeros(2))


def test_constant_mode():
    mesh = build_interval_mesh(5)
    k = constant_mode_kle(0.3, mesh, g0=np.log(5.0))
    np.testing.assert_allclose(sample_speed(k, [1.0]), 5.0 * np.exp(0.3))


def test_lognormal_pce_one_variable_closed_form():
    # exp(s xi) = exp(s^2/2) sum_k s^k / sqrt(k!) Psi_k
    mesh = build_interval_mesh(3)
    s = 0.4
    ln = lognormal_pce(constant_mode_kle(s, mesh), PceBasis(1, 12))
    xi = np.linspace(-2, 2, 5)[:, None]
    np.testing.assert_allclose(ln.evaluate(xi)[:, 0], np.exp(s * xi[:, 0]), rtol=1e-8)
    assert ln.mean[0] == pytest.approx(np.exp(s * s / 2))
    assert ln.variance[0] == pytest.approx(np.exp(s * s) * (np.exp(s * s) - 1), rel=1e-10)


def test_lognormal_pce_rejects_mismatched_basis():
    mesh = build_unit_square_mesh(4, 4)
    with pytest.raises(ValueError):
        lognormal_pce(kle_exponential(0.1, 1, 1, 2, mesh), PceBasis(3, 2))


def test_export(tmp_path):
    p = tmp_path / "kle.csv"
    kle_exponential(1.0, 1.0, 1.0, 2, build_interval_mesh(4)).export_csv(p)
    assert p.read_text().splitlines()[0] == "n,lambda"
