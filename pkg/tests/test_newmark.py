import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from sgwave.newmark import (
    NewmarkParams,
    StateTriple,
    cfl_timestep,
    dominant_frequencies,
    export_probe_series,
    export_spectrum,
    initial_acceleration,
    magnitude_spectrum,
    newmark_rhs,
    newmark_update,
    rayleigh_calibrate,
    transient_stiffness,
)


def _run_sdof(m, c, k, u0, v0, dt, n):
    M, C, K = (np.array([[v]]) for v in (m, c, k))
    p = NewmarkParams(dt)
    A = transient_stiffness(M, C if c else None, K, p)
    a0 = initial_acceleration(lambda r: r / m, np.zeros(1), C if c else None, K, np.array([u0]), np.array([v0]))
    st_ = StateTriple(np.array([u0]), np.array([v0]), a0)
    out = [st_]
    for _ in range(n):
        u = np.linalg.solve(A, newmark_rhs(st_, M, C if c else None, p, np.zeros(1)))
        st_ = newmark_update(st_, u, p)
        out.append(st_)
    return out


@settings(max_examples=20, deadline=None)
@given(k=st.floats(0.1, 1e4), dt=st.floats(1e-3, 10.0))
def test_undamped_energy_conserved_any_step(k, dt):
    # average acceleration conserves 1/2 (m v^2 + k u^2) exactly
    traj = _run_sdof(1.0, 0.0, k, 1.0, 0.3, dt, 40)
    E = [0.5 * (s.v[0] ** 2 + k * s.u[0] ** 2) for s in traj]
    np.testing.assert_allclose(E, E[0], rtol=1e-9)


def test_damped_energy_decays():
    traj = _run_sdof(1.0, 0.2, 4.0, 1.0, 0.0, 0.05, 200)
    E = np.array([0.5 * (s.v[0] ** 2 + 4 * s.u[0] ** 2) for s in traj])
    assert np.all(np.diff(E) <= 1e-14)


def test_second_order_sdof():
    w = 2.0
    errs = []
    for dt in (0.02, 0.01):
        n = int(round(2.0 / dt))
        u = _run_sdof(1.0, 0.0, w * w, 1.0, 0.0, dt, n)[-1].u[0]
        errs.append(abs(u - np.cos(2 * w)))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_transient_stiffness_formula():
    p = NewmarkParams(0.1)
    M, C, K = sp.identity(2), 2 * sp.identity(2), 3 * sp.identity(2)
    A = transient_stiffness(M, C, K, p).toarray()
    np.testing.assert_allclose(np.diag(A), 1 / (0.25 * 0.01) + 2 * 0.5 / (0.25 * 0.1) + 3)
    with pytest.raises(ValueError):
        NewmarkParams(0.0)


def test_cfl_timestep():
    assert cfl_timestep(0.1, 2.0, 0.5) == pytest.approx(0.025)
    with pytest.raises(ValueError):
        cfl_timestep(0.1, 0.0)


def test_rayleigh_exact_solution():
    wi, wj, xi = 4.0, 7.0, 0.1
    a0, a1 = rayleigh_calibrate(wi, wj, xi, xi)
    assert a1 == pytest.approx(2 * xi / (wi + wj), abs=1e-12)
    assert a0 == pytest.approx(2 * xi * wi * wj / (wi + wj), abs=1e-12)
    # damping ratio reproduced at both frequencies
    for w in (wi, wj):
        assert 0.5 * (a0 / w + a1 * w) == pytest.approx(xi, abs=1e-12)


def test_rayleigh_zero_damping_and_singular():
    assert rayleigh_calibrate(1.0, 3.0, 0.0, 0.0) == (0.0, 0.0)
    with pytest.raises(np.linalg.LinAlgError):
        rayleigh_calibrate(2.0, 2.0, 0.1, 0.1)
    with pytest.raises(ValueError):
        rayleigh_calibrate(-1.0, 2.0, 0.1, 0.1)


def test_dominant_frequencies_on_sines():
    dt, n = 0.01, 2000
    t = dt * np.arange(n)
    y = np.sin(2 * np.pi * 1.3 * t) + 0.6 * np.sin(2 * np.pi * 3.05 * t) + 0.1 * np.sin(2 * np.pi * 7.0 * t)
    f = dominant_frequencies(y, dt, 2)
    df = 1.0 / (n * dt)
    assert abs(f[0] - 1.3) < df and abs(f[1] - 3.05) < df
    with pytest.raises(ValueError):
        dominant_frequencies(y[:32], dt)
    with pytest.raises(ValueError):
        dominant_frequencies(np.ones(200), dt, 1)  # flat spectrum, no peaks


def test_spectrum_excludes_mean():
    freq, mag = magnitude_spectrum(np.full(128, 3.0), 0.1)
    assert freq[1] == pytest.approx(1 / 12.8) and np.allclose(mag, 0.0)


def test_exports(tmp_path):
    t = np.arange(3) * 0.1
    export_probe_series(tmp_path / "p.csv", t, t, t, t)
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "t,u,v,a"
    export_spectrum(tmp_path / "s.csv", t, t)
    assert (tmp_path / "s.csv").read_text().splitlines()[0].startswith("f")
