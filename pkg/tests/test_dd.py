import json

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from sgwave.dd import (
    PRECONDITIONERS,
    InterfaceProblem,
    SolverConfig,
    _dof_map,
    build_subdomain_systems,
    export_solver_csv,
    interior_recover,
    pcg,
    precond_lumped,
    precond_nn1,
    precond_nn2,
    schur_matvec,
    schur_rhs,
    time_loop_det,
)
from sgwave.mesh import build_unit_square_mesh, partition_structured
from sgwave.model import build_wave_model, gaussian_pulse, run_direct
from sgwave.newmark import NewmarkParams, transient_stiffness


@pytest.fixture(scope="module")
def setup():
    mesh = build_unit_square_mesh(8, 8)
    c2 = 1.0 + 0.5 * mesh.node_coords[:, 0]
    model = build_wave_model(mesh, c2, 0.3, 0.01, u0=gaussian_pulse(mesh.node_coords))
    part = partition_structured(mesh, 2, 2)
    params = NewmarkParams(0.05)
    systems, layouts, ops = build_subdomain_systems(model, part, params, neumann=True)
    problem = InterfaceProblem(systems, part.n_interface, part.n_corner)
    A = transient_stiffness(model.M, model.C, model.K, params).toarray()
    inv = _dof_map(model)
    gam = inv[part.global_interface]
    intr = np.setdiff1d(np.arange(model.n), gam)
    S = A[np.ix_(gam, gam)] - A[np.ix_(gam, intr)] @ np.linalg.solve(A[np.ix_(intr, intr)], A[np.ix_(intr, gam)])
    return dict(model=model, part=part, systems=systems, layouts=layouts, problem=problem, A=A, gam=gam,
                intr=intr, S=S)


def _columns(fn, n):
    return np.column_stack([fn(e) for e in np.eye(n)])


def test_schur_matches_dense_oracle(setup):
    p, S = setup["problem"], setup["S"]
    np.testing.assert_allclose(_columns(lambda x: schur_matvec(p, x), p.n_interface), S, atol=1e-10)


def test_schur_rhs_and_recovery_reproduce_direct_solve(setup):
    A, gam, intr, lays, p = setup["A"], setup["gam"], setup["intr"], setup["layouts"], setup["problem"]
    f = np.random.default_rng(1).standard_normal(len(A))
    f_locs = [lay.load_weight * f[lay.dofs] for lay in lays]
    g = schur_rhs(p, f_locs)
    g_ref = f[gam] - A[np.ix_(gam, intr)] @ np.linalg.solve(A[np.ix_(intr, intr)], f[intr])
    np.testing.assert_allclose(g, g_ref, atol=1e-10)
    u_gam = np.linalg.solve(setup["S"], g)
    u = np.zeros(len(A))
    u[gam] = u_gam
    for lay, ui in zip(lays, interior_recover(p, f_locs, u_gam)):
        u[lay.dofs[: lay.n_interior]] = ui
    np.testing.assert_allclose(u, np.linalg.solve(A, f), atol=1e-10)


@pytest.mark.parametrize("fn", [precond_lumped, precond_nn1, precond_nn2])
def test_preconditioners_symmetric_positive(setup, fn):
    p = setup["problem"]
    P = _columns(lambda x: fn(p, x), p.n_interface)
    np.testing.assert_allclose(P, P.T, atol=1e-10)
    assert np.linalg.eigvalsh(0.5 * (P + P.T)).min() > 0


def test_nn2_beats_one_level_on_condition_number(setup):
    p, S = setup["problem"], setup["S"]

    def kappa(fn):
        P = _columns(lambda x: fn(p, x), p.n_interface)
        ev = np.linalg.eigvals(P @ S).real
        return ev.max() / ev.min()

    assert kappa(precond_nn2) <= kappa(precond_nn1) * (1 + 1e-8)
    ev = np.linalg.eigvals(_columns(lambda x: precond_nn2(p, x), p.n_interface) @ S).real
    assert ev.min() > 1 - 1e-8  # two-level Neumann-Neumann spectrum is bounded below by one


def test_coarse_operator(setup):
    p, part = setup["problem"], setup["part"]
    F = p.coarse.F
    assert F.shape == (part.n_corner, part.n_corner)
    np.testing.assert_allclose(F, F.T, atol=1e-12)
    assert np.linalg.eigvalsh(F).min() > 0


def test_local_schur_spsd(setup):
    for s in setup["systems"]:
        assert np.linalg.eigvalsh(s.S).min() > -1e-10


def test_unknown_preconditioner(setup):
    with pytest.raises(ValueError):
        setup["problem"].preconditioner("jacobi")


def test_pcg_trivial_cases():
    I = lambda x: x.copy()  # noqa: E731
    x, rep = pcg(I, I, np.zeros(4))
    assert rep.iterations == 0 and rep.converged and not x.any()
    b = np.arange(1.0, 5.0)
    x, rep = pcg(I, I, b)
    assert rep.iterations == 1 and rep.converged
    np.testing.assert_allclose(x, b)
    A = np.diag([1.0, 10.0, 100.0, 1000.0])
    x, rep = pcg(lambda v: A @ v, lambda r: r / np.diag(A), b)
    assert rep.iterations == 1
    np.testing.assert_allclose(x, b / np.diag(A))
    x, rep = pcg(lambda v: A @ v, I, b, x0=b / np.diag(A))
    assert rep.iterations == 0


def test_pcg_reports_non_convergence():
    A = np.diag(np.logspace(0, 6, 50))
    _, rep = pcg(lambda v: A @ v, lambda r: r, np.ones(50), tol=1e-12, max_iter=3)
    assert not rep.converged and rep.iterations == 3 and rep.true_residual > 1e-12


@settings(max_examples=20, deadline=None)
@given(n=st.integers(2, 30), seed=st.integers(0, 10_000))
def test_pcg_solves_random_spd(n, seed):
    rng = np.random.default_rng(seed)
    Q = rng.standard_normal((n, n))
    A = Q @ Q.T + n * np.eye(n)
    b = rng.standard_normal(n)
    x, rep = pcg(lambda v: A @ v, lambda r: r / np.diag(A), b, tol=1e-10, max_iter=10 * n)
    assert rep.converged and rep.true_residual <= 1e-10
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b) * 1.0001


def test_solver_config_roundtrip_and_rejection(tmp_path):
    c = SolverConfig(1e-9, 100, "nn1", 2)
    c.to_json(tmp_path / "s.json")
    assert SolverConfig.from_json(tmp_path / "s.json") == c
    (tmp_path / "bad.json").write_text(json.dumps({"tol": 1e-8, "colour": "red"}))
    with pytest.raises(ValueError):
        SolverConfig.from_json(tmp_path / "bad.json")
    for kw in ({"preconditioner": "ilu"}, {"tol": 0.0}, {"threads": 0}):
        with pytest.raises(ValueError):
            SolverConfig(**kw)


@pytest.mark.parametrize("pc", PRECONDITIONERS)
def test_forced_dd_matches_direct(pc):
    mesh = build_unit_square_mesh(10, 10)
    src = np.zeros(mesh.n_nodes)
    src[5 * 11 + 3] = 1.0
    model0 = build_wave_model(mesh, 1.0, 0.2, 0.01)
    fr = model0.red.reduce_vector(src)
    model = build_wave_model(mesh, 1.0, 0.2, 0.01, load=lambda t: np.sin(3 * t) * fr)
    params = NewmarkParams(0.05)
    ref = run_direct(model, params, 20, store_every=1)
    tr = time_loop_det(model, partition_structured(mesh, 3, 2), params, 20, SolverConfig(tol=1e-12, preconditioner=pc),
                       store_every=1)
    assert max(np.abs(tr.fields[k] - ref.fields[k]).max() for k in ref.fields) < 1e-9


def test_thread_count_does_not_change_results(tmp_path):
    mesh = build_unit_square_mesh(12, 12)
    model = build_wave_model(mesh, 1.0, u0=gaussian_pulse(mesh.node_coords))
    part = partition_structured(mesh, 2, 2)
    a = time_loop_det(model, part, NewmarkParams(0.05), 10, SolverConfig(threads=1), store_every=1)
    b = time_loop_det(model, part, NewmarkParams(0.05), 10, SolverConfig(threads=3), store_every=1)
    for k in a.fields:
        np.testing.assert_array_equal(a.fields[k], b.fields[k])
    export_solver_csv(tmp_path / "a.csv", a.reports)
    export_solver_csv(tmp_path / "b.csv", b.reports)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.csv").read_text().splitlines()[0] == "step,iterations,final_residual"


def test_warm_start_residual_histories_decrease():
    mesh = build_unit_square_mesh(16, 16)
    model = build_wave_model(mesh, 1.0, u0=gaussian_pulse(mesh.node_coords))
    tr = time_loop_det(model, partition_structured(mesh, 4, 4), NewmarkParams(0.02), 10, SolverConfig(tol=1e-10))
    for rep in tr.reports:
        assert rep.converged
        assert np.all(np.diff(rep.residuals) < 0)
