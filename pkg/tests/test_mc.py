import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sgwave.kle import kle_exponential
from sgwave.mc import (
    BarConfig,
    StreamingMoments,
    WaveSampler,
    analytic_solution_2d,
    bar1d_suite,
    count_peaks,
    error_curve,
    export_histogram,
    export_mc_probes,
    histogram_pdf,
    make_rng,
    mc_solve,
    moving_average,
    nisp_project,
    pdf_estimate,
    relative_error,
    standard_error_slope,
    standard_error_study,
    verify_analytic,
)
from sgwave.mesh import build_unit_square_mesh
from sgwave.model import gaussian_pulse
from sgwave.newmark import NewmarkParams
from sgwave.pce import PceBasis


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(4, 60), st.integers(1, 3)), elements=st.floats(-1e3, 1e3)))
def test_streaming_matches_two_pass(x):
    mom = StreamingMoments(x.shape[1])
    for row in x:
        mom.push(row)
    scale = max(1.0, np.abs(x).max()) ** 2
    np.testing.assert_allclose(mom.mean, x.mean(axis=0), atol=1e-9 * np.sqrt(scale))
    np.testing.assert_allclose(mom.variance, x.var(axis=0, ddof=1), atol=1e-9 * scale)
    d = x - x.mean(axis=0)
    np.testing.assert_allclose(mom.M4, (d**4).sum(axis=0), atol=1e-7 * scale**2, rtol=1e-9)


def test_std_stderr_gaussian_limit():
    # for normal data the delta method gives sigma / sqrt(2 n)
    mom = StreamingMoments(1)
    for v in make_rng(0).standard_normal(20000):
        mom.push([2.0 * v])
    assert mom.std_stderr[0] == pytest.approx(2.0 / np.sqrt(2 * 20000), rel=0.05)
    assert StreamingMoments(1).std_stderr[0] == np.inf


def test_rng_reproducible():
    a = make_rng(7).standard_normal(5)
    np.testing.assert_array_equal(a, make_rng(7).standard_normal(5))
    assert not np.array_equal(a, make_rng(8).standard_normal(5))


def test_mc_solve_thread_invariance_and_errors():
    f = lambda xi: np.array([xi[0], xi[0] * xi[1], np.exp(xi[1])])  # noqa: E731
    a = mc_solve(f, 2, 300, 3, threads=1)
    b, samples = mc_solve(f, 2, 300, 3, threads=4, keep_samples=True)
    np.testing.assert_array_equal(a.mean, b.mean)
    np.testing.assert_array_equal(a.std, b.std)
    assert samples.shape == (300, 3)
    np.testing.assert_allclose(a.stderr, samples.std(axis=0, ddof=1) / np.sqrt(300))
    with pytest.raises(ValueError):
        mc_solve(f, 2, 1)

    def bad(xi):
        raise FloatingPointError("boom")

    with pytest.raises(RuntimeError, match="sample 0"):
        mc_solve(bad, 1, 5)


def test_mc_mean_within_stderr():
    est = mc_solve(lambda xi: np.exp(0.3 * xi), 1, 4000, 11)
    assert abs(est.mean[0] - np.exp(0.045)) < 3 * est.stderr[0]


def test_nisp_trivial_cases():
    xi = make_rng(1).standard_normal((50_000, 2))
    b = PceBasis(2, 2)
    const = nisp_project(np.full(len(xi), 3.0), xi, b)
    assert const[0] == pytest.approx(3.0) and np.abs(const[1:]).max() < 0.05
    lin = nisp_project(2.0 * xi[:, 0] - xi[:, 1], xi, b)
    assert lin[1] == pytest.approx(2.0, abs=0.05) and lin[2] == pytest.approx(-1.0, abs=0.05)
    # exact on a product-free sample set: the constant basis function projects to the sample mean
    y = make_rng(2).standard_normal((len(xi), 4))
    np.testing.assert_allclose(nisp_project(y, xi, b)[0], y.mean(axis=0))


def test_analytic_solution_satisfies_wave_equation():
    x, y, t, h = 0.31, 0.62, 0.4, 1e-3
    u = lambda a, b, c: analytic_solution_2d(a, b, c, 2, 1, 1.3)  # noqa: E731
    utt = (u(x, y, t + h) - 2 * u(x, y, t) + u(x, y, t - h)) / h**2
    lap = (u(x + h, y, t) + u(x - h, y, t) + u(x, y + h, t) + u(x, y - h, t) - 4 * u(x, y, t)) / h**2
    assert utt == pytest.approx(1.3**2 * lap, rel=1e-4)
    assert analytic_solution_2d(0.0, 0.4, 0.2) == pytest.approx(0.0, abs=1e-15)


def test_relative_error_guard():
    assert relative_error([3.0, 4.0], [3.0, 4.0]) == (0.0, True)
    assert relative_error([0.0, 0.0], [1.0, 0.0]) == (1.0, False)
    e, rel = relative_error([1e-3, 0.0], [0.0, 0.0], floor=0.1)
    assert not rel and e == pytest.approx(1e-3)
    t, e, rel = error_curve([0, 1], [np.ones(2), np.zeros(2)], [np.ones(2), np.zeros(2)])
    assert list(rel) == [True, False]


def test_verify_analytic_coarse(tmp_path):
    cur = verify_analytic(16, 0.5, 0.5)
    assert cur.max_relative < 0.2
    assert cur.probe.shape == (len(cur.t), 2)
    cur.export_csv(tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text().splitlines()[0] == "t,error,relative"


def test_peak_counting():
    assert list(count_peaks([0, 1, 0, 2, 0])) == [1, 3]
    assert list(count_peaks([3, 1, 0.5, 1, 4])) == [0, 4]  # end bins can be peaks
    assert list(count_peaks([0, 1, 0, 0.01, 0])) == [1]  # below 5% of the max
    assert list(count_peaks([2.0])) == [0]
    np.testing.assert_allclose(moving_average([0, 0, 3, 0, 0], 3), [0, 1, 1, 1, 0])


def test_histogram_pdf_normalized_and_degenerate(tmp_path):
    v = make_rng(0).standard_normal(20000)
    est = histogram_pdf(v, 0.0, 50)
    assert np.sum(est.density * np.diff(est.edges)) == pytest.approx(1.0)
    assert est.n_peaks == 1
    flat = histogram_pdf(np.full(100, 0.3), 0.0)
    assert flat.n_bins == 1
    export_histogram(tmp_path / "h.csv", est)
    assert len((tmp_path / "h.csv").read_text().splitlines()) == 51


def test_pdf_unimodal_early_multimodal_late():
    early, late = pdf_estimate(times=(0.05, 5.0), samples=100_000, sigma_g=0.3)
    assert early.n_peaks == 1 and late.n_peaks >= 2
    with pytest.raises(ValueError):
        pdf_estimate(samples=100)


def test_pdf_surrogate_path():
    b = PceBasis(1, 1)
    (est,) = pdf_estimate(times=(1.0,), samples=100_000, surrogate=(b, lambda t: np.array([0.0, 1.0])))
    assert est.n_peaks == 1


def test_standard_error_study_slope():
    Ms, se, slope = standard_error_study(lambda xi: np.array([xi[0], 2 * xi[0]]), 1, (100, 400, 1600), 4)
    assert list(Ms) == [100, 400, 1600] and slope == pytest.approx(-0.5, abs=0.1)
    assert standard_error_slope([1, 100], [1.0, 0.1]) == pytest.approx(-0.5)


def test_wave_sampler_degenerate_matches_deterministic():
    mesh = build_unit_square_mesh(8, 8)
    kle = kle_exponential(0.1, 1.0, 1.0, 2, mesh)
    s = WaveSampler(mesh, kle, NewmarkParams(0.05), 10, [(0.5, 0.5)], u0=gaussian_pulse(mesh.node_coords),
                    store_steps=(10,))
    y = s(np.zeros(2))
    assert y.shape == (11 + s.model(np.zeros(2)).n,)
    assert y[0] == pytest.approx(gaussian_pulse(np.array([[0.5, 0.5]]))[0], rel=1e-12)


def test_export_mc_probes(tmp_path):
    export_mc_probes(tmp_path / "m.csv", [0.0, 0.1], [1, 2], [0, 1], [0, 0.1])
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "t,mean,std,stderr"


def test_bar_suite_small():
    cfg = BarConfig(h=0.05, dt=0.005, T=0.3, M=200, p_in=3, p_out=4, snapshot_times=(0.1,), steady_T=1.0)
    suite = bar1d_suite(cfg)
    assert set(suite.snapshots) == {0.1}
    assert suite.sg_coeffs.shape == (5, 20)
    scale = np.abs(suite.mc.mean).max()
    assert np.abs(suite.sg_mean - suite.mc.mean).max() < 0.05 * scale
    norms = np.linalg.norm(suite.sg_coeffs, axis=1)
    assert norms[1] > norms[3]
