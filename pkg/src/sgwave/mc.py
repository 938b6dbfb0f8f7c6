"""Monte Carlo sampling, NISP projection and the analytic verification
harness (error curves, CFL study, pdf estimates, 1D bar suite)."""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .fem import AssemblyPattern, assemble_mass, lump_mass
from .kle import KleExpansion, constant_mode_kle, sample_speed
from .mesh import Mesh, build_interval_mesh, build_unit_square_mesh
from .model import build_wave_model, probe_matrix, run_direct, sine_mode
from .newmark import NewmarkParams, cfl_timestep
from .pce import PceBasis


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 stream; normals come from numpy's ziggurat transform."""
    return np.random.Generator(np.random.PCG64(seed))


class StreamingMoments:
    """Running mean and central moments up to order 4 (pairwise update).

    Samples are vectors of a fixed shape; statistics are elementwise.
    """

    def __init__(self, shape):
        self.n = 0
        self.mean = np.zeros(shape)
        self.M2 = np.zeros(shape)
        self.M3 = np.zeros(shape)
        self.M4 = np.zeros(shape)

    def push(self, x) -> None:
        x = np.asarray(x, dtype=float)
        n1 = self.n
        self.n += 1
        n = self.n
        d = x - self.mean
        dn = d / n
        dn2 = dn * dn
        t1 = d * dn * n1
        self.mean = self.mean + dn
        self.M4 = self.M4 + t1 * dn2 * (n * n - 3 * n + 3) + 6 * dn2 * self.M2 - 4 * dn * self.M3
        self.M3 = self.M3 + t1 * dn * (n - 2) - 3 * dn * self.M2
        self.M2 = self.M2 + t1

    @property
    def variance(self):
        return self.M2 / (self.n - 1) if self.n > 1 else np.zeros_like(self.M2)

    @property
    def std(self):
        return np.sqrt(self.variance)

    @property
    def stderr(self):
        return self.std / np.sqrt(max(self.n, 1))

    @property
    def std_stderr(self):
        """Delta-method standard error of the sample std."""
        n = self.n
        if n < 4:
            return np.full_like(self.M2, np.inf)
        m2 = self.M2 / n
        m4 = self.M4 / n
        var_s2 = np.maximum(m4 - (n - 3) / (n - 1) * m2 * m2, 0.0) / n
        s = self.std
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(s > 0, np.sqrt(var_s2) / (2.0 * s), 0.0)
        return out


@dataclass
class McEstimate:
    M: int
    mean: np.ndarray
    std: np.ndarray
    stderr: np.ndarray
    std_stderr: np.ndarray
    seed: int | None = None
    xi: np.ndarray | None = None

    @classmethod
    def from_moments(cls, mom: StreamingMoments, seed=None, xi=None):
        return cls(mom.n, mom.mean.copy(), mom.std, mom.stderr, mom.std_stderr, seed, xi)


def mc_solve(sample_fn, L: int, M: int = 2000, seed: int = 12345, threads: int = 1, keep_samples: bool = False):
    """Run ``sample_fn(xi)`` for M i.i.d. standard normal germs.

    Germs are drawn up front so results do not depend on ``threads``;
    accumulation runs in sample order.  With ``keep_samples`` also returns
    the (M, ...) array of outputs.
    """
    if M < 2:
        raise ValueError("need at least two samples")
    xi = make_rng(seed).standard_normal((M, L))
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        def run(m):
            try:
                return np.asarray(sample_fn(xi[m]), dtype=float)
            except Exception as exc:  # noqa: BLE001
                raise RuntimeError(f"sample {m} failed: {exc}") from exc

        results = pool.map(run, range(M)) if pool else map(run, range(M))
        mom = None
        kept = []
        for y in results:
            if mom is None:
                mom = StreamingMoments(y.shape)
            mom.push(y)
            if keep_samples:
                kept.append(y)
    finally:
        if pool:
            pool.shutdown()
    est = McEstimate.from_moments(mom, seed, xi)
    return (est, np.array(kept)) if keep_samples else est


class WaveSampler:
    """Deterministic solve for one realization c^2 = exp(g(xi)).

    Operators share a precomputed pattern; output is the probe series
    (n_steps + 1, n_probes) flattened, followed by full reduced fields at
    ``store_steps``.
    """

    def __init__(self, mesh: Mesh, kle: KleExpansion, params: NewmarkParams, n_steps: int, probes=None,
                 u0=None, v0=None, alpha0=0.0, alpha1=0.0, density=1.0, load=None, mass_type="consistent",
                 store_steps=(), stiffness_scale=1.0):
        self.mesh, self.kle, self.params, self.n_steps = mesh, kle, params, n_steps
        self.pattern = AssemblyPattern(mesh)
        self.u0, self.v0, self.alpha0, self.alpha1 = u0, v0, alpha0, alpha1
        self.density, self.load, self.mass_type = density, load, mass_type
        self.store_steps = tuple(store_steps)
        self.scale = stiffness_scale
        Mf = assemble_mass(mesh, density, pattern=self.pattern)
        self.mass = lump_mass(Mf) if mass_type == "lumped" else Mf
        self.P = None if probes is None else probe_matrix(mesh, probes)

    def model(self, xi):
        speed2 = self.scale * sample_speed(self.kle, xi)
        return build_wave_model(self.mesh, speed2, self.alpha0, self.alpha1, self.density, self.u0, self.v0,
                                self.load, self.pattern, self.mass)

    def __call__(self, xi):
        m = self.model(xi)
        P = None if self.P is None else self.P[:, m.red.free]
        tr = run_direct(m, self.params, self.n_steps, probe_op=P, store_steps=self.store_steps)
        parts = [tr.probes.ravel()] + [tr.fields[k] for k in self.store_steps]
        return np.concatenate(parts)


def nisp_project(samples, xi, basis: PceBasis) -> np.ndarray:
    """u_j = (1/M) sum_m u(xi_m) Psi_j(xi_m); samples (M, ...) -> (size, ...)."""
    samples = np.asarray(samples, dtype=float)
    Psi = basis.eval(np.asarray(xi, dtype=float))  # (M, size)
    flat = samples.reshape(len(samples), -1)
    return (Psi.T @ flat / len(samples)).reshape((basis.size,) + samples.shape[1:])


def analytic_solution_2d(x, y, t, m: int = 2, n: int = 1, c: float = 1.0):
    return np.sin(m * np.pi * x) * np.sin(n * np.pi * y) * np.cos(c * np.pi * np.sqrt(m * m + n * n) * t)


def relative_error(U, U_hat, floor: float = 0.0):
    """(e, is_relative): ||U - U_hat|| / ||U||, or the absolute error when ||U|| <= floor."""
    U = np.asarray(U, dtype=float)
    d = np.linalg.norm(U - np.asarray(U_hat, dtype=float))
    nU = np.linalg.norm(U)
    if nU <= floor or nU == 0.0:
        return float(d), False
    return float(d / nU), True


@dataclass
class ErrorCurve:
    t: np.ndarray
    e: np.ndarray
    relative: np.ndarray  # False where the analytic field fell below the guard
    dt: float
    n: int
    cfl: float
    probe: np.ndarray | None = None  # (n_t, 2): analytic, numerical at the probe

    @property
    def max_relative(self) -> float:
        return float(self.e[self.relative].max())

    def export_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "error", "relative"])
            for t, e, r in zip(self.t, self.e, self.relative):
                w.writerow([repr(float(t)), repr(float(e)), int(r)])


def error_curve(t, U_list, U_hat_list, guard: float = 0.1):
    """e(t) with the guard taken relative to the largest ||U|| over the run."""
    norms = [np.linalg.norm(U) for U in U_list]
    floor = guard * max(norms) if norms else 0.0
    es, rel = zip(*(relative_error(U, Uh, floor) for U, Uh in zip(U_list, U_hat_list)))
    return np.asarray(t), np.array(es), np.array(rel)


def verify_analytic(n: int = 64, cfl: float = 0.25, T: float = 1.0, m: int = 2, k: int = 1, c: float = 1.0,
                    mass_type: str = "lumped", dt: float | None = None, guard: float = 0.1,
                    probe=(0.292, 0.703)) -> ErrorCurve:
    """Undamped unit-square run from sin(m pi x) sin(k pi y) against the exact solution."""
    mesh = build_unit_square_mesh(n, n)
    model = build_wave_model(mesh, c * c, u0=sine_mode(mesh.node_coords, m, k), mass_type=mass_type)
    dt = dt if dt is not None else cfl_timestep(mesh.h, c, cfl)
    n_steps = int(np.ceil(T / dt - 1e-9))
    P = probe_matrix(mesh, [probe])[:, model.red.free]
    tr = run_direct(model, NewmarkParams(dt), n_steps, probe_op=P, store_every=1)
    X = mesh.node_coords[model.red.free]
    U = [analytic_solution_2d(X[:, 0], X[:, 1], s * dt, m, k, c) for s in range(n_steps + 1)]
    Uh = [tr.fields[s] for s in range(n_steps + 1)]
    t, e, rel = error_curve(tr.t, U, Uh, guard)
    exact = analytic_solution_2d(probe[0], probe[1], tr.t, m, k, c)
    return ErrorCurve(t, e, rel, dt, n, cfl, np.column_stack([exact, tr.probes[:, 0]]))


def temporal_error_ratio(n: int = 64, cfl: float = 0.25, T: float = 1.0, ref_factor: int = 32,
                         mass_type: str = "lumped"):
    """Max-over-time errors of the dt and dt/2 runs against a dt/ref_factor run on the same mesh.

    Comparing with a time-converged discrete reference isolates the
    Newmark error from the spatial error.  Returns (ratio, e_dt, e_dt2).
    """
    mesh = build_unit_square_mesh(n, n)
    model = build_wave_model(mesh, 1.0, u0=sine_mode(mesh.node_coords), mass_type=mass_type)
    dt = cfl_timestep(mesh.h, 1.0, cfl)
    n1 = int(np.ceil(T / dt - 1e-9))
    dt = T / n1  # land exactly on T so all runs share output instants

    def run(factor):
        tr = run_direct(model, NewmarkParams(dt / factor), n1 * factor, store_every=factor)
        return np.array([tr.fields[s * factor] for s in range(n1 + 1)])

    ref, a, b = run(ref_factor), run(1), run(2)
    scale = np.linalg.norm(ref, axis=1).max()
    e1 = np.linalg.norm(a - ref, axis=1).max() / scale
    e2 = np.linalg.norm(b - ref, axis=1).max() / scale
    return e1 / e2, e1, e2


@dataclass
class CflStudy:
    curves: dict  # (n, cfl) -> ErrorCurve

    def max_errors(self) -> dict:
        return {key: c.max_relative for key, c in self.curves.items()}

    def summary(self) -> dict:
        mx = self.max_errors()
        meshes = sorted({k[0] for k in mx})
        cfls = sorted({k[1] for k in mx}, reverse=True)
        cfl_mono = {
            n: all(mx[(n, a)] > mx[(n, b)] for a, b in zip(cfls[:-1], cfls[1:])) for n in meshes
        }
        mesh_mono = {
            c: all(mx[(a, c)] > mx[(b, c)] for a, b in zip(meshes[:-1], meshes[1:])) for c in cfls
        }
        return {"cfl_decreasing": cfl_mono, "mesh_decreasing": mesh_mono}

    def export_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "cfl", "t", "error", "relative"])
            for (n, c), cur in sorted(self.curves.items()):
                for t, e, r in zip(cur.t, cur.e, cur.relative):
                    w.writerow([n, repr(float(c)), repr(float(t)), repr(float(e)), int(r)])


def cfl_study(meshes=(32, 64), cfls=(1.0, 0.65, 0.25), T: float = 1.0, mass_type: str = "lumped") -> CflStudy:
    if not meshes or not cfls:
        raise ValueError("mesh and CFL lists must be nonempty")
    return CflStudy({(n, c): verify_analytic(n, c, T, mass_type=mass_type) for n in meshes for c in cfls})


@dataclass
class PdfEstimate:
    t: float
    edges: np.ndarray
    density: np.ndarray
    smoothed: np.ndarray
    peaks: np.ndarray  # bin indices of smoothed local maxima

    @property
    def centers(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def n_peaks(self) -> int:
        return len(self.peaks)

    @property
    def n_bins(self) -> int:
        return len(self.density)


def moving_average(y, width: int = 5):
    """Centered moving average; the window shrinks at the ends."""
    y = np.asarray(y, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(y)])
    h = width // 2
    lo = np.maximum(np.arange(len(y)) - h, 0)
    hi = np.minimum(np.arange(len(y)) + h + 1, len(y))
    return (c[hi] - c[lo]) / (hi - lo)


def count_peaks(y, rel: float = 0.05) -> np.ndarray:
    """Local maxima with prominence above ``rel`` times the global max.

    The curve is padded with zeros so a peak in an end bin counts.
    """
    y = np.asarray(y, dtype=float)
    if len(y) == 1:
        return np.array([0])
    peaks, _ = find_peaks(np.pad(y, 1), prominence=rel * y.max())
    return peaks - 1


def histogram_pdf(values, t: float, bins: int = 100, smooth: int = 5) -> PdfEstimate:
    values = np.asarray(values, dtype=float)
    lo, hi = values.min(), values.max()
    if hi - lo <= 1e-14 * max(1.0, abs(lo)):
        edges = np.array([lo - 0.5, lo + 0.5])
        dens = np.array([1.0])
        return PdfEstimate(t, edges, dens, dens.copy(), np.array([0]))
    dens, edges = np.histogram(values, bins=bins, range=(lo, hi), density=True)
    sm = moving_average(dens, smooth)
    return PdfEstimate(t, edges, dens, sm, count_peaks(sm))


def pdf_estimate(point=(0.25, 0.5), times=(0.5, 2.0, 5.0), samples: int = 100_000, sigma_g: float = 0.3,
                 mu_g: float = 0.0, bins: int = 100, seed: int = 12345, m: int = 2, n: int = 1,
                 surrogate=None):
    """Histograms of u(point, t) for a lognormal wave speed c = exp(g).

    Without ``surrogate`` the exact solution is evaluated per sample; with
    ``surrogate=(basis, coeff_fn)`` values are sum_j u_j(t) Psi_j(xi), where
    ``coeff_fn(t)`` returns the chaos coefficients at the point.
    """
    if samples < 10_000:
        raise ValueError("need at least 1e4 samples")
    rng = make_rng(seed)
    out = []
    if surrogate is None:
        c = np.exp(mu_g + sigma_g * rng.standard_normal(samples))
        for t in times:
            out.append(histogram_pdf(analytic_solution_2d(point[0], point[1], t, m, n, c), t, bins))
    else:
        basis, coeff_fn = surrogate
        Psi = basis.eval(rng.standard_normal((samples, basis.L)))
        for t in times:
            out.append(histogram_pdf(Psi @ np.asarray(coeff_fn(t)), t, bins))
    return out


def export_histogram(path, est: PdfEstimate) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_center", "density", "smoothed"])
        for c, d, s in zip(est.centers, est.density, est.smoothed):
            w.writerow([repr(float(c)), repr(float(d)), repr(float(s))])


def export_mc_probes(path, t, est_mean, est_std, est_se) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "mean", "std", "stderr"])
        for row in zip(t, est_mean, est_std, est_se):
            w.writerow([repr(float(x)) for x in row])


def standard_error_slope(Ms, stderrs) -> float:
    """Least-squares slope of log(stderr) against log(M)."""
    return float(np.polyfit(np.log(np.asarray(Ms, float)), np.log(np.asarray(stderrs, float)), 1)[0])


# ---------------------------------------------------------------------------
# 1D bar


@dataclass
class BarConfig:
    E: float = 5.0
    rho: float = 1.0
    A: float = 1.0
    length: float = 1.0
    h: float = 0.01
    dt: float = 0.002
    T: float = 1.0
    alpha0: float = 0.01
    alpha1: float = 0.001
    force_amplitude: float = 1.0
    force_frequency: float = 1.0  # Hz
    sigma_g: float = 0.1
    p_in: int = 7
    p_out: int = 10
    M: int = 2000
    seed: int = 12345
    snapshot_times: tuple = (0.1, 0.2)
    steady_T: float = 10.0
    steady_alpha0: float = 1.0
    steady_alpha1: float = 0.01

    @property
    def n_elements(self) -> int:
        return int(round(self.length / self.h))

    @property
    def wave_speed(self) -> float:
        return float(np.sqrt(self.E / self.rho))


def bar_mesh(cfg: BarConfig) -> Mesh:
    return build_interval_mesh(cfg.n_elements, cfg.length)


def bar_load(cfg: BarConfig, mesh: Mesh):
    """Tip force F sin(2 pi f t) on the free end, as a reduced load vector."""
    n = mesh.n_nodes - 1  # node 0 is fixed

    def load(t):
        f = np.zeros(n)
        f[-1] = cfg.force_amplitude * np.sin(2 * np.pi * cfg.force_frequency * t)
        return f

    return load


def bar_deterministic(cfg: BarConfig, alpha0=None, alpha1=None, T=None, store_every=None):
    mesh = bar_mesh(cfg)
    a0 = cfg.alpha0 if alpha0 is None else alpha0
    a1 = cfg.alpha1 if alpha1 is None else alpha1
    model = build_wave_model(mesh, cfg.E * cfg.A, a0, a1, cfg.rho * cfg.A, load=bar_load(cfg, mesh))
    T = cfg.T if T is None else T
    n_steps = int(round(T / cfg.dt))
    P = probe_matrix(mesh, [(cfg.length,)])[:, model.red.free]
    return mesh, model, run_direct(model, NewmarkParams(cfg.dt), n_steps, probe_op=P, store_every=store_every)


@dataclass
class BarSuite:
    cfg: BarConfig
    x: np.ndarray
    snapshots: dict  # t -> full nodal displacement
    steady: tuple  # (t, tip displacement)
    mc: McEstimate | None = None
    sg_coeffs: np.ndarray | None = None  # (nb, n_free) at T
    nisp_coeffs: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def _moments(self, coeffs):
        return coeffs[0], np.sqrt(np.sum(coeffs[1:] ** 2, axis=0))

    @property
    def sg_mean(self):
        return self._moments(self.sg_coeffs)[0]

    @property
    def sg_std(self):
        return self._moments(self.sg_coeffs)[1]

    @property
    def nisp_mean(self):
        return self._moments(self.nisp_coeffs)[0]

    @property
    def nisp_std(self):
        return self._moments(self.nisp_coeffs)[1]


def bar1d_suite(cfg: BarConfig | None = None, stochastic: bool = True, threads: int = 1) -> BarSuite:
    """Deterministic snapshots, a heavily damped steady-state trace and the
    MC / SG / NISP comparison at t = T for a lognormal modulus.

    The modulus is E(xi) = exp(log E + sigma xi): a single germ (L = 1)
    with median E.
    """
    from .sg import build_sg_model, sg_time_loop

    cfg = cfg or BarConfig()
    mesh, model, tr = bar_deterministic(cfg, store_every=1)
    steps = {t: int(round(t / cfg.dt)) for t in cfg.snapshot_times}
    snaps = {t: model.red.expand(tr.fields[s]) for t, s in steps.items()}
    _, _, st = bar_deterministic(cfg, cfg.steady_alpha0, cfg.steady_alpha1, cfg.steady_T)
    suite = BarSuite(cfg, mesh.node_coords[:, 0].copy(), snaps, (st.t, st.probes[:, 0]))
    if not stochastic:
        return suite

    kle = constant_mode_kle(cfg.sigma_g, mesh, g0=np.log(cfg.E))
    params = NewmarkParams(cfg.dt)
    n_steps = int(round(cfg.T / cfg.dt))
    load = bar_load(cfg, mesh)
    sampler = WaveSampler(mesh, kle, params, n_steps, None, alpha0=cfg.alpha0, alpha1=cfg.alpha1,
                          density=cfg.rho * cfg.A, load=load, store_steps=(n_steps,), stiffness_scale=cfg.A)
    suite.mc = mc_solve(sampler, 1, cfg.M, cfg.seed, threads)

    sgm = build_sg_model(mesh, kle, cfg.p_in, cfg.p_out, cfg.alpha0, cfg.alpha1, cfg.rho * cfg.A, load=load,
                         stiffness_scale=cfg.A)
    sg_tr = sg_time_loop(sgm, params, n_steps, store_steps=(n_steps,))
    suite.sg_coeffs = sg_tr.fields[n_steps].reshape(sgm.nb, -1)

    # NISP on its own sample stream: shared draws would make its mean the MC mean
    est, samples = mc_solve(sampler, 1, cfg.M, cfg.seed + 1, threads, keep_samples=True)
    suite.nisp_coeffs = nisp_project(samples, est.xi, PceBasis(1, cfg.p_out))
    return suite


def standard_error_study(sample_fn, L: int, Ms=(250, 1000, 4000), seed: int = 12345, threads: int = 1):
    """Standard error of the mean at each M in ``Ms``, from nested prefixes of one stream.

    Returns (Ms, mean-over-outputs stderr, slope of log stderr vs log M).
    """
    Ms = sorted(int(m) for m in Ms)
    if Ms[0] < 2:
        raise ValueError("need at least two samples")
    xi = make_rng(seed).standard_normal((Ms[-1], L))
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        results = pool.map(sample_fn, xi) if pool else map(sample_fn, xi)
        mom, out = None, []
        for k, y in enumerate(results, start=1):
            y = np.asarray(y, dtype=float)
            if mom is None:
                mom = StreamingMoments(y.shape)
            mom.push(y)
            if k in Ms:
                out.append(float(np.mean(mom.stderr)))
    finally:
        if pool:
            pool.shutdown()
    return np.array(Ms), np.array(out), standard_error_slope(Ms, out)
