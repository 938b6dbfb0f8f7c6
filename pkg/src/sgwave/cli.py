"""Command-line drivers: ``sgwave <subcommand> --config cfg.json --out dir``."""
from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__, kernels
from .config import ConfigError, RunConfig, config_from_dict, load_config
from .dd import SolverConfig, export_solver_csv, time_loop_det
from .kle import constant_mode_kle, kle_exponential
from .mc import (
    BarConfig,
    WaveSampler,
    bar1d_suite,
    bar_load,
    bar_mesh,
    cfl_study,
    export_histogram,
    export_mc_probes,
    mc_solve,
    nisp_project,
    pdf_estimate,
    standard_error_study,
    verify_analytic,
)
from .mesh import build_unit_square_mesh, partition_structured
from .model import build_wave_model, gaussian_pulse, probe_matrix, run_direct
from .newmark import NewmarkParams, cfl_timestep, dominant_frequencies, export_probe_series, export_spectrum, magnitude_spectrum, rayleigh_calibrate
from .pce import PceBasis
from .sg import build_sg_model, export_probe_moments, export_snapshot, sg_time_loop
from .svg import line_plot

SUBCOMMANDS = (
    "solve-det",
    "solve-sg",
    "mc",
    "nisp",
    "compare-preconditioners",
    "verify-analytic",
    "cfl-study",
    "pdf",
    "rayleigh-calibrate",
    "bar1d",
)


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


class Run:
    """Output directory bookkeeping: every written file is recorded for the manifest."""

    def __init__(self, root: Path, cfg: RunConfig):
        self.root = root
        self.cfg = cfg
        self.files = []

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.root / name

    def svg(self, name, *args, **kw) -> None:
        if self.cfg.svg:
            line_plot(self.path(name), *args, **kw)


# ---------------------------------------------------------------------------
# shared model setup


def _mesh(cfg):
    return build_unit_square_mesh(cfg.mesh.nx, cfg.mesh.ny)


def _pulse(cfg, mesh, alpha=None):
    p = cfg.physics.pulse
    return gaussian_pulse(mesh.node_coords, p.x0, p.y0, p.beta, p.alpha if alpha is None else alpha)


def _damping(cfg):
    if cfg.physics.auto_calibrate:
        res = _calibration(cfg)
        return res["alpha0"], res["alpha1"]
    return cfg.physics.alpha0, cfg.physics.alpha1


def _sg_setup(cfg):
    mesh = _mesh(cfg)
    ph, st = cfg.physics, cfg.stochastic
    kle = kle_exponential(ph.sigma_g, ph.bx, ph.by, st.L, mesh, ph.g0)
    a0, a1 = _damping(cfg)
    model = build_sg_model(mesh, kle, st.p_in, st.p_out, a0, a1, ph.density, u0=_pulse(cfg, mesh), mass_type=ph.mass)
    params = NewmarkParams(cfl_timestep(mesh.h, model.c_max(), ph.cfl))
    n_steps = int(np.ceil(ph.T_final / params.dt - 1e-9))
    return mesh, kle, model, params, n_steps, (a0, a1)


def _solver(cfg):
    s = cfg.solver
    return SolverConfig(s.tol, s.max_iter, s.preconditioner, cfg.threads)


def _steps_for(times, dt, n_steps):
    return sorted({min(max(int(round(t / dt)), 0), n_steps) for t in times})


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve_det(run: Run):
    cfg = run.cfg
    mesh, kle, sgm, params, n_steps, (a0, a1) = _sg_setup(cfg)
    speed2 = np.exp(cfg.physics.g0)
    model = build_wave_model(mesh, speed2, a0, a1, cfg.physics.density, u0=_pulse(cfg, mesh), mass_type=cfg.physics.mass)
    part = partition_structured(mesh, cfg.partition.px, cfg.partition.py)
    P = probe_matrix(mesh, cfg.probes)[:, model.red.free]
    steps = _steps_for(cfg.snapshot_times, params.dt, n_steps)
    tr = time_loop_det(model, part, params, n_steps, _solver(cfg), probe_op=P, store_steps=steps)
    for k, _ in enumerate(cfg.probes):
        export_probe_series(run.path(f"probe_{k}.csv"), tr.t, tr.probes[:, k])
    export_solver_csv(run.path("solver.csv"), tr.reports)
    X = mesh.node_coords
    for s in steps:
        u = model.red.expand(tr.fields[s])
        _write_csv(run.path(f"snapshot_step{s}.csv"), ["node_id", "x", "y", "u"],
                   [(i, float(X[i, 0]), float(X[i, 1]), float(u[i])) for i in range(mesh.n_nodes)])
    run.svg("probes.svg", [(tr.t, tr.probes[:, k], f"probe {p}") for k, p in enumerate(cfg.probes)],
            "t [s]", "u", "Deterministic response")
    return {"dt": params.dt, "n_steps": n_steps, "mean_iterations": tr.mean_iterations}


def cmd_solve_sg(run: Run):
    cfg = run.cfg
    mesh, kle, model, params, n_steps, _ = _sg_setup(cfg)
    part = partition_structured(mesh, cfg.partition.px, cfg.partition.py)
    P = probe_matrix(mesh, cfg.probes)[:, model.red.free]
    steps = _steps_for(cfg.snapshot_times, params.dt, n_steps)
    tr = sg_time_loop(model, params, n_steps, part, _solver(cfg), probe_op=P, store_steps=steps)
    coeffs = tr.probe_coefficients()
    for k, _ in enumerate(cfg.probes):
        export_probe_moments(run.path(f"sg_probe_{k}.csv"), tr.t, coeffs[:, :, k], include_coeffs=True)
    export_solver_csv(run.path("solver.csv"), tr.reports)
    for s in steps:
        export_snapshot(run.path(f"sg_snapshot_step{s}.csv"), model, tr.fields[s])
    mean, std = tr.probe_moments()
    run.svg("sg_mean.svg", [(tr.t, mean[:, k], f"{p}") for k, p in enumerate(cfg.probes)], "t [s]", "mean", "SG mean")
    run.svg("sg_std.svg", [(tr.t, std[:, k], f"{p}") for k, p in enumerate(cfg.probes)], "t [s]", "std", "SG std")
    return {"dt": params.dt, "n_steps": n_steps, "n_pce": model.nb, "mean_iterations": tr.mean_iterations}


def _sampler(cfg, mesh, kle, params, n_steps, damping):
    return WaveSampler(mesh, kle, params, n_steps, cfg.probes, u0=_pulse(cfg, mesh), alpha0=damping[0],
                       alpha1=damping[1], density=cfg.physics.density, mass_type=cfg.physics.mass)


def cmd_mc(run: Run):
    cfg = run.cfg
    mesh, kle, model, params, n_steps, damping = _sg_setup(cfg)
    est = mc_solve(_sampler(cfg, mesh, kle, params, n_steps, damping), kle.L, cfg.sampling.M, cfg.sampling.seed,
                   cfg.threads)
    npb = len(cfg.probes)
    t = params.dt * np.arange(n_steps + 1)
    mean, std, se = (a.reshape(n_steps + 1, npb) for a in (est.mean, est.std, est.stderr))
    for k in range(npb):
        export_mc_probes(run.path(f"mc_probe_{k}.csv"), t, mean[:, k], std[:, k], se[:, k])
    run.svg("mc_mean.svg", [(t, mean[:, k], f"{p}") for k, p in enumerate(cfg.probes)], "t [s]", "mean", "MC mean")
    run.svg("mc_std.svg", [(t, std[:, k], f"{p}") for k, p in enumerate(cfg.probes)], "t [s]", "std", "MC std")
    return {"dt": params.dt, "n_steps": n_steps, "M": est.M}


def cmd_nisp(run: Run):
    cfg = run.cfg
    mesh, kle, model, params, n_steps, damping = _sg_setup(cfg)
    est, samples = mc_solve(_sampler(cfg, mesh, kle, params, n_steps, damping), kle.L, cfg.sampling.M,
                            cfg.sampling.seed, cfg.threads, keep_samples=True)
    basis = PceBasis(kle.L, cfg.stochastic.p_out)
    npb = len(cfg.probes)
    coeffs = nisp_project(samples, est.xi, basis).reshape(basis.size, n_steps + 1, npb)
    t = params.dt * np.arange(n_steps + 1)
    for k in range(npb):
        export_probe_moments(run.path(f"nisp_probe_{k}.csv"), t, coeffs[:, :, k].T, include_coeffs=True)
    mean, std = coeffs[0], np.sqrt(np.sum(coeffs[1:] ** 2, axis=0))
    run.svg("nisp_mean.svg", [(t, mean[:, k], f"{p}") for k, p in enumerate(cfg.probes)], "t [s]", "mean", "NISP mean")
    run.svg("nisp_std.svg", [(t, std[:, k], f"{p}") for k, p in enumerate(cfg.probes)], "t [s]", "std", "NISP std")
    return {"dt": params.dt, "n_steps": n_steps, "M": est.M, "n_pce": basis.size}


def cmd_compare(run: Run):
    cfg = run.cfg
    cc = cfg.compare
    mesh = build_unit_square_mesh(cc.nx, cc.ny)
    model = build_wave_model(mesh, np.exp(cfg.physics.g0), u0=_pulse(cfg, mesh), mass_type=cfg.physics.mass)
    params = NewmarkParams(cc.dt)
    rows, table = [], {}
    for px, py in cc.subdomains:
        part = partition_structured(mesh, px, py)
        for pc in cc.preconditioners:
            sc = SolverConfig(cfg.solver.tol, cfg.solver.max_iter, pc, cfg.threads)
            tr = time_loop_det(model, part, params, cc.n_steps, sc)
            rows.append((px * py, px, py, pc, tr.mean_iterations))
            table.setdefault(pc, []).append((px * py, tr.mean_iterations))
    _write_csv(run.path("iterations.csv"), ["n_sub", "px", "py", "preconditioner", "mean_iterations"], rows)
    run.svg("iterations.svg", [([a for a, _ in v], [b for _, b in v], k) for k, v in table.items()],
            "subdomains", "mean PCG iterations", "Preconditioner comparison", markers=True)
    return {"vertices": mesh.n_nodes, "table": {k: [b for _, b in v] for k, v in table.items()}}


def cmd_verify(run: Run):
    a = run.cfg.analytic
    cur = verify_analytic(a.n, a.cfl, a.T, a.m, a.k, a.c, a.mass, guard=a.guard, probe=a.probe)
    cur.export_csv(run.path("error.csv"))
    _write_csv(run.path("probe.csv"), ["t", "analytic", "numerical"],
               [(float(t), float(p[0]), float(p[1])) for t, p in zip(cur.t, cur.probe)])
    rel = cur.relative
    run.svg("error.svg", [(cur.t[rel], cur.e[rel], f"CFL {a.cfl}")], "t [s]", "relative error", "Analytic verification")
    run.svg("probe.svg", [(cur.t, cur.probe[:, 0], "analytic"), (cur.t, cur.probe[:, 1], "numerical")],
            "t [s]", "u", f"Response at {tuple(a.probe)}")
    return {"dt": cur.dt, "max_relative_error": cur.max_relative}


def cmd_cfl(run: Run):
    c = run.cfg.cfl_study
    study = cfl_study(c.meshes, c.cfls, c.T, c.mass)
    study.export_csv(run.path("cfl_curves.csv"))
    _write_csv(run.path("cfl_max.csv"), ["n", "cfl", "max_error"],
               [(n, float(cf), e) for (n, cf), e in sorted(study.max_errors().items())])
    for n in c.meshes:
        series = []
        for cf in c.cfls:
            cur = study.curves[(n, cf)]
            series.append((cur.t[cur.relative], cur.e[cur.relative], f"CFL {cf}"))
        run.svg(f"cfl_{n}.svg", series, "t [s]", "relative error", f"{n}x{n} mesh")
    s = study.summary()
    return {"cfl_decreasing": {str(k): v for k, v in s["cfl_decreasing"].items()},
            "mesh_decreasing": {str(k): v for k, v in s["mesh_decreasing"].items()}}


def cmd_pdf(run: Run):
    cfg = run.cfg
    p = cfg.pdf
    ests = pdf_estimate(p.point, p.times, p.samples, p.sigma_g, p.mu_g, p.bins, cfg.sampling.seed)
    for est in ests:
        export_histogram(run.path(f"pdf_t{est.t:g}.csv"), est)
    run.svg("pdf.svg", [(e.centers, e.smoothed, f"t={e.t:g}") for e in ests], "u", "density", "Response pdf")
    return {"peaks": {f"{e.t:g}": e.n_peaks for e in ests}}


def _calibration(cfg, run: Run | None = None):
    r = cfg.rayleigh
    mesh = build_unit_square_mesh(r.n, r.n)
    model = build_wave_model(mesh, np.exp(cfg.physics.g0), u0=_pulse(cfg, mesh, r.pulse_alpha), mass_type=cfg.physics.mass)
    n_steps = int(round(r.T / r.dt))
    P = probe_matrix(mesh, [r.probe])[:, model.red.free]
    tr = run_direct(model, NewmarkParams(r.dt), n_steps, probe_op=P)
    series = tr.probes[:, 0]
    f1, f2 = dominant_frequencies(series, r.dt, 2)
    a0, a1 = rayleigh_calibrate(2 * np.pi * f1, 2 * np.pi * f2, r.xi[0], r.xi[1])
    if run is not None:
        export_probe_series(run.path("response.csv"), tr.t, series)
        freq, mag = magnitude_spectrum(series, r.dt)
        export_spectrum(run.path("spectrum.csv"), freq, mag)
        run.svg("spectrum.svg", [(freq, mag, "|U(f)|")], "f [Hz]", "magnitude", "Undamped response spectrum")
    return {"f1_Hz": f1, "f2_Hz": f2, "alpha0": a0, "alpha1": a1}


def cmd_rayleigh(run: Run):
    res = _calibration(run.cfg, run)
    _write_csv(run.path("rayleigh.csv"), ["f1_Hz", "f2_Hz", "alpha0", "alpha1"],
               [(res["f1_Hz"], res["f2_Hz"], res["alpha0"], res["alpha1"])])
    return res


def cmd_bar(run: Run):
    cfg = run.cfg
    b = cfg.bar
    bc = BarConfig(b.E, b.rho, b.A, b.length, b.h, b.dt, b.T, b.alpha0, b.alpha1, b.force_amplitude,
                   b.force_frequency, b.sigma_g, b.p_in, b.p_out, cfg.sampling.M, cfg.sampling.seed,
                   tuple(b.snapshot_times), b.steady_T, b.steady_alpha0, b.steady_alpha1)
    suite = bar1d_suite(bc, True, cfg.threads)
    x = suite.x
    times = sorted(suite.snapshots)
    _write_csv(run.path("bar_snapshots.csv"), ["x"] + [f"u_t{t:g}" for t in times],
               [(float(x[i]), *[float(suite.snapshots[t][i]) for t in times]) for i in range(len(x))])
    st_t, st_u = suite.steady
    _write_csv(run.path("bar_steady.csv"), ["t", "u_tip"], [(float(a), float(c)) for a, c in zip(st_t, st_u)])
    xf = x[1:]
    cols = [suite.mc.mean, suite.mc.std, suite.sg_mean, suite.sg_std, suite.nisp_mean, suite.nisp_std]
    _write_csv(run.path("bar_compare.csv"), ["x", "mc_mean", "mc_std", "sg_mean", "sg_std", "nisp_mean", "nisp_std"],
               [(float(xf[i]), *[float(c[i]) for c in cols]) for i in range(len(xf))])
    sgn = np.linalg.norm(suite.sg_coeffs, axis=1)
    nin = np.linalg.norm(suite.nisp_coeffs, axis=1)
    _write_csv(run.path("bar_pce_coeffs.csv"), ["order", "sg_norm", "nisp_norm"],
               [(k, float(a), float(c)) for k, (a, c) in enumerate(zip(sgn, nin))])
    mesh = bar_mesh(bc)
    n_steps = int(round(bc.T / bc.dt))
    sampler = WaveSampler(mesh, constant_mode_kle(bc.sigma_g, mesh, np.log(bc.E)), NewmarkParams(bc.dt), n_steps,
                          None, alpha0=bc.alpha0, alpha1=bc.alpha1, density=bc.rho * bc.A, load=bar_load(bc, mesh),
                          store_steps=(n_steps,), stiffness_scale=bc.A)
    Ms, se, slope = standard_error_study(sampler, 1, b.se_samples, cfg.sampling.seed, cfg.threads)
    _write_csv(run.path("bar_stderr.csv"), ["M", "stderr"], [(int(m), float(s)) for m, s in zip(Ms, se)])
    run.svg("bar_snapshots.svg", [(x, suite.snapshots[t], f"t={t:g}") for t in times], "x", "u", "Bar snapshots")
    run.svg("bar_mean.svg", [(xf, suite.mc.mean, "MC"), (xf, suite.sg_mean, "SG"), (xf, suite.nisp_mean, "NISP")],
            "x", "mean u", f"Mean at t={bc.T:g}")
    run.svg("bar_std.svg", [(xf, suite.mc.std, "MC"), (xf, suite.sg_std, "SG"), (xf, suite.nisp_std, "NISP")],
            "x", "std u", f"Std at t={bc.T:g}")
    run.svg("bar_stderr.svg", [(Ms, se, "standard error")], "M", "stderr", "MC standard error", logx=True, logy=True,
            markers=True)
    return {
        "wave_speed": bc.wave_speed,
        "sg_vs_mc_l2": float(np.linalg.norm(suite.sg_mean - suite.mc.mean)),
        "nisp_vs_mc_l2": float(np.linalg.norm(suite.nisp_mean - suite.mc.mean)),
        "stderr_slope": slope,
    }


COMMANDS = {
    "solve-det": cmd_solve_det,
    "solve-sg": cmd_solve_sg,
    "mc": cmd_mc,
    "nisp": cmd_nisp,
    "compare-preconditioners": cmd_compare,
    "verify-analytic": cmd_verify,
    "cfl-study": cmd_cfl,
    "pdf": cmd_pdf,
    "rayleigh-calibrate": cmd_rayleigh,
    "bar1d": cmd_bar,
}


def _versions():
    return {
        "sgwave": __version__,
        "backend": kernels.BACKEND,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def _fail(kind: str, exc: Exception, code: int) -> int:
    json.dump({"error": kind, "message": str(exc)}, sys.stdout)
    sys.stdout.write("\n")
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sgwave", description="Stochastic Galerkin wave solver drivers")
    ap.add_argument("command", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="JSON run configuration (defaults used when omitted)")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--threads", type=int, help="worker threads (overrides the config)")
    ap.add_argument("--seed", type=int, help="sampling seed (overrides the config)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        data = cfg.to_dict()
        if args.threads is not None:
            data["threads"] = args.threads
        if args.seed is not None:
            data["sampling"]["seed"] = args.seed
        cfg = config_from_dict(data)
    except ConfigError as exc:
        return _fail("config", exc, 2)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".sgwave-", dir=out.parent))
    run = Run(tmp, cfg)
    t0 = time.perf_counter()
    try:
        result = COMMANDS[args.command](run)
    except Exception as exc:  # noqa: BLE001
        shutil.rmtree(tmp, ignore_errors=True)
        return _fail(type(exc).__name__, exc, 1)
    manifest = {
        "command": args.command,
        "config": cfg.to_dict(),
        "versions": _versions(),
        "seed": cfg.sampling.seed,
        "threads": cfg.threads,
        "wall_time_s": time.perf_counter() - t0,
        "result": result,
        "files": sorted(run.files),
    }
    with open(tmp / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=float)
    out.mkdir(parents=True, exist_ok=True)
    for name in run.files + ["manifest.json"]:
        os.replace(tmp / name, out / name)
    shutil.rmtree(tmp, ignore_errors=True)
    print(json.dumps({"out": str(out), "result": result}, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())
