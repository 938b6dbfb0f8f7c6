"""Deterministic wave models (operators, initial data, probes) and a
single-domain direct time loop used as the reference solver."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import (
    AssemblyPattern,
    DirichletReduction,
    assemble_mass,
    assemble_stiffness,
    eliminate_dirichlet,
    lump_mass,
)
from .mesh import Mesh
from .newmark import NewmarkParams, StateTriple, initial_acceleration, newmark_rhs, newmark_update, transient_stiffness


def gaussian_pulse(coords, x0=0.7, y0=0.7, beta=1.0, alpha=0.01):
    r2 = (coords[:, 0] - x0) ** 2 + (coords[:, 1] - y0) ** 2
    return beta * np.exp(-r2 / alpha)


def sine_mode(coords, m=2, n=1):
    return np.sin(m * np.pi * coords[:, 0]) * np.sin(n * np.pi * coords[:, 1])


def probe_matrix(mesh: Mesh, points) -> sp.csr_matrix:
    """Rows interpolate nodal fields linearly at ``points``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    rows, cols, vals = [], [], []
    if mesh.dim == 1:
        x = mesh.node_coords[:, 0]
        for r, (px,) in enumerate(points):
            e = min(max(np.searchsorted(x, px) - 1, 0), mesh.n_elements - 1)
            a, b = mesh.elements[e]
            t = (px - x[a]) / (x[b] - x[a])
            rows += [r, r]
            cols += [a, b]
            vals += [1.0 - t, t]
        return sp.csr_matrix((vals, (rows, cols)), shape=(len(points), mesh.n_nodes))
    P = mesh.node_coords[mesh.elements]  # (ne, 3, 2)
    for r, pt in enumerate(points):
        v0 = P[:, 0]
        T = np.stack([P[:, 1] - v0, P[:, 2] - v0], axis=2)  # (ne, 2, 2)
        lam12 = np.linalg.solve(T, (pt - v0)[..., None])[..., 0]
        lam = np.column_stack([1.0 - lam12.sum(axis=1), lam12])
        inside = np.all(lam >= -1e-12, axis=1)
        if not inside.any():
            raise ValueError(f"probe {pt} outside the mesh")
        e = int(np.flatnonzero(inside)[0])
        for k in range(3):
            rows.append(r)
            cols.append(mesh.elements[e, k])
            vals.append(max(lam[e, k], 0.0))
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(points), mesh.n_nodes))


@dataclass
class WaveModel:
    """Reduced (Dirichlet-eliminated) second-order system M u'' + C u' + K u = f."""

    mesh: Mesh
    red: DirichletReduction
    M: sp.csr_matrix
    C: sp.csr_matrix | None
    K: sp.csr_matrix
    u0: np.ndarray
    v0: np.ndarray
    load: Callable | None = None  # t -> reduced load vector
    speed2: np.ndarray | None = None  # nodal squared wave speed
    alpha0: float = 0.0
    alpha1: float = 0.0
    density: float = 1.0
    extra: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.M.shape[0]

    def f(self, t: float) -> np.ndarray:
        return np.zeros(self.n) if self.load is None else self.load(t)


def build_wave_model(
    mesh: Mesh,
    speed2,
    alpha0: float = 0.0,
    alpha1: float = 0.0,
    density: float = 1.0,
    u0=None,
    v0=None,
    load=None,
    pattern: AssemblyPattern | None = None,
    mass=None,
    mass_type: str = "consistent",
) -> WaveModel:
    """Assemble and reduce operators.  ``u0``, ``v0`` are full nodal vectors.

    ``mass_type`` is "consistent" or "lumped" (row sums); ignored when an
    explicit full ``mass`` matrix is passed.
    """
    if mass_type not in ("consistent", "lumped"):
        raise ValueError(f"unknown mass_type {mass_type!r}")
    pattern = pattern or AssemblyPattern(mesh)
    K = assemble_stiffness(mesh, speed2, pattern=pattern)
    if mass is not None:
        Mf = mass
    else:
        Mf = assemble_mass(mesh, density, pattern=pattern)
        if mass_type == "lumped":
            Mf = lump_mass(Mf)
    Kr, red = eliminate_dirichlet(K, mesh)
    Mr = eliminate_dirichlet(Mf, mesh)[0]
    Cr = (alpha0 * Mr + alpha1 * Kr).tocsr() if (alpha0 or alpha1) else None
    n = len(red.free)
    u0r = np.zeros(n) if u0 is None else red.reduce_vector(u0)
    v0r = np.zeros(n) if v0 is None else red.reduce_vector(v0)
    s2 = np.broadcast_to(np.asarray(speed2, dtype=float), (mesh.n_nodes,)).copy()
    return WaveModel(mesh, red, Mr, Cr, Kr, u0r, v0r, load, s2, alpha0, alpha1, density, {"mass_type": mass_type})


@dataclass
class Trajectory:
    t: np.ndarray  # (n_steps + 1,)
    probes: np.ndarray  # (n_steps + 1, n_probes)
    fields: dict  # step -> reduced u
    iterations: list = field(default_factory=list)
    residuals: list = field(default_factory=list)


def _record(store_every, step):
    return store_every is not None and store_every > 0 and step % store_every == 0


def run_direct(
    model: WaveModel,
    params: NewmarkParams,
    n_steps: int,
    probe_op=None,
    store_every: int | None = None,
    store_steps=(),
) -> Trajectory:
    """Factor K~ once and march with sparse back-substitution."""
    Kt = transient_stiffness(model.M, model.C, model.K, params).tocsc()
    lu = spla.splu(Kt)
    Mlu = spla.splu(model.M.tocsc())
    f0 = model.f(0.0)
    a0 = initial_acceleration(Mlu.solve, f0, model.C, model.K, model.u0, model.v0)
    state = StateTriple(model.u0.copy(), model.v0.copy(), a0, 0.0)
    P = probe_op if probe_op is not None else sp.csr_matrix((0, model.n))
    ts = [0.0]
    pv = [P @ state.u]
    fields = {}
    store_steps = set(store_steps)
    if _record(store_every, 0) or 0 in store_steps:
        fields[0] = state.u.copy()
    for step in range(1, n_steps + 1):
        t_next = step * params.dt
        rhs = newmark_rhs(state, model.M, model.C, params, model.f(t_next))
        state = newmark_update(state, lu.solve(rhs), params)
        ts.append(t_next)
        pv.append(P @ state.u)
        if _record(store_every, step) or step in store_steps:
            fields[step] = state.u.copy()
    return Trajectory(np.array(ts), np.array(pv), fields)
