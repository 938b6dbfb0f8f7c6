"""Non-overlapping domain decomposition: interface Schur complement,
lumped / one-level / two-level Neumann-Neumann preconditioners and PCG.

The core works on abstract local systems: a sparse local matrix with
interior and interface index sets plus maps into a global interface
vector and a global corner vector.  The deterministic solver fills these
with nodal indices; the stochastic solver fills them with PCE-replicated
indices, so the same code serves both.
"""
from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import AssemblyPattern, assemble_mass, assemble_stiffness, lump_mass
from .mesh import Partition, build_scaling
from .model import Trajectory, WaveModel
from .newmark import NewmarkParams, StateTriple, initial_acceleration, newmark_update, predictors, transient_stiffness

PRECONDITIONERS = ("lumped", "nn1", "nn2")


@dataclass
class SolverConfig:
    tol: float = 1e-8
    max_iter: int = 500
    preconditioner: str = "nn2"
    threads: int = 1

    def __post_init__(self):
        if self.preconditioner not in PRECONDITIONERS:
            raise ValueError(f"preconditioner must be one of {PRECONDITIONERS}")
        if not self.tol > 0 or self.max_iter < 1 or self.threads < 1:
            raise ValueError("need tol > 0, max_iter >= 1, threads >= 1")

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            data = json.load(fh)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown solver keys: {sorted(unknown)}")
        return cls(**data)

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)


@dataclass
class PcgReport:
    iterations: int
    residuals: list
    converged: bool
    true_residual: float = 0.0

    @property
    def final_residual(self) -> float:
        return self.residuals[-1]


def pcg(matvec, precond, b, tol: float = 1e-8, max_iter: int = 500, x0=None):
    """Preconditioned CG.

    Stops when the relative true residual ||b - Ax|| / ||b|| is at most
    ``tol``.  The recurrence residual triggers the check; if the true
    residual disagrees the recurrence is reset and iteration continues.
    """
    b = np.asarray(b, dtype=float)
    bn = np.linalg.norm(b)
    if bn == 0.0:
        return np.zeros_like(b), PcgReport(0, [0.0], True, 0.0)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - matvec(x) if x0 is not None else b.copy()
    hist = [np.linalg.norm(r) / bn]
    if hist[0] <= tol:
        return x, PcgReport(0, hist, True, hist[0])
    z = precond(r)
    p = z.copy()
    rz = r @ z
    it = 0
    converged = False
    true_res = hist[0]
    while it < max_iter:
        it += 1
        q = matvec(p)
        pq = p @ q
        if pq <= 0.0:
            break
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        rel = np.linalg.norm(r) / bn
        hist.append(rel)
        if rel <= tol:
            r = b - matvec(x)
            true_res = np.linalg.norm(r) / bn
            if true_res <= tol:
                converged = True
                break
        z = precond(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if not converged:
        true_res = np.linalg.norm(b - matvec(x)) / bn
    return x, PcgReport(it, hist, converged, float(true_res))


def _cho(A):
    return sla.cho_factor(A, lower=True, check_finite=False) if A.size else None


def _cho_solve(f, b):
    return sla.cho_solve(f, b, check_finite=False) if f is not None else np.zeros_like(b)


class SubdomainSystem:
    """Blocks of one subdomain's transient operator and the dense local Schur data.

    ``A`` is the local sparse matrix; ``I`` and ``G`` index its interior and
    interface unknowns.  ``R`` maps local interface slots to the global
    interface vector, ``D`` holds their partition-of-unity weights.  Within
    the local interface, ``r_loc`` / ``c_loc`` split remaining from corner
    slots and ``B`` maps corner slots to the global corner vector.
    """

    def __init__(self, A, I, G, R, D, r_loc, c_loc, B, neumann: bool = True, reg: float = 1e-10):
        A = sp.csr_matrix(A)
        self.I = np.asarray(I, dtype=np.int64)
        self.G = np.asarray(G, dtype=np.int64)
        self.R = np.asarray(R, dtype=np.int64)
        self.D = np.asarray(D, dtype=float)
        self.r_loc = np.asarray(r_loc, dtype=np.int64)
        self.c_loc = np.asarray(c_loc, dtype=np.int64)
        self.B = np.asarray(B, dtype=np.int64)
        self.n_loc = A.shape[0]
        self.A_II = A[self.I][:, self.I].tocsc()
        self.A_IG = A[self.I][:, self.G].tocsr()
        self.A_GI = A[self.G][:, self.I].tocsr()
        self.A_GG = A[self.G][:, self.G].tocsc()
        self.lu_II = spla.splu(self.A_II) if len(self.I) else None

        S = self.A_GG.toarray()
        if self.lu_II is not None and len(self.G):
            S = S - self.A_GI @ self.lu_II.solve(self.A_IG.toarray())
        self.S = 0.5 * (S + S.T)
        r, c = self.r_loc, self.c_loc
        self.S_rr = self.S[np.ix_(r, r)]
        self.S_rc = self.S[np.ix_(r, c)]
        self.S_cr = self.S[np.ix_(c, r)]
        self.S_cc = self.S[np.ix_(c, c)]
        self.chol_rr = _cho(self.S_rr)
        self.T = _cho_solve(self.chol_rr, self.S_rc) if len(c) else np.zeros((len(r), 0))
        self.F = self.S_cc - self.S_cr @ self.T
        self.lu_GG = spla.splu(self.A_GG) if len(self.G) else None

        self.lu_full = None
        if neumann and len(self.G):
            Af = A.tocsc()
            try:
                self.lu_full = spla.splu(Af)
            except RuntimeError:
                # safety net for a singular Neumann matrix
                shift = reg * abs(Af.diagonal()).sum() / max(Af.shape[0], 1)
                self.lu_full = spla.splu((Af + shift * sp.identity(Af.shape[0])).tocsc())

    @property
    def n_interface(self) -> int:
        return len(self.G)

    # local actions on local interface vectors
    def schur(self, x):
        return self.S @ x

    def interface_rhs(self, f_loc):
        g = f_loc[self.G].copy()
        if self.lu_II is not None:
            g -= self.A_GI @ self.lu_II.solve(f_loc[self.I])
        return g

    def recover(self, f_loc, u_G):
        if self.lu_II is None:
            return np.zeros(0)
        return self.lu_II.solve(f_loc[self.I] - self.A_IG @ u_G)

    def lumped(self, w):
        return self.lu_GG.solve(w)

    def neumann(self, w):
        rhs = np.zeros(self.n_loc)
        rhs[self.G] = w
        return self.lu_full.solve(rhs)[self.G]


class InterfaceProblem:
    """Global interface operator over a list of subdomain systems.

    Subdomain work can run on a thread pool; every reduction runs in
    subdomain order so the results do not depend on the thread count.
    """

    def __init__(self, systems, n_interface: int, n_corner: int, threads: int = 1):
        self.systems = list(systems)
        self.n_interface = n_interface
        self.n_corner = n_corner
        self.threads = threads
        self._pool = ThreadPoolExecutor(threads) if threads > 1 else None
        self.coarse = build_coarse(self.systems, n_corner)

    def map(self, fn, *iterables):
        if self._pool is None:
            return list(map(fn, *iterables))
        return list(self._pool.map(fn, *iterables))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def _gather_sum(self, parts):
        out = np.zeros(self.n_interface)
        for sysm, y in zip(self.systems, parts):
            out[sysm.R] += y
        return out

    def schur_matvec(self, x):
        return self._gather_sum(self.map(lambda s: s.schur(x[s.R]), self.systems))

    def schur_rhs(self, f_locs):
        return self._gather_sum(self.map(lambda s, f: s.interface_rhs(f), self.systems, f_locs))

    def precond_lumped(self, r):
        return self._gather_sum(self.map(lambda s: s.D * s.lumped(s.D * r[s.R]), self.systems))

    def precond_nn1(self, r):
        return self._gather_sum(self.map(lambda s: s.D * s.neumann(s.D * r[s.R]), self.systems))

    def precond_nn2(self, r):
        def local(s):
            w = s.D * r[s.R]
            y = _cho_solve(s.chol_rr, w[s.r_loc])
            return y, w[s.c_loc] - s.S_cr @ y

        parts = self.map(local, self.systems)
        rc = np.zeros(self.n_corner)
        for s, (_, d) in zip(self.systems, parts):
            rc[s.B] += d
        uc = self.coarse.solve(rc)

        def back(s, part):
            y = part[0]
            z = np.zeros(s.n_interface)
            ucs = uc[s.B]
            z[s.r_loc] = y - s.T @ ucs
            z[s.c_loc] = ucs
            return s.D * z

        return self._gather_sum(self.map(back, self.systems, parts))

    def preconditioner(self, name: str):
        if name not in PRECONDITIONERS:
            raise ValueError(f"unknown preconditioner {name!r}")
        return getattr(self, f"precond_{name}")

    def solve(self, g, config: SolverConfig, x0=None):
        return pcg(self.schur_matvec, self.preconditioner(config.preconditioner), g, config.tol, config.max_iter, x0)

    def recover(self, f_locs, u_gamma):
        return self.map(lambda s, f: s.recover(f, u_gamma[s.R]), self.systems, f_locs)


@dataclass
class CoarseOperator:
    F: np.ndarray
    chol: tuple | None

    @property
    def n(self) -> int:
        return self.F.shape[0]

    def solve(self, d):
        return _cho_solve(self.chol, d)


def build_coarse(systems, n_corner: int) -> CoarseOperator:
    """F_cc = sum_s B_s^T (S_cc - S_cr S_rr^{-1} S_rc) B_s, factored."""
    F = np.zeros((n_corner, n_corner))
    for s in systems:
        F[np.ix_(s.B, s.B)] += s.F
    F = 0.5 * (F + F.T)
    try:
        chol = _cho(F)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("coarse operator is not SPD; check the corner classification") from exc
    return CoarseOperator(F, chol)


# ---------------------------------------------------------------------------
# deterministic problem wiring


@dataclass
class LocalLayout:
    """Local dof ordering of one subdomain: interior first, then interface."""

    dofs: np.ndarray  # reduced global dof ids
    n_interior: int
    load_weight: np.ndarray  # 1 on interior, D on interface


def _dof_map(model: WaveModel) -> np.ndarray:
    inv = np.full(model.red.n_full, -1, dtype=np.int64)
    inv[model.red.free] = np.arange(len(model.red.free))
    return inv


def local_layouts(model: WaveModel, partition: Partition):
    inv = _dof_map(model)
    D = build_scaling(partition)
    out = []
    for s in range(partition.n_sub):
        I = inv[partition.interior_nodes[s]]
        G = inv[partition.interface_nodes[s]]
        if np.any(I < 0) or np.any(G < 0):
            raise ValueError("partition classifies a constrained node")
        w = np.concatenate([np.ones(len(I)), D[s]])
        out.append(LocalLayout(np.concatenate([I, G]), len(I), w))
    return out


@dataclass
class LocalOperators:
    M: sp.csr_matrix
    C: sp.csr_matrix | None
    K: sp.csr_matrix


def local_operators(model: WaveModel, partition: Partition, layouts) -> list:
    """Subdomain M^s, C^s, K^s assembled over the subdomain's own elements."""
    mesh = model.mesh
    mass_type = model.extra.get("mass_type", "consistent")
    out = []
    for s, lay in enumerate(layouts):
        pat = AssemblyPattern(mesh, partition.subdomain_elements[s])
        nodes = model.red.free[lay.dofs]
        K = assemble_stiffness(mesh, model.speed2, pattern=pat)[nodes][:, nodes].tocsr()
        M = assemble_mass(mesh, model.density, pattern=pat)
        if mass_type == "lumped":
            M = lump_mass(M)
        M = M[nodes][:, nodes].tocsr()
        C = (model.alpha0 * M + model.alpha1 * K).tocsr() if (model.alpha0 or model.alpha1) else None
        out.append(LocalOperators(M, C, K))
    return out


def _corner_maps(partition: Partition, s: int):
    rr, rc = partition.local_split(s)
    return rr.index, rc.index, partition.corner_restriction(s).index


def build_subdomain_systems(model: WaveModel, partition: Partition, params: NewmarkParams, neumann: bool = True):
    """Per-subdomain transient blocks and Schur data for a deterministic model."""
    layouts = local_layouts(model, partition)
    ops = local_operators(model, partition, layouts)
    D = build_scaling(partition)
    systems = []
    for s, (lay, op) in enumerate(zip(layouts, ops)):
        A = transient_stiffness(op.M, op.C, op.K, params)
        nI = lay.n_interior
        nG = len(lay.dofs) - nI
        r_loc, c_loc, B = _corner_maps(partition, s)
        systems.append(
            SubdomainSystem(
                A, np.arange(nI), np.arange(nI, nI + nG), partition.restriction(s).index, D[s], r_loc, c_loc, B, neumann
            )
        )
    return systems, layouts, ops


# module-level spellings of the interface operations
def schur_matvec(problem: InterfaceProblem, x):
    return problem.schur_matvec(x)


def schur_rhs(problem: InterfaceProblem, f_locs):
    return problem.schur_rhs(f_locs)


def precond_lumped(problem: InterfaceProblem, r):
    return problem.precond_lumped(r)


def precond_nn1(problem: InterfaceProblem, r):
    return problem.precond_nn1(r)


def precond_nn2(problem: InterfaceProblem, r):
    return problem.precond_nn2(r)


def interior_recover(problem: InterfaceProblem, f_locs, u_gamma):
    return problem.recover(f_locs, u_gamma)


@dataclass
class DDTrajectory(Trajectory):
    reports: list = field(default_factory=list)

    @property
    def mean_iterations(self) -> float:
        its = [r.iterations for r in self.reports]
        return float(np.mean(its)) if its else 0.0


def dd_time_loop(
    problem: InterfaceProblem,
    gather,
    interior_index,
    gamma_index,
    apply_M,
    apply_C,
    load,
    load_weight,
    state0: StateTriple,
    params: NewmarkParams,
    n_steps: int,
    config: SolverConfig,
    probe=None,
    store_every=None,
    store_steps=(),
    warm_start: bool = True,
) -> DDTrajectory:
    """Newmark march where every step solves the interface problem with PCG.

    ``gather[s]`` picks subdomain s's local vector out of the global state;
    ``interior_index[s]`` places recovered interior values back and
    ``gamma_index`` places the interface solution.  ``apply_M(s, x)`` and
    ``apply_C(s, x)`` act with local mass and damping (``apply_C`` may be
    None).  ``load(t)`` returns the global load vector or None; subdomain s
    receives ``load_weight[s] * load(t)[gather[s]]``.
    """
    state = state0
    n = len(state.u)
    P = probe if probe is not None else sp.csr_matrix((0, n))
    ts, pv = [0.0], [P @ state.u]
    fields = {}
    store_steps = set(store_steps)
    if (store_every and 0 % store_every == 0) or 0 in store_steps:
        fields[0] = state.u.copy()
    reports, iters, resid = [], [], []
    u_gamma = state.u[gamma_index].copy()
    S = range(len(problem.systems))
    for step in range(1, n_steps + 1):
        t_next = step * params.dt
        um, uc = predictors(state, params)
        f_glob = load(t_next) if load is not None else None

        def local_rhs(s):
            ft = apply_M(s, um[gather[s]])
            if f_glob is not None:
                ft = ft + load_weight[s] * f_glob[gather[s]]
            if apply_C is not None:
                ft = ft + apply_C(s, uc[gather[s]])
            return ft

        f_locs = problem.map(local_rhs, S)
        g = problem.schur_rhs(f_locs)
        u_gamma, rep = problem.solve(g, config, x0=u_gamma if warm_start else None)
        u_int = problem.recover(f_locs, u_gamma)
        u_next = np.zeros(n)
        for s in S:
            u_next[interior_index[s]] = u_int[s]
        u_next[gamma_index] = u_gamma
        state = newmark_update(state, u_next, params)
        reports.append(rep)
        iters.append(rep.iterations)
        resid.append(rep.true_residual)
        ts.append(t_next)
        pv.append(P @ state.u)
        if (store_every and step % store_every == 0) or step in store_steps:
            fields[step] = state.u.copy()
    return DDTrajectory(np.array(ts), np.array(pv), fields, iters, resid, reports)


def time_loop_det(
    model: WaveModel,
    partition: Partition,
    params: NewmarkParams,
    n_steps: int,
    config: SolverConfig | None = None,
    probe_op=None,
    store_every=None,
    store_steps=(),
) -> DDTrajectory:
    """Deterministic DD time loop (one PCG interface solve per step)."""
    config = config or SolverConfig()
    systems, layouts, ops = build_subdomain_systems(model, partition, params, neumann=config.preconditioner == "nn1")
    inv = _dof_map(model)
    gamma_index = inv[partition.global_interface]
    problem = InterfaceProblem(systems, partition.n_interface, partition.n_corner, config.threads)
    try:
        f0 = model.f(0.0)
        a0 = initial_acceleration(spla.splu(model.M.tocsc()).solve, f0, model.C, model.K, model.u0, model.v0)
        state0 = StateTriple(model.u0.copy(), model.v0.copy(), a0, 0.0)
        gather = [lay.dofs for lay in layouts]
        interior = [lay.dofs[: lay.n_interior] for lay in layouts]
        apply_C = (lambda s, x: ops[s].C @ x) if model.C is not None else None
        return dd_time_loop(
            problem,
            gather,
            interior,
            gamma_index,
            lambda s, x: ops[s].M @ x,
            apply_C,
            model.load,
            [lay.load_weight for lay in layouts],
            state0,
            params,
            n_steps,
            config,
            probe=None if probe_op is None else probe_op,
            store_every=store_every,
            store_steps=store_steps,
        )
    finally:
        problem.close()


def export_solver_csv(path, reports) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "iterations", "final_residual"])
        for k, rep in enumerate(reports, start=1):
            w.writerow([k, rep.iterations, repr(float(rep.true_residual))])
