"""Stochastic Galerkin system for the wave equation with a lognormal
squared wave speed: PCE block operators, the stochastic interface
solver and the stochastic Newmark loop.

Global stochastic vectors are PCE-major: entry ``j * n + p`` is the j-th
chaos coefficient at dof p.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .dd import (
    DDTrajectory,
    InterfaceProblem,
    SolverConfig,
    SubdomainSystem,
    _corner_maps,
    _dof_map,
    dd_time_loop,
    local_layouts,
)
from .fem import AssemblyPattern, DirichletReduction, assemble_mass, assemble_stiffness, eliminate_dirichlet, lump_mass
from .kle import KleExpansion, lognormal_pce
from .mesh import Mesh, Partition, build_scaling
from .newmark import NewmarkParams, StateTriple, newmark_rhs, newmark_update
from .pce import PceBasis, TripleProducts, triple_products


def common_pattern(mats):
    """Re-express sparse matrices on the union of their patterns.

    Returns (indptr, indices, data) with data of shape (len(mats), nnz).
    """
    mats = [sp.csr_matrix(m) for m in mats]
    n = mats[0].shape[0]
    U = abs(mats[0])
    for m in mats[1:]:
        U = U + abs(m)
    U = sp.csr_matrix(U)
    U.sum_duplicates()
    U.sort_indices()
    if U.nnz == 0:
        U = sp.csr_matrix((np.zeros(n), np.arange(n), np.arange(n + 1)), shape=(n, n))
    rows = np.repeat(np.arange(n), np.diff(U.indptr))
    keys = rows.astype(np.int64) * n + U.indices
    data = np.zeros((len(mats), len(keys)))
    for t, m in enumerate(mats):
        c = m.tocoo()
        nz = c.data != 0
        pos = np.searchsorted(keys, c.row[nz].astype(np.int64) * n + c.col[nz])
        np.add.at(data[t], pos, c.data[nz])
    return U.indptr.astype(np.int64), U.indices.astype(np.int64), data


class StochasticBlockOperator:
    """Matrix-free action of sum_i G_i (x) A_i on PCE-major vectors.

    ``terms[i]`` is the deterministic matrix multiplying input chaos term i;
    only triples with i < len(terms) are used.
    """

    def __init__(self, terms, G: TripleProducts):
        if len(terms) > G.n_in:
            raise ValueError(f"{len(terms)} terms but the triple tensor has {G.n_in} input terms")
        self.terms = [sp.csr_matrix(t) for t in terms]
        self.n = self.terms[0].shape[0]
        self.nb = G.n_out
        self.G = G
        keep = G.i < len(terms)
        self.ti, self.tj, self.tk, self.tv = G.i[keep], G.j[keep], G.k[keep], G.v[keep]
        self.indptr, self.indices, self.data = common_pattern(self.terms)

    @property
    def shape(self):
        return (self.nb * self.n, self.nb * self.n)

    def matvec(self, x):
        X = np.asarray(x, dtype=float).reshape(self.nb, self.n)
        Y = kernels.sg_block_matvec(self.indptr, self.indices, self.data, self.ti, self.tj, self.tk, self.tv, X)
        return Y.ravel()

    def __matmul__(self, x):
        return self.matvec(x)

    def block(self, j: int, k: int):
        """Deterministic block (j, k) = sum_i G_ijk A_i."""
        sel = (self.tj == j) & (self.tk == k)
        out = sp.csr_matrix((self.n, self.n))
        for i, g in zip(self.ti[sel], self.tv[sel]):
            out = out + g * self.terms[i]
        return out

    def assemble(self) -> sp.csr_matrix:
        out = sp.csr_matrix(self.shape)
        for i, A in enumerate(self.terms):
            sel = self.ti == i
            if not sel.any():
                continue
            Gi = sp.csr_matrix((self.tv[sel], (self.tj[sel], self.tk[sel])), shape=(self.nb, self.nb))
            out = out + sp.kron(Gi, A, format="csr")
        return out.tocsr()


def block_diagonal_apply(A, x, nb: int):
    """(I_nb (x) A) x for PCE-major ``x``."""
    X = np.asarray(x).reshape(nb, -1)
    return (A @ X.T).T.ravel()


def stochastic_rhs(f, nb: int) -> np.ndarray:
    """Deterministic load projected on the normalized basis: only block 0."""
    f = np.asarray(f, dtype=float)
    out = np.zeros(nb * len(f))
    out[: len(f)] = f
    return out


def transient_terms(M, K_terms, alpha0, alpha1, params: NewmarkParams):
    """Per-term transient matrices.

    A_0 = M / (zeta dt^2) + gamma / (zeta dt) (alpha0 M + alpha1 K_0) + K_0,
    A_i = (1 + alpha1 gamma / (zeta dt)) K_i for i >= 1.
    """
    mf, df = params.mass_factor, params.damping_factor
    A0 = (mf + df * alpha0) * M + (1.0 + df * alpha1) * K_terms[0]
    return [A0.tocsr()] + [((1.0 + df * alpha1) * K).tocsr() for K in K_terms[1:]]


def damping_terms(M, K_terms, alpha0, alpha1):
    """C_0 = alpha0 M + alpha1 K_0, C_i = alpha1 K_i."""
    return [(alpha0 * M + alpha1 * K_terms[0]).tocsr()] + [(alpha1 * K).tocsr() for K in K_terms[1:]]


@dataclass
class SgModel:
    mesh: Mesh
    red: DirichletReduction
    kle: KleExpansion
    basis_in: PceBasis
    basis_out: PceBasis
    G: TripleProducts
    coeffs: np.ndarray  # (n_in, n_nodes) chaos coefficients of c^2
    M: sp.csr_matrix  # reduced deterministic mass
    K_terms: list  # reduced K_i
    u0: np.ndarray  # reduced deterministic initial data
    v0: np.ndarray
    alpha0: float = 0.0
    alpha1: float = 0.0
    density: float = 1.0
    load: object = None  # t -> reduced deterministic load
    mass_type: str = "consistent"

    @property
    def n(self) -> int:
        return self.M.shape[0]

    @property
    def nb(self) -> int:
        return self.basis_out.size

    @property
    def damped(self) -> bool:
        return bool(self.alpha0 or self.alpha1)

    def c_max(self) -> float:
        """Conservative speed bound sqrt(max c_0) exp(3 sigma) for the CFL step."""
        return float(np.sqrt(self.coeffs[0].max()) * np.exp(3.0 * self.kle.sigma))

    def stiffness(self) -> StochasticBlockOperator:
        return StochasticBlockOperator(self.K_terms, self.G)

    def damping(self) -> StochasticBlockOperator | None:
        if not self.damped:
            return None
        return StochasticBlockOperator(damping_terms(self.M, self.K_terms, self.alpha0, self.alpha1), self.G)

    def transient(self, params: NewmarkParams) -> StochasticBlockOperator:
        return StochasticBlockOperator(transient_terms(self.M, self.K_terms, self.alpha0, self.alpha1, params), self.G)

    def initial_state(self) -> StateTriple:
        nb, n = self.nb, self.n
        u = stochastic_rhs(self.u0, nb)
        v = stochastic_rhs(self.v0, nb)
        r = stochastic_rhs(self.f(0.0), nb) - self.stiffness() @ u
        C = self.damping()
        if C is not None:
            r = r - C @ v
        lu = spla.splu(self.M.tocsc())
        a = lu.solve(r.reshape(nb, n).T).T.ravel()
        return StateTriple(u, v, a, 0.0)

    def f(self, t: float) -> np.ndarray:
        return np.zeros(self.n) if self.load is None else self.load(t)


def build_sg_model(
    mesh: Mesh,
    kle: KleExpansion,
    p_in: int,
    p_out: int,
    alpha0: float = 0.0,
    alpha1: float = 0.0,
    density: float = 1.0,
    u0=None,
    v0=None,
    load=None,
    mass_type: str = "consistent",
    stiffness_scale: float = 1.0,
) -> SgModel:
    """Chaos expansion of c^2 = exp(g) and the per-term stiffness matrices.

    ``u0``/``v0`` are full nodal vectors; ``stiffness_scale`` multiplies every
    term (bar cross-section, for instance).
    """
    basis_in = PceBasis(kle.L, p_in)
    basis_out = PceBasis(kle.L, p_out)
    G = triple_products(kle.L, p_in, p_out)
    pce = lognormal_pce(kle, basis_in)
    pat = AssemblyPattern(mesh)
    K_terms = []
    red = None
    for c in pce.coeffs:
        Kr, red = eliminate_dirichlet(assemble_stiffness(mesh, stiffness_scale * c, pattern=pat), mesh)
        K_terms.append(Kr)
    Mf = assemble_mass(mesh, density, pattern=pat)
    if mass_type == "lumped":
        Mf = lump_mass(Mf)
    M = eliminate_dirichlet(Mf, mesh)[0]
    n = len(red.free)
    u0r = np.zeros(n) if u0 is None else red.reduce_vector(u0)
    v0r = np.zeros(n) if v0 is None else red.reduce_vector(v0)
    return SgModel(mesh, red, kle, basis_in, basis_out, G, pce.coeffs, M, K_terms, u0r, v0r,
                   alpha0, alpha1, density, load, mass_type)


# ---------------------------------------------------------------------------
# stochastic interface problem


@dataclass
class StochasticLocal:
    M: sp.csr_matrix  # deterministic local mass
    C: StochasticBlockOperator | None
    gather: np.ndarray
    interior: np.ndarray
    load_weight: np.ndarray


def _replicate(idx, nb: int, stride: int) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64)
    return (np.arange(nb, dtype=np.int64)[:, None] * stride + idx[None, :]).ravel()


def assemble_stochastic_subdomains(model: SgModel, partition: Partition, params: NewmarkParams, neumann: bool = False):
    """Stochastic subdomain systems with PCE-replicated restriction, scaling and corner maps."""
    nb, n = model.nb, model.n
    mesh = model.mesh
    layouts = local_layouts(_DofView(model), partition)
    D = build_scaling(partition)
    nGam, nC = partition.n_interface, partition.n_corner
    systems, locals_ = [], []
    for s, lay in enumerate(layouts):
        pat = AssemblyPattern(mesh, partition.subdomain_elements[s])
        nodes = model.red.free[lay.dofs]
        K_loc = [assemble_stiffness(mesh, c, pattern=pat)[nodes][:, nodes].tocsr() for c in model.coeffs]
        M_loc = assemble_mass(mesh, model.density, pattern=pat)
        if model.mass_type == "lumped":
            M_loc = lump_mass(M_loc)
        M_loc = M_loc[nodes][:, nodes].tocsr()
        A = StochasticBlockOperator(transient_terms(M_loc, K_loc, model.alpha0, model.alpha1, params), model.G)
        C = None
        if model.damped:
            C = StochasticBlockOperator(damping_terms(M_loc, K_loc, model.alpha0, model.alpha1), model.G)
        n_loc = len(lay.dofs)
        nI = lay.n_interior
        nG = n_loc - nI
        r_loc, c_loc, B = _corner_maps(partition, s)
        systems.append(
            SubdomainSystem(
                A.assemble(),
                _replicate(np.arange(nI), nb, n_loc),
                _replicate(np.arange(nI, n_loc), nb, n_loc),
                _replicate(partition.restriction(s).index, nb, nGam),
                np.tile(D[s], nb),
                _replicate(r_loc, nb, nG),
                _replicate(c_loc, nb, nG),
                _replicate(B, nb, nC),
                neumann,
            )
        )
        locals_.append(
            StochasticLocal(M_loc, C, _replicate(lay.dofs, nb, n), _replicate(lay.dofs[:nI], nb, n), np.tile(lay.load_weight, nb))
        )
    return systems, locals_


class _DofView:
    """Just enough of a WaveModel for ``local_layouts``."""

    def __init__(self, model: SgModel):
        self.red = model.red


def stochastic_interface(model: SgModel, partition: Partition, params: NewmarkParams, config: SolverConfig):
    systems, locals_ = assemble_stochastic_subdomains(model, partition, params, neumann=config.preconditioner == "nn1")
    problem = InterfaceProblem(systems, model.nb * partition.n_interface, model.nb * partition.n_corner, config.threads)
    return problem, locals_


def stochastic_schur(problem: InterfaceProblem, x):
    return problem.schur_matvec(x)


def stochastic_nn2(problem: InterfaceProblem, r):
    return problem.precond_nn2(r)


# ---------------------------------------------------------------------------
# time loop and post-processing


@dataclass
class SgTrajectory(DDTrajectory):
    nb: int = 1

    def probe_coefficients(self) -> np.ndarray:
        """(n_steps + 1, nb, n_probes)."""
        return self.probes.reshape(len(self.t), self.nb, -1)

    def probe_moments(self):
        c = self.probe_coefficients()
        return c[:, 0, :], np.sqrt(np.sum(c[:, 1:, :] ** 2, axis=1))


def probe_operator(P, nb: int):
    return sp.kron(sp.identity(nb), sp.csr_matrix(P), format="csr")


def sg_time_loop(
    model: SgModel,
    params: NewmarkParams,
    n_steps: int,
    partition: Partition | None = None,
    config: SolverConfig | None = None,
    probe_op=None,
    store_every=None,
    store_steps=(),
) -> SgTrajectory:
    """Stochastic Newmark march.

    With a partition every step solves the stochastic interface problem by
    PCG; without one the coupled system is factored and solved directly.
    ``probe_op`` acts on reduced deterministic fields.
    """
    config = config or SolverConfig()
    nb, n = model.nb, model.n
    state0 = model.initial_state()
    P = probe_operator(probe_op if probe_op is not None else sp.csr_matrix((0, n)), nb)
    load = None if model.load is None else (lambda t: stochastic_rhs(model.load(t), nb))
    if partition is None:
        return _sg_direct(model, params, n_steps, state0, P, load, store_every, store_steps)
    problem, locals_ = stochastic_interface(model, partition, params, config)
    try:
        gamma_index = _replicate(_dof_map(_DofView(model))[partition.global_interface], nb, n)
        apply_C = None
        if model.damped:
            apply_C = lambda s, x: locals_[s].C @ x  # noqa: E731
        tr = dd_time_loop(
            problem,
            [lc.gather for lc in locals_],
            [lc.interior for lc in locals_],
            gamma_index,
            lambda s, x: block_diagonal_apply(locals_[s].M, x, nb),
            apply_C,
            load,
            [lc.load_weight for lc in locals_],
            state0,
            params,
            n_steps,
            config,
            probe=P,
            store_every=store_every,
            store_steps=store_steps,
        )
    finally:
        problem.close()
    return SgTrajectory(tr.t, tr.probes, tr.fields, tr.iterations, tr.residuals, tr.reports, nb)


def _sg_direct(model, params, n_steps, state0, P, load, store_every, store_steps):
    A = model.transient(params).assemble().tocsc()
    lu = spla.splu(A)
    nb = model.nb
    Mb = sp.kron(sp.identity(nb), model.M, format="csr")
    C = model.damping()
    state = state0
    ts, pv, fields = [0.0], [P @ state.u], {}
    store_steps = set(store_steps)
    if store_every or 0 in store_steps:
        fields[0] = state.u.copy()
    for step in range(1, n_steps + 1):
        t_next = step * params.dt
        f = load(t_next) if load is not None else np.zeros(len(state.u))
        rhs = newmark_rhs(state, Mb, C, params, f)
        state = newmark_update(state, lu.solve(rhs), params)
        ts.append(t_next)
        pv.append(P @ state.u)
        if (store_every and step % store_every == 0) or step in store_steps:
            fields[step] = state.u.copy()
    return SgTrajectory(np.array(ts), np.array(pv), fields, nb=nb)


def moments(U, nb: int):
    """Mean u_0 and std sqrt(sum_{j>=1} u_j^2) of a PCE-major state."""
    X = np.asarray(U).reshape(nb, -1)
    return X[0].copy(), np.sqrt(np.sum(X[1:] ** 2, axis=0))


def evaluate_surrogate(U, basis: PceBasis, xi) -> np.ndarray:
    """sum_j u_j Psi_j(xi) for germ samples ``xi`` of shape (m, L)."""
    X = np.asarray(U).reshape(basis.size, -1)
    return basis.eval(xi) @ X


def export_probe_moments(path, t, coeffs, include_coeffs: bool = False) -> None:
    """CSV (t, mean, std[, u_0..u_N]) for one probe; ``coeffs`` is (n_t, nb)."""
    coeffs = np.asarray(coeffs)
    nb = coeffs.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        head = ["t", "mean", "std"] + ([f"u_{j}" for j in range(nb)] if include_coeffs else [])
        w.writerow(head)
        for tt, c in zip(t, coeffs):
            row = [tt, c[0], float(np.sqrt(np.sum(c[1:] ** 2)))]
            if include_coeffs:
                row += list(c)
            w.writerow([repr(float(x)) for x in row])


def export_snapshot(path, model: SgModel, U) -> None:
    """CSV (node_id, x, y, mean, std) over all mesh nodes."""
    mean, std = moments(U, model.nb)
    mean, std = model.red.expand(mean), model.red.expand(std)
    X = model.mesh.node_coords
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id", "x", "y", "mean", "std"])
        for k in range(model.mesh.n_nodes):
            y = X[k, 1] if X.shape[1] > 1 else 0.0
            w.writerow([k, repr(float(X[k, 0])), repr(float(y)), repr(float(mean[k])), repr(float(std[k]))])
