"""P1 finite element operators for the acoustic and axial-bar problems."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels
from .mesh import Mesh


class AssemblyPattern:
    """Fixed CSR sparsity pattern for a set of elements.

    Every operator assembled through the same pattern shares ``indptr`` and
    ``indices``, which is what the stochastic block kernels rely on.
    """

    def __init__(self, mesh: Mesh, elements: np.ndarray | None = None):
        self.mesh = mesh
        self.elem_ids = np.arange(mesh.n_elements) if elements is None else np.asarray(elements)
        conn = mesh.elements[self.elem_ids]
        nv = conn.shape[1]
        rows = np.repeat(conn, nv, axis=1).ravel()
        cols = np.tile(conn, (1, nv)).ravel()
        n = mesh.n_nodes
        key = rows.astype(np.int64) * n + cols
        uniq, self.slot = np.unique(key, return_inverse=True)
        r, c = np.divmod(uniq, n)
        self.indices = c.astype(np.int64)
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(self.indptr, r + 1, 1)
        np.cumsum(self.indptr, out=self.indptr)
        self.nnz = len(uniq)
        self.n = n

    def matrix(self, elem_mats: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self.slot, weights=elem_mats.ravel(), minlength=self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=(self.n, self.n))


def element_average(mesh: Mesh, nodal: np.ndarray, elements: np.ndarray | None = None) -> np.ndarray:
    conn = mesh.elements if elements is None else mesh.elements[elements]
    return np.asarray(nodal, dtype=float)[conn].mean(axis=1)


def _pattern(mesh, elements, pattern):
    if pattern is None:
        pattern = AssemblyPattern(mesh, elements)
    return pattern


def assemble_stiffness(mesh: Mesh, coeff, elements=None, pattern: AssemblyPattern | None = None):
    """Stiffness of ``-div(coeff grad u)`` with elementwise-averaged nodal ``coeff``.

    ``coeff`` may be a scalar or a nodal vector.  No boundary rows are removed.
    """
    pattern = _pattern(mesh, elements, pattern)
    if np.isscalar(coeff):
        ce = np.full(len(pattern.elem_ids), float(coeff))
    else:
        ce = element_average(mesh, coeff, pattern.elem_ids)
    Ke = kernels.p1_element_stiffness(mesh.node_coords, mesh.elements[pattern.elem_ids], ce)
    return pattern.matrix(Ke)


def _mass_elements(mesh: Mesh, elem_ids) -> np.ndarray:
    conn = mesh.elements[elem_ids]
    if mesh.dim == 1:
        x = mesh.node_coords[conn, 0]
        le = x[:, 1] - x[:, 0]
        ref = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
        return le[:, None, None] * ref
    p = mesh.node_coords[conn]
    area = 0.5 * (
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    )
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return area[:, None, None] * ref


def assemble_mass(mesh: Mesh, density: float = 1.0, elements=None, pattern: AssemblyPattern | None = None):
    """Consistent P1 mass matrix."""
    if density <= 0:
        raise ValueError("density must be positive")
    pattern = _pattern(mesh, elements, pattern)
    return pattern.matrix(density * _mass_elements(mesh, pattern.elem_ids))


def lump_mass(M) -> sp.csr_matrix:
    """Row-sum lumped copy of ``M``."""
    return sp.diags(np.asarray(M.sum(axis=1)).ravel()).tocsr()


def assemble_bar_stiffness(mesh: Mesh, E: float, A: float = 1.0, elements=None, pattern=None):
    """Axial bar stiffness, element matrix ``E A / l_e [[1, -1], [-1, 1]]``."""
    if mesh.dim != 1:
        raise ValueError("bar stiffness needs a 1D mesh")
    if E <= 0 or A <= 0:
        raise ValueError("E and A must be positive")
    return assemble_stiffness(mesh, E * A, elements=elements, pattern=pattern)


def rayleigh_damping(M, K, alpha0: float, alpha1: float):
    if alpha0 < 0 or alpha1 < 0:
        raise ValueError("Rayleigh coefficients must be non-negative")
    return (alpha0 * M + alpha1 * K).tocsr()


@dataclass(frozen=True)
class DirichletReduction:
    """Index map between full nodal vectors and free-dof vectors."""

    free: np.ndarray
    n_full: int

    def reduce_vector(self, v):
        return np.asarray(v)[..., self.free]

    def expand(self, v_free):
        v_free = np.asarray(v_free)
        out = np.zeros(v_free.shape[:-1] + (self.n_full,), dtype=v_free.dtype)
        out[..., self.free] = v_free
        return out


def eliminate_dirichlet(op, mesh: Mesh, values=None):
    """Drop rows/columns of constrained nodes (homogeneous data only)."""
    if values is not None and np.any(np.asarray(values) != 0):
        raise ValueError("only homogeneous Dirichlet data is supported")
    red = DirichletReduction(mesh.free_nodes(), mesh.n_nodes)
    op = sp.csr_matrix(op)
    return op[red.free][:, red.free].tocsr(), red


def export_coo(op, path) -> None:
    coo = sp.coo_matrix(op)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        fh.write("row,col,value\n")
        for k in order:
            fh.write(f"{coo.row[k]},{coo.col[k]},{float(coo.data[k])!r}\n")
