"""Structured meshes and non-overlapping subdomain partitions.

Node classification follows the usual substructuring vocabulary: a free node
owned by one subdomain only is *interior*; a free node touched by elements of
two or more subdomains is on the *interface*.  Interface nodes are further
split into *corner* nodes (cross points and ends of interface edges) and
*remaining* nodes.  Dirichlet nodes are eliminated before any solve and are
therefore never classified.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class Mesh:
    dim: int
    node_coords: np.ndarray  # (n_nodes, dim)
    elements: np.ndarray  # (n_elem, dim + 1)
    dirichlet_nodes: np.ndarray  # sorted node ids
    h: float
    shape: tuple = ()  # cells per direction for structured meshes

    @property
    def n_nodes(self) -> int:
        return self.node_coords.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    def free_nodes(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.dirichlet_nodes] = False
        return np.flatnonzero(mask)

    def summary(self) -> dict:
        return {
            "dim": self.dim,
            "n_nodes": int(self.n_nodes),
            "n_elements": int(self.n_elements),
            "h": float(self.h),
            "n_boundary": int(len(self.dirichlet_nodes)),
        }

    def export_summary(self, path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")


def build_unit_square_mesh(nx: int, ny: int) -> Mesh:
    """Right-diagonal triangulation of the unit square, Dirichlet on all sides."""
    if nx < 2 or ny < 2:
        raise ValueError(f"need at least 2 cells per side, got nx={nx}, ny={ny}")
    xs = np.linspace(0.0, 1.0, nx + 1)
    ys = np.linspace(0.0, 1.0, ny + 1)
    X, Y = np.meshgrid(xs, ys)  # row j is y_j
    coords = np.column_stack([X.ravel(), Y.ravel()])

    def nid(i, j):
        return j * (nx + 1) + i

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    n00, n10, n01, n11 = nid(i, j), nid(i + 1, j), nid(i, j + 1), nid(i + 1, j + 1)
    # cell c -> triangles 2c (lower right) and 2c+1 (upper left), both counter-clockwise
    lower = np.column_stack([n00, n10, n11])
    upper = np.column_stack([n00, n11, n01])
    elements = np.empty((2 * nx * ny, 3), dtype=np.int64)
    elements[0::2] = lower
    elements[1::2] = upper

    on_bnd = (
        np.isclose(coords[:, 0], 0.0)
        | np.isclose(coords[:, 0], 1.0)
        | np.isclose(coords[:, 1], 0.0)
        | np.isclose(coords[:, 1], 1.0)
    )
    h = max(1.0 / nx, 1.0 / ny) * np.sqrt(2.0)
    return Mesh(2, coords, elements, np.flatnonzero(on_bnd), float(h), (nx, ny))


def build_interval_mesh(n: int, length: float = 1.0) -> Mesh:
    """Uniform 2-node elements on [0, length]; node 0 is clamped."""
    if n < 2:
        raise ValueError(f"need at least 2 elements, got {n}")
    coords = np.linspace(0.0, length, n + 1)[:, None]
    elements = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    return Mesh(1, coords, elements, np.array([0]), float(length / n), (n,))


@dataclass(frozen=True)
class RestrictionMap:
    """0/1 selection operator: ``gather(v)[k] = v[index[k]]``."""

    kind: str
    index: np.ndarray
    n_global: int

    def gather(self, v: np.ndarray) -> np.ndarray:
        return v[..., self.index]

    def scatter(self, w: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        if out is None:
            out = np.zeros(w.shape[:-1] + (self.n_global,), dtype=w.dtype)
        np.add.at(out, (..., self.index), w)
        return out

    def matrix(self) -> np.ndarray:
        R = np.zeros((len(self.index), self.n_global))
        R[np.arange(len(self.index)), self.index] = 1.0
        return R


@dataclass
class Partition:
    """Element-based non-overlapping decomposition.

    Node sets hold mesh node ids.  ``global_interface`` is sorted and defines
    the ordering of interface vectors; ``corner_nodes`` fixes the ordering of
    coarse vectors.
    """

    n_sub: int
    subdomain_elements: list
    interior_nodes: list
    interface_nodes: list
    global_interface: np.ndarray
    corner_nodes: np.ndarray
    remaining_nodes: np.ndarray
    multiplicity: np.ndarray  # aligned with global_interface
    _pos: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._pos = {int(g): k for k, g in enumerate(self.global_interface)}
        self._cpos = {int(g): k for k, g in enumerate(self.corner_nodes)}

    @property
    def n_interface(self) -> int:
        return len(self.global_interface)

    @property
    def n_corner(self) -> int:
        return len(self.corner_nodes)

    def restriction(self, s: int) -> RestrictionMap:
        """R_s: global interface -> local interface of subdomain s."""
        idx = np.array([self._pos[int(g)] for g in self.interface_nodes[s]], dtype=np.int64)
        return RestrictionMap("R_s", idx, self.n_interface)

    def local_split(self, s: int) -> tuple[RestrictionMap, RestrictionMap]:
        """(R_s^r, R_s^c): local interface -> local remaining / local corner."""
        corner = set(int(c) for c in self.corner_nodes)
        loc = self.interface_nodes[s]
        c_idx = np.array([k for k, g in enumerate(loc) if int(g) in corner], dtype=np.int64)
        r_idx = np.array([k for k, g in enumerate(loc) if int(g) not in corner], dtype=np.int64)
        return (
            RestrictionMap("R_s^r", r_idx, len(loc)),
            RestrictionMap("R_s^c", c_idx, len(loc)),
        )

    def corner_restriction(self, s: int) -> RestrictionMap:
        """B_c^s: global corners -> local corners (ordered as in R_s^c)."""
        _, rc = self.local_split(s)
        loc = self.interface_nodes[s]
        idx = np.array([self._cpos[int(loc[k])] for k in rc.index], dtype=np.int64)
        return RestrictionMap("B_c^s", idx, self.n_corner)

    def node_classes(self) -> dict:
        cls = {}
        for s in range(self.n_sub):
            for g in self.interior_nodes[s]:
                cls[int(g)] = ("I", 1)
        corner = set(int(c) for c in self.corner_nodes)
        for k, g in enumerate(self.global_interface):
            cls[int(g)] = ("c" if int(g) in corner else "r", int(self.multiplicity[k]))
        return cls

    def export_csv(self, path) -> None:
        cls = self.node_classes()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node_id", "class", "multiplicity"])
            for g in sorted(cls):
                w.writerow([g, cls[g][0], cls[g][1]])


def _element_owner(mesh: Mesh, px: int, py: int) -> np.ndarray:
    if mesh.dim == 1:
        (n,) = mesh.shape
        if px > n:
            raise ValueError(f"{px} subdomains exceed {n} cells")
        cell = np.arange(n)
        return cell * px // n
    nx, ny = mesh.shape
    if px > nx or py > ny:
        raise ValueError(f"{px}x{py} subdomains exceed {nx}x{ny} cells")
    cell = np.arange(mesh.n_elements) // 2
    ci, cj = cell % nx, cell // nx
    return (cj * py // ny) * px + ci * px // nx


def partition_structured(mesh: Mesh, px: int, py: int = 1) -> Partition:
    """Cell-block partition; subdomain ids run x-fastest."""
    if px < 1 or py < 1:
        raise ValueError("subdomain counts must be positive")
    if mesh.dim == 1 and py != 1:
        raise ValueError("1D meshes take py=1")
    owner = _element_owner(mesh, px, py)
    n_sub = px * py
    sub_elems = [np.flatnonzero(owner == s) for s in range(n_sub)]

    free = np.ones(mesh.n_nodes, dtype=bool)
    free[mesh.dirichlet_nodes] = False
    touch = [set() for _ in range(mesh.n_nodes)]
    for e, s in enumerate(owner):
        for nd in mesh.elements[e]:
            touch[nd].add(int(s))
    subsets = [frozenset(t) for t in touch]

    interior = [[] for _ in range(n_sub)]
    interface = [[] for _ in range(n_sub)]
    gamma = []
    for nd in range(mesh.n_nodes):
        if not free[nd]:
            continue
        owners = subsets[nd]
        if len(owners) == 1:
            interior[next(iter(owners))].append(nd)
        else:
            gamma.append(nd)
            for s in sorted(owners):
                interface[s].append(nd)

    gamma_set = set(gamma)
    # undirected mesh edges restricted to free interface nodes
    nbrs = {g: set() for g in gamma}
    for el in mesh.elements:
        for a in el:
            for b in el:
                if a != b and a in gamma_set and b in gamma_set:
                    nbrs[int(a)].add(int(b))

    corners = []
    for g in gamma:
        owners = subsets[g]
        if len(owners) > 2:
            corners.append(g)
            continue
        # neighbours lying on the same interface edge (or on a cross point of it)
        along = [b for b in nbrs[g] if owners <= subsets[b]]
        if len(along) < 2:
            corners.append(g)
    corner_set = set(corners)
    remaining = [g for g in gamma if g not in corner_set]
    mult = np.array([len(subsets[g]) for g in gamma], dtype=np.int64)
    return Partition(
        n_sub=n_sub,
        subdomain_elements=sub_elems,
        interior_nodes=[np.array(v, dtype=np.int64) for v in interior],
        interface_nodes=[np.array(v, dtype=np.int64) for v in interface],
        global_interface=np.array(gamma, dtype=np.int64),
        corner_nodes=np.array(sorted(corners), dtype=np.int64),
        remaining_nodes=np.array(remaining, dtype=np.int64),
        multiplicity=mult,
    )


def build_scaling(partition: Partition) -> list[np.ndarray]:
    """Multiplicity scaling D_s (one weight per local interface node)."""
    inv = 1.0 / partition.multiplicity.astype(float)
    return [inv[partition.restriction(s).index] for s in range(partition.n_sub)]
