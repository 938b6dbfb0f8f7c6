"""Normalized Hermite polynomial chaos: multi-indices, evaluation, triple products."""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from functools import cached_property
from math import comb, factorial

import numpy as np
from numpy.polynomial import hermite_e as He


def multi_indices(L: int, p: int) -> np.ndarray:
    """Total-order multi-indices, graded; ties broken lexicographically descending.

    Row 0 is the zero index.  Shape (C(L+p, p), L).
    """
    if L < 1 or p < 0:
        raise ValueError("need L >= 1 and p >= 0")
    out = []
    for deg in range(p + 1):
        level = [a for a in itertools.product(range(deg, -1, -1), repeat=L) if sum(a) == deg]
        level.sort(reverse=True)
        out.extend(level)
    arr = np.array(out, dtype=np.int64).reshape(-1, L)
    assert len(arr) == comb(L + p, p)
    return arr


def hermite_triple_1d(a: int, b: int, c: int) -> float:
    """<He_a He_b He_c> under the standard normal measure (unnormalized)."""
    s2 = a + b + c
    if s2 % 2:
        return 0.0
    s = s2 // 2
    if s < a or s < b or s < c:
        return 0.0
    return factorial(a) * factorial(b) * factorial(c) / (
        factorial(s - a) * factorial(s - b) * factorial(s - c)
    )


def _normalized_table(p_max: int) -> np.ndarray:
    n = p_max + 1
    T = np.zeros((n, n, n))
    for a in range(n):
        for b in range(n):
            for c in range(n):
                v = hermite_triple_1d(a, b, c)
                if v:
                    T[a, b, c] = v / np.sqrt(float(factorial(a) * factorial(b) * factorial(c)))
    return T


@dataclass(frozen=True)
class TripleProducts:
    """Sparse G_ijk = <Psi_i Psi_j Psi_k> as coordinate arrays.

    ``i`` runs over the input expansion terms, ``j`` and ``k`` over the
    output basis.
    """

    n_in: int
    n_out: int
    i: np.ndarray
    j: np.ndarray
    k: np.ndarray
    v: np.ndarray

    def matrix(self, i: int) -> np.ndarray:
        """Dense (n_out, n_out) slice G[i, :, :]."""
        sel = self.i == i
        G = np.zeros((self.n_out, self.n_out))
        G[self.j[sel], self.k[sel]] = self.v[sel]
        return G

    def dense(self) -> np.ndarray:
        G = np.zeros((self.n_in, self.n_out, self.n_out))
        G[self.i, self.j, self.k] = self.v
        return G

    def __len__(self) -> int:
        return len(self.v)


def triple_products(L: int, p_in: int, p_out: int, tol: float = 0.0) -> TripleProducts:
    """Exact triple products of the normalized basis via the 1D closed form."""
    if p_in > p_out:
        raise ValueError("input order must not exceed output order")
    A_in = multi_indices(L, p_in)
    A_out = multi_indices(L, p_out)
    T = _normalized_table(p_out)
    ii, jj, kk, vv = [], [], [], []
    for i, a in enumerate(A_in):
        # product over variables of T[a_v, b_v, c_v] for all (b, c) pairs
        val = np.ones((len(A_out), len(A_out)))
        for v in range(L):
            val *= T[a[v]][np.ix_(A_out[:, v], A_out[:, v])]
        j, k = np.nonzero(np.abs(val) > tol)
        ii.append(np.full(len(j), i))
        jj.append(j)
        kk.append(k)
        vv.append(val[j, k])
    return TripleProducts(
        len(A_in),
        len(A_out),
        np.concatenate(ii).astype(np.int64),
        np.concatenate(jj).astype(np.int64),
        np.concatenate(kk).astype(np.int64),
        np.concatenate(vv),
    )


@dataclass(frozen=True)
class PceBasis:
    L: int
    p: int

    @cached_property
    def multi_indices(self) -> np.ndarray:
        return multi_indices(self.L, self.p)

    @property
    def size(self) -> int:
        return comb(self.L + self.p, self.p)

    @cached_property
    def norms(self) -> np.ndarray:
        """sqrt(prod alpha_v!) used to normalize each probabilists' Hermite product."""
        f = np.vectorize(lambda n: float(factorial(int(n))))
        return np.sqrt(np.prod(f(self.multi_indices), axis=1))

    def eval(self, xi: np.ndarray, k=None) -> np.ndarray:
        """Evaluate Psi_k at points ``xi`` of shape (..., L).

        Returns shape (..., size) when ``k`` is None, else (...,).
        """
        xi = np.asarray(xi, dtype=float)
        if xi.shape[-1] != self.L:
            raise ValueError(f"expected {self.L} germ coordinates, got {xi.shape[-1]}")
        # 1D tables He_n(xi_v)/sqrt(n!) for n <= p
        tab = np.empty(xi.shape + (self.p + 1,))
        tab[..., 0] = 1.0
        if self.p >= 1:
            tab[..., 1] = xi
        for n in range(2, self.p + 1):
            tab[..., n] = xi * tab[..., n - 1] - (n - 1) * tab[..., n - 2]
        for n in range(2, self.p + 1):
            tab[..., n] /= np.sqrt(float(factorial(n)))
        idx = self.multi_indices if k is None else self.multi_indices[k : k + 1]
        out = np.ones(xi.shape[:-1] + (len(idx),))
        for v in range(self.L):
            out *= tab[..., v, :][..., idx[:, v]]
        return out if k is None else out[..., 0]

    def export_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k"] + [f"alpha_{v + 1}" for v in range(self.L)] + ["norm"])
            for k, a in enumerate(self.multi_indices):
                w.writerow([k, *map(int, a), 1.0])


def eval_basis(basis: PceBasis, k: int, xi) -> float | np.ndarray:
    if not 0 <= k < basis.size:
        raise IndexError(k)
    return basis.eval(xi, k)


def gauss_hermite(n: int):
    """Nodes and probability weights for the standard normal measure."""
    x, w = He.hermegauss(n)
    return x, w / np.sqrt(2.0 * np.pi)


def tensor_gauss_hermite(L: int, n: int):
    x, w = gauss_hermite(n)
    grids = np.meshgrid(*([x] * L), indexing="ij")
    wg = np.meshgrid(*([w] * L), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wts = np.prod(np.stack([g.ravel() for g in wg], axis=1), axis=1)
    return pts, wts
