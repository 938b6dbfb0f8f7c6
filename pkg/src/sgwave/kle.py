"""Karhunen-Loeve expansion of the separable exponential kernel and the
lognormal chaos expansion of the squared wave speed built on it."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy.optimize import brentq

from .mesh import Mesh
from .pce import PceBasis


@dataclass(frozen=True)
class Mode1D:
    omega: float
    lam: float  # unit-variance eigenvalue
    even: bool
    half: float  # half-length of the interval
    centre: float

    def __call__(self, x):
        t = np.asarray(x, dtype=float) - self.centre
        w, a = self.omega, self.half
        if self.even:
            return np.cos(w * t) / np.sqrt(a + np.sin(2 * w * a) / (2 * w))
        return np.sin(w * t) / np.sqrt(a - np.sin(2 * w * a) / (2 * w))


def exponential_modes_1d(n: int, b: float, lo: float = 0.0, hi: float = 1.0, xtol: float = 1e-13):
    """Leading ``n`` eigenpairs of exp(-|x-y|/b) on [lo, hi], descending.

    Even roots solve ``c - w tan(w a) = 0``, odd roots ``w + c tan(w a) = 0``
    with c = 1/b and a the half-length; both are bracketed per period.
    """
    if b <= 0:
        raise ValueError("correlation length must be positive")
    a = 0.5 * (hi - lo)
    centre = 0.5 * (hi + lo)
    ca = a / b
    modes = []
    k = 0
    while len(modes) < n:
        # even root in (k pi, k pi + pi/2); odd root in (k pi + pi/2, (k+1) pi)
        lo_e, hi_e = k * np.pi, k * np.pi + 0.5 * np.pi
        f_e = lambda t: t * np.sin(t) - ca * np.cos(t)  # noqa: E731
        lo_o, hi_o = k * np.pi + 0.5 * np.pi, (k + 1) * np.pi
        f_o = lambda t: t * np.cos(t) + ca * np.sin(t)  # noqa: E731
        for f, l, h, even in ((f_e, lo_e, hi_e, True), (f_o, lo_o, hi_o, False)):
            if f(l) * f(h) > 0:
                raise RuntimeError(f"root bracket failed on [{l}, {h}]")
            theta = brentq(f, l, h, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200)
            w = theta / a
            modes.append(Mode1D(w, 2.0 / b / (w * w + 1.0 / b**2), even, a, centre))
        k += 1
    modes.sort(key=lambda m: -m.lam)
    return modes[:n]


@dataclass(frozen=True)
class KleExpansion:
    sigma: float
    bx: float
    by: float
    g0: np.ndarray  # nodal mean of the Gaussian field
    lam: np.ndarray  # (L,) descending
    phi: np.ndarray  # (L, n_nodes)

    @property
    def L(self) -> int:
        return len(self.lam)

    @property
    def g(self) -> np.ndarray:
        """Scaled modes g_n(x) = sqrt(lambda_n) phi_n(x), shape (L, n_nodes)."""
        return np.sqrt(self.lam)[:, None] * self.phi

    def export_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "lambda"])
            for n, lam in enumerate(self.lam, start=1):
                w.writerow([n, repr(float(lam))])


def kle_exponential(sigma: float, bx: float, by: float, L: int, mesh: Mesh, g0=0.0) -> KleExpansion:
    """Analytic KLE of sigma^2 exp(-|dx|/bx - |dy|/by) on the unit domain.

    2D modes are products of 1D modes, globally sorted by eigenvalue.
    """
    if sigma < 0 or L < 1:
        raise ValueError("need sigma >= 0 and L >= 1")
    x = mesh.node_coords
    g0 = np.broadcast_to(np.asarray(g0, dtype=float), (mesh.n_nodes,)).copy()
    mx = exponential_modes_1d(L, bx)
    if mesh.dim == 1:
        lam = np.array([m.lam for m in mx]) * sigma**2
        phi = np.array([m(x[:, 0]) for m in mx])
        return KleExpansion(sigma, bx, by, g0, lam, phi)
    my = exponential_modes_1d(L, by)
    pairs = sorted(
        ((mx[i].lam * my[j].lam, i, j) for i in range(L) for j in range(L)),
        key=lambda t: (-t[0], t[1], t[2]),
    )[:L]
    lam = np.array([p[0] for p in pairs]) * sigma**2
    phi = np.array([mx[i](x[:, 0]) * my[j](x[:, 1]) for _, i, j in pairs])
    return KleExpansion(sigma, bx, by, g0, lam, phi)


def constant_mode_kle(sigma: float, mesh: Mesh, g0=0.0) -> KleExpansion:
    """Single spatially constant germ: g(x) = g0 + sigma * xi on a unit-measure domain."""
    g0 = np.broadcast_to(np.asarray(g0, dtype=float), (mesh.n_nodes,)).copy()
    return KleExpansion(sigma, np.inf, np.inf, g0, np.array([sigma**2]), np.ones((1, mesh.n_nodes)))


def sample_gaussian_field(kle: KleExpansion, xi) -> np.ndarray:
    """Nodal realization(s) of g for germ(s) ``xi`` with shape (..., L)."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != kle.L:
        raise ValueError(f"expected {kle.L} germ coordinates")
    return kle.g0 + xi @ kle.g


def sample_speed(kle: KleExpansion, xi) -> np.ndarray:
    """Realization of the squared wave speed exp(g)."""
    return np.exp(sample_gaussian_field(kle, xi))


@dataclass(frozen=True)
class LognormalPce:
    basis: PceBasis
    coeffs: np.ndarray  # (size, n_nodes)

    @property
    def mean(self) -> np.ndarray:
        return self.coeffs[0]

    @property
    def variance(self) -> np.ndarray:
        return np.sum(self.coeffs[1:] ** 2, axis=0)

    def evaluate(self, xi) -> np.ndarray:
        return self.basis.eval(xi) @ self.coeffs


def lognormal_pce(kle: KleExpansion, basis_in: PceBasis) -> LognormalPce:
    """Chaos coefficients of exp(g) in the normalized Hermite basis.

    c_alpha(x) = c_0(x) prod_v g_v(x)^alpha_v / sqrt(alpha_v!), with
    c_0 = exp(g0 + sum_v g_v^2 / 2).
    """
    if basis_in.L != kle.L:
        raise ValueError("basis and KLE must use the same number of variables")
    g = kle.g
    c0 = np.exp(kle.g0 + 0.5 * np.sum(g**2, axis=0))
    A = basis_in.multi_indices
    coeffs = np.empty((len(A), len(c0)))
    for k, a in enumerate(A):
        term = c0.copy()
        for v, av in enumerate(a):
            if av:
                term *= g[v] ** av / np.sqrt(float(factorial(int(av))))
        coeffs[k] = term
    return LognormalPce(basis_in, coeffs)
