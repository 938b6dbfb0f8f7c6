"""Newmark-beta stepping, CFL step control and Rayleigh calibration."""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class NewmarkParams:
    dt: float
    gamma: float = 0.5
    zeta: float = 0.25

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("time step must be positive")

    @property
    def mass_factor(self) -> float:
        return 1.0 / (self.zeta * self.dt**2)

    @property
    def damping_factor(self) -> float:
        return self.gamma / (self.zeta * self.dt)


@dataclass(frozen=True)
class StateTriple:
    u: np.ndarray
    v: np.ndarray
    a: np.ndarray
    t: float = 0.0


def transient_stiffness(M, C, K, params: NewmarkParams):
    """K~ = M / (zeta dt^2) + C gamma / (zeta dt) + K."""
    out = params.mass_factor * M + K
    if C is not None:
        out = out + params.damping_factor * C
    return out


def predictors(state: StateTriple, params: NewmarkParams):
    """(u~_m, u~_c) such that f~ = f_next + M u~_m + C u~_c."""
    dt, g, z = params.dt, params.gamma, params.zeta
    um = (state.u + dt * state.v) / (z * dt**2) + (1.0 - 2.0 * z) * state.a / (2.0 * z)
    uc = g * dt * um - state.v - (1.0 - g) * dt * state.a
    return um, uc


def newmark_rhs(state: StateTriple, M, C, params: NewmarkParams, f_next):
    um, uc = predictors(state, params)
    out = f_next + M @ um
    if C is not None:
        out = out + C @ uc
    return out


def newmark_update(state: StateTriple, u_next, params: NewmarkParams) -> StateTriple:
    dt, g, z = params.dt, params.gamma, params.zeta
    a_next = (u_next - state.u - dt * state.v) / (z * dt**2) - (1.0 - 2.0 * z) * state.a / (2.0 * z)
    v_next = state.v + (1.0 - g) * dt * state.a + g * dt * a_next
    return replace(state, u=u_next, v=v_next, a=a_next, t=state.t + dt)


def initial_acceleration(M_solve, f0, C, K, u0, v0):
    """Solve M a0 = f0 - C v0 - K u0; ``M_solve`` applies M^{-1}."""
    r = f0 - K @ u0
    if C is not None:
        r = r - C @ v0
    return M_solve(r)


def cfl_timestep(h: float, c_max: float, c_cfl: float = 0.65) -> float:
    if h <= 0 or c_max <= 0 or c_cfl <= 0:
        raise ValueError("h, c_max and the Courant number must be positive")
    return c_cfl * h / c_max


def rayleigh_calibrate(omega_i: float, omega_j: float, xi_i: float, xi_j: float):
    """Solve 1/2 [[1/w_i, w_i], [1/w_j, w_j]] [a0, a1] = [xi_i, xi_j]."""
    if omega_i <= 0 or omega_j <= 0:
        raise ValueError("frequencies must be positive")
    if np.isclose(omega_i, omega_j, rtol=1e-12, atol=0.0):
        raise np.linalg.LinAlgError("singular Rayleigh system: equal frequencies")
    A = 0.5 * np.array([[1.0 / omega_i, omega_i], [1.0 / omega_j, omega_j]])
    a0, a1 = np.linalg.solve(A, [xi_i, xi_j])
    return float(a0), float(a1)


def magnitude_spectrum(series, dt: float):
    series = np.asarray(series, dtype=float)
    mag = np.abs(np.fft.rfft(series - series.mean()))
    freq = np.fft.rfftfreq(len(series), dt)
    return freq, mag


def dominant_frequencies(series, dt: float, n_peaks: int = 2):
    """Largest local maxima of the magnitude spectrum (DC excluded), in Hz.

    Each peak is refined by a parabola through the peak bin and its two
    neighbours.  Returned in ascending frequency.
    """
    series = np.asarray(series, dtype=float)
    if len(series) < 64:
        raise ValueError("need at least 64 samples")
    freq, mag = magnitude_spectrum(series, dt)
    df = freq[1] - freq[0]
    k = np.arange(1, len(mag) - 1)
    is_peak = (mag[k] > mag[k - 1]) & (mag[k] >= mag[k + 1])
    peaks = k[is_peak]
    if len(peaks) < n_peaks:
        raise ValueError(f"found {len(peaks)} spectral peaks, need {n_peaks}")
    top = peaks[np.argsort(mag[peaks])[::-1][:n_peaks]]
    out = []
    for p in top:
        y0, y1, y2 = mag[p - 1], mag[p], mag[p + 1]
        den = y0 - 2.0 * y1 + y2
        shift = 0.5 * (y0 - y2) / den if den != 0 else 0.0
        out.append(freq[p] + shift * df)
    return sorted(out)


def export_probe_series(path, t, u, v=None, a=None) -> None:
    cols = [("t", t), ("u", u)]
    if v is not None:
        cols.append(("v", v))
    if a is not None:
        cols.append(("a", a))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([c[0] for c in cols])
        for row in zip(*(c[1] for c in cols)):
            w.writerow([repr(float(x)) for x in row])


def export_spectrum(path, freq, mag) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["f_Hz", "magnitude"])
        for f, m in zip(freq, mag):
            w.writerow([repr(float(f)), repr(float(m))])
