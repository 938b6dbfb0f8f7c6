"""Run configuration: JSON sections mapped onto dataclasses, unknown keys rejected."""
from __future__ import annotations

import dataclasses
import json
import os
import typing
from dataclasses import dataclass, field


class ConfigError(ValueError):
    pass


@dataclass
class MeshConfig:
    nx: int = 33
    ny: int = 33

    def validate(self):
        if self.nx < 2 or self.ny < 2:
            raise ConfigError("mesh needs nx, ny >= 2")


@dataclass
class PartitionConfig:
    px: int = 2
    py: int = 2

    def validate(self):
        if self.px < 1 or self.py < 1:
            raise ConfigError("partition needs px, py >= 1")


@dataclass
class PulseConfig:
    x0: float = 0.7
    y0: float = 0.7
    beta: float = 1.0
    alpha: float = 0.01

    def validate(self):
        if self.alpha <= 0:
            raise ConfigError("pulse width alpha must be positive")


@dataclass
class PhysicsConfig:
    sigma_g: float = 0.1
    bx: float = 1.0
    by: float = 1.0
    g0: float = 0.0
    alpha0: float = 0.5445
    alpha1: float = 0.0174
    auto_calibrate: bool = False
    cfl: float = 0.65
    T_final: float = 1.0
    density: float = 1.0
    mass: str = "consistent"
    pulse: PulseConfig = field(default_factory=PulseConfig)

    def validate(self):
        if self.sigma_g < 0 or self.bx <= 0 or self.by <= 0:
            raise ConfigError("need sigma_g >= 0 and positive correlation lengths")
        if self.alpha0 < 0 or self.alpha1 < 0:
            raise ConfigError("Rayleigh coefficients must be non-negative")
        if self.cfl <= 0 or self.T_final <= 0 or self.density <= 0:
            raise ConfigError("cfl, T_final and density must be positive")
        if self.mass not in ("consistent", "lumped"):
            raise ConfigError("mass must be 'consistent' or 'lumped'")
        self.pulse.validate()


@dataclass
class StochasticConfig:
    L: int = 3
    p_in: int = 2
    p_out: int = 3

    def validate(self):
        if self.L < 1 or self.p_in < 0 or self.p_out < self.p_in:
            raise ConfigError("need L >= 1 and 0 <= p_in <= p_out")


@dataclass
class SolverSection:
    tol: float = 1e-8
    max_iter: int = 500
    preconditioner: str = "nn2"

    def validate(self):
        if self.preconditioner not in ("lumped", "nn1", "nn2"):
            raise ConfigError("preconditioner must be lumped, nn1 or nn2")
        if self.tol <= 0 or self.max_iter < 1:
            raise ConfigError("need tol > 0 and max_iter >= 1")


@dataclass
class SamplingConfig:
    M: int = 2000
    seed: int = 12345

    def validate(self):
        if self.M < 2:
            raise ConfigError("need M >= 2 samples")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 bits")


@dataclass
class AnalyticConfig:
    n: int = 64
    cfl: float = 0.25
    T: float = 1.0
    m: int = 2
    k: int = 1
    c: float = 1.0
    mass: str = "lumped"
    guard: float = 0.1
    probe: tuple = (0.292, 0.703)

    def validate(self):
        if self.n < 2 or self.cfl <= 0 or self.T <= 0 or self.c <= 0:
            raise ConfigError("invalid analytic verification settings")
        if self.mass not in ("consistent", "lumped"):
            raise ConfigError("mass must be 'consistent' or 'lumped'")


@dataclass
class CflStudyConfig:
    meshes: tuple = (32, 64)
    cfls: tuple = (1.0, 0.65, 0.25)
    T: float = 1.0
    mass: str = "lumped"

    def validate(self):
        if not self.meshes or not self.cfls:
            raise ConfigError("cfl_study needs nonempty mesh and CFL lists")


@dataclass
class PdfConfig:
    sigma_g: float = 0.3
    mu_g: float = 0.0
    point: tuple = (0.25, 0.5)
    times: tuple = (0.5, 2.0, 5.0)
    samples: int = 100_000
    bins: int = 100

    def validate(self):
        if self.samples < 10_000 or self.bins < 1 or self.sigma_g < 0:
            raise ConfigError("pdf needs samples >= 1e4, bins >= 1, sigma_g >= 0")


@dataclass
class CompareConfig:
    nx: int = 39
    ny: int = 39
    dt: float = 0.01
    n_steps: int = 50
    subdomains: tuple = ((2, 2), (4, 2), (4, 4))
    preconditioners: tuple = ("lumped", "nn1", "nn2")

    def validate(self):
        if self.n_steps < 1 or self.dt <= 0:
            raise ConfigError("compare needs n_steps >= 1 and dt > 0")
        for pc in self.preconditioners:
            if pc not in ("lumped", "nn1", "nn2"):
                raise ConfigError(f"unknown preconditioner {pc!r}")


@dataclass
class RayleighConfig:
    n: int = 64
    dt: float = 0.01
    T: float = 10.0
    probe: tuple = (0.7, 0.7)
    pulse_alpha: float = 0.1
    xi: tuple = (0.1, 0.1)

    def validate(self):
        if self.T / self.dt < 64:
            raise ConfigError("rayleigh response needs at least 64 samples")


@dataclass
class BarSection:
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
    force_frequency: float = 1.0
    sigma_g: float = 0.1
    p_in: int = 7
    p_out: int = 10
    snapshot_times: tuple = (0.1, 0.2)
    steady_T: float = 10.0
    steady_alpha0: float = 1.0
    steady_alpha1: float = 0.01
    se_samples: tuple = (250, 1000, 4000)

    def validate(self):
        if self.E <= 0 or self.rho <= 0 or self.A <= 0 or self.h <= 0 or self.dt <= 0:
            raise ConfigError("bar parameters must be positive")
        if self.p_out < self.p_in:
            raise ConfigError("bar needs p_in <= p_out")


@dataclass
class RunConfig:
    mesh: MeshConfig = field(default_factory=MeshConfig)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    stochastic: StochasticConfig = field(default_factory=StochasticConfig)
    solver: SolverSection = field(default_factory=SolverSection)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    probes: tuple = ((0.5, 0.5), (0.7, 0.7), (0.2, 0.7))
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    snapshot_times: tuple = (0.0065, 0.2, 0.5, 0.8)
    analytic: AnalyticConfig = field(default_factory=AnalyticConfig)
    cfl_study: CflStudyConfig = field(default_factory=CflStudyConfig)
    pdf: PdfConfig = field(default_factory=PdfConfig)
    compare: CompareConfig = field(default_factory=CompareConfig)
    rayleigh: RayleighConfig = field(default_factory=RayleighConfig)
    bar: BarSection = field(default_factory=BarSection)
    svg: bool = True

    def validate(self):
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        for p in self.probes:
            if len(p) != 2 or not all(0.0 <= v <= 1.0 for v in p):
                raise ConfigError(f"probe {p} outside the unit square")
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if dataclasses.is_dataclass(v):
                v.validate()
        return self

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


def _tuple(v):
    return tuple(_tuple(x) for x in v) if isinstance(v, (list, tuple)) else v


_SCALARS = {int: (int,), float: (int, float), bool: (bool,), str: (str,)}


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected an object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where or 'config'}: unknown keys {unknown}")
    kwargs = {}
    for name, raw in data.items():
        tp = hints[name]
        key = f"{where}.{name}" if where else name
        if dataclasses.is_dataclass(tp):
            kwargs[name] = _build(tp, raw, key)
        elif tp is tuple:
            if not isinstance(raw, list):
                raise ConfigError(f"{key}: expected a list")
            kwargs[name] = _tuple(raw)
        else:
            ok = _SCALARS.get(tp)
            if ok is None or not isinstance(raw, ok) or (tp is not bool and isinstance(raw, bool)):
                raise ConfigError(f"{key}: expected {tp.__name__}")
            kwargs[name] = tp(raw)
    return cls(**kwargs)


def config_from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data, "").validate()


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return config_from_dict(data)
