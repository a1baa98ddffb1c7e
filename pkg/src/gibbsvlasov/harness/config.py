"""Experiment configuration: typed INI sections with strict validation.

A config file is flat ``key = value`` text split into sections::

    [run]        experiment, seed, out, run_id, workers
    [kernel]     family, dimension, cutoff, s, table
    [physics]    N, beta, betas, T, dt, R, f0, times, panel, pairs, screened,
                 remainder, remainder_t
    [mcmc]       sampler settings for partition estimates and ensembles
    [numerics]   grids, cutoffs, solver steps
    [meanfield]  confined fixed-point problem

Lists of numbers are comma separated; lists of strings (observable
expressions) are separated by ``;``.  A kernel ``table`` reads
``"1:0.5, -1:0.5"`` in one dimension and ``"1 0:0.5, -1 0:0.5"`` in two.
Every key has a default, so a file only needs the keys it changes.  Unknown
sections or keys are an error.
"""
from __future__ import annotations

import configparser
import dataclasses
import io
import typing
from dataclasses import dataclass, field

from ..kernels import FAMILIES, FourierKernel, KernelSpec, make_kernel
from ..observables import parse_observable

EXPERIMENTS = (
    "partition",
    "limit",
    "cluster-verify",
    "dynamics-check",
    "theorem1",
    "correlations-decay",
    "vlasov-check",
    "meanfield",
)


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


@dataclass(frozen=True)
class RunSection:
    experiment: str = "partition"
    seed: int = 20240601
    out: str = "results"
    run_id: str = ""
    workers: int = 1


@dataclass(frozen=True)
class KernelSection:
    family: str = "fourier_table"
    dimension: int = 1
    cutoff: int = 1
    s: float = 0.5
    table: str = "1:0.5, -1:0.5"


@dataclass(frozen=True)
class PhysicsSection:
    N: tuple[int, ...] = (2, 8, 64)
    beta: float = 1.0
    betas: tuple[float, ...] = ()
    T: float = 2.0
    dt: float = 0.005
    R: int = 10000
    f0: str = "cos1"
    times: tuple[float, ...] = (0.5, 1.0, 2.0)
    panel: tuple[str, ...] = ("cos1", "sin1", "cos1*He1", "He2")
    # psi|chi|t triples for pair statistics
    pairs: tuple[str, ...] = ("cos1|cos2|0.0",)
    screened: bool = True
    # test function and time of the Vlasov remainder estimate
    remainder: str = "sin1*He1"
    remainder_t: float = 1.0


@dataclass(frozen=True)
class MCMCSection:
    n_chains: int = 64
    burn_in: int = 200
    n_samples: int = 400
    thin: int = 1
    step_size: float = 0.1
    target_accept: float = 0.3
    n_lambda: int = 8
    # ensembles: one independent chain per replica
    ensemble_burn_in: int = 30
    ensemble_step: float = 0.5
    block_size: int = 1024


@dataclass(frozen=True)
class NumericsSection:
    grid_size: int = 256
    K_modes: int = 1
    N_hermite: int = 512
    vlasov_dt: float = 0.001
    volterra_dt: float = 0.001
    vlasov_T: float = 5.0
    cutoffs: tuple[int, ...] = (8, 32, 128, 512)
    C: float = 1.0
    kmax: int = 5
    n_boot: int = 200


@dataclass(frozen=True)
class MeanfieldSection:
    V: str = "quadratic"
    V_scale: float = 1.0
    W: str = "gaussian"
    amplitude: float = 0.1
    width: float = 1.0
    frequency: float = 1.0
    L: float = 8.0
    n: int = 2001
    beta: float = 0.5
    q: tuple[float, ...] = (2.0, 64.0)
    beta_grid: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)
    tol: float = 1e-12


@dataclass(frozen=True)
class ExperimentConfig:
    run: RunSection = field(default_factory=RunSection)
    kernel: KernelSection = field(default_factory=KernelSection)
    physics: PhysicsSection = field(default_factory=PhysicsSection)
    mcmc: MCMCSection = field(default_factory=MCMCSection)
    numerics: NumericsSection = field(default_factory=NumericsSection)
    meanfield: MeanfieldSection = field(default_factory=MeanfieldSection)

    @property
    def run_id(self) -> str:
        return self.run.run_id or f"run{self.run.seed}"

    def replace(self, **sections) -> "ExperimentConfig":
        """Copy with some section fields replaced: ``replace(run={"seed": 3})``."""
        updates = {}
        for name, values in sections.items():
            updates[name] = dataclasses.replace(getattr(self, name), **values)
        return dataclasses.replace(self, **updates)


SECTIONS = {f.name: f.default_factory for f in dataclasses.fields(ExperimentConfig)}


def _section_types(cls) -> dict:
    return typing.get_type_hints(cls)


def _format(value, kind) -> str:
    if kind is bool:
        return "true" if value else "false"
    if kind is float:
        return repr(float(value))
    if typing.get_origin(kind) is tuple:
        elem = typing.get_args(kind)[0]
        sep = "; " if elem is str else ", "
        return sep.join(_format(v, elem) for v in value)
    return str(value)


def _parse(text: str, kind, where: str):
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(text)
            return low in ("true", "yes", "1")
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if typing.get_origin(kind) is tuple:
            elem = typing.get_args(kind)[0]
            sep = ";" if elem is str else ","
            return tuple(_parse(p, elem, where) for p in text.split(sep) if p.strip())
        return text
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot read {text!r} as {getattr(kind, '__name__', kind)}") from exc


def parse_table(text: str, dimension: int) -> dict:
    """``"1:0.5, -1:0.5"`` -> ``{1: 0.5, -1: 0.5}`` (tuples of ints when d > 1)."""
    table = {}
    for item in filter(None, (p.strip() for p in text.split(","))):
        if ":" not in item:
            raise ConfigError(f"kernel.table: entry {item!r} lacks ':'")
        key, val = item.split(":", 1)
        try:
            idx = tuple(int(t) for t in key.split())
            coef = float(val)
        except ValueError as exc:
            raise ConfigError(f"kernel.table: cannot parse entry {item!r}") from exc
        if len(idx) != dimension:
            raise ConfigError(f"kernel.table: frequency {key!r} does not have {dimension} components")
        table[idx[0] if dimension == 1 else idx] = coef
    return table


def parse_config(text: str) -> ExperimentConfig:
    """Read INI text; unknown sections and keys raise :class:`ConfigError`."""
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str  # keys are case sensitive (N, T, R)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    sections = {}
    for name in parser.sections():
        if name not in SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
        cls = type(SECTIONS[name]())
        types = _section_types(cls)
        values = {}
        for key, raw in parser.items(name):
            if key not in types:
                raise ConfigError(f"unknown key {key!r} in [{name}]")
            values[key] = _parse(raw, types[key], f"{name}.{key}")
        sections[name] = cls(**values)
    config = ExperimentConfig(**sections)
    validate(config)
    return config


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def serialize_config(config: ExperimentConfig) -> str:
    """INI text listing every key, so ``parse_config`` inverts it exactly."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for name in SECTIONS:
        section = getattr(config, name)
        types = _section_types(type(section))
        parser[name] = {f.name: _format(getattr(section, f.name), types[f.name])
                        for f in dataclasses.fields(section)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def build_kernel(config: ExperimentConfig) -> FourierKernel:
    k = config.kernel
    if k.family == "fourier_table":
        spec = KernelSpec.fourier_table(k.dimension, parse_table(k.table, k.dimension), k.cutoff)
    elif k.family == "riesz":
        spec = KernelSpec.riesz(k.dimension, k.s, k.cutoff)
    else:
        spec = KernelSpec.log(k.dimension, k.cutoff)
    return make_kernel(spec)


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def validate(config: ExperimentConfig) -> None:
    """Check every field before any computation starts."""
    r, k, p, m, n, mf = (config.run, config.kernel, config.physics, config.mcmc,
                         config.numerics, config.meanfield)
    _check(r.experiment in EXPERIMENTS, f"run.experiment must be one of {', '.join(EXPERIMENTS)}")
    _check(r.seed >= 0, "run.seed must be nonnegative")
    _check(r.workers >= 1, "run.workers must be at least 1")
    _check(all(c.isalnum() or c in "-_." for c in r.run_id), "run.run_id may only contain [A-Za-z0-9._-]")
    _check(k.family in FAMILIES, f"kernel.family must be one of {', '.join(FAMILIES)}")
    _check(k.dimension in (1, 2, 3), "kernel.dimension must be 1, 2 or 3")
    _check(k.cutoff >= 1, "kernel.cutoff must be at least 1")
    if k.family == "riesz":
        _check(0 < k.s < k.dimension, "kernel.s must lie in (0, dimension)")
    if k.family == "fourier_table":
        parse_table(k.table, k.dimension)
    _check(len(p.N) > 0 and all(N >= 1 for N in p.N), "physics.N must list positive integers")
    _check(p.beta >= 0 and all(b >= 0 for b in p.betas), "physics.beta must be nonnegative")
    _check(p.T >= 0 and p.dt > 0, "physics.T >= 0 and physics.dt > 0 required")
    _check(p.R >= 2, "physics.R must be at least 2")
    _check(all(0 <= t <= p.T + 1e-12 for t in p.times), "physics.times must lie in [0, T]")
    _check(list(p.times) == sorted(p.times), "physics.times must be increasing")
    _check(0 <= p.remainder_t <= p.T + 1e-12, "physics.remainder_t outside [0, T]")
    for text in (p.f0,) + p.panel + ((p.remainder,) if p.remainder.strip() else ()):
        try:
            parse_observable(text)
        except ValueError as exc:
            raise ConfigError(f"bad observable {text!r}: {exc}") from exc
    for triple in p.pairs:
        parts = triple.split("|")
        _check(len(parts) == 3, f"physics.pairs entry {triple!r} must read psi|chi|t")
        try:
            parse_observable(parts[0])
            parse_observable(parts[1])
            t = float(parts[2])
        except ValueError as exc:
            raise ConfigError(f"bad pair {triple!r}: {exc}") from exc
        _check(0 <= t <= p.T + 1e-12, f"pair time {t} outside [0, T]")
    _check(m.n_chains >= 1 and m.n_samples >= 3 and m.thin >= 1, "mcmc counts must be positive")
    _check(m.burn_in >= 0 and m.ensemble_burn_in >= 0, "burn-in must be nonnegative")
    _check(m.step_size > 0 and m.ensemble_step > 0, "mcmc step sizes must be positive")
    _check(0 < m.target_accept < 1, "mcmc.target_accept must lie in (0, 1)")
    _check(m.n_lambda >= 4, "mcmc.n_lambda must be at least 4")
    _check(m.block_size >= 1, "mcmc.block_size must be positive")
    _check(n.grid_size >= 8, "numerics.grid_size must be at least 8")
    _check(n.K_modes >= 1 and n.N_hermite >= 2, "numerics.K_modes >= 1 and N_hermite >= 2 required")
    _check(n.vlasov_dt > 0 and n.volterra_dt > 0 and n.vlasov_T > 0, "vlasov steps must be positive")
    _check(all(c >= 1 for c in n.cutoffs), "numerics.cutoffs must be positive")
    _check(n.C > 0 and 2 <= n.kmax <= 5 and n.n_boot >= 10, "numerics.C > 0, 2 <= kmax <= 5, n_boot >= 10")
    _check(mf.V in ("quadratic", "quartic", "double_well", "constant"), "meanfield.V unknown")
    _check(mf.W in ("gaussian", "cosine_localized", "zero"), "meanfield.W unknown")
    _check(mf.L > 0 and mf.n >= 3 and mf.width > 0, "meanfield grid parameters must be positive")
    _check(mf.beta >= 0 and mf.tol > 0, "meanfield.beta >= 0 and tol > 0 required")
    _check(all(q >= 1 for q in mf.q), "meanfield.q must be >= 1")
    g = mf.beta_grid
    _check(len(g) >= 2 and g[0] > 0 and g[-1] <= 1 and all(a < b for a, b in zip(g, g[1:])),
           "meanfield.beta_grid must increase within (0, 1]")
