"""Spatial Gibbs measure on the torus: sampling, partition functions, bounds.

The spatial Gibbs density of ``N`` particles is proportional to
``exp(-beta * U)`` with ``U = (1/2N) sum_{i != j} W(x_i - x_j)``.  In Fourier
variables ``U = (1/N) sum_{xi in H} W_hat(xi) (|S_xi|^2 - N)`` where
``S_xi = sum_j exp(2 pi i xi.x_j)`` is the structure factor, so single-particle
moves cost O(#frequencies) instead of O(N).

Many chains are advanced together as a batch (leading array axis); each
chain has its own step size and acceptance counters, so chains remain
statistically independent.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np
from scipy import special

# the bundled TBB is too old for numba; prefer OpenMP, then the builtin pool
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

from .kernels import FourierKernel

log = logging.getLogger(__name__)

__all__ = [
    "MCMCParams",
    "SpatialConfig",
    "GibbsChain",
    "PartitionEstimate",
    "EnergyEstimate",
    "LimitFormula",
    "TheoreticalBounds",
    "NonConvergenceError",
    "LimitDomainError",
    "init_chain",
    "mcmc_step",
    "mcmc_sweep",
    "run_chain",
    "sample_positions",
    "sample_velocities",
    "pair_energy",
    "mean_energy",
    "estimate_logZ_thermo",
    "exact_Z_smallN",
    "limit_Z",
    "limit_Z_terms",
    "moment_identity_check",
    "naive_bound",
    "interpolation_bound",
    "theoretical_bounds",
    "minimal_C",
]


class NonConvergenceError(RuntimeError):
    """Batch means of an MCMC run failed the stationarity heuristic."""


class LimitDomainError(ValueError):
    """Some ``1 + beta W_hat(xi) <= 0``: the limit formula blows up."""


@dataclass(frozen=True)
class MCMCParams:
    """Sampler settings.  All counts are in sweeps (N single-particle moves).

    ``n_chains`` independent chains each contribute ``n_samples`` energy
    records, taken every ``thin`` sweeps after ``burn_in`` sweeps.  The
    proposal scale is adapted by Robbins-Monro during burn-in only.
    """

    n_chains: int = 64
    burn_in: int = 200
    n_samples: int = 400
    thin: int = 1
    step_size: float = 0.1
    target_accept: float = 0.3
    n_batches: int = 10
    stationarity_z: float = 5.0


@dataclass
class SpatialConfig:
    """Positions of one configuration with its cached pair energy ``U``."""

    positions: np.ndarray
    cached_energy: float


@dataclass
class GibbsChain:
    """A batch of independent Metropolis chains targeting ``exp(-beta U)``.

    Attributes
    ----------
    positions : (C, N, d) array
    energy : (C,) cached ``U`` per chain
    structure : (C, M) complex structure factors over ``kernel.half_freqs``
    step_size : (C,) proposal standard deviation per chain
    """

    kernel: FourierKernel
    beta: float
    positions: np.ndarray
    energy: np.ndarray
    structure: np.ndarray
    step_size: np.ndarray
    rng: np.random.Generator
    accept_count: np.ndarray
    total_count: int = 0

    @property
    def n_chains(self) -> int:
        return self.positions.shape[0]

    @property
    def N(self) -> int:
        return self.positions.shape[1]

    @property
    def acceptance(self) -> np.ndarray:
        return self.accept_count / max(self.total_count, 1)

    def config(self, c: int = 0) -> SpatialConfig:
        return SpatialConfig(self.positions[c].copy(), float(self.energy[c]))

    def refresh(self) -> None:
        """Recompute structure factors and energies from positions."""
        self.structure = _structure(self.kernel, self.positions)
        self.energy = _energy_from_structure(self.kernel, self.structure, self.N)


def _phases(kernel: FourierKernel, x: np.ndarray) -> np.ndarray:
    ph = 2.0 * np.pi * (x @ kernel.half_freqs.T)
    out = np.empty(ph.shape, dtype=complex)
    out.real = np.cos(ph)
    out.imag = np.sin(ph)
    return out


def _structure(kernel: FourierKernel, positions: np.ndarray) -> np.ndarray:
    return _phases(kernel, positions).sum(axis=-2)


def _energy_from_structure(kernel: FourierKernel, S: np.ndarray, N: int) -> np.ndarray:
    return ((np.abs(S) ** 2 - N) @ kernel.half_coefficients) / N


def pair_energy(kernel: FourierKernel, positions) -> np.ndarray:
    """``U = (1/2N) sum_{i != j} W(x_i - x_j)`` for ``(..., N, d)`` positions
    (trailing ``d`` may be omitted in d=1)."""
    x = np.asarray(positions, dtype=float)
    if kernel.dimension == 1 and x.shape[-1] != 1:
        x = x[..., None]
    N = x.shape[-2]
    return _energy_from_structure(kernel, _structure(kernel, x), N)


def init_chain(kernel: FourierKernel, N: int, beta: float, n_chains: int = 1,
               step_size: float = 0.1, seed=None) -> GibbsChain:
    """Chains started from independent uniform configurations."""
    rng = np.random.default_rng(seed)
    pos = rng.random((n_chains, N, kernel.dimension))
    S = _structure(kernel, pos)
    return GibbsChain(
        kernel=kernel,
        beta=float(beta),
        positions=pos,
        energy=_energy_from_structure(kernel, S, N),
        structure=S,
        step_size=np.full(n_chains, float(step_size)),
        rng=rng,
        accept_count=np.zeros(n_chains, dtype=np.int64),
    )


def mcmc_step(chain: GibbsChain, j=None) -> GibbsChain:
    """One random-walk Metropolis proposal for particle ``j`` in every chain.

    ``j`` may be an int, a per-chain index array, or None (uniform random
    particle per chain).  The chain is updated in place and returned.
    """
    kernel, N, C = chain.kernel, chain.N, chain.n_chains
    rng = chain.rng
    if j is None:
        j = rng.integers(0, N, size=C)
    rows = np.arange(C)
    j = np.broadcast_to(np.asarray(j), (C,))
    old = chain.positions[rows, j]
    new = np.mod(old + chain.step_size[:, None] * rng.standard_normal(old.shape), 1.0)
    e_old = _phases(kernel, old)
    e_new = _phases(kernel, new)
    others = chain.structure - e_old
    # pair weight of particle j with each other particle is 1/N
    dU = (2.0 / N) * (np.real((e_new - e_old) * np.conj(others)) @ kernel.half_coefficients)
    log_u = np.log(rng.random(C))
    accept = log_u < -chain.beta * dU
    chain.positions[rows[accept], j[accept]] = new[accept]
    chain.structure[accept] += e_new[accept] - e_old[accept]
    chain.energy[accept] += dU[accept]
    chain.accept_count += accept
    chain.total_count += 1
    return chain


@numba.njit(parallel=True, cache=True)
def _sweep_kernel(pos, S, energy, freqs, coeffs, beta, step, normals, log_u, accepted):
    C, N, d = pos.shape
    M = freqs.shape[0]
    two_pi = 2.0 * np.pi
    for c in numba.prange(C):
        new = np.empty(d)
        for j in range(N):
            for a in range(d):
                y = pos[c, j, a] + step[c] * normals[c, j, a]
                new[a] = y - np.floor(y)
            dU = 0.0
            for m in range(M):
                ph_old = 0.0
                ph_new = 0.0
                for a in range(d):
                    ph_old += freqs[m, a] * pos[c, j, a]
                    ph_new += freqs[m, a] * new[a]
                co, so = np.cos(two_pi * ph_old), np.sin(two_pi * ph_old)
                cn, sn = np.cos(two_pi * ph_new), np.sin(two_pi * ph_new)
                # Re((e_new - e_old) * conj(S - e_old))
                dU += coeffs[m] * ((cn - co) * (S[c, m].real - co) + (sn - so) * (S[c, m].imag - so))
            dU *= 2.0 / N
            if log_u[c, j] < -beta * dU:
                for m in range(M):
                    ph_old = 0.0
                    ph_new = 0.0
                    for a in range(d):
                        ph_old += freqs[m, a] * pos[c, j, a]
                        ph_new += freqs[m, a] * new[a]
                    S[c, m] += complex(np.cos(two_pi * ph_new) - np.cos(two_pi * ph_old),
                                       np.sin(two_pi * ph_new) - np.sin(two_pi * ph_old))
                for a in range(d):
                    pos[c, j, a] = new[a]
                energy[c] += dU
                accepted[c] += 1


def mcmc_sweep(chain: GibbsChain) -> GibbsChain:
    """Systematic scan over all particles, then an exact refresh of caches.

    Proposals and uniforms are drawn up front from ``chain.rng`` and the scan
    runs in a compiled loop, parallel over chains; the result does not
    depend on the thread count.
    """
    C, N, d = chain.positions.shape
    normals = chain.rng.standard_normal((C, N, d))
    log_u = np.log(chain.rng.random((C, N)))
    accepted = np.zeros(C, dtype=np.int64)
    _sweep_kernel(chain.positions, chain.structure, chain.energy,
                  chain.kernel.half_freqs.astype(float), chain.kernel.half_coefficients.astype(float),
                  float(chain.beta), chain.step_size, normals, log_u, accepted)
    chain.accept_count += accepted
    chain.total_count += N
    chain.refresh()
    return chain


def _adapt(chain: GibbsChain, sweep: int, before: np.ndarray, target: float) -> None:
    rate = (chain.accept_count - before) / chain.N
    gain = 1.0 / (sweep + 1.0) ** 0.6
    chain.step_size = np.minimum(chain.step_size * np.exp(gain * (rate - target)), 2.0)


def run_chain(chain: GibbsChain, params: MCMCParams,
              observable: Callable[[GibbsChain], np.ndarray] | None = None) -> np.ndarray:
    """Burn in with adaptation, then record ``observable`` (default ``U``).

    Returns an array of shape ``(n_samples, C, ...)``.
    """
    for sweep in range(params.burn_in):
        before = chain.accept_count.copy()
        mcmc_sweep(chain)
        _adapt(chain, sweep, before, params.target_accept)
    chain.accept_count[:] = 0
    chain.total_count = 0
    observable = observable or (lambda ch: ch.energy.copy())
    records = []
    for _ in range(params.n_samples):
        for _ in range(params.thin):
            mcmc_sweep(chain)
        records.append(observable(chain))
    return np.asarray(records)


def sample_positions(kernel: FourierKernel, N: int, beta: float, n_configs: int,
                     params: MCMCParams, seed=None) -> np.ndarray:
    """``n_configs`` Gibbs configurations, one per independent chain.

    Each chain is burned in for ``params.burn_in`` sweeps (at least 10) and
    returns its final state.  Shape ``(n_configs, N, d)``.
    """
    chain = init_chain(kernel, N, beta, n_configs, params.step_size, seed)
    if beta == 0.0 or N == 1:
        return chain.positions
    for sweep in range(max(params.burn_in, 10)):
        before = chain.accept_count.copy()
        mcmc_sweep(chain)
        if sweep < params.burn_in // 2:
            _adapt(chain, sweep, before, params.target_accept)
    return chain.positions


def sample_velocities(N: int, beta: float, seed=None, dimension: int = 1, size=None) -> np.ndarray:
    """I.i.d. Maxwellian velocities, variance ``1/beta`` per component."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    rng = np.random.default_rng(seed)
    shape = (N, dimension) if size is None else (size, N, dimension)
    return rng.standard_normal(shape) / math.sqrt(beta)


@dataclass(frozen=True)
class EnergyEstimate:
    mean: float
    stderr: float
    acceptance: float
    n_records: int


def mean_energy(kernel: FourierKernel, N: int, beta: float, params: MCMCParams = MCMCParams(),
                seed=None) -> EnergyEstimate:
    """MCMC estimate of ``<U>`` under the spatial Gibbs measure.

    The standard error comes from batch means (``n_batches`` per chain,
    pooled over chains).  The stationarity heuristic compares the first and
    last thirds of the records; a z-score above ``params.stationarity_z``
    raises :class:`NonConvergenceError`.
    """
    chain = init_chain(kernel, N, beta, params.n_chains, params.step_size, seed)
    if N == 1:
        return EnergyEstimate(0.0, 0.0, 1.0, 0)
    rec = run_chain(chain, params)  # (T, C)
    T = rec.shape[0]
    nb = min(params.n_batches, T)
    usable = (T // nb) * nb
    batches = rec[:usable].reshape(nb, usable // nb, -1).mean(axis=1).ravel()
    mean = float(rec.mean())
    stderr = float(batches.std(ddof=1) / math.sqrt(batches.size)) if batches.size > 1 else 0.0

    third = T // 3
    if third >= 2 and stderr > 0:
        head = rec[:third].mean(axis=0)
        tail = rec[-third:].mean(axis=0)
        diff = tail - head
        se = diff.std(ddof=1) / math.sqrt(diff.size) if diff.size > 1 else stderr * math.sqrt(6)
        if se > 0 and abs(diff.mean()) / se > params.stationarity_z:
            raise NonConvergenceError(
                f"non-stationary energy trace: z={abs(diff.mean()) / se:.1f} (N={N}, beta={beta})")
    return EnergyEstimate(mean, stderr, float(chain.acceptance.mean()), int(rec.size))


@dataclass(frozen=True)
class PartitionEstimate:
    """``log Zbar`` with its uncertainty and provenance."""

    logZ: float
    stderr: float
    method: str
    lambda_grid: np.ndarray = field(default_factory=lambda: np.zeros(0))
    node_energies: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def Z(self) -> float:
        return math.exp(self.logZ)

    @property
    def Z_stderr(self) -> float:
        return self.Z * self.stderr


def estimate_logZ_thermo(kernel: FourierKernel, N: int, beta: float, n_lambda: int = 8,
                         params: MCMCParams = MCMCParams(), seed=None) -> PartitionEstimate:
    """Thermodynamic integration ``log Zbar = -int_0^beta <U>_lambda d lambda``.

    Gauss-Legendre nodes on ``[0, beta]``; each node runs its own chains with
    a seed spawned from ``seed`` and errors are propagated in quadrature.
    """
    if n_lambda < 4:
        raise ValueError("n_lambda must be at least 4")
    if beta == 0.0 or N == 1:
        return PartitionEstimate(0.0, 0.0, "thermo_integration")
    nodes, weights = np.polynomial.legendre.leggauss(n_lambda)
    lam = 0.5 * beta * (nodes + 1.0)
    w = 0.5 * beta * weights
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    seeds = root.spawn(n_lambda)
    est = [mean_energy(kernel, N, float(l), params, s) for l, s in zip(lam, seeds)]
    means = np.array([e.mean for e in est])
    errs = np.array([e.stderr for e in est])
    return PartitionEstimate(
        logZ=float(-(w @ means)),
        stderr=float(np.sqrt(np.sum((w * errs) ** 2))),
        method="thermo_integration",
        lambda_grid=lam,
        node_energies=means,
    )


def _tensor_log_partition(kernel: FourierKernel, N: int, beta: float, grid_size: int) -> float:
    """``log`` of the periodic trapezoid rule for ``Zbar`` with ``x_N = 0``."""
    Wg = kernel.grid_values(grid_size)
    n = grid_size
    if N == 1 or beta == 0.0:
        return 0.0
    if N == 2:
        vals = -0.5 * beta * Wg
        return float(special.logsumexp(vals) - math.log(n))
    idx = np.arange(n)
    if N == 3:
        # exponent -(beta/2N)*2*[W(x1-x2) + W(x1) + W(x2)]
        e = Wg[(idx[:, None] - idx[None, :]) % n] + Wg[idx][:, None] + Wg[idx][None, :]
        return float(special.logsumexp(-(beta / N) * e) - 2 * math.log(n))
    if N == 4:
        d = lambda a, b: Wg[(a - b) % n]
        i, j, k = np.ix_(idx, idx, idx)
        e = d(i, j) + d(i, k) + d(j, k) + Wg[i] + Wg[j] + Wg[k]
        return float(special.logsumexp(-(beta / N) * e) - 3 * math.log(n))
    raise ValueError("tensor quadrature is limited to N <= 4")


def exact_Z_smallN(kernel: FourierKernel, N: int, beta: float, grid_size: int = 256) -> PartitionEstimate:
    """Deterministic quadrature of ``Zbar`` for ``d = 1`` and ``N in {2, 3}``.

    Translation invariance pins one particle, so the ``N=2`` case is the
    1-D integral ``int exp(-(beta/2) W(y)) dy``.  The periodic trapezoid rule
    is spectrally accurate for truncated-Fourier kernels.
    """
    if kernel.dimension != 1:
        raise ValueError("exact quadrature requires d = 1")
    if N not in (1, 2, 3):
        raise ValueError("exact quadrature supports N <= 3")
    return PartitionEstimate(_tensor_log_partition(kernel, N, beta, grid_size), 0.0, "exact_quadrature")


@dataclass(frozen=True)
class LimitFormula:
    value: float
    exponent: float
    tail: float


def limit_Z_terms(kernel: FourierKernel, beta: float) -> LimitFormula:
    """Large-N limit of ``Zbar`` from the Gaussian fluctuation determinant.

    ``lim Zbar = exp( sum_{xi != 0} [ (beta/2) W_hat - (1/2) log(1 + beta W_hat) ] )``

    summed exactly over the retained frequencies.  ``tail`` estimates the
    dropped part ``sum_{|xi|_inf > cutoff} (beta^2/4) W_hat^2`` for the Riesz
    and log families (infinite when that series diverges).
    """
    a = beta * kernel.coefficients
    if np.any(1.0 + a <= 0.0):
        raise LimitDomainError("1 + beta*W_hat(xi) <= 0 for some xi: not H-stable at this beta")
    exponent = float(np.sum(0.5 * a - 0.5 * np.log1p(a)))
    return LimitFormula(math.exp(exponent), exponent, _limit_tail(kernel, beta))


def limit_Z(kernel: FourierKernel, beta: float) -> float:
    return limit_Z_terms(kernel, beta).value


def _limit_tail(kernel: FourierKernel, beta: float) -> float:
    spec = kernel.spec
    if spec.family == "fourier_table" or beta == 0.0:
        return 0.0
    d, L = spec.dimension, kernel.cutoff
    power = 2.0 * (d - (spec.s if spec.family == "riesz" else 0.0))  # W_hat^2 = |xi|^-power
    if power <= d:
        return math.inf
    if d == 1:
        return 2.0 * (beta**2 / 4.0) * float(special.zeta(power, L + 1))
    # radial integral outside the inscribed ball of radius L
    area = 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)
    return (beta**2 / 4.0) * area * L ** (d - power) / (power - d)


def moment_identity_check(kernel: FourierKernel, N: int, beta: float, p: float,
                          grid_size: int = 256) -> dict:
    """Both sides of ``int M_N^p / (M^N)^(p-1) = Zbar(p beta) / Zbar(beta)^p``.

    The velocity Gaussians cancel identically, so the left side is the
    quadrature of the ``p``-th power of the normalized spatial Gibbs density.
    """
    if kernel.dimension != 1 or N not in (2, 3):
        raise ValueError("moment identity check needs d = 1 and N in {2, 3}")
    if p < 1:
        raise ValueError("p must be >= 1")
    n = grid_size
    Wg = kernel.grid_values(n)
    idx = np.arange(n)
    if N == 2:
        energy = 0.5 * Wg  # U with x_2 pinned at 0
    else:
        energy = (Wg[(idx[:, None] - idx[None, :]) % n] + Wg[idx][:, None] + Wg[idx][None, :]) / 3.0
    logZ = special.logsumexp(-beta * energy) - math.log(energy.size)
    log_density = -beta * energy - logZ
    lhs = float(np.exp(special.logsumexp(p * log_density) - math.log(energy.size)))
    rhs = math.exp(exact_Z_smallN(kernel, N, p * beta, n).logZ - p * exact_Z_smallN(kernel, N, beta, n).logZ)
    return {"lhs": lhs, "rhs": rhs}


def _grid_samples(U, dimension: int, grid_size: int) -> np.ndarray:
    if isinstance(U, FourierKernel):
        return U.grid_values(grid_size).ravel()
    if callable(U):
        if dimension != 1:
            raise ValueError("callable potentials are supported in d = 1")
        return np.asarray(U(np.arange(grid_size) / grid_size), dtype=float)
    return np.asarray(U, dtype=float).ravel()


def naive_bound(U, N: int, beta: float, grid_size: int = 4096, dimension: int = 1) -> float:
    """``exp(beta N ||U_-||_1 exp(beta ||U_-||_inf))`` with grid norms.

    ``U`` may be a :class:`FourierKernel`, a callable on ``[0, 1)`` (d=1) or
    an array of grid samples.  No centering is assumed.
    """
    vals = _grid_samples(U, getattr(U, "dimension", dimension), grid_size)
    neg = np.maximum(-vals, 0.0)
    return math.exp(beta * N * neg.mean() * math.exp(beta * neg.max()))


def interpolation_bound(kernel: FourierKernel, N: int, beta: float, M: float, C: float,
                        grid_size: int = 4096) -> float:
    """Right side of the truncation/interpolation bound for a level ``M``.

    ``W = U_M + V_M`` with ``U_M = W 1{|W|<=M}`` recentred; the bound is
    ``exp(C beta^2 ||U_M||_2^2 + C beta N ||V_M||_1 exp(beta ||(V_M)_-||_inf))``.
    """
    W = kernel.grid_values(grid_size).ravel()
    small = np.where(np.abs(W) <= M, W, 0.0)
    U_M = small - small.mean()
    V_M = W - U_M
    vneg = np.maximum(-V_M, 0.0)
    return math.exp(C * beta**2 * np.mean(U_M**2)
                    + C * beta * N * np.mean(np.abs(V_M)) * math.exp(beta * vneg.max()))


@dataclass(frozen=True)
class TheoreticalBounds:
    bound_L2: float
    bound_weakL2: float
    bound_riesz: float | None
    regime: str | None


def theoretical_bounds(kernel: FourierKernel, N: int, beta: float, C: float) -> TheoreticalBounds:
    """High-temperature upper bounds on ``Zbar`` for an experimenter-chosen ``C``.

    ``bound_L2 = exp(C beta^2 ||W||_2^2)``, ``bound_weakL2 = C N^(C beta^2 ||W||_{2,inf}^2)``
    and, for Riesz kernels, the regime-dependent bound tagged ``"s<d/2"``,
    ``"s=d/2"`` or ``"s>d/2"``.  The log kernel is reported as ``"s=0"``.
    """
    norms = kernel.norms
    bound_L2 = math.exp(C * beta**2 * norms.L2_parseval**2)
    bound_weak = C * N ** (C * beta**2 * norms.weak_L2**2)
    spec = kernel.spec
    bound_riesz, regime = None, None
    if spec.family == "riesz":
        d, s = spec.dimension, spec.s
        if math.isclose(s, d / 2):
            regime, bound_riesz = "s=d/2", C * N ** (C * beta**2)
        elif s < d / 2:
            regime, bound_riesz = "s<d/2", C
        else:
            regime = "s>d/2"
            bound_riesz = C * math.exp(C * beta ** (d / s) * N ** (2 - d / s))
    elif spec.family == "log":
        regime, bound_riesz = "s=0", C
    return TheoreticalBounds(bound_L2, bound_weak, bound_riesz, regime)


def minimal_C(Z: float, beta: float, kernel: FourierKernel) -> float:
    """Smallest ``C`` with ``Z <= exp(C beta^2 ||W||_2^2)``."""
    scale = beta**2 * kernel.norms.L2_parseval**2
    if scale == 0.0:
        return 0.0
    return max(math.log(Z), 0.0) / scale
