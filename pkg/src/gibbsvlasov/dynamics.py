"""Mean-field Newtonian dynamics on the torus and weighted fluctuation ensembles.

Particles obey ``dx_j/dt = v_j`` and ``dv_j/dt = (1/N) sum_{l != j} K(x_j - x_l)``.
All routines accept a leading replica axis, so a whole ensemble is advanced
with array operations.

Signed initial data ``M_N * sum_j f0(z_j)`` cannot be sampled directly.  Each
replica is instead drawn from the Gibbs measure and carries the weight
``w = sum_j f0(z_j(0))``.  The Hamiltonian flow preserves phase-space volume,
so transporting the weight unchanged gives

    <phi, F_{N,m}(t)> = E_Gibbs[ w * U_m(phi)(Z(t)) ]

with ``U_m`` the symmetrised U-statistic of order ``m``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gibbs import MCMCParams, pair_energy, sample_positions
from .kernels import FourierKernel
from .observables import Observable

__all__ = [
    "ParticleState",
    "WeightedEnsemble",
    "Trajectory",
    "ObservableEstimate",
    "forces",
    "verlet_step",
    "simulate",
    "total_energy",
    "make_fluctuation_ensemble",
    "block_seed",
    "replica_values",
    "weighted_observable",
]

# bytes of complex phase table allowed per force-evaluation chunk
_CHUNK_BYTES = 64 * 2**20


@dataclass
class ParticleState:
    """Positions and velocities of shape ``(..., N, d)`` at time ``time``."""

    positions: np.ndarray
    velocities: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.positions = np.mod(np.asarray(self.positions, dtype=float), 1.0)
        self.velocities = np.asarray(self.velocities, dtype=float)
        if self.positions.shape != self.velocities.shape:
            raise ValueError("positions and velocities must have equal shapes")
        if self.positions.ndim < 2:
            raise ValueError("state arrays need shape (..., N, d)")

    @property
    def N(self) -> int:
        return self.positions.shape[-2]

    def copy(self) -> "ParticleState":
        return ParticleState(self.positions.copy(), self.velocities.copy(), self.time)


@dataclass
class WeightedEnsemble:
    """``R`` replicas with signed weights fixed at ``t = 0``.

    ``block_ids`` records which seed block produced each replica.
    """

    state: ParticleState
    weights: np.ndarray
    beta: float
    f0: Observable
    block_ids: np.ndarray = field(default=None)

    @property
    def R(self) -> int:
        return self.weights.shape[0]

    @property
    def N(self) -> int:
        return self.state.N


@dataclass
class Trajectory:
    """Snapshots ``positions[s]``, ``velocities[s]`` at ``times[s]``."""

    times: np.ndarray
    positions: np.ndarray  # (S, R, N, d)
    velocities: np.ndarray
    weights: np.ndarray  # (R,)
    beta: float

    def snapshot(self, s: int) -> ParticleState:
        return ParticleState(self.positions[s], self.velocities[s], float(self.times[s]))


def forces(kernel: FourierKernel, positions: np.ndarray, method: str = "fourier") -> np.ndarray:
    """Mean-field forces ``(1/N) sum_{l != j} K(x_j - x_l)``.

    ``"fourier"`` uses structure factors, O(N * #freqs).  ``"direct"`` is
    the plain pair sum, O(N^2 * #freqs), kept as an independent reference.
    """
    x = np.asarray(positions, dtype=float)
    N = x.shape[-2]
    if N < 2 or kernel.is_zero:
        return np.zeros_like(x)
    if method == "direct":
        diff = x[..., :, None, :] - x[..., None, :, :]
        return kernel.force(diff).sum(axis=-2) / N
    if method != "fourier":
        raise ValueError(f"unknown force method {method!r}")
    xi = kernel.half_freqs.astype(float)
    e = np.exp(2j * np.pi * (x @ xi.T))  # (..., N, M)
    S = e.sum(axis=-2, keepdims=True)
    # self term Im(e_j conj e_j) vanishes, so l = j may stay in S
    amp = np.imag(e * np.conj(S)) * (2.0 * kernel.half_coefficients)
    return (2.0 * np.pi / N) * (amp @ xi)


def verlet_step(state: ParticleState, kernel: FourierKernel, dt: float,
                method: str = "fourier") -> ParticleState:
    """One velocity-Verlet (kick-drift-kick) step; returns a new state."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    v_half = state.velocities + 0.5 * dt * forces(kernel, state.positions, method)
    x = np.mod(state.positions + dt * v_half, 1.0)
    v = v_half + 0.5 * dt * forces(kernel, x, method)
    return ParticleState(x, v, state.time + dt)


def _integrate(x: np.ndarray, v: np.ndarray, kernel: FourierKernel, dt: float,
               steps_at: list[int], method: str):
    """Advance one chunk, returning snapshots at the given step counts."""
    out_x, out_v = [], []
    a = forces(kernel, x, method)
    step = 0
    for target in steps_at:
        while step < target:
            v = v + 0.5 * dt * a
            x = np.mod(x + dt * v, 1.0)
            a = forces(kernel, x, method)
            v = v + 0.5 * dt * a
            step += 1
        out_x.append(x.copy())
        out_v.append(v.copy())
    return out_x, out_v


def _snapshot_steps(T: float, dt: float, snapshot_times) -> list[int]:
    steps = []
    for t in snapshot_times:
        if t < 0 or t > T + 1e-12:
            raise ValueError(f"snapshot time {t} outside [0, {T}]")
        n = round(t / dt)
        if abs(n * dt - t) > 1e-9 * max(1.0, t):
            raise ValueError(f"snapshot time {t} is not a multiple of dt={dt}")
        steps.append(n)
    if steps != sorted(steps):
        raise ValueError("snapshot times must be increasing")
    return steps


def simulate(ensemble: WeightedEnsemble | ParticleState, kernel: FourierKernel, T: float,
             dt: float, snapshot_times=None, method: str = "fourier",
             chunk: int | None = None) -> Trajectory:
    """Integrate every replica to ``T`` and record snapshots.

    Replicas are processed in chunks to bound memory; the result does not
    depend on the chunk size.
    """
    if isinstance(ensemble, WeightedEnsemble):
        state, weights, beta = ensemble.state, ensemble.weights, ensemble.beta
    else:
        state, beta = ensemble, float("nan")
        weights = np.ones(state.positions.shape[0] if state.positions.ndim > 2 else 1)
    if snapshot_times is None:
        snapshot_times = [T]
    steps = _snapshot_steps(T, dt, snapshot_times)
    x0 = state.positions if state.positions.ndim > 2 else state.positions[None]
    v0 = state.velocities if state.velocities.ndim > 2 else state.velocities[None]
    R, N = x0.shape[:2]
    if chunk is None:
        per_replica = 16 * N * max(1, kernel.half_freqs.shape[0]) * 4
        chunk = max(1, min(R, _CHUNK_BYTES // per_replica))
    xs, vs = [], []
    for lo in range(0, R, chunk):
        cx, cv = _integrate(x0[lo:lo + chunk], v0[lo:lo + chunk], kernel, dt, steps, method)
        xs.append(cx)
        vs.append(cv)
    pos = np.stack([np.concatenate([c[s] for c in xs]) for s in range(len(steps))])
    vel = np.stack([np.concatenate([c[s] for c in vs]) for s in range(len(steps))])
    times = state.time + np.asarray(steps, dtype=float) * dt
    return Trajectory(times, pos, vel, np.asarray(weights, dtype=float), beta)


def total_energy(state: ParticleState, kernel: FourierKernel) -> np.ndarray:
    """``sum_j |v_j|^2 / 2 + (1/2N) sum_{i != j} W(x_i - x_j)``."""
    kinetic = 0.5 * np.sum(state.velocities**2, axis=(-2, -1))
    if state.N < 2:
        return kinetic
    return kinetic + pair_energy(kernel, state.positions)


def block_seed(seed, block: int) -> np.random.SeedSequence:
    """Seed of replica block ``block``; independent of how blocks are scheduled."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + (block,))
    return np.random.SeedSequence(seed, spawn_key=(block,))


def _centering_error(f0: Observable, beta: float) -> float:
    return abs(f0.maxwellian_mean_quadrature(beta))


def make_fluctuation_ensemble(kernel: FourierKernel, N: int, beta: float, f0: Observable, R: int,
                              mcmc_params: MCMCParams = MCMCParams(), seed=0,
                              block_size: int = 1024, blocks=None) -> WeightedEnsemble:
    """Gibbs replicas with Maxwellian velocities and weights ``sum_j f0(z_j)``.

    Replicas are generated in blocks of ``block_size``, each from its own
    seed, so any subset of blocks can be produced independently.  ``blocks``
    restricts generation to the listed block indices.

    Raises
    ------
    ValueError
        If ``int f0 M_beta`` differs from zero by more than ``1e-8``.
    """
    if kernel.dimension != 1:
        raise ValueError("fluctuation ensembles use the d=1 observable set")
    if _centering_error(f0, beta) > 1e-8:
        raise ValueError(f"f0 is not centred: int f0 M_beta = {f0.maxwellian_mean_quadrature(beta):.3e}")
    n_blocks = math.ceil(R / block_size)
    blocks = range(n_blocks) if blocks is None else blocks
    xs, vs, ids = [], [], []
    for b in blocks:
        size = min(block_size, R - b * block_size)
        ss = block_seed(seed, b)
        s_pos, s_vel = ss.spawn(2)
        xs.append(sample_positions(kernel, N, beta, size, mcmc_params, s_pos))
        vs.append(np.random.default_rng(s_vel).standard_normal((size, N, 1)) / math.sqrt(beta))
        ids.append(np.full(size, b))
    x, v = np.concatenate(xs), np.concatenate(vs)
    w = f0(x[..., 0], v[..., 0], beta).sum(axis=-1)
    return WeightedEnsemble(ParticleState(x, v), w, float(beta), f0, np.concatenate(ids))


@dataclass(frozen=True)
class ObservableEstimate:
    value: np.ndarray
    stderr: np.ndarray


def _u_statistic(traj_x, traj_v, beta, obs, m: int):
    if m == 1:
        return obs(traj_x, traj_v, beta).mean(axis=-1)
    psi, chi = obs
    N = traj_x.shape[-1]
    a, b = psi(traj_x, traj_v, beta), chi(traj_x, traj_v, beta)
    return (a.sum(-1) * b.sum(-1) - (a * b).sum(-1)) / (N * (N - 1))


def replica_values(traj: Trajectory, obs, m: int = 1) -> np.ndarray:
    """Per-replica products ``w_r * U_m(phi)`` of shape ``(S, R)``.

    For ``m = 2`` pass ``obs = (psi, chi)``; the test function is ``psi x chi``.
    """
    if m not in (1, 2):
        raise ValueError("only m = 1 and m = 2 are supported")
    if m == 2 and traj.positions.shape[-2] < 2:
        raise ValueError("m = 2 needs N >= 2")
    x, v = traj.positions[..., 0], traj.velocities[..., 0]
    return traj.weights * _u_statistic(x, v, traj.beta, obs, m)


def weighted_observable(traj: Trajectory, obs, m: int = 1) -> ObservableEstimate:
    """Estimate ``<phi, F_{N,m}(t)>`` at every snapshot.

    Replicas are independent, so the standard error is the replica standard
    deviation over ``sqrt(R)``.
    """
    y = replica_values(traj, obs, m)
    R = y.shape[-1]
    err = y.std(axis=-1, ddof=1) / math.sqrt(R) if R > 1 else np.zeros(y.shape[0])
    return ObservableEstimate(y.mean(axis=-1), err)
