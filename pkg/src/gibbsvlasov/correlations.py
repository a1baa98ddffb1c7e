"""Hoeffding correlation functions on grids and their Monte Carlo pairings.

Grid densities live on ``(T x [-v_max, v_max])^m`` with a periodic
trapezoid rule in ``x`` and a trapezoid rule in ``v``.  The Maxwellian is
normalised to unit *discrete* mass, which makes the projection
``pi h = M * int h`` an exact orthogonal projection for the discrete inner
product ``<a, b> = int a b / M``.  Identities such as the orthogonal
decomposition then hold to rounding, not just to quadrature accuracy.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np

from .dynamics import Trajectory, forces, replica_values
from .kernels import FourierKernel
from .observables import Observable

__all__ = [
    "GridSpec",
    "GridDensity",
    "PairPairing",
    "RemainderEstimate",
    "make_grid",
    "maxwellian_density",
    "gibbs_fluctuation_density",
    "project_centered",
    "marginal",
    "hoeffding_exact",
    "hoeffding_projected",
    "orthogonality_check",
    "pair_on_grid",
    "pair_pairing_estimate",
    "pairing_from_replicas",
    "vlasov_remainder_estimate",
    "remainder_replicas",
    "observable_kernel_convolution",
]


@dataclass(frozen=True)
class GridSpec:
    """One-particle grid: ``nx`` periodic points and ``nv`` velocity nodes."""

    beta: float
    nx: int
    nv: int
    v_max: float

    def __post_init__(self):
        if self.v_max < 6.0 / math.sqrt(self.beta) - 1e-12:
            raise ValueError("v_max must be at least 6/sqrt(beta)")

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.nx) / self.nx

    @property
    def v(self) -> np.ndarray:
        return np.linspace(-self.v_max, self.v_max, self.nv)

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weights on the ``(nx, nv)`` one-particle grid."""
        wv = np.full(self.nv, 2 * self.v_max / (self.nv - 1))
        wv[[0, -1]] *= 0.5
        return np.outer(np.full(self.nx, 1.0 / self.nx), wv)

    @property
    def maxwellian(self) -> np.ndarray:
        """``M_beta`` on the grid, scaled to unit discrete mass."""
        m = np.broadcast_to(np.exp(-0.5 * self.beta * self.v**2), (self.nx, self.nv))
        return m / np.sum(m * self.weights)


def make_grid(beta: float, nx: int = 16, nv: int = 24, v_max: float | None = None) -> GridSpec:
    return GridSpec(float(beta), nx, nv, v_max if v_max is not None else 6.0 / math.sqrt(beta))


@dataclass(frozen=True)
class GridDensity:
    """An ``m``-particle function on the tensor grid; ``values`` has shape
    ``(nx, nv) * m`` with axes ordered ``x1, v1, x2, v2, ...``."""

    m: int
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        shape = (self.grid.nx, self.grid.nv) * self.m
        if self.values.shape != shape:
            raise ValueError(f"values must have shape {shape}, got {self.values.shape}")

    @property
    def reference(self) -> np.ndarray:
        return self.grid.maxwellian

    def with_values(self, values: np.ndarray) -> "GridDensity":
        return replace(self, values=values)


def _tensor(parts: list[np.ndarray]) -> np.ndarray:
    out = np.ones(())
    for p in parts:
        out = np.multiply.outer(out, p)
    return out


def _integrate_particle(values: np.ndarray, i: int, w: np.ndarray) -> np.ndarray:
    """Integrate out the particle occupying axes ``2i, 2i+1``."""
    return np.tensordot(values, w, axes=([2 * i, 2 * i + 1], [0, 1]))


def integrate(density: GridDensity) -> float:
    v = density.values
    for _ in range(density.m):
        v = _integrate_particle(v, 0, density.grid.weights)
    return float(v)


def maxwellian_density(grid: GridSpec, m: int) -> GridDensity:
    return GridDensity(m, grid, _tensor([grid.maxwellian] * m))


def marginal(density: GridDensity, keep) -> GridDensity:
    """Marginal onto the particles listed in ``keep`` (in that order)."""
    keep = list(keep)
    values = density.values
    drop = [i for i in range(density.m) if i not in keep]
    for i in sorted(drop, reverse=True):
        values = _integrate_particle(values, i, density.grid.weights)
    remaining = [i for i in range(density.m) if i not in drop]
    order = [remaining.index(i) for i in keep]
    axes = [a for j in order for a in (2 * j, 2 * j + 1)]
    return GridDensity(len(keep), density.grid, np.transpose(values, axes) if axes else values)


def project_centered(density: GridDensity) -> GridDensity:
    """``(Id - pi_beta) h = h - M_beta * int h`` for a one-particle density."""
    if density.m != 1:
        raise ValueError("project_centered acts on one-particle densities")
    mass = np.sum(density.values * density.grid.weights)
    return density.with_values(density.values - mass * density.reference)


def _project_axis(values: np.ndarray, i: int, grid: GridSpec) -> np.ndarray:
    mass = _integrate_particle(values, i, grid.weights)
    M = grid.maxwellian
    # reinsert the particle axes at position 2i
    full = np.multiply.outer(mass, M)
    src = [full.ndim - 2, full.ndim - 1]
    return values - np.moveaxis(full, src, [2 * i, 2 * i + 1])


def hoeffding_projected(FN: GridDensity, m: int) -> GridDensity:
    """``(Id - pi_beta)^{x m} F_{N,m}`` by projecting each particle in turn."""
    Fm = marginal(FN, range(m))
    values = Fm.values
    for i in range(m):
        values = _project_axis(values, i, FN.grid)
    return Fm.with_values(values)


def hoeffding_exact(FN: GridDensity, N: int, m: int, beta: float | None = None) -> GridDensity:
    """Inclusion-exclusion form
    ``H_{N,m} = sum_j (-1)^{m-j} sum_{|s|=j} F_{N,s}(z_s) M^{x(m-j)}``.

    Marginals onto each subset ``s`` are taken from the density itself, so
    non-symmetric test data is handled consistently.
    """
    if N != FN.m:
        raise ValueError("N must match the density's particle count")
    if N > 3:
        raise ValueError("exact Hoeffding decomposition is limited to N <= 3")
    if not 0 <= m <= N:
        raise ValueError("need 0 <= m <= N")
    if beta is not None and not math.isclose(beta, FN.grid.beta):
        raise ValueError("beta does not match the density grid")
    grid = FN.grid
    M = grid.maxwellian
    total = np.zeros((grid.nx, grid.nv) * m) if m else np.zeros(())
    for j in range(m + 1):
        for sigma in itertools.combinations(range(m), j):
            Fs = marginal(FN, sigma).values
            rest = [i for i in range(m) if i not in sigma]
            term = np.multiply.outer(Fs, _tensor([M] * len(rest))) if rest else Fs
            # axes are (sigma..., rest...); reorder to particle order 0..m-1
            order = list(sigma) + rest
            perm = [a for p in range(m) for a in (2 * order.index(p), 2 * order.index(p) + 1)]
            total = total + (-1) ** (m - j) * (np.transpose(term, perm) if perm else term)
    return GridDensity(m, grid, total)


def _weighted_square(values: np.ndarray, grid: GridSpec, m: int) -> float:
    q = values**2
    for _ in range(m):
        q = _integrate_particle(q, 0, grid.weights / grid.maxwellian)
    return float(q)


def orthogonality_check(FN: GridDensity, N: int, beta: float | None = None) -> dict:
    """Both sides of the orthogonal decomposition.

    ``lhs = sum_s int |H_s|^2 / M^{x|s|}`` over all subsets ``s`` of the
    particles (for symmetric data this is ``sum_m binom(N,m) int |H_{N,m}|^2 / M``),
    including the mass term ``(int F_N)^2``; ``rhs = int |F_N|^2 / M^{x N}``.
    """
    if N != FN.m or N > 3:
        raise ValueError("orthogonality_check needs N = FN.m <= 3")
    grid = FN.grid
    lhs = 0.0
    for j in range(N + 1):
        for sigma in itertools.combinations(range(N), j):
            H = hoeffding_projected(marginal(FN, sigma), j) if j else marginal(FN, ())
            lhs += _weighted_square(H.values, grid, j)
    rhs = _weighted_square(FN.values, grid, N)
    return {"lhs": lhs, "rhs": rhs}


def gibbs_fluctuation_density(kernel: FourierKernel, N: int, grid: GridSpec,
                              f0: Observable | None, interacting: bool = True) -> GridDensity:
    """``M_{N,beta} * sum_j f0(z_j)`` tabulated on the grid (d=1, N <= 3).

    With ``interacting=False`` the spatial Gibbs factor is dropped, giving
    product-form data.  ``f0=None`` returns the Gibbs density itself.
    """
    if kernel.dimension != 1 or N > 3:
        raise ValueError("grid Gibbs densities need d = 1 and N <= 3")
    beta, x, v = grid.beta, grid.x, grid.v
    M1 = grid.maxwellian
    base = _tensor([M1] * N)
    if interacting and N > 1:
        log_g = np.zeros((grid.nx,) * N)
        for i, j in itertools.combinations(range(N), 2):
            shape_i = [1] * N
            shape_j = [1] * N
            shape_i[i] = shape_j[j] = grid.nx
            diff = x.reshape(shape_i) - x.reshape(shape_j)
            log_g = log_g - (beta / N) * kernel.potential(diff)
        g = np.exp(log_g - log_g.max())
        g = g / g.mean()
        # spread the spatial factor onto the interleaved (x, v) axes
        g = g.reshape(sum(([grid.nx, 1] for _ in range(N)), []))
        base = base * g
    if f0 is None:
        return GridDensity(N, grid, base)
    f = f0(x[:, None], v[None, :], beta)
    total = np.zeros_like(base)
    for j in range(N):
        shape = [1] * (2 * N)
        shape[2 * j], shape[2 * j + 1] = grid.nx, grid.nv
        total = total + f.reshape(shape)
    return GridDensity(N, grid, base * total)


def pair_on_grid(density: GridDensity, observables) -> float:
    """``int (phi_1 x ... x phi_m) density`` by quadrature."""
    grid = density.grid
    X, V = np.meshgrid(grid.x, grid.v, indexing="ij")
    values = density.values
    for obs in observables:
        values = _integrate_particle(values, 0, grid.weights * obs(X, V, grid.beta))
    return float(values)


@dataclass(frozen=True)
class PairPairing:
    """``<psi x chi, H_{N,2}>`` per snapshot with bootstrap errors."""

    psi: Observable
    chi: Observable
    times: np.ndarray
    value: np.ndarray
    stderr: np.ndarray


def _pairing_from_means(y2, y_psi, y_chi, psi_M, chi_M):
    return y2 - y_psi * chi_M - psi_M * y_chi


def pair_pairing_estimate(traj: Trajectory, psi: Observable, chi: Observable, beta: float | None = None,
                          n_boot: int = 200, seed=0) -> PairPairing:
    """Monte Carlo ``<psi x chi, F_{N,2}> - <psi, F_{N,1}><chi, M> - <psi, M><chi, F_{N,1}>``.

    The mass term is dropped because the total mass of the data vanishes.
    Errors come from a replica bootstrap.
    """
    y2 = replica_values(traj, (psi, chi), 2)
    y_psi = replica_values(traj, psi, 1)
    y_chi = replica_values(traj, chi, 1)
    value, err = pairing_from_replicas(y2, y_psi, y_chi, psi.maxwellian_mean(), chi.maxwellian_mean(),
                                       n_boot, seed)
    return PairPairing(psi, chi, traj.times.copy(), value, err)


def pairing_from_replicas(y2, y_psi, y_chi, psi_M: float, chi_M: float, n_boot: int = 200, seed=0):
    """Pairing and bootstrap stderr from per-replica arrays of shape ``(S, R)``.

    ``y2`` holds ``w * U_2(psi, chi)`` and ``y_psi``, ``y_chi`` hold
    ``w * U_1``.  Each bootstrap draw resamples replicas jointly.
    """
    y2, y_psi, y_chi = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (y2, y_psi, y_chi))
    value = _pairing_from_means(y2.mean(-1), y_psi.mean(-1), y_chi.mean(-1), psi_M, chi_M)
    R = y2.shape[-1]
    rng = np.random.default_rng(seed)
    boots = np.empty((n_boot, y2.shape[0]))
    for b in range(n_boot):
        idx = rng.integers(0, R, R)
        boots[b] = _pairing_from_means(y2[:, idx].mean(-1), y_psi[:, idx].mean(-1),
                                       y_chi[:, idx].mean(-1), psi_M, chi_M)
    return value, boots.std(axis=0, ddof=1)


def observable_kernel_convolution(obs: Observable, kernel: FourierKernel, beta: float, x) -> np.ndarray:
    """``g(y) = int dx int dv d_v obs(x, v) M_beta(v) K(x - y)``.

    Only ``He_1`` terms survive the velocity integral, and
    ``int cos(2 pi k x) K(x - y) dx = -2 pi k W_hat(k) sin(2 pi k y)``,
    ``int sin(2 pi k x) K(x - y) dx = 2 pi k W_hat(k) cos(2 pi k y)``.
    """
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    sb = math.sqrt(beta)
    for t in obs.terms:
        if t.n != 1 or t.kind == "one":
            continue
        w = kernel.coefficient(t.k)
        if t.kind == "cos":
            out = out - t.coef * sb * 2 * np.pi * t.k * w * np.sin(2 * np.pi * t.k * x)
        else:
            out = out + t.coef * sb * 2 * np.pi * t.k * w * np.cos(2 * np.pi * t.k * x)
    return out


@dataclass(frozen=True)
class RemainderEstimate:
    times: np.ndarray
    value: np.ndarray
    stderr: np.ndarray


def vlasov_remainder_estimate(traj: Trajectory, test: Observable, kernel: FourierKernel,
                              beta: float | None = None) -> RemainderEstimate:
    """Weak remainder ``<d_v test, int K(x - x*) H_{N,2}(z, z*) dz*>``.

    Expanding ``H_{N,2}`` leaves two non-vanishing pieces (``int K = 0``
    kills the others):

    * ``E[w (1/(N-1)) sum_i d_v test(z_i) a_i]`` with ``a_i`` the mean-field
      force on particle ``i``;
    * ``- E[w (1/N) sum_i g(x_i)]`` with ``g`` from
      :func:`observable_kernel_convolution`.
    """
    y = remainder_replicas(traj, test, kernel, beta)
    R = y.shape[-1]
    err = y.std(-1, ddof=1) / math.sqrt(R) if R > 1 else np.zeros(y.shape[0])
    return RemainderEstimate(traj.times.copy(), y.mean(-1), err)


def remainder_replicas(traj: Trajectory, test: Observable, kernel: FourierKernel,
                       beta: float | None = None) -> np.ndarray:
    """Per-replica terms of the remainder estimator, shape ``(S, R)``."""
    beta = traj.beta if beta is None else beta
    N = traj.positions.shape[-2]
    if N < 2 or kernel.is_zero:
        return np.zeros(traj.positions.shape[:2])
    x, v = traj.positions, traj.velocities
    a = forces(kernel, x)[..., 0]
    x1, v1 = x[..., 0], v[..., 0]
    first = (test.dv(x1, v1, beta) * a).sum(-1) / (N - 1)
    second = observable_kernel_convolution(test, kernel, beta, x1).mean(-1)
    return traj.weights * (first - second)
