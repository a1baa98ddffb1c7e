"""Confined mean-field equilibrium on a truncated line.

The spatial equilibrium solves ``rho = S_beta(rho)`` with

    S_beta(rho) = exp(-beta V - beta W * rho) / int exp(-beta V - beta W * rho).

Everything is discretised on a uniform grid of ``[-L, L]`` with the
trapezoid rule; convolutions are dense quadrature sums, so the grid sizes
used here (a few thousand points) stay cheap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import logsumexp

__all__ = [
    "ConfinedProblem",
    "FixedPointResult",
    "NonContractionError",
    "confining_potential",
    "pair_potential",
    "reference_density",
    "apply_S",
    "solve_fixed_point",
    "geometric_fit",
    "EtaNorms",
    "eta_norm_monotonicity",
    "CenteredKernel",
    "centered_kernel",
    "maxwellian_equilibrium",
    "self_consistency_residual",
    "modified_partition_N2",
]


class NonContractionError(RuntimeError):
    """Picard ratios stayed above one for five consecutive iterations."""


def confining_potential(name: str, scale: float = 1.0) -> Callable:
    """``quadratic`` (``x^2``), ``quartic`` (``x^4``), ``double_well``
    (``(x^2 - 1)^2``) or ``constant`` (0), multiplied by ``scale``."""
    table = {
        "quadratic": lambda x: scale * x**2,
        "quartic": lambda x: scale * x**4,
        "double_well": lambda x: scale * (x**2 - 1.0) ** 2,
        "constant": lambda x: np.zeros_like(np.asarray(x, dtype=float)),
    }
    if name not in table:
        raise ValueError(f"unknown confining potential {name!r}")
    return table[name]


def pair_potential(name: str, amplitude: float = 0.1, width: float = 1.0, frequency: float = 1.0) -> Callable:
    """``gaussian``: ``a exp(-x^2 / width^2)``; ``cosine_localized``:
    ``a cos(frequency x) exp(-x^2 / width^2)``; ``zero``."""
    if name == "gaussian":
        return lambda x: amplitude * np.exp(-(np.asarray(x) / width) ** 2)
    if name == "cosine_localized":
        return lambda x: amplitude * np.cos(frequency * np.asarray(x)) * np.exp(-(np.asarray(x) / width) ** 2)
    if name == "zero":
        return lambda x: np.zeros_like(np.asarray(x, dtype=float))
    raise ValueError(f"unknown pair potential {name!r}")


@dataclass
class ConfinedProblem:
    """Grid, potentials and temperature for the fixed-point problem."""

    V: Callable
    W: Callable
    beta: float
    L: float = 8.0
    n: int = 2001
    x: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)
    V_grid: np.ndarray = field(init=False, repr=False)
    W_matrix: np.ndarray = field(init=False, repr=False)
    tail_mass: float = field(init=False)

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.n < 3:
            raise ValueError("grid needs at least three points")
        self.x = np.linspace(-self.L, self.L, self.n)
        h = self.x[1] - self.x[0]
        self.weights = np.full(self.n, h)
        self.weights[[0, -1]] *= 0.5
        self.V_grid = np.asarray(self.V(self.x), dtype=float) * np.ones(self.n)
        if not np.all(np.isfinite(self.V_grid)):
            raise ValueError("V must be finite on the grid")
        self.W_matrix = np.asarray(self.W(self.x[:, None] - self.x[None, :]), dtype=float) * np.ones((self.n, self.n))
        self.tail_mass = self._tail_mass()

    @property
    def h(self) -> float:
        return float(self.x[1] - self.x[0])

    def _tail_mass(self) -> float:
        """Mass of ``e^{-beta V}`` outside ``[-L, L]`` relative to the total,
        estimated on a grid three times wider."""
        if self.beta == 0:
            return 0.0
        xs = np.linspace(-3 * self.L, 3 * self.L, 6 * self.n)
        with np.errstate(over="ignore"):
            logs = -self.beta * np.asarray(self.V(xs), dtype=float) * np.ones_like(xs)
        inside = np.abs(xs) <= self.L
        total = logsumexp(logs)
        return float(np.exp(logsumexp(logs[~inside]) - total)) if np.any(~inside) else 0.0

    def integrate(self, f: np.ndarray) -> float:
        return float(np.dot(self.weights, f))

    def convolve(self, rho: np.ndarray) -> np.ndarray:
        """``(W * rho)(x_i)`` by quadrature."""
        return self.W_matrix @ (self.weights * rho)

    def l1(self, f: np.ndarray) -> float:
        return self.integrate(np.abs(f))


def _normalised_exp(problem: ConfinedProblem, exponent: np.ndarray) -> np.ndarray:
    # log-sum-exp normalisation guards against overflow
    shifted = np.exp(exponent - exponent.max())
    return shifted / problem.integrate(shifted)


def reference_density(problem: ConfinedProblem) -> np.ndarray:
    """``eta_beta = e^{-beta V} / int e^{-beta V}`` on the grid."""
    return _normalised_exp(problem, -problem.beta * problem.V_grid)


def apply_S(problem: ConfinedProblem, rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("rho must be nonnegative")
    return _normalised_exp(problem, -problem.beta * (problem.V_grid + problem.convolve(rho)))


@dataclass
class FixedPointResult:
    rho: np.ndarray
    iterates: np.ndarray  # L1 distances between successive iterates
    contraction_ratios: np.ndarray
    residual: float
    converged: bool
    n_iter: int


def solve_fixed_point(problem: ConfinedProblem, tol: float = 1e-12, max_iter: int = 500) -> FixedPointResult:
    """Picard iteration from ``eta_beta``.

    Stops once ``||rho_{n+1} - rho_n||_1 < tol``.

    Raises
    ------
    NonContractionError
        When five consecutive ratios of successive distances exceed one.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    rho = reference_density(problem)
    dists, ratios = [], []
    above = 0
    converged = False
    for it in range(1, max_iter + 1):
        new = apply_S(problem, rho)
        d = problem.l1(new - rho)
        dists.append(d)
        rho = new
        if len(dists) > 1 and dists[-2] > 0:
            r = d / dists[-2]
            ratios.append(r)
            above = above + 1 if r > 1 else 0
            if above >= 5:
                raise NonContractionError(f"ratios above 1 for 5 iterations at beta={problem.beta}")
        if d < tol:
            converged = True
            break
    residual = problem.l1(rho - apply_S(problem, rho))
    return FixedPointResult(rho, np.array(dists), np.array(ratios), residual, converged, it)


def geometric_fit(distances: np.ndarray, floor: float = 1e-13) -> dict:
    """Least-squares fit of ``log d_n = a + n log r``; returns ``rate`` and ``r2``.

    Distances at or below ``floor`` (rounding level) are excluded.
    """
    d = np.asarray(distances, dtype=float)
    n = np.arange(d.size)
    keep = d > floor
    if keep.sum() < 3:
        return {"rate": float("nan"), "r2": float("nan"), "points": int(keep.sum())}
    y = np.log(d[keep])
    slope, intercept = np.polyfit(n[keep], y, 1)
    pred = intercept + slope * n[keep]
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return {"rate": float(np.exp(slope)), "r2": r2, "points": int(keep.sum())}


@dataclass
class EtaNorms:
    betas: np.ndarray
    norms: np.ndarray
    q: float

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.norms) >= -1e-12 * np.abs(self.norms[1:])))


def eta_norm_monotonicity(V: Callable, q: float, beta_grid, L: float = 8.0, n: int = 4001) -> EtaNorms:
    """``||eta_beta||_{L^q}`` along an increasing grid of ``beta`` in ``(0, 1]``."""
    betas = np.asarray(beta_grid, dtype=float)
    if q < 1:
        raise ValueError("q must be >= 1")
    if np.any(np.diff(betas) <= 0) or betas[0] <= 0 or betas[-1] > 1:
        raise ValueError("beta_grid must increase within (0, 1]")
    x = np.linspace(-L, L, n)
    w = np.full(n, x[1] - x[0])
    w[[0, -1]] *= 0.5
    Vx = np.asarray(V(x), dtype=float) * np.ones(n)
    norms = []
    for b in betas:
        # log of int eta^q computed with log-sum-exp for large q
        log_mass = logsumexp(-b * Vx, b=w)
        log_q = logsumexp(-q * b * Vx, b=w)
        norms.append(math.exp((log_q - q * log_mass) / q))
    return EtaNorms(betas, np.array(norms), q)


@dataclass
class CenteredKernel:
    """``W_beta`` tabulated on the grid together with its pieces."""

    matrix: np.ndarray
    mean_field: np.ndarray  # (W * rho)(x_i)
    constant: float  # double integral of W against rho x rho

    def __call__(self, i, j):
        return self.matrix[i, j]


def centered_kernel(problem: ConfinedProblem, rho_star: np.ndarray) -> CenteredKernel:
    """``W(x-y) - W*rho(x) - W*rho(y) + iint W rho rho`` on the grid."""
    wr = problem.convolve(rho_star)
    c = problem.integrate(wr * rho_star)
    mat = problem.W_matrix - wr[:, None] - wr[None, :] + c
    mat = 0.5 * (mat + mat.T)
    return CenteredKernel(mat, wr, c)


def _gamma(beta: float, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return math.sqrt(beta / (2 * math.pi)) * np.exp(-0.5 * beta * v**2)


def maxwellian_equilibrium(problem: ConfinedProblem, rho_star: np.ndarray, x, v) -> np.ndarray:
    """``gamma_beta(v) rho*(x)`` with ``rho*`` interpolated by a cubic spline."""
    spline = CubicSpline(problem.x, rho_star)
    return _gamma(problem.beta, v) * spline(np.asarray(x, dtype=float))


def self_consistency_residual(problem: ConfinedProblem, rho_star: np.ndarray, x, v) -> float:
    """``sup |M(x,v) - Z^{-1} exp(-beta v^2/2 - beta V(x) - beta W*rho*(x))|``
    at arbitrary points, with ``W * rho*`` evaluated off-grid by quadrature."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    lhs = maxwellian_equilibrium(problem, rho_star, x, v)
    expo_grid = -problem.beta * (problem.V_grid + problem.convolve(rho_star))
    log_Z = logsumexp(expo_grid, b=problem.weights)
    wr = np.asarray(problem.W(x[:, None] - problem.x[None, :]), dtype=float) @ (problem.weights * rho_star)
    rhs = _gamma(problem.beta, v) * np.exp(-problem.beta * (np.asarray(problem.V(x)) + wr) - log_Z)
    return float(np.max(np.abs(lhs - rhs)))


def modified_partition_N2(problem: ConfinedProblem, rho_star: np.ndarray, beta: float | None = None) -> float:
    """``iint exp(-(beta/2) W_beta(x, y)) rho*(x) rho*(y) dx dy`` (two particles)."""
    beta = problem.beta if beta is None else beta
    ck = centered_kernel(problem, rho_star)
    wr = problem.weights * rho_star
    return float(wr @ np.exp(-0.5 * beta * ck.matrix) @ wr)
