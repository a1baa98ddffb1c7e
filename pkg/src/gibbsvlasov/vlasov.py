"""Linearised Vlasov equation around the Maxwellian, in one space dimension.

The perturbation density is expanded as

    f(t, x, v) = M_beta(v) sum_{k, n} c_{k,n}(t) e^{2 pi i k x} psi_n(sqrt(beta) v),

with ``psi_n = He_n / sqrt(n!)``.  Substituting into
``d_t f + v d_x f + (K * f) d_v M_beta = 0`` gives the ladder system

    dc_{k,n}/dt = -(2 pi i k / sqrt(beta)) (sqrt(n) c_{k,n-1} + sqrt(n+1) c_{k,n+1})
                  - delta_{n,1} 2 pi i k sqrt(beta) W_hat(k) c_{k,0}.

Duhamel's formula along free characteristics closes the density modes
``rho_k = c_{k,0}`` into a Volterra equation of the second kind,

    rho_k(t) = S_k(t) + int_0^t G_k(t - s) rho_k(s) ds,
    G_k(tau) = -(2 pi k)^2 W_hat(k) tau exp(-(2 pi k tau)^2 / (2 beta)),
    S_k(t)   = sum_n c_{k,n}(0) (-i a)^n e^{-a^2/2} / sqrt(n!),  a = 2 pi k t / sqrt(beta).

The two routes are discretised independently and serve as each other's check.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .kernels import FourierKernel
from .observables import Observable

log = logging.getLogger(__name__)

__all__ = [
    "HermiteField",
    "VolterraSolution",
    "SolverInstabilityError",
    "initial_coefficients",
    "screened_coefficients",
    "solve_hermite",
    "solve_volterra",
    "volterra_source",
    "memory_kernel",
    "free_transport_exact",
    "density_and_force",
]

BLOWUP = 1e6


class SolverInstabilityError(RuntimeError):
    """Raised when a Hermite coefficient exceeds the blow-up threshold."""


def _kernel_modes(kernel: FourierKernel, K_modes: int) -> np.ndarray:
    if kernel.dimension != 1:
        raise ValueError("the Vlasov solvers are one-dimensional")
    return np.array([kernel.coefficient(k) for k in range(-K_modes, K_modes + 1)])


def initial_coefficients(f0, K_modes: int, N_hermite: int) -> np.ndarray:
    """Coefficient array ``(2K+1, N_hermite)`` for an observable or array."""
    if isinstance(f0, Observable):
        return f0.hermite_coefficients(K_modes, N_hermite)
    c = np.asarray(f0, dtype=complex)
    if c.ndim != 2 or c.shape[0] != 2 * K_modes + 1:
        raise ValueError("coefficient array must have shape (2K+1, N_hermite)")
    out = np.zeros((2 * K_modes + 1, N_hermite), dtype=complex)
    n = min(N_hermite, c.shape[1])
    out[:, :n] = c[:, :n]
    return out


def screened_coefficients(coeffs: np.ndarray, kernel: FourierKernel, beta: float) -> np.ndarray:
    """Large-N limit of the first marginal of ``M_N sum_j f0(z_j)``.

    Gibbs correlations screen the density part of ``f0``: the ``n = 0``
    coefficient of mode ``k`` is divided by ``1 + beta W_hat(k)``.
    """
    K = (coeffs.shape[0] - 1) // 2
    w = _kernel_modes(kernel, K)
    if np.any(1.0 + beta * w <= 0):
        raise ValueError("screening needs 1 + beta W_hat(k) > 0")
    out = np.array(coeffs, dtype=complex)
    out[:, 0] /= 1.0 + beta * w
    return out


@dataclass(frozen=True)
class HermiteField:
    """Fourier-Hermite trajectory; ``coeffs[s, k + K_modes, n]`` at ``times[s]``."""

    beta: float
    K_modes: int
    N_hermite: int
    times: np.ndarray
    coeffs: np.ndarray

    def mode(self, k: int) -> np.ndarray:
        return self.coeffs[:, k + self.K_modes]

    def density_mode(self, k: int) -> np.ndarray:
        return self.coeffs[:, k + self.K_modes, 0]

    def pair(self, obs: Observable) -> np.ndarray:
        """``int obs f(t)`` at every stored time."""
        return obs.pair_with_hermite(self.coeffs)

    def evaluate(self, s: int, x, v) -> np.ndarray:
        """Density ``f(t_s, x, v)`` on the outer grid ``x`` by ``v``."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        u = math.sqrt(self.beta) * v
        # psi_n(u) * M_beta(v) by the three-term recurrence
        g_prev = np.zeros_like(u)
        g = math.sqrt(self.beta / (2 * math.pi)) * np.exp(-0.5 * u**2)
        ks = np.arange(-self.K_modes, self.K_modes + 1)
        phase = np.exp(2j * np.pi * np.outer(x, ks))  # (nx, 2K+1)
        out = np.zeros((x.size, v.size), dtype=complex)
        c = self.coeffs[s]
        for n in range(self.N_hermite):
            out += np.outer(phase @ c[:, n], g)
            g_prev, g = g, (u * g - math.sqrt(n) * g_prev) / math.sqrt(n + 1)
        return out.real


def _ladder_rhs(c: np.ndarray, ik: np.ndarray, sq: np.ndarray, beta: float,
                force: np.ndarray) -> np.ndarray:
    # sq[n] = sqrt(n); ik[k] = 2 pi i k
    up = np.zeros_like(c)
    up[:, 1:] = sq[1:] * c[:, :-1]  # sqrt(n) c_{n-1}
    down = np.zeros_like(c)
    down[:, :-1] = sq[1:] * c[:, 1:]  # sqrt(n+1) c_{n+1}
    out = -(ik[:, None] / math.sqrt(beta)) * (up + down)
    out[:, 1] -= force * c[:, 0]
    return out


def solve_hermite(kernel: FourierKernel, beta: float, f0, T: float, dt: float, K_modes: int,
                  N_hermite: int, save_every: int = 1, filter_strength: float = 0.0,
                  filter_order: int = 36) -> HermiteField:
    """Integrate the ladder system with classical RK4.

    ``filter_strength > 0`` applies the exponential filter
    ``exp(-filter_strength (n / N_hermite)^filter_order)`` after each step.

    Raises
    ------
    SolverInstabilityError
        If any ``|c|`` exceeds ``1e6``.
    """
    if T < 0 or dt <= 0:
        raise ValueError("need T >= 0 and dt > 0")
    if N_hermite < 2:
        raise ValueError("N_hermite must be at least 2")
    c = initial_coefficients(f0, K_modes, N_hermite)
    ks = np.arange(-K_modes, K_modes + 1)
    ik = 2j * np.pi * ks
    sq = np.sqrt(np.arange(N_hermite))
    force = ik * math.sqrt(beta) * _kernel_modes(kernel, K_modes)
    filt = None
    if filter_strength > 0:
        filt = np.exp(-filter_strength * (np.arange(N_hermite) / N_hermite) ** filter_order)
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError("T must be a multiple of dt")
    times, saved = [0.0], [c.copy()]

    def rhs(y):
        return _ladder_rhs(y, ik, sq, beta, force)

    for step in range(1, n_steps + 1):
        k1 = rhs(c)
        k2 = rhs(c + 0.5 * dt * k1)
        k3 = rhs(c + 0.5 * dt * k2)
        k4 = rhs(c + dt * k3)
        c = c + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if filt is not None:
            c = c * filt
        if step % save_every == 0 or step == n_steps:
            if not np.all(np.isfinite(c)) or np.abs(c).max() > BLOWUP:
                raise SolverInstabilityError(f"Hermite coefficients blew up at t={step * dt:.4g}")
            times.append(step * dt)
            saved.append(c.copy())
    return HermiteField(float(beta), K_modes, N_hermite, np.array(times), np.array(saved))


@dataclass(frozen=True)
class VolterraSolution:
    """Density modes ``rho[s, k + K_modes]`` on the uniform time grid."""

    beta: float
    K_modes: int
    kernel_coefficients: np.ndarray
    times: np.ndarray
    rho: np.ndarray
    source: np.ndarray

    def density_mode(self, k: int) -> np.ndarray:
        return self.rho[:, k + self.K_modes]

    def pair(self, obs: Observable) -> np.ndarray:
        """Pairing with the density-only part (``He_0`` terms) of ``obs``."""
        c = np.zeros((len(self.times), 2 * self.K_modes + 1, 1), dtype=complex)
        c[..., 0] = self.rho
        return obs.pair_with_hermite(c)


def memory_kernel(k: int, w_hat: float, beta: float, tau) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    a = 2 * np.pi * k
    return -(a**2) * w_hat * tau * np.exp(-((a * tau) ** 2) / (2 * beta))


def volterra_source(coeffs_k: np.ndarray, k: int, beta: float, t) -> np.ndarray:
    """Free-streaming density ``S_k(t)`` from the Hermite row ``c_{k,n}(0)``."""
    t = np.asarray(t, dtype=float)
    a = 2 * np.pi * k * t / math.sqrt(beta)
    out = np.zeros(t.shape, dtype=complex)
    nz = np.nonzero(coeffs_k)[0]
    abs_a = np.abs(a)
    sign = np.sign(a)
    with np.errstate(divide="ignore"):
        log_a = np.log(abs_a)
    for n in nz:
        if n == 0:
            mag = np.exp(-0.5 * a**2)
        else:
            # a^n e^{-a^2/2} / sqrt(n!) in log form to avoid overflow
            mag = np.exp(n * log_a - 0.5 * a**2 - 0.5 * special.gammaln(n + 1)) * sign**n
        out += coeffs_k[n] * (-1j) ** n * mag
    return out


def solve_volterra(kernel: FourierKernel, beta: float, f0, T: float, dt: float,
                   K_modes: int | None = None) -> VolterraSolution:
    """Trapezoid discretisation of the density Volterra equation, mode by mode.

    Because ``G_k(0) = 0`` the scheme is explicit and second order in ``dt``.
    """
    if isinstance(f0, Observable):
        K_modes = max(f0.max_k, 1) if K_modes is None else K_modes
        c0 = f0.hermite_coefficients(K_modes, f0.max_n + 1)
    else:
        c0 = np.asarray(f0, dtype=complex)
        K_modes = (c0.shape[0] - 1) // 2 if K_modes is None else K_modes
        if c0.shape[0] != 2 * K_modes + 1:
            raise ValueError("coefficient array does not match K_modes")
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError("T must be a multiple of dt")
    t = np.arange(n_steps + 1) * dt
    w = _kernel_modes(kernel, K_modes)
    rho = np.zeros((n_steps + 1, 2 * K_modes + 1), dtype=complex)
    src = np.zeros_like(rho)
    for idx, k in enumerate(range(-K_modes, K_modes + 1)):
        if k == 0:
            src[:, idx] = c0[idx, 0]
            rho[:, idx] = c0[idx, 0]
            continue
        S = volterra_source(c0[idx], k, beta, t)
        src[:, idx] = S
        if w[idx] == 0.0:
            rho[:, idx] = S
            continue
        G = memory_kernel(k, w[idx], beta, t)
        r = np.zeros(n_steps + 1, dtype=complex)
        r[0] = S[0]
        for n in range(1, n_steps + 1):
            # trapezoid: half weight at s = 0, G(0) = 0 at s = t_n
            acc = 0.5 * G[n] * r[0] + np.dot(G[n - 1:0:-1], r[1:n])
            r[n] = S[n] + dt * acc
        rho[:, idx] = r
    return VolterraSolution(float(beta), K_modes, w, t, rho, src)


def free_transport_exact(f0: Observable, beta: float, t: float, x, v) -> np.ndarray:
    """``f(t, x, v) = M_beta(v) f0(x - v t, v)`` on the outer grid ``x`` by ``v``."""
    x = np.asarray(x, dtype=float)[:, None]
    v = np.asarray(v, dtype=float)[None, :]
    M = math.sqrt(beta / (2 * math.pi)) * np.exp(-0.5 * beta * v**2)
    return M * f0(np.mod(x - v * t, 1.0), v, beta)


def density_and_force(field: HermiteField, s: int, kernel: FourierKernel, nx: int = 64) -> dict:
    """Real-space density and force ``K * rho`` at stored time index ``s``.

    Force modes are ``-2 pi i k W_hat(k) rho_k``.
    """
    K = field.K_modes
    x = np.arange(nx) / nx
    ks = np.arange(-K, K + 1)
    rho_k = field.coeffs[s, :, 0]
    force_k = -2j * np.pi * ks * _kernel_modes(kernel, K) * rho_k
    phase = np.exp(2j * np.pi * np.outer(x, ks))
    return {"x": x, "rho": (phase @ rho_k).real, "force": (phase @ force_k).real,
            "rho_modes": rho_k, "force_modes": force_k}
