"""Even, centered periodic pair potentials on the unit torus.

A kernel is stored by its Fourier coefficients ``W_hat(xi)`` on the
l-infinity ball ``0 < |xi|_inf <= cutoff``.  Real-space values are the
truncated series

    W(x) = sum_xi W_hat(xi) exp(2 pi i xi.x) = 2 sum_{xi in H} W_hat(xi) cos(2 pi xi.x)

where ``H`` is a half-space of representatives (one of each pair +-xi).
The force is ``K = -grad W``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

__all__ = [
    "KernelSpec",
    "FourierKernel",
    "KernelNorms",
    "make_kernel",
    "eval_potential",
    "eval_force",
    "kernel_norms",
    "cosine_kernel",
    "zero_kernel",
]

FAMILIES = ("riesz", "log", "fourier_table")


@dataclass(frozen=True)
class KernelSpec:
    """Declarative description of a periodic kernel.

    Parameters
    ----------
    dimension : int
        Torus dimension, 1, 2 or 3.
    family : str
        ``"riesz"`` (coefficients ``|xi|^(s-d)``), ``"log"``
        (``|xi|^(-d)``) or ``"fourier_table"`` (explicit coefficients).
    cutoff : int
        Largest retained ``|xi|_inf``.  For a table it defaults to the
        largest frequency present.
    s : float, optional
        Riesz order, ``0 < s < d``.
    table : mapping, optional
        Frequency vector (tuple of ints, or int in d=1) -> coefficient.
    """

    dimension: int
    family: str
    cutoff: int | None = None
    s: float | None = None
    table: Mapping | None = None

    @classmethod
    def riesz(cls, dimension: int, s: float, cutoff: int) -> "KernelSpec":
        return cls(dimension, "riesz", cutoff, s=s)

    @classmethod
    def log(cls, dimension: int, cutoff: int) -> "KernelSpec":
        return cls(dimension, "log", cutoff)

    @classmethod
    def fourier_table(cls, dimension: int, table: Mapping, cutoff: int | None = None) -> "KernelSpec":
        return cls(dimension, "fourier_table", cutoff, table=dict(table))


@dataclass(frozen=True)
class KernelNorms:
    L1: float
    L2: float
    neg_sup: float
    L2_parseval: float
    mean: float
    weak_L2: float


@dataclass(frozen=True, eq=False)
class FourierKernel:
    """Immutable truncated Fourier kernel.

    ``freqs`` lists every retained frequency (both signs), ``coefficients``
    the matching ``W_hat``.  ``half_freqs``/``half_coefficients`` keep one
    representative per +-xi pair and drive all real-space sums.
    """

    spec: KernelSpec
    freqs: np.ndarray
    coefficients: np.ndarray
    half_freqs: np.ndarray
    half_coefficients: np.ndarray
    norms: KernelNorms = field(repr=False, default=None)
    _table: tuple | None = field(repr=False, default=None)

    @property
    def dimension(self) -> int:
        return self.spec.dimension

    @property
    def cutoff(self) -> int:
        return int(self.spec.cutoff)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.half_coefficients)

    def coefficient(self, xi) -> float:
        """``W_hat(xi)``; zero outside the retained set."""
        xi = np.atleast_1d(np.asarray(xi, dtype=int))
        hit = np.all(self.freqs == xi, axis=1)
        return float(self.coefficients[hit][0]) if hit.any() else 0.0

    def dense_coefficients(self) -> np.ndarray:
        """``W_hat`` on the full ``(2L+1)^d`` frequency cube, centre = 0."""
        L, d = self.cutoff, self.dimension
        out = np.zeros((2 * L + 1,) * d)
        out[tuple((self.freqs + L).T)] = self.coefficients
        return out

    def potential(self, x) -> np.ndarray:
        return eval_potential(self, x)

    def force(self, x) -> np.ndarray:
        return eval_force(self, x)

    def grid_values(self, n: int) -> np.ndarray:
        """Exact values of ``W`` on the ``n^d`` grid ``i/n`` (via FFT)."""
        L, d = self.cutoff, self.dimension
        if n < 2 * L + 1:
            raise ValueError(f"grid size {n} cannot resolve cutoff {L}")
        spectrum = np.zeros((n,) * d, dtype=complex)
        spectrum[tuple((self.freqs % n).T)] = self.coefficients
        values = np.fft.ifftn(spectrum).real * n**d
        return values

    def interpolator(self, n: int = 4096):
        """Linear-interpolation table for ``W`` and ``K`` (d=1 only).

        Interpolation error is bounded by ``(1/n)^2 / 8 * max|W''|``, i.e.
        ``(pi/n)^2 / 2 * sum |xi|^2 |W_hat(xi)|`` for the potential.
        """
        if self.dimension != 1:
            raise ValueError("interpolation tables are implemented for d=1")
        xs = np.arange(n + 1) / n
        W = eval_potential(self, xs)
        K = eval_force(self, xs)[:, 0]

        def table(x):
            x = np.mod(x, 1.0)
            return np.interp(x, xs, W), np.interp(x, xs, K)

        return table


def _half_space_mask(freqs: np.ndarray) -> np.ndarray:
    """True for the lexicographically positive member of each +-xi pair."""
    mask = np.zeros(len(freqs), dtype=bool)
    undecided = np.ones(len(freqs), dtype=bool)
    for axis in range(freqs.shape[1]):
        col = freqs[:, axis]
        mask |= undecided & (col > 0)
        undecided &= col == 0
    return mask


def _ball(dimension: int, cutoff: int) -> np.ndarray:
    rng = range(-cutoff, cutoff + 1)
    pts = np.array(list(itertools.product(rng, repeat=dimension)), dtype=int)
    return pts[np.any(pts != 0, axis=1)]


def make_kernel(spec: KernelSpec, norm_grid: int | None = None) -> FourierKernel:
    """Build a :class:`FourierKernel` and cache its grid norms.

    Raises
    ------
    ValueError
        For an unsupported dimension or family, a Riesz order outside
        ``(0, d)``, or a table with a nonzero mean or asymmetric entries.
    """
    d = spec.dimension
    if d not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {d}")
    if spec.family not in FAMILIES:
        raise ValueError(f"unknown kernel family {spec.family!r}")

    if spec.family == "fourier_table":
        table = {}
        for key, val in (spec.table or {}).items():
            xi = tuple(int(c) for c in np.atleast_1d(key))
            if len(xi) != d:
                raise ValueError(f"frequency {key!r} has wrong dimension for d={d}")
            if not np.isrealobj(val) and np.imag(val) != 0:
                raise ValueError("kernel coefficients must be real")
            table[xi] = float(np.real(val))
        zero = (0,) * d
        if table.get(zero, 0.0) != 0.0:
            raise ValueError("coefficient at xi=0 must vanish (W must be centered)")
        table.pop(zero, None)
        for xi, val in table.items():
            partner = tuple(-c for c in xi)
            if partner not in table or table[partner] != val:
                raise ValueError(f"table is not even: W_hat{xi} != W_hat{partner}")
        largest = max((max(abs(c) for c in xi) for xi in table), default=1)
        cutoff = spec.cutoff if spec.cutoff is not None else max(largest, 1)
        if cutoff < 1:
            raise ValueError("cutoff must be >= 1")
        if largest > cutoff:
            raise ValueError(f"table frequency {largest} exceeds cutoff {cutoff}")
        freqs = _ball(d, cutoff)
        coeffs = np.array([table.get(tuple(xi), 0.0) for xi in freqs])
    else:
        cutoff = spec.cutoff
        if cutoff is None or cutoff < 1:
            raise ValueError("cutoff must be >= 1")
        freqs = _ball(d, cutoff)
        mod = np.sqrt(np.sum(freqs.astype(float) ** 2, axis=1))
        if spec.family == "riesz":
            if spec.s is None or not (0.0 < spec.s < d):
                raise ValueError(f"Riesz order must satisfy 0 < s < d={d}, got {spec.s}")
            coeffs = mod ** (spec.s - d)
        else:
            coeffs = mod ** (-float(d))

    spec = KernelSpec(d, spec.family, int(cutoff), s=spec.s, table=spec.table)
    half = _half_space_mask(freqs)
    kernel = FourierKernel(
        spec=spec,
        freqs=freqs,
        coefficients=coeffs,
        half_freqs=freqs[half],
        half_coefficients=coeffs[half],
    )
    if norm_grid is None:
        norm_grid = _default_norm_grid(d, int(cutoff))
    object.__setattr__(kernel, "norms", kernel_norms(kernel, norm_grid))
    return kernel


def _default_norm_grid(d: int, cutoff: int) -> int:
    # 4*cutoff keeps Parseval exact on the grid
    return max(4 * cutoff, 64 if d == 1 else 32)


def _as_points(kernel: FourierKernel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if kernel.dimension == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != kernel.dimension:
        raise ValueError(f"points must have trailing dimension {kernel.dimension}")
    return x


def eval_potential(kernel: FourierKernel, x) -> np.ndarray:
    """Truncated Fourier sum ``W(x)``; accepts scalars in d=1 or ``(..., d)``."""
    pts = _as_points(kernel, x)
    phase = 2.0 * np.pi * (pts @ kernel.half_freqs.T)
    out = 2.0 * (np.cos(phase) @ kernel.half_coefficients)
    return out[()] if out.ndim == 0 else out


def eval_force(kernel: FourierKernel, x) -> np.ndarray:
    """``K(x) = -grad W(x)``, shape ``(..., d)``."""
    pts = _as_points(kernel, x)
    phase = 2.0 * np.pi * (pts @ kernel.half_freqs.T)
    weights = 2.0 * kernel.half_coefficients[:, None] * (2.0 * np.pi * kernel.half_freqs)
    return np.sin(phase) @ weights


def kernel_norms(kernel: FourierKernel, grid_size: int) -> KernelNorms:
    """Grid quadrature of ``||W||_1``, ``||W||_2``, ``||W_-||_inf`` and the
    weak-L2 quasi-norm; ``L2_parseval`` is ``sqrt(sum |W_hat|^2)``."""
    if grid_size < 2 * kernel.cutoff + 1:
        raise ValueError("grid_size must be at least 2*cutoff + 1")
    values = kernel.grid_values(grid_size).ravel()
    abs_sorted = np.sort(np.abs(values))[::-1]
    measure = np.arange(1, values.size + 1) / values.size
    return KernelNorms(
        L1=float(np.mean(np.abs(values))),
        L2=float(np.sqrt(np.mean(values**2))),
        neg_sup=float(max(0.0, -values.min())),
        L2_parseval=float(np.sqrt(np.sum(kernel.coefficients**2))),
        mean=float(np.mean(values)),
        weak_L2=float(np.max(abs_sorted * np.sqrt(measure))),
    )


def cosine_kernel(amplitude: float = 1.0, dimension: int = 1) -> FourierKernel:
    """``W(x) = amplitude * cos(2 pi x_1)``."""
    e = (1,) + (0,) * (dimension - 1)
    m = tuple(-c for c in e)
    return make_kernel(KernelSpec.fourier_table(dimension, {e: amplitude / 2, m: amplitude / 2}))


def zero_kernel(dimension: int = 1, cutoff: int = 1) -> FourierKernel:
    return make_kernel(KernelSpec.fourier_table(dimension, {}, cutoff=cutoff))
