"""Phase-space test functions built from Fourier modes and Hermite polynomials.

An :class:`Observable` is a finite sum of terms

    coef * F(x) * He_n(sqrt(beta) * v)

in d=1, where ``F`` is ``1``, ``cos(2 pi k x)`` or ``sin(2 pi k x)`` and
``He_n`` is the probabilists' Hermite polynomial.  The velocity variable is
always scaled by ``sqrt(beta)`` so that ``He_n`` are orthogonal under the
Maxwellian: ``E[He_m He_n] = n! delta_mn``.

Expressions are parsed from strings such as ``"cos1"``, ``"0.5*sin2*He1"``,
``"He2"``, ``"cos1 - 0.25*cos1*He2"`` or ``"0"``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import hermite_e

__all__ = ["Term", "Observable", "parse_observable", "hermite_e_values"]


@dataclass(frozen=True)
class Term:
    coef: float
    kind: str  # "one", "cos" or "sin"
    k: int
    n: int

    def __post_init__(self):
        if self.kind not in ("one", "cos", "sin"):
            raise ValueError(f"unknown Fourier factor {self.kind!r}")
        if self.kind != "one" and self.k < 1:
            raise ValueError("Fourier index must be >= 1")
        if self.n < 0:
            raise ValueError("Hermite degree must be >= 0")


def hermite_e_values(n: int, u) -> np.ndarray:
    c = np.zeros(n + 1)
    c[n] = 1.0
    return hermite_e.hermeval(u, c)


def _fourier(kind: str, k: int, x):
    if kind == "one":
        return np.ones_like(x, dtype=float)
    phase = 2.0 * np.pi * k * x
    return np.cos(phase) if kind == "cos" else np.sin(phase)


@dataclass(frozen=True)
class Observable:
    """Linear combination of Fourier x Hermite terms (d=1)."""

    terms: tuple[Term, ...] = ()
    source: str = ""

    @property
    def is_zero(self) -> bool:
        return all(t.coef == 0 for t in self.terms)

    @property
    def max_k(self) -> int:
        return max((t.k for t in self.terms if t.kind != "one"), default=0)

    @property
    def max_n(self) -> int:
        return max((t.n for t in self.terms), default=0)

    def __call__(self, x, v, beta: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = math.sqrt(beta) * np.asarray(v, dtype=float)
        out = np.zeros(np.broadcast(x, u).shape)
        for t in self.terms:
            out = out + t.coef * _fourier(t.kind, t.k, x) * hermite_e_values(t.n, u)
        return out

    def dv(self, x, v, beta: float) -> np.ndarray:
        """Analytic ``d/dv``, using ``He_n' = n He_{n-1}``."""
        x = np.asarray(x, dtype=float)
        sb = math.sqrt(beta)
        u = sb * np.asarray(v, dtype=float)
        out = np.zeros(np.broadcast(x, u).shape)
        for t in self.terms:
            if t.n == 0:
                continue
            out = out + t.coef * sb * t.n * _fourier(t.kind, t.k, x) * hermite_e_values(t.n - 1, u)
        return out

    def maxwellian_mean(self) -> float:
        """``int phi M_beta`` in closed form (only constant terms survive)."""
        return float(sum(t.coef for t in self.terms if t.kind == "one" and t.n == 0))

    def maxwellian_mean_quadrature(self, beta: float, nx: int = 64, nv: int = 64) -> float:
        """The same pairing by trapezoid in x and Gauss-Hermite in v."""
        u, wts = hermite_e.hermegauss(nv)
        wts = wts / math.sqrt(2.0 * math.pi)
        x = np.arange(nx) / nx
        vals = self(x[:, None], u[None, :] / math.sqrt(beta), beta)
        return float((vals.mean(axis=0) * wts).sum())

    def hermite_coefficients(self, K_modes: int, N_hermite: int) -> np.ndarray:
        """Coefficients ``c[k, n]`` (k = -K..K, stored at ``k + K``) with
        ``phi = sum c e^{2 pi i k x} He_n(sqrt(beta) v) / sqrt(n!)``."""
        c = np.zeros((2 * K_modes + 1, N_hermite), dtype=complex)
        for t in self.terms:
            if t.n >= N_hermite or t.k > K_modes:
                raise ValueError("observable does not fit in the requested basis")
            s = t.coef * math.sqrt(math.factorial(t.n))
            if t.kind == "one":
                c[K_modes, t.n] += s
            elif t.kind == "cos":
                c[K_modes + t.k, t.n] += s / 2
                c[K_modes - t.k, t.n] += s / 2
            else:
                c[K_modes + t.k, t.n] += s / 2j
                c[K_modes - t.k, t.n] -= s / 2j
        return c

    def pair_with_hermite(self, coeffs: np.ndarray):
        """``int phi f`` for ``f = M_beta sum c[k,n] e^{2 pi i k x} He_n / sqrt(n!)``.

        Leading axes of ``coeffs`` (e.g. time) are carried through.
        """
        K = (coeffs.shape[-2] - 1) // 2
        total = np.zeros(coeffs.shape[:-2])
        for t in self.terms:
            if t.n >= coeffs.shape[-1]:
                continue
            r = math.sqrt(math.factorial(t.n))
            if t.kind == "one":
                total = total + t.coef * r * coeffs[..., K, t.n].real
            elif t.k <= K:
                c = coeffs[..., K + t.k, t.n]
                total = total + t.coef * r * (c.real if t.kind == "cos" else -c.imag)
        return total[()] if total.ndim == 0 else total

    def __str__(self) -> str:
        return self.source or " + ".join(f"{t.coef}*{t.kind}{t.k}*He{t.n}" for t in self.terms) or "0"


_FACTOR = re.compile(r"^(cos|sin)(\d+)$|^He(\d+)$|^v$|^([0-9.]+(?:[eE][-+]?\d+)?)$")


def _parse_term(text: str, sign: float) -> Term:
    coef, kind, k, n = sign, "one", 0, 0
    for factor in text.split("*"):
        factor = factor.strip()
        m = _FACTOR.match(factor)
        if not m:
            raise ValueError(f"cannot parse factor {factor!r}")
        if m.group(1):
            if kind != "one":
                raise ValueError("at most one Fourier factor per term")
            kind, k = m.group(1), int(m.group(2))
        elif m.group(3) is not None:
            if n:
                raise ValueError("at most one Hermite factor per term")
            n = int(m.group(3))
        elif factor == "v":
            raise ValueError("use He1 (= sqrt(beta) v) for velocity factors")
        else:
            coef *= float(m.group(4))
    return Term(coef, kind, k, n)


def parse_observable(text: str) -> Observable:
    """Parse a ``+``/``-`` separated sum of ``*`` products.

    Factors: a number, ``cosK``, ``sinK`` (``K >= 1``) and ``HeN``.
    """
    src = text.strip()
    if not src:
        raise ValueError("empty observable expression")
    # split before a sign unless it belongs to an exponent such as 1e-3
    pieces = re.split(r"(?<![eE])(?=[+-])", src.replace(" ", ""))
    terms = []
    for piece in filter(None, pieces):
        sign = -1.0 if piece[0] == "-" else 1.0
        body = piece.lstrip("+-")
        if not body:
            raise ValueError(f"dangling sign in {src!r}")
        term = _parse_term(body, sign)
        if term.coef != 0.0:
            terms.append(term)
    return Observable(tuple(terms), src)
