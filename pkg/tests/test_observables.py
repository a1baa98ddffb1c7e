import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import hermite_e

from gibbsvlasov.observables import Observable, Term, parse_observable


def maxwell_quad(fun, beta, nx=64, nv=80):
    """Independent tensor quadrature of ``int fun(x, v) M_beta(v) dx dv``."""
    u, w = hermite_e.hermegauss(nv)
    w = w / math.sqrt(2 * math.pi)
    x = np.arange(nx) / nx
    vals = fun(x[:, None], u[None, :] / math.sqrt(beta))
    return float((vals.mean(axis=0) * w).sum())


class TestParsing:
    def test_single_factor(self):
        obs = parse_observable("cos1")
        assert obs.terms == (Term(1.0, "cos", 1, 0),)

    def test_products_and_signs(self):
        obs = parse_observable("0.5*sin2*He1 - 0.25*cos1*He2 + He3")
        assert obs.terms == (Term(0.5, "sin", 2, 1), Term(-0.25, "cos", 1, 2), Term(1.0, "one", 0, 3))

    def test_exponent_not_split(self):
        obs = parse_observable("1e-3*cos1")
        assert obs.terms[0].coef == pytest.approx(1e-3)

    def test_zero(self):
        assert parse_observable("0").is_zero

    @pytest.mark.parametrize("bad", ["", "cos", "cos0", "cos1*sin1", "He1*He2", "v", "x", "cos1+"])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            parse_observable(bad)

    def test_max_indices(self):
        obs = parse_observable("cos3*He1 + sin1*He4")
        assert (obs.max_k, obs.max_n) == (3, 4)

    def test_str_round_trip(self):
        text = "cos1 - 0.25*cos1*He2"
        assert parse_observable(str(parse_observable(text))) == parse_observable(text)


class TestEvaluation:
    def test_values(self):
        obs = parse_observable("cos1*He2")
        beta, x, v = 2.0, 0.1, 0.7
        u = math.sqrt(beta) * v
        assert obs(x, v, beta) == pytest.approx(math.cos(2 * math.pi * x) * (u * u - 1), rel=1e-14)

    @settings(max_examples=25, deadline=None)
    @given(x=st.floats(0, 1), v=st.floats(-4, 4), beta=st.floats(0.2, 5))
    def test_dv_matches_finite_difference(self, x, v, beta):
        obs = parse_observable("cos1*He3 - 0.5*sin2*He2 + He1")
        h = 1e-6
        fd = (obs(x, v + h, beta) - obs(x, v - h, beta)) / (2 * h)
        assert obs.dv(x, v, beta) == pytest.approx(fd, rel=1e-5, abs=1e-6)

    @pytest.mark.parametrize("m,n", [(0, 0), (1, 1), (2, 2), (3, 3), (1, 3), (2, 4)])
    def test_hermite_orthogonality(self, m, n):
        beta = 1.7
        a, b = parse_observable(f"He{m}"), parse_observable(f"He{n}")
        val = maxwell_quad(lambda x, v: a(x, v, beta) * b(x, v, beta), beta)
        assert val == pytest.approx(math.factorial(n) if m == n else 0.0, abs=1e-12)

    @pytest.mark.parametrize("text,expected", [("cos1", 0.0), ("He2", 0.0), ("1", 1.0),
                                               ("3 + cos1*He1", 3.0), ("-0.5*He0", -0.5)])
    def test_maxwellian_mean(self, text, expected):
        obs = parse_observable(text)
        assert obs.maxwellian_mean() == pytest.approx(expected)
        assert obs.maxwellian_mean_quadrature(1.3) == pytest.approx(expected, abs=1e-12)


class TestHermiteBasis:
    @pytest.mark.parametrize("text", ["cos1", "sin2*He1", "1 + cos1*He3 - 0.3*sin1*He2"])
    def test_reconstruction(self, text):
        obs = parse_observable(text)
        beta, K, Nh = 0.8, 2, 6
        c = obs.hermite_coefficients(K, Nh)
        rng = np.random.default_rng(0)
        x, v = rng.random(20), rng.normal(size=20)
        u = math.sqrt(beta) * v
        rebuilt = np.zeros(20, dtype=complex)
        for kk in range(-K, K + 1):
            for n in range(Nh):
                He = hermite_e.hermeval(u, np.eye(Nh)[n])
                rebuilt += c[kk + K, n] * np.exp(2j * np.pi * kk * x) * He / math.sqrt(math.factorial(n))
        np.testing.assert_allclose(rebuilt.imag, 0, atol=1e-13)
        np.testing.assert_allclose(rebuilt.real, obs(x, v, beta), atol=1e-13)

    @pytest.mark.parametrize("phi,psi", [("cos1", "cos1"), ("sin1*He1", "sin1*He1 + cos1"),
                                         ("cos2*He2", "1 + cos2*He2"), ("He1", "cos1*He1")])
    def test_pairing_matches_quadrature(self, phi, psi):
        beta = 1.4
        a, b = parse_observable(phi), parse_observable(psi)
        via_basis = a.pair_with_hermite(b.hermite_coefficients(2, 5))
        direct = maxwell_quad(lambda x, v: a(x, v, beta) * b(x, v, beta), beta)
        assert via_basis == pytest.approx(direct, abs=1e-12)

    def test_pairing_carries_leading_axes(self):
        c = parse_observable("cos1").hermite_coefficients(1, 3)
        stacked = np.stack([c, 2 * c, 3 * c])
        np.testing.assert_allclose(parse_observable("cos1").pair_with_hermite(stacked), [0.5, 1.0, 1.5])

    def test_basis_too_small(self):
        with pytest.raises(ValueError):
            parse_observable("cos3").hermite_coefficients(2, 4)
        with pytest.raises(ValueError):
            parse_observable("He4").hermite_coefficients(1, 4)
