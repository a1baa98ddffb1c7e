import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gibbsvlasov.kernels import (
    KernelSpec,
    cosine_kernel,
    eval_force,
    eval_potential,
    kernel_norms,
    make_kernel,
    zero_kernel,
)


@pytest.fixture(scope="module")
def cosine():
    return cosine_kernel()


@pytest.fixture(scope="module", params=["cos", "riesz1", "log1", "riesz2", "table3"])
def any_kernel(request):
    return {
        "cos": cosine_kernel(),
        "riesz1": make_kernel(KernelSpec.riesz(1, 0.5, 16)),
        "log1": make_kernel(KernelSpec.log(1, 32)),
        "riesz2": make_kernel(KernelSpec.riesz(2, 1.0, 4)),
        "table3": make_kernel(KernelSpec.fourier_table(3, {(1, 0, 0): 0.3, (-1, 0, 0): 0.3,
                                                           (0, 1, 1): -0.1, (0, -1, -1): -0.1})),
    }[request.param]


class TestPotentialAndForce:
    def test_cosine_values(self, cosine):
        np.testing.assert_allclose(eval_potential(cosine, 0.0), 1.0, atol=1e-15)
        np.testing.assert_allclose(eval_potential(cosine, 0.5), -1.0, atol=1e-15)
        np.testing.assert_allclose(eval_potential(cosine, 0.25), 0.0, atol=1e-15)

    def test_cosine_force(self, cosine):
        np.testing.assert_allclose(eval_force(cosine, 0.25)[..., 0], 2 * math.pi, rtol=1e-14)
        np.testing.assert_allclose(eval_force(cosine, 0.1)[..., 0], 2 * math.pi * math.sin(0.2 * math.pi),
                                   rtol=1e-14)
        np.testing.assert_allclose(eval_force(cosine, 0.1)[..., 0], 3.6932, atol=1e-4)

    def test_force_vanishes_at_origin(self, any_kernel):
        d = any_kernel.dimension
        assert np.all(eval_force(any_kernel, np.zeros(d)) == 0.0)

    def test_symmetry_exact(self, any_kernel):
        rng = np.random.default_rng(3)
        x = rng.uniform(-0.5, 0.5, size=(50, any_kernel.dimension))
        assert np.array_equal(eval_potential(any_kernel, x), eval_potential(any_kernel, -x))
        assert np.array_equal(eval_force(any_kernel, x), -eval_force(any_kernel, -x))

    def test_gradient_consistency(self, any_kernel):
        rng = np.random.default_rng(11)
        d = any_kernel.dimension
        x = rng.uniform(0, 1, size=(100, d))
        h = 1e-5
        fd = np.empty_like(x)
        for a in range(d):
            e = np.zeros(d)
            e[a] = h
            fd[:, a] = -(eval_potential(any_kernel, x + e) - eval_potential(any_kernel, x - e)) / (2 * h)
        K = eval_force(any_kernel, x)
        scale = np.max(np.abs(K))
        assert np.max(np.abs(K - fd)) / scale < 1e-6

    def test_periodicity(self, cosine):
        x = np.linspace(0, 1, 17)
        np.testing.assert_allclose(eval_potential(cosine, x + 3.0), eval_potential(cosine, x), atol=1e-12)

    def test_method_matches_function(self, cosine):
        x = np.linspace(0, 1, 9)
        np.testing.assert_array_equal(cosine.potential(x), eval_potential(cosine, x))

    def test_interpolator_error_small(self):
        k = make_kernel(KernelSpec.riesz(1, 0.5, 8))
        n = 4096
        W, K = k.interpolator(n)(np.random.default_rng(0).uniform(0, 1, 200))
        x = np.random.default_rng(0).uniform(0, 1, 200)
        bound = (math.pi / n) ** 2 / 2 * np.sum(k.freqs[:, 0] ** 2 * np.abs(k.coefficients))
        assert np.max(np.abs(W - eval_potential(k, x))) <= bound
        np.testing.assert_allclose(K, eval_force(k, x)[:, 0], atol=1e-2)

    def test_wrong_trailing_dimension(self):
        k = make_kernel(KernelSpec.riesz(2, 1.0, 2))
        with pytest.raises(ValueError):
            eval_potential(k, np.zeros((4, 3)))


class TestConstruction:
    def test_riesz_coefficients(self):
        k = make_kernel(KernelSpec.riesz(1, 0.5, 8))
        assert k.coefficient(4) == pytest.approx(4 ** -0.5)
        assert k.coefficient(-4) == pytest.approx(4 ** -0.5)

    def test_log_coefficients(self):
        k = make_kernel(KernelSpec.log(2, 3))
        assert k.coefficient((1, 1)) == pytest.approx(0.5)

    def test_ball_is_linf(self):
        k = make_kernel(KernelSpec.riesz(2, 1.0, 3))
        assert k.freqs.shape[0] == 7**2 - 1
        assert k.half_freqs.shape[0] == (7**2 - 1) // 2

    @pytest.mark.parametrize("s", [0.0, 1.0, -0.3])
    def test_bad_riesz_order(self, s):
        with pytest.raises(ValueError):
            make_kernel(KernelSpec.riesz(1, s, 4))

    def test_bad_dimension(self):
        with pytest.raises(ValueError):
            make_kernel(KernelSpec.riesz(4, 1.0, 2))

    def test_uncentred_table_rejected(self):
        with pytest.raises(ValueError):
            make_kernel(KernelSpec.fourier_table(1, {0: 1.0, 1: 0.5, -1: 0.5}))

    def test_odd_table_rejected(self):
        with pytest.raises(ValueError):
            make_kernel(KernelSpec.fourier_table(1, {1: 0.5, -1: 0.4}))

    def test_zero_kernel(self):
        k = zero_kernel()
        assert k.is_zero
        assert np.all(eval_potential(k, np.linspace(0, 1, 5)) == 0)


class TestNorms:
    def test_cosine(self, cosine):
        n = kernel_norms(cosine, 64)
        assert n.L2_parseval == pytest.approx(math.sqrt(0.5), rel=1e-14)
        assert n.neg_sup == pytest.approx(1.0, abs=1e-14)
        assert n.L1 == pytest.approx(2 / math.pi, rel=1e-2)

    def test_log_parseval_sum(self):
        k = make_kernel(KernelSpec.log(1, 64))
        expected = sum(2.0 / j**2 for j in range(1, 65))
        assert k.norms.L2_parseval ** 2 == pytest.approx(expected, rel=1e-12)
        # the partial sum stays below pi^2/3 by roughly the tail 2/64
        assert math.pi**2 / 3 - expected == pytest.approx(2 / 64.5, rel=1e-2)

    def test_parseval_on_grid(self, any_kernel):
        n = kernel_norms(any_kernel, max(4 * any_kernel.cutoff, 8))
        assert n.L2**2 == pytest.approx(n.L2_parseval**2, rel=1e-8)

    def test_centering(self, any_kernel):
        assert abs(any_kernel.norms.mean) < 1e-12

    def test_grid_too_small(self):
        k = make_kernel(KernelSpec.riesz(1, 0.5, 8))
        with pytest.raises(ValueError):
            kernel_norms(k, 16)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-2, 2), b=st.floats(-2, 2), x=st.floats(-3, 3))
def test_table_kernel_matches_closed_form(a, b, x):
    k = make_kernel(KernelSpec.fourier_table(1, {1: a, -1: a, 3: b, -3: b}))
    expected = 2 * a * math.cos(2 * math.pi * x) + 2 * b * math.cos(6 * math.pi * x)
    assert eval_potential(k, x) == pytest.approx(expected, abs=1e-12)
