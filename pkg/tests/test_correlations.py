import math

import numpy as np
import pytest

from gibbsvlasov.correlations import (
    GridDensity,
    GridSpec,
    gibbs_fluctuation_density,
    hoeffding_exact,
    hoeffding_projected,
    make_grid,
    marginal,
    maxwellian_density,
    orthogonality_check,
    pair_on_grid,
    pair_pairing_estimate,
    project_centered,
    vlasov_remainder_estimate,
)
from gibbsvlasov.dynamics import make_fluctuation_ensemble, simulate
from gibbsvlasov.gibbs import MCMCParams
from gibbsvlasov.kernels import cosine_kernel, zero_kernel
from gibbsvlasov.observables import parse_observable as P

ENS = MCMCParams(burn_in=30, step_size=0.5)
BETA = 1.0


@pytest.fixture(scope="module")
def cosine():
    return cosine_kernel()


@pytest.fixture(scope="module")
def grid():
    return make_grid(BETA, 12, 20)


def one_particle(grid, fun):
    X, V = np.meshgrid(grid.x, grid.v, indexing="ij")
    return GridDensity(1, grid, fun(X, V) * grid.maxwellian)


def grid_remainder(F, N, test, kernel):
    """``int d_v test(z1) K(x1 - x2) H_{N,2}(z1, z2)`` by tensor quadrature."""
    g = F.grid
    H = hoeffding_exact(F, N, 2).values
    X, V = np.meshgrid(g.x, g.v, indexing="ij")
    dv = test.dv(X, V, g.beta)
    K = kernel.force(g.x[:, None] - g.x[None, :])[..., 0]
    w = g.weights
    return float(np.einsum("ab,abcd,ac,ab,cd->", dv, H, K, w, w))


def ensemble_trajectory(kernel, N, R, seed, times=(0.0,), f0="cos1"):
    ens = make_fluctuation_ensemble(kernel, N, BETA, P(f0), R, ENS, seed=seed)
    return simulate(ens, kernel, max(times), 0.01, list(times))


class TestGrid:
    def test_vmax_enforced(self):
        with pytest.raises(ValueError):
            GridSpec(1.0, 8, 8, 3.0)

    def test_maxwellian_unit_mass(self, grid):
        assert np.sum(grid.maxwellian * grid.weights) == pytest.approx(1.0, abs=1e-15)

    def test_marginal_order(self, grid):
        F = gibbs_fluctuation_density(cosine_kernel(), 2, grid, P("sin1"))
        a = marginal(F, [1, 0]).values
        np.testing.assert_allclose(a, np.transpose(F.values, (2, 3, 0, 1)), atol=1e-15)


class TestProjection:
    def test_maxwellian_removed(self, grid):
        out = project_centered(GridDensity(1, grid, grid.maxwellian.copy()))
        assert np.max(np.abs(out.values)) < 1e-10

    def test_centred_unchanged(self, grid):
        h = one_particle(grid, lambda x, v: np.sin(2 * np.pi * x) * v)
        np.testing.assert_allclose(project_centered(h).values, h.values, atol=1e-15)

    def test_mass_split(self, grid):
        h = one_particle(grid, lambda x, v: 1 + np.cos(2 * np.pi * x))
        expected = one_particle(grid, lambda x, v: np.cos(2 * np.pi * x))
        np.testing.assert_allclose(project_centered(h).values, expected.values, atol=1e-13)

    def test_rejects_multi_particle(self, grid):
        with pytest.raises(ValueError):
            project_centered(maxwellian_density(grid, 2))


def synthetic_densities(grid):
    M2 = maxwellian_density(grid, 2).values
    X = grid.x
    c = np.cos(2 * np.pi * X)
    return {
        "cos_cos": (2, GridDensity(2, grid, M2 * (1 + 0.1 * c[:, None, None, None] * c[None, None, :, None]))),
        "product_cos": (2, gibbs_fluctuation_density(cosine_kernel(), 2, grid, P("cos1"), interacting=False)),
        "gibbs_n2": (2, gibbs_fluctuation_density(cosine_kernel(), 2, grid, P("cos1*He1 + sin2"))),
        "gibbs_n3": (3, gibbs_fluctuation_density(cosine_kernel(), 3, make_grid(BETA, 6, 10), P("cos1"))),
        "gibbs_plain_n3": (3, gibbs_fluctuation_density(cosine_kernel(), 3, make_grid(BETA, 6, 10), None)),
    }


class TestHoeffding:
    def test_pure_maxwellian(self, grid):
        F = maxwellian_density(grid, 2)
        for m in (1, 2):
            assert np.max(np.abs(hoeffding_exact(F, 2, m).values)) < 1e-14

    @pytest.mark.parametrize("name", ["cos_cos", "product_cos", "gibbs_n2", "gibbs_n3"])
    def test_two_routes(self, grid, name):
        N, F = synthetic_densities(grid)[name]
        for m in range(1, N + 1):
            a = hoeffding_exact(F, N, m).values
            b = hoeffding_projected(F, m).values
            assert np.max(np.abs(a - b)) < 1e-10

    def test_product_data_has_no_pair_correlation(self, grid):
        F = gibbs_fluctuation_density(cosine_kernel(), 2, grid, P("cos1*He2 + sin1"), interacting=False)
        assert np.max(np.abs(hoeffding_exact(F, 2, 2).values)) < 1e-10
        F3 = gibbs_fluctuation_density(cosine_kernel(), 3, make_grid(BETA, 6, 10), P("cos1"), interacting=False)
        for m in (2, 3):
            assert np.max(np.abs(hoeffding_exact(F3, 3, m).values)) < 1e-10

    def test_first_order_is_g_times_M(self, grid):
        g = P("cos1*He1")
        F = gibbs_fluctuation_density(cosine_kernel(), 2, grid, g, interacting=False)
        expected = one_particle(grid, lambda x, v: g(x, v, BETA)).values
        np.testing.assert_allclose(hoeffding_exact(F, 2, 1).values, expected, atol=1e-12)

    def test_zero_mass_first_order_is_marginal(self, grid):
        F = gibbs_fluctuation_density(cosine_kernel(), 2, grid, P("cos1"))
        np.testing.assert_allclose(hoeffding_exact(F, 2, 1).values, marginal(F, [0]).values, atol=1e-14)

    def test_rejects(self, grid):
        F = maxwellian_density(grid, 2)
        with pytest.raises(ValueError):
            hoeffding_exact(F, 3, 1)
        with pytest.raises(ValueError):
            hoeffding_exact(F, 2, 3)
        with pytest.raises(ValueError):
            hoeffding_exact(F, 2, 1, beta=2.0)


class TestOrthogonality:
    def test_maxwellian(self, grid):
        r = orthogonality_check(maxwellian_density(grid, 2), 2)
        assert r["lhs"] == pytest.approx(1.0, abs=1e-12)
        assert r["rhs"] == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("name", ["cos_cos", "product_cos", "gibbs_n2", "gibbs_n3", "gibbs_plain_n3"])
    def test_identity(self, grid, name):
        N, F = synthetic_densities(grid)[name]
        r = orthogonality_check(F, N)
        assert r["lhs"] == pytest.approx(r["rhs"], abs=1e-8)


class TestPairPairing:
    def test_zero_data(self, cosine):
        tr = ensemble_trajectory(cosine, 4, 256, 0, (0.0, 0.2), f0="0")
        est = pair_pairing_estimate(tr, P("cos1"), P("cos1"))
        assert np.all(est.value == 0)

    @pytest.mark.parametrize("psi,chi", [("cos1", "cos1"), ("cos1", "cos2")])
    def test_matches_grid_at_t0(self, cosine, psi, chi):
        F = gibbs_fluctuation_density(cosine, 2, make_grid(BETA, 24, 24), P("cos1"))
        exact = pair_on_grid(hoeffding_exact(F, 2, 2), [P(psi), P(chi)])
        tr = ensemble_trajectory(cosine, 2, 65536, 21)
        est = pair_pairing_estimate(tr, P(psi), P(chi))
        assert abs(est.value[0] - exact) < 3 * est.stderr[0]

    def test_stderr_rate(self, cosine):
        Rs = np.array([1000, 10_000, 100_000])
        errs = [pair_pairing_estimate(ensemble_trajectory(cosine, 4, int(R), 30 + i), P("cos1"), P("cos2")).stderr[0]
                for i, R in enumerate(Rs)]
        slope = np.polyfit(np.log(Rs), np.log(errs), 1)[0]
        assert -0.6 <= slope <= -0.4


class TestRemainder:
    def test_zero_kernel(self):
        tr = ensemble_trajectory(zero_kernel(), 4, 128, 0, (0.0, 0.1))
        r = vlasov_remainder_estimate(tr, P("sin1*He1"), zero_kernel())
        assert np.all(r.value == 0)

    def test_zero_data(self, cosine):
        tr = ensemble_trajectory(cosine, 4, 128, 0, (0.0, 0.1), f0="0")
        assert np.all(vlasov_remainder_estimate(tr, P("sin1*He1"), cosine).value == 0)

    def test_matches_grid_at_t0(self, cosine):
        F = gibbs_fluctuation_density(cosine, 2, make_grid(BETA, 16, 24), P("cos1"))
        exact = grid_remainder(F, 2, P("sin1*He1"), cosine)
        r = vlasov_remainder_estimate(ensemble_trajectory(cosine, 2, 65536, 2), P("sin1*He1"), cosine)
        assert abs(r.value[0] - exact) < 3 * r.stderr[0]

    def test_decreasing_at_t0(self, cosine):
        vals = [vlasov_remainder_estimate(ensemble_trajectory(cosine, N, 8192, N), P("sin1*He1"), cosine)
                for N in (8, 32, 128)]
        small, large = vals[0], vals[-1]
        assert abs(large.value[0]) + 2 * math.hypot(large.stderr[0], small.stderr[0]) < abs(small.value[0])

    def test_decreasing_at_t1(self, cosine):
        vals = [vlasov_remainder_estimate(ensemble_trajectory(cosine, N, 8192, N, (1.0,)), P("sin1*He1"), cosine)
                for N in (8, 32, 128)]
        small, large = vals[0], vals[-1]
        assert abs(large.value[0]) + 2 * math.hypot(large.stderr[0], small.stderr[0]) < abs(small.value[0])
