import math

import numpy as np
import pytest
from scipy import stats

import oracles
from gibbsvlasov.gibbs import (
    LimitDomainError,
    MCMCParams,
    estimate_logZ_thermo,
    exact_Z_smallN,
    init_chain,
    limit_Z,
    limit_Z_terms,
    mcmc_step,
    mcmc_sweep,
    mean_energy,
    minimal_C,
    moment_identity_check,
    naive_bound,
    pair_energy,
    sample_positions,
    sample_velocities,
    theoretical_bounds,
)
from gibbsvlasov.kernels import KernelSpec, cosine_kernel, make_kernel

FAST = MCMCParams(n_chains=32, burn_in=100, n_samples=200)


@pytest.fixture(scope="module")
def cosine():
    return cosine_kernel()


class TestExactQuadrature:
    def test_n2_matches_bessel(self, cosine):
        assert exact_Z_smallN(cosine, 2, 1.0).Z == pytest.approx(oracles.z2_cosine(1.0), abs=1e-12)
        assert exact_Z_smallN(cosine, 2, 1.0).Z == pytest.approx(1.063483, abs=1e-6)

    @pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
    def test_n3_matches_integral_representation(self, cosine, beta):
        assert exact_Z_smallN(cosine, 3, beta).Z == pytest.approx(oracles.z_bessel_cosine(3, beta), rel=1e-10)

    def test_n3_grid_refinement(self):
        k = make_kernel(KernelSpec.riesz(1, 0.5, 8))
        a = exact_Z_smallN(k, 3, 1.0, 64).Z
        b = exact_Z_smallN(k, 3, 1.0, 128).Z
        assert abs(a - b) < 1e-8

    def test_beta_zero(self, cosine):
        assert exact_Z_smallN(cosine, 3, 0.0).Z == 1.0

    def test_rejects_large_N(self, cosine):
        with pytest.raises(ValueError):
            exact_Z_smallN(cosine, 4, 1.0)

    def test_rejects_2d(self):
        with pytest.raises(ValueError):
            exact_Z_smallN(cosine_kernel(dimension=2), 2, 1.0)

    @pytest.mark.parametrize("spec", [KernelSpec.riesz(1, 0.5, 16), KernelSpec.log(1, 16),
                                      KernelSpec.fourier_table(1, {2: -0.4, -2: -0.4})])
    @pytest.mark.parametrize("N", [2, 3])
    def test_jensen(self, spec, N):
        assert exact_Z_smallN(make_kernel(spec), N, 1.0).Z >= 1.0


class TestLimitFormula:
    @pytest.mark.parametrize("beta", [0.3, 1.0, 1.7])
    def test_cosine_closed_form(self, cosine, beta):
        assert limit_Z(cosine, beta) == pytest.approx(oracles.limit_cosine(beta), rel=1e-14)

    def test_large_N_integral_approaches_limit(self, cosine):
        # independent route: the exact Zbar_N from the integral representation
        errs = [abs(oracles.z_bessel_cosine(N, 1.0) - limit_Z(cosine, 1.0)) for N in (8, 64, 512, 4096)]
        assert all(b < a for a, b in zip(errs, errs[1:]))
        assert errs[-1] < 3e-5

    def test_beta_zero(self, cosine):
        assert limit_Z(cosine, 0.0) == 1.0

    def test_domain_error(self):
        k = cosine_kernel(amplitude=-3.0)
        with pytest.raises(LimitDomainError):
            limit_Z(k, 1.0)

    def test_log_kernel_tail(self):
        beta = 1.0
        a = limit_Z_terms(make_kernel(KernelSpec.log(1, 1000), norm_grid=4000), beta)
        b = limit_Z_terms(make_kernel(KernelSpec.log(1, 10000), norm_grid=40000), beta)
        assert abs(b.exponent - a.exponent) < beta**2 / (2 * 1000) * 2
        # the tail estimate accounts for most of the difference
        assert abs((b.exponent - a.exponent) - (a.tail - b.tail)) < 0.1 * a.tail

    def test_riesz_divergent_tail(self):
        k = make_kernel(KernelSpec.riesz(1, 0.5, 8))
        assert math.isinf(limit_Z_terms(k, 1.0).tail)


class TestMomentIdentity:
    @pytest.mark.parametrize("N", [2, 3])
    @pytest.mark.parametrize("p", [2.0, 3.0, 1.5])
    @pytest.mark.parametrize("beta", [0.5, 1.0])
    def test_identity(self, cosine, N, p, beta):
        r = moment_identity_check(cosine, N, beta, p)
        assert r["lhs"] == pytest.approx(r["rhs"], abs=1e-8)

    def test_bessel_example(self, cosine):
        r = moment_identity_check(cosine, 2, 1.0, 2.0)
        expected = oracles.z2_cosine(2.0) / oracles.z2_cosine(1.0) ** 2
        assert r["rhs"] == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(1.11942, abs=1e-5)

    def test_trivial_cases(self, cosine):
        for r in (moment_identity_check(cosine, 3, 0.0, 2.0), moment_identity_check(cosine, 3, 1.0, 1.0)):
            assert r["lhs"] == pytest.approx(1.0, abs=1e-12)
            assert r["rhs"] == pytest.approx(1.0, abs=1e-12)


class TestBounds:
    def test_naive_beta_zero(self, cosine):
        assert naive_bound(cosine, 4, 0.0) == 1.0

    def test_naive_nonnegative_potential(self):
        assert naive_bound(lambda x: np.abs(np.cos(2 * np.pi * x)), 5, 2.0) == 1.0

    def test_naive_cosine(self, cosine):
        expected = math.exp(0.5 * 4 * (1 / math.pi) * math.exp(0.5))
        assert naive_bound(cosine, 4, 0.5) == pytest.approx(expected, rel=1e-6)
        assert oracles.z_bessel_cosine(4, 0.5) <= naive_bound(cosine, 4, 0.5)

    def test_l2_bound(self, cosine):
        b = theoretical_bounds(cosine, 10, 1.0, 1.0)
        assert b.bound_L2 == pytest.approx(math.exp(0.5), rel=1e-12)
        assert b.regime is None

    def test_riesz_regime_tags(self):
        tags = {s: theoretical_bounds(make_kernel(KernelSpec.riesz(2, s, 4)), 8, 0.5, 1.0).regime
                for s in (0.5, 1.0, 1.5)}
        assert tags == {0.5: "s<d/2", 1.0: "s=d/2", 1.5: "s>d/2"}

    def test_riesz_half_bound(self):
        b = theoretical_bounds(make_kernel(KernelSpec.riesz(2, 1.0, 4)), 16, 0.5, 2.0)
        assert b.bound_riesz == pytest.approx(2.0 * 16 ** (2.0 * 0.25))

    def test_beta_zero_bounds(self, cosine):
        b = theoretical_bounds(cosine, 8, 0.0, 1.0)
        assert b.bound_L2 >= 1 and b.bound_weakL2 >= 1

    def test_minimal_C_saturates(self, cosine):
        Z = oracles.z_bessel_cosine(8, 1.0)
        C = minimal_C(Z, 1.0, cosine)
        assert math.exp(C * 0.5) == pytest.approx(Z, rel=1e-12)


class TestSampler:
    def test_beta_zero_accepts_everything(self, cosine):
        ch = init_chain(cosine, 5, 0.0, n_chains=16, step_size=0.2, seed=0)
        for _ in range(50):
            mcmc_step(ch)
        assert np.all(ch.acceptance == 1.0)

    def test_single_particle_uniform(self, cosine):
        x = sample_positions(cosine, 1, 5.0, 4000, FAST, seed=2)[:, 0, 0]
        assert stats.kstest(x, "uniform").pvalue > 0.01

    def test_cached_energy_consistent(self, cosine):
        ch = init_chain(make_kernel(KernelSpec.riesz(1, 0.5, 8)), 7, 2.0, n_chains=8, seed=4)
        for _ in range(40):
            mcmc_sweep(ch)
        np.testing.assert_allclose(ch.energy, pair_energy(ch.kernel, ch.positions), atol=1e-10)
        for _ in range(30):
            mcmc_step(ch)
        np.testing.assert_allclose(ch.energy, pair_energy(ch.kernel, ch.positions), atol=1e-10)

    def test_pair_energy_direct_sum(self, cosine):
        x = np.random.default_rng(5).random((4, 1))
        direct = sum(math.cos(2 * math.pi * (x[i, 0] - x[j, 0])) for i in range(4) for j in range(4) if i != j) / 8
        assert pair_energy(cosine, x) == pytest.approx(direct, abs=1e-13)

    def test_detailed_balance_histogram(self, cosine):
        x = sample_positions(cosine, 2, 1.0, 20000, MCMCParams(burn_in=60), seed=7)
        y = np.mod(x[:, 0, 0] - x[:, 1, 0], 1.0)
        edges = np.linspace(0, 1, 21)
        observed, _ = np.histogram(y, edges)
        dens = lambda t: np.exp(-0.5 * np.cos(2 * np.pi * t)) / oracles.z2_cosine(1.0)
        from scipy.integrate import quad
        expected = np.array([quad(dens, a, b)[0] for a, b in zip(edges[:-1], edges[1:])]) * y.size
        chi2 = np.sum((observed - expected) ** 2 / expected)
        assert chi2 < stats.chi2.ppf(0.99, len(expected) - 1)

    def test_adapted_acceptance_window_strong_coupling(self, cosine):
        e = mean_energy(cosine, 2, 20.0, MCMCParams(n_chains=32, burn_in=300, n_samples=100), seed=1)
        assert 0.15 <= e.acceptance <= 0.6

    def test_acceptance_at_step_cap_for_flat_target(self, cosine):
        # nearly uniform targets accept almost every move even at the largest
        # allowed proposal scale, so the window cannot be reached there
        e = mean_energy(cosine, 8, 1.0, FAST, seed=1)
        assert e.acceptance > 0.6


class TestVelocities:
    def test_variance(self):
        v = sample_velocities(10, 1.0, seed=0, size=10_000)
        assert v.var() == pytest.approx(1.0, abs=0.02)

    def test_variance_scaling(self):
        v = sample_velocities(10, 4.0, seed=1, size=10_000)
        assert v.var() == pytest.approx(0.25, abs=0.005)

    def test_mean(self):
        v = sample_velocities(1, 2.0, seed=3, size=100_000)
        assert abs(v.mean()) < 4 * math.sqrt(0.5 / v.size)

    def test_rejects_nonpositive_beta(self):
        with pytest.raises(ValueError):
            sample_velocities(3, 0.0)


class TestMeanEnergy:
    def test_beta_zero(self, cosine):
        e = mean_energy(cosine, 6, 0.0, FAST, seed=0)
        assert abs(e.mean) < 4 * e.stderr

    def test_n2_oracle(self, cosine):
        e = mean_energy(cosine, 2, 1.0, MCMCParams(n_chains=64, burn_in=100, n_samples=800), seed=3)
        assert abs(e.mean - oracles.mean_energy_n2_cosine(1.0)) < 4 * e.stderr

    def test_ground_state_limit(self, cosine):
        e = mean_energy(cosine, 2, 100.0, FAST, seed=0)
        assert e.mean == pytest.approx(-0.5 + 1 / (2 * 100.0), abs=3e-3)


class TestThermodynamicIntegration:
    def test_beta_zero(self, cosine):
        assert estimate_logZ_thermo(cosine, 4, 0.0).logZ == 0.0

    def test_rejects_few_nodes(self, cosine):
        with pytest.raises(ValueError):
            estimate_logZ_thermo(cosine, 2, 1.0, n_lambda=3)

    @pytest.mark.parametrize("N", [2, 3])
    def test_agrees_with_quadrature(self, cosine, N):
        est = estimate_logZ_thermo(cosine, N, 1.0, 6, FAST, seed=N)
        exact = exact_Z_smallN(cosine, N, 1.0).logZ
        assert abs(est.logZ - exact) < 3 * est.stderr
        assert est.stderr > 0
