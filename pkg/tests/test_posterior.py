"""Tests for the normal-means posterior samplers and summaries."""
import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm, truncnorm

from shrinkball.posterior_lab import (
    McmcChain,
    NormalMeansInstance,
    _truncnorm_ppf,
    average_ball_mass,
    effective_sample_size,
    gibbs_plugin_lasso,
    gibbs_spike_slab,
    laplace_gaussian_log_marginal,
    minimax_radius,
    posterior_ball_mass,
    ratio_certificate,
    simulate_data,
)
from shrinkball.priors import (
    DiracOne,
    GLPrior,
    PluginDirac,
    PointMassMixture,
    SparseVector,
    rng_stream,
)
from shrinkball.specfun import noncentral_chi2_logcdf


def _chain_from_draws(draws, taus=None):
    draws = np.asarray(draws, dtype=float)
    m = draws.shape[0]
    taus = np.ones(m) if taus is None else np.asarray(taus, dtype=float)
    return McmcChain(draws_theta=draws, draws_tau=taus, iterations=m,
                     burn_in=0, thin=1, seed=0, diagnostics={})


class TestInstancesAndRadii:
    def test_simulate_data_deterministic(self):
        theta0 = SparseVector(n=5, support=np.array([0]),
                              values=np.array([2.0]))
        a = simulate_data(theta0, seed=7)
        b = simulate_data(theta0, seed=7)
        assert np.array_equal(a.y, b.y)
        assert not np.array_equal(a.y, simulate_data(theta0, seed=8).y)

    def test_simulate_data_noise_moments(self):
        theta0 = SparseVector.zero(200_000)
        inst = simulate_data(theta0, seed=1)
        assert abs(inst.y.mean()) < 3 / math.sqrt(inst.n)
        assert abs(inst.y.var() - 1.0) < 3 * math.sqrt(2.0 / inst.n)

    def test_instance_validation(self):
        with pytest.raises(ValueError):
            NormalMeansInstance(n=3, theta0=SparseVector.zero(3),
                                y=np.zeros(4), seed=0)

    def test_minimax_radius(self):
        assert minimax_radius(100, 4, 1.0) == pytest.approx(
            math.sqrt(4 * math.log(25)), rel=1e-12)
        with pytest.raises(ValueError):
            minimax_radius(10, 0, 1.0)
        with pytest.raises(ValueError):
            minimax_radius(10, 10, 1.0)

    def test_chain_draw_count_validation(self):
        with pytest.raises(ValueError):
            McmcChain(draws_theta=np.zeros((3, 2)), draws_tau=np.zeros(3),
                      iterations=100, burn_in=0, thin=1, seed=0,
                      diagnostics={})


class TestMarginalsAndTruncnorm:
    def test_laplace_gaussian_marginal_quadrature(self):
        for y0, b in ((0.0, 1.0), (2.5, 1.0), (-4.0, 0.5), (1.0, 3.0)):
            direct = quad(
                lambda th: norm.pdf(y0 - th) * math.exp(-abs(th) / b) / (2 * b),
                -np.inf, np.inf, limit=400)[0]
            val = laplace_gaussian_log_marginal(np.array([y0]), b)[0]
            assert val == pytest.approx(math.log(direct), abs=1e-10), (y0, b)

    def test_marginal_integrates_to_one(self):
        total = quad(lambda y: math.exp(
            laplace_gaussian_log_marginal(np.array([y]), 1.0)[0]),
            -np.inf, np.inf, limit=400)[0]
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_truncnorm_ppf_matches_scipy(self):
        u = np.array([0.01, 0.3, 0.5, 0.9, 0.999])
        for mu in (-10.0, -2.0, 0.0, 3.0):
            mine = _truncnorm_ppf(u, np.full(u.size, mu))
            ref = truncnorm.ppf(u, -mu, np.inf, loc=mu)
            assert np.allclose(mine, ref, rtol=1e-9, atol=1e-12), mu
            assert np.all(mine > 0)


class TestEffectiveSampleSize:
    def test_iid_near_m(self):
        x = rng_stream(0, 1).standard_normal(20_000)
        ess = effective_sample_size(x)
        assert 0.8 * x.size < ess < 1.2 * x.size

    def test_ar1_reduction(self):
        rng = rng_stream(0, 2)
        rho, m = 0.9, 100_000
        x = np.empty(m)
        x[0] = rng.standard_normal()
        eps = rng.standard_normal(m) * math.sqrt(1 - rho * rho)
        for i in range(1, m):
            x[i] = rho * x[i - 1] + eps[i]
        ess = effective_sample_size(x)
        expect = m * (1 - rho) / (1 + rho)
        assert 0.7 * expect < ess < 1.4 * expect

    def test_constant_series(self):
        assert effective_sample_size(np.ones(100)) == 100.0


class TestBallMass:
    def test_gaussian_chain_mass(self):
        draws = rng_stream(1, 1).standard_normal((40_000, 1))
        chain = _chain_from_draws(draws)
        out = posterior_ball_mass(chain, SparseVector.zero(1), radius=1.0)
        expect = 2 * norm.cdf(1.0) - 1.0
        assert abs(out["mass"] - expect) < 4 * out["mcse"]
        assert 0 < out["mcse"] < 0.01

    def test_degenerate_masses(self):
        draws = np.zeros((100, 2))
        chain = _chain_from_draws(draws)
        assert posterior_ball_mass(chain, SparseVector.zero(2),
                                   radius=0.1)["mass"] == 1.0
        far = SparseVector(n=2, support=np.array([0]), values=np.array([9.0]))
        assert posterior_ball_mass(chain, far, radius=0.1)["mass"] == 0.0


class TestSamplerCorrectness:
    def test_plugin_lasso_1d_posterior_mean(self):
        # n=1 the posterior is N(y - theta, 1) x DE(theta; sqrt(tau/(2 lam))),
        # so the chain mean must match 1-d quadrature
        y0, lam, tau = 1.8, 0.5, 2.0
        b = math.sqrt(tau / (2 * lam))
        theta0 = SparseVector.zero(1)
        inst = NormalMeansInstance(n=1, theta0=theta0,
                                   y=np.array([y0]), seed=0)
        chain = gibbs_plugin_lasso(inst, lam=lam, tau_n=tau, iters=30_000,
                                   thin=2, seed=3)
        num = quad(lambda th: th * norm.pdf(y0 - th)
                   * math.exp(-abs(th) / b), -np.inf, np.inf, limit=400)[0]
        den = quad(lambda th: norm.pdf(y0 - th)
                   * math.exp(-abs(th) / b), -np.inf, np.inf, limit=400)[0]
        expect = num / den
        draws = chain.draws_theta[:, 0]
        se = draws.std(ddof=1) / math.sqrt(effective_sample_size(draws))
        assert abs(draws.mean() - expect) < 4 * se
        assert np.all(chain.draws_tau == tau)

    def test_spike_slab_inclusion_vs_enumeration(self):
        # n=3 allows exact posterior inclusion probabilities by summing the
        # 8 indicator configurations under the marginalized Beta weights
        prior = PointMassMixture(n=3)
        y = np.array([2.2, -0.3, 0.8])
        inst = NormalMeansInstance(n=3, theta0=SparseVector.zero(3), y=y,
                                   seed=0)
        log_m = laplace_gaussian_log_marginal(y, prior.slab_scale)
        log_phi = norm.logpdf(y)
        a, b = prior.beta_a, prior.beta_b

        def log_beta(x, w):
            return math.lgamma(x) + math.lgamma(w) - math.lgamma(x + w)

        weights = {}
        for mask in range(8):
            z = np.array([(mask >> j) & 1 for j in range(3)], dtype=bool)
            k = int(z.sum())
            lw = (log_beta(a + k, b + 3 - k) - log_beta(a, b)
                  + float(np.sum(np.where(z, log_m, log_phi))))
            weights[mask] = lw
        mx = max(weights.values())
        tot = sum(math.exp(v - mx) for v in weights.values())
        p1 = sum(math.exp(v - mx) for m, v in weights.items() if m & 1) / tot

        chain = gibbs_spike_slab(inst, prior, iters=40_000, thin=2, seed=5)
        inc = (chain.draws_theta[:, 0] != 0.0).astype(float)
        ess = effective_sample_size(inc)
        se = inc.std(ddof=1) / math.sqrt(max(ess, 1.0))
        assert abs(inc.mean() - p1) < 4 * se, (inc.mean(), p1, se)


class TestAverageBallMassAndCertificate:
    def test_average_ball_mass_aggregates(self):
        theta0 = SparseVector.zero(4)

        def run_chain(inst, chain_seed):
            draws = rng_stream(chain_seed, 9).standard_normal((500, 4)) * 0.1
            return _chain_from_draws(draws)

        out = average_ball_mass(run_chain, theta0, radius=0.5, replicates=5,
                                seed=2)
        assert out["masses"].shape == (5,)
        assert out["mean_mass"] == pytest.approx(float(out["masses"].mean()))
        assert out["se"] >= 0.0

    def test_certificate_exact_iid_normal(self):
        n, t, r = 100, 2.0, 10.0
        prior = GLPrior(global_=PluginDirac(1.0), local=DiracOne(), n=n)
        theta0 = SparseVector.zero(n)
        cert = ratio_certificate(prior, theta0, t, r)
        expect = (noncentral_chi2_logcdf(n, 0.0, t * t)
                  - noncentral_chi2_logcdf(n, 0.0, r * r) + r * r)
        assert cert.log_certificate == pytest.approx(expect, abs=1e-9)

    def test_certificate_validation(self):
        prior = GLPrior(global_=PluginDirac(1.0), local=DiracOne(), n=5)
        with pytest.raises(ValueError):
            ratio_certificate(prior, SparseVector.zero(5), t_n=2.0, r_n=1.0)
