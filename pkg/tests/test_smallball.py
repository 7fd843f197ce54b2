"""Tests for ball-mass estimators, exact reductions, simplex identities,
bound integrals, and rate fitting."""
import math

import numpy as np
import pytest
from scipy.integrate import quad

from shrinkball.priors import (
    DiracOne,
    Exponential,
    GLPrior,
    HalfCauchy,
    InverseGamma,
    PluginDirac,
    PointMassMixture,
    SparseVector,
    rng_stream,
)
from shrinkball.smallball import (
    BallQuery,
    FixedRadius,
    LogLaw,
    MinimaxLaw,
    PowerLaw,
    conditional_mc,
    dickey_reduce,
    dirichlet_reduce,
    global_only_exact,
    ig_global_reduction,
    lasso_lb_integral,
    lasso_ub_integral,
    naive_mc,
    rate_fit,
    shifted_ball_bounds,
)
from shrinkball.specfun import chi2_logcdf, noncentral_chi2_logcdf


def _ball(n, t, center=None):
    sv = SparseVector.zero(n) if center is None else center
    return BallQuery(center=sv, radius_t=t)


class TestBallQueryAndSchedules:
    def test_w_is_radius_squared(self):
        q = _ball(3, 1.5)
        assert q.w == pytest.approx(2.25, rel=1e-15)

    def test_negative_radius_rejected(self):
        with pytest.raises(ValueError):
            _ball(3, -0.1)

    def test_schedules(self):
        assert PowerLaw(0.5).radius(16) == pytest.approx(2.0, rel=1e-12)
        assert LogLaw(2.0).radius(10) == pytest.approx(
            math.sqrt(2 * math.log(10)), rel=1e-12)
        assert MinimaxLaw(q=4, A=1.0).radius(100) == pytest.approx(
            math.sqrt(4 * math.log(25)), rel=1e-12)
        assert FixedRadius(3.0).radius(999) == 3.0

    def test_schedule_validation(self):
        for bad in (lambda: PowerLaw(1.0), lambda: LogLaw(0.0),
                    lambda: MinimaxLaw(q=0, A=1.0), lambda: FixedRadius(0.0)):
            with pytest.raises(ValueError):
                bad()
        with pytest.raises(ValueError):
            MinimaxLaw(q=10, A=1.0).radius(5)


class TestEstimators:
    def test_conditional_exact_for_plugin_prior(self):
        # degenerate scales: the conditional probability is deterministic
        prior = GLPrior(global_=PluginDirac(1.0), local=DiracOne(), n=7)
        q = _ball(7, 2.0)
        est = conditional_mc(prior, q, scale_samples=100, rng=rng_stream(0, 1))
        assert est.log_p.value == pytest.approx(chi2_logcdf(7, 4.0), abs=1e-10)
        assert est.log_se < 1e-8

    def test_naive_vs_exact_gaussian(self):
        prior = GLPrior(global_=PluginDirac(1.0), local=DiracOne(), n=5)
        q = _ball(5, 2.0)
        est = naive_mc(prior, q, samples=400_000, rng=rng_stream(1, 1))
        assert abs(est.log_p.value - chi2_logcdf(5, 4.0)) < 3 * est.log_se

    def test_naive_zero_hits_flag(self):
        prior = GLPrior(global_=PluginDirac(1.0), local=DiracOne(), n=50)
        q = _ball(50, 1e-3)
        est = naive_mc(prior, q, samples=5_000, rng=rng_stream(2, 1))
        assert est.zero_hits
        assert est.log_p.value == -math.inf

    def test_estimator_agreement_randomized(self):
        # naive and conditional estimates agree within 3 combined SE across
        # randomized prior/ball configurations with at least 100 naive hits
        cfg_rng = np.random.default_rng(12345)
        checked = 0
        attempt = 0
        while checked < 20 and attempt < 200:
            attempt += 1
            n = int(cfg_rng.integers(4, 51))
            glob = [PluginDirac(float(cfg_rng.uniform(0.3, 2.0))),
                    HalfCauchy(1.0),
                    InverseGamma(2.0, 2.0),
                    Exponential(1.0)][attempt % 4]
            local = DiracOne() if attempt % 2 == 0 else Exponential(0.5)
            prior = GLPrior(global_=glob, local=local, n=n)
            q0 = int(cfg_rng.integers(0, 3))
            if q0:
                center = SparseVector(
                    n=n, support=np.arange(q0),
                    values=cfg_rng.normal(size=q0))
            else:
                center = SparseVector.zero(n)
            t = math.sqrt(n) * float(cfg_rng.uniform(0.7, 1.8)) + center.l2_norm
            q = BallQuery(center=center, radius_t=t)
            est_n = naive_mc(prior, q, samples=40_000, rng=rng_stream(3, attempt))
            hits = math.exp(est_n.log_p.value) * est_n.budget
            if hits < 100:
                continue
            est_c = conditional_mc(prior, q, scale_samples=600,
                                   rng=rng_stream(4, attempt))
            se = math.hypot(est_n.log_se, est_c.log_se)
            assert abs(est_n.log_p.value - est_c.log_p.value) < 3 * max(se, 1e-6), (
                f"config {attempt}: naive {est_n.log_p.value:.4f} vs "
                f"conditional {est_c.log_p.value:.4f}, se {se:.4f}")
            checked += 1
        assert checked == 20

    def test_monotone_in_radius(self):
        prior = GLPrior(global_=HalfCauchy(1.0), local=DiracOne(), n=10)
        vals = [global_only_exact(prior, _ball(10, t)).log_p.value
                for t in (0.5, 1.0, 2.0, 4.0, 8.0)]
        assert all(a <= b for a, b in zip(vals, vals[1:]))


class TestExactReductions:
    def test_global_only_matches_conditional(self):
        prior = GLPrior(global_=HalfCauchy(1.0), local=DiracOne(), n=12)
        center = SparseVector(n=12, support=np.array([0]),
                              values=np.array([1.5]))
        q = BallQuery(center=center, radius_t=2.5)
        exact = global_only_exact(prior, q)
        mc = conditional_mc(prior, q, scale_samples=4_000, rng=rng_stream(5, 1))
        assert abs(exact.log_p.value - mc.log_p.value) < 3 * max(mc.log_se, 1e-6)
        assert exact.method == "Exact1D"

    def test_global_only_rejects_nondegenerate_local(self):
        prior = GLPrior(global_=HalfCauchy(1.0), local=Exponential(0.5), n=5)
        with pytest.raises(ValueError):
            global_only_exact(prior, _ball(5, 1.0))

    def test_global_only_rejects_plugin(self):
        prior = GLPrior(global_=PluginDirac(1.0), local=DiracOne(), n=5)
        with pytest.raises(ValueError):
            global_only_exact(prior, _ball(5, 1.0))

    def test_ig_reduction_matches_generic_path(self):
        for n, alpha, beta, t in ((5, 2.0, 3.0, 1.0), (40, 1.0, 1.0, 3.0),
                                  (120, 3.0, 0.5, 0.2)):
            prior = GLPrior(global_=InverseGamma(alpha, beta),
                            local=DiracOne(), n=n)
            q = _ball(n, t)
            a = ig_global_reduction(alpha, beta, n, q).log_p.value
            b = global_only_exact(prior, q).log_p.value
            assert a == pytest.approx(b, abs=1e-6), (n, alpha, beta, t)

    def test_ig_reduction_rejects_noncentered(self):
        center = SparseVector(n=5, support=np.array([0]),
                              values=np.array([1.0]))
        with pytest.raises(ValueError):
            ig_global_reduction(2.0, 3.0, 5, BallQuery(center=center,
                                                       radius_t=1.0))


class TestShiftedBallBounds:
    def test_zero_center_collapses(self):
        lo, hi = shifted_ball_bounds(np.ones(4), SparseVector.zero(4), t=0.5)
        assert lo == 0.0 and hi == 0.0

    def test_doubling_center_quadruples_exponent(self):
        c1 = SparseVector(n=4, support=np.array([0]), values=np.array([8.0]))
        c2 = SparseVector(n=4, support=np.array([0]), values=np.array([16.0]))
        lo1, _ = shifted_ball_bounds(np.ones(4), c1, t=0.5)
        lo2, _ = shifted_ball_bounds(np.ones(4), c2, t=0.5)
        assert lo2 == pytest.approx(4 * lo1, rel=1e-12)

    def test_sandwich_against_exact_gaussian(self):
        # unit-variance Gaussian: both sides of the ratio are chi-square tails
        n, t = 5, 0.9
        center = SparseVector(n=n, support=np.array([0]),
                              values=np.array([4.0]))
        lo, hi = shifted_ball_bounds(np.ones(n), center, t=t)
        log_ratio = (noncentral_chi2_logcdf(n, 16.0, t * t)
                     - chi2_logcdf(n, t * t))
        assert lo <= log_ratio <= hi

    def test_sandwich_against_naive_mc(self):
        n, t = 5, 0.9
        center = SparseVector(n=n, support=np.array([0]),
                              values=np.array([4.0]))
        prior = GLPrior(global_=PluginDirac(1.0), local=DiracOne(), n=n)
        shifted = naive_mc(prior, BallQuery(center=center, radius_t=t),
                           samples=3_000_000, rng=rng_stream(6, 1))
        centered = chi2_logcdf(n, t * t)
        lo, hi = shifted_ball_bounds(np.ones(n), center, t=t)
        ratio = shifted.log_p.value - centered
        assert lo - 3 * shifted.log_se <= ratio <= hi + 3 * shifted.log_se

    def test_upper_factor_requires_conditions(self):
        center = SparseVector(n=3, support=np.array([0, 1]),
                              values=np.array([2.0, 2.0]))
        lo, hi = shifted_ball_bounds(np.array([1.0, 2.0, 3.0]), center, t=0.1)
        assert hi is None
        with pytest.raises(ValueError):
            shifted_ball_bounds(np.array([1.0, 2.0, 3.0]), center, t=0.1,
                                require_upper=True)

    def test_validation(self):
        with pytest.raises(ValueError):
            shifted_ball_bounds(np.array([1.0, -1.0]),
                                SparseVector.zero(2), t=0.5)
        with pytest.raises(ValueError):
            shifted_ball_bounds(np.ones(3), SparseVector.zero(2), t=0.5)


def _simplex_mc_dickey(q0, qs, draws, rng):
    """Importance-sampled simplex integral of prod x^{-1/2}/(q.x+q0)^{n/2-1}.

    Proposal: (x, 1-sum x) ~ Dirichlet(1/2,...,1/2, 1), which absorbs the
    x^{-1/2} singularities and leaves a bounded integrand.
    """
    qs = np.asarray(qs, dtype=float)
    n = qs.size
    g = rng.gamma(0.5, size=(draws, n))
    tail = rng.gamma(1.0, size=(draws, 1))
    x = g / (g.sum(axis=1, keepdims=True) + tail)
    vals = (x @ qs + q0) ** -(0.5 * n - 1.0)
    const = math.exp(n * math.lgamma(0.5) - math.lgamma(0.5 * n + 1.0))
    mean = float(vals.mean())
    se = float(vals.std(ddof=1)) / math.sqrt(draws)
    return const * mean, const * se


class TestSimplexReductions:
    def test_dirichlet_constant_h(self):
        assert dirichlet_reduce(lambda t: 1.0, (0.5, 0.5)) == pytest.approx(
            math.pi, rel=1e-9)

    def test_dirichlet_linear_h_closed_form(self):
        alphas = (0.7, 1.3, 2.0)
        a_sum = sum(alphas)
        expect = math.exp(sum(math.lgamma(a) for a in alphas)
                          - math.lgamma(a_sum)) / (a_sum + 1.0)
        assert dirichlet_reduce(lambda t: t, alphas) == pytest.approx(
            expect, rel=1e-9)

    def test_dirichlet_one_dimensional(self):
        assert dirichlet_reduce(lambda t: 1.0, (2.0,)) == pytest.approx(
            0.5, rel=1e-10)

    def test_dirichlet_matches_simplex_mc(self):
        # nonconstant h, checked against importance-sampled simplex MC
        alphas = np.array([0.5, 0.5, 0.5, 0.5])
        h = lambda t: 1.0 / (1.0 + t)
        exact = dirichlet_reduce(h, alphas)
        rng = rng_stream(7, 1)
        draws = 400_000
        g = rng.gamma(0.5, size=(draws, 4))
        tail = rng.gamma(1.0, size=(draws, 1))
        x = g / (g.sum(axis=1, keepdims=True) + tail)
        vals = 1.0 / (1.0 + x.sum(axis=1))
        const = math.exp(4 * math.lgamma(0.5) - math.lgamma(3.0))
        mc = const * float(vals.mean())
        se = const * float(vals.std(ddof=1)) / math.sqrt(draws)
        assert abs(exact - mc) < 3 * se

    def test_dirichlet_validation(self):
        with pytest.raises(ValueError):
            dirichlet_reduce(lambda t: 1.0, (0.5, -1.0))

    @pytest.mark.parametrize("n", [3, 4, 5, 6])
    def test_dickey_matches_simplex_mc(self, n):
        rng = rng_stream(8, n)
        q0 = 1.0
        qs = np.arange(1, n + 1, dtype=float)
        mc, se = _simplex_mc_dickey(q0, qs, draws=600_000, rng=rng)
        val = dickey_reduce(q0, qs)
        assert abs(val - mc) < 3 * se, (n, val, mc, se)

    def test_dickey_equal_weights_is_dirichlet(self):
        n, q0, qv = 4, 1.5, 2.0
        val = dickey_reduce(q0, np.full(n, qv))
        via_dirichlet = dirichlet_reduce(
            lambda t: (qv * t + q0) ** -(0.5 * n - 1.0), np.full(n, 0.5))
        assert val == pytest.approx(via_dirichlet, rel=1e-8)

    def test_dickey_homogeneity(self):
        n, c = 5, 3.0
        qs = np.array([1.0, 2.0, 0.5, 1.5, 4.0])
        base = dickey_reduce(1.0, qs)
        scaled = dickey_reduce(c, c * qs)
        assert scaled == pytest.approx(c ** (1.0 - 0.5 * n) * base, rel=1e-8)

    def test_dickey_validation(self):
        with pytest.raises(ValueError):
            dickey_reduce(1.0, np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            dickey_reduce(0.0, np.array([1.0, 2.0, 3.0]))


class TestLassoBoundIntegrals:
    def test_ub_quadrature_oracle(self):
        n, theta_sq, w = 7, 4.0, 0.25
        m = 0.5 * (n - 3.0)
        a = theta_sq / (math.pi * w)
        direct = quad(lambda p: (p / (p + a)) ** m * math.exp(-p),
                      0.0, np.inf, limit=400)[0]
        val = lasso_ub_integral(n, theta_sq, w)
        assert val.value == pytest.approx(math.log(direct), abs=1e-8)

    def test_ub_monotone_in_radius(self):
        vals = [lasso_ub_integral(51, 16.0, w).value
                for w in (0.1, 0.5, 2.0, 8.0)]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_lb_below_ub(self):
        lb = lasso_lb_integral(51, 16.0, 2.0)
        ub = lasso_ub_integral(51, 16.0, 2.0)
        assert lb.value < ub.value

    def test_lb_damping_scale(self):
        n = 100
        a = lasso_lb_integral(n, 4.0, 1.0, d2=1.0).value
        b = lasso_lb_integral(n, 4.0, 1.0, d2=2.0).value
        assert a - b == pytest.approx(math.sqrt(n), rel=1e-9)

    def test_validation(self):
        with pytest.raises(ValueError):
            lasso_ub_integral(2, 1.0, 1.0)
        with pytest.raises(ValueError):
            lasso_ub_integral(5, -1.0, 1.0)
        with pytest.raises(ValueError):
            lasso_lb_integral(51, 16.0, 1.0, c1=1.0)
        with pytest.raises(ValueError):
            lasso_lb_integral(51, 1e-6, 1.0)


class TestRateFit:
    def test_power_law_exact(self):
        pairs = [(n, -2.5 * math.log(n)) for n in (10, 30, 100, 300, 1000)]
        fit = rate_fit(pairs, "PowerOfN")
        assert fit["slope"] == pytest.approx(2.5, rel=1e-10)
        assert fit["r_squared"] == pytest.approx(1.0, abs=1e-12)

    def test_sqrt_law_exact(self):
        pairs = [(n, -3.0 * math.sqrt(n) - 1.0) for n in (10, 30, 100, 300)]
        fit = rate_fit(pairs, "SqrtN")
        assert fit["slope"] == pytest.approx(3.0, rel=1e-10)

    def test_log_law_exact(self):
        pairs = [(n, -float(n) ** 0.7) for n in (10, 30, 100, 300)]
        fit = rate_fit(pairs, "LogN")
        assert fit["slope"] == pytest.approx(0.7, rel=1e-10)

    def test_validation(self):
        with pytest.raises(ValueError):
            rate_fit([(10, -1.0), (20, -2.0)], "PowerOfN")
        with pytest.raises(ValueError):
            rate_fit([(10, -1.0), (10, -2.0), (30, -3.0), (40, -4.0)],
                     "PowerOfN")
        with pytest.raises(ValueError):
            rate_fit([(10, -1.0), (20, -1.0), (30, -1.0), (40, -1.0)],
                     "PowerOfN")
        with pytest.raises(ValueError):
            rate_fit([(10, -1.0), (20, -2.0), (30, -3.0), (40, -4.0)],
                     "CubeN")


class TestConcentrationContrast:
    def test_iid_normal_vs_point_mass(self):
        # 10-sparse unit-signal target in dimension 1000 with radius n^{1/4}:
        # the i.i.d. normal prior pays exponentially in n, a point-mass
        # mixture only in the sparsity
        n, q = 1000, 10
        t = float(n) ** 0.25
        log_p_iid = noncentral_chi2_logcdf(n, float(q), t * t)
        c = -log_p_iid / n
        assert c > 0

        # lower-bound the mixture's ball mass by the event {support equals
        # the target support, each slab coordinate within t/sqrt(q) of 1}
        prior = PointMassMixture(n=n)
        a, b = prior.beta_a, prior.beta_b
        log_support = (math.lgamma(a + q) + math.lgamma(b + n - q)
                       - math.lgamma(a + b + n)
                       - (math.lgamma(a) + math.lgamma(b)
                          - math.lgamma(a + b)))
        # coordinate window P(|X - 1| < half) for a standard Laplace slab
        from scipy.stats import laplace
        half = t / math.sqrt(q)
        p_coord = laplace.cdf(1.0 + half) - laplace.cdf(1.0 - half)
        log_p_mix = log_support + q * math.log(p_coord)
        c_prime = -log_p_mix / max(q, q * 1.0)  # ||theta0||_1 = q here
        assert c_prime > 0
        assert abs(log_p_iid) > 10 * abs(log_p_mix)
