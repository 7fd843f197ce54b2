"""Normal-means simulation, Gibbs samplers, and posterior ball-mass tools.

The observation model is y_i = theta_i + eps_i with standard Gaussian
noise.  Each sampler is expressed as a transition kernel with an explicit
prior-state sampler and data resampler, so the joint-distribution
(Geweke-style) correctness check can drive it directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special as sc

from .priors import (
    DiracOne,
    Exponential,
    GLPrior,
    PluginDirac,
    PointMassMixture,
    SparseVector,
    rng_stream,
    sample_scales,
)
from .smallball import BallQuery, ConcentrationEstimate, conditional_mc, global_only_exact
from .specfun import LogProb, noncentral_chi2_logcdf

__all__ = [
    "NormalMeansInstance",
    "McmcChain",
    "RatioCertificate",
    "simulate_data",
    "minimax_radius",
    "gibbs_bayes_lasso",
    "gibbs_global_only",
    "gibbs_plugin_lasso",
    "gibbs_spike_slab",
    "posterior_ball_mass",
    "ratio_certificate",
    "average_ball_mass",
    "effective_sample_size",
    "BayesLassoKernel",
    "GlobalOnlyKernel",
    "SpikeSlabKernel",
    "laplace_gaussian_log_marginal",
]


@dataclass(frozen=True)
class NormalMeansInstance:
    n: int
    theta0: SparseVector
    y: np.ndarray
    seed: int

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "y", y)
        if y.size != self.n or self.theta0.n != self.n:
            raise ValueError("dimension mismatch")


@dataclass(frozen=True)
class McmcChain:
    draws_theta: np.ndarray  # stored draws x n
    draws_tau: np.ndarray
    iterations: int
    burn_in: int
    thin: int
    seed: int
    diagnostics: dict

    def __post_init__(self):
        expected = -((self.burn_in - self.iterations) // self.thin)
        if self.draws_theta.shape[0] != expected:
            raise ValueError("stored draw count inconsistent with iteration plan")


@dataclass(frozen=True)
class RatioCertificate:
    t_n: float
    r_n: float
    log_p_small: LogProb
    log_p_big: LogProb
    log_certificate: float

    def __post_init__(self):
        if self.r_n <= self.t_n:
            raise ValueError("need r_n > t_n")


def simulate_data(theta0: SparseVector, seed: int) -> NormalMeansInstance:
    """y = theta0 + standard normal noise from the seeded stream."""
    rng = rng_stream(seed, 0)
    y = theta0.to_dense() + rng.standard_normal(theta0.n)
    return NormalMeansInstance(n=theta0.n, theta0=theta0, y=y, seed=seed)


def minimax_radius(n: int, q: int, A: float) -> float:
    """sqrt(A q log(n/q)), the q-sparse minimax l2 radius up to the constant A."""
    if not 1 <= q < n:
        raise ValueError("need 1 <= q < n")
    if A <= 0:
        raise ValueError("A must be positive")
    return math.sqrt(A * q * math.log(n / q))


# ---------------------------------------------------------------------------
# Slice sampler for the global scale on the log axis
# ---------------------------------------------------------------------------

def _slice_update(x0: float, log_target, rng: np.random.Generator,
                  step: float = 2.0, max_shrink: int = 1000) -> float:
    ly = log_target(x0) + math.log(rng.uniform())
    u = rng.uniform()
    left = x0 - step * u
    right = left + step
    for _ in range(200):
        if log_target(left) <= ly:
            break
        left -= step
    for _ in range(200):
        if log_target(right) <= ly:
            break
        right += step
    for _ in range(max_shrink):
        x1 = rng.uniform(left, right)
        if log_target(x1) > ly:
            return x1
        if x1 < x0:
            left = x1
        else:
            right = x1
    raise RuntimeError("slice sampler failed to accept after maximum shrinkage steps")


# ---------------------------------------------------------------------------
# Transition kernels
# ---------------------------------------------------------------------------

class BayesLassoKernel:
    """Systematic-scan Gibbs kernel for the exponential-local hierarchy.

    State is (theta, psi, tau).  Steps: conjugate theta update; local scales
    by the reciprocal inverse-Gaussian identity for GIG(1/2, 2*lambda,
    theta^2/tau); global scale by slice sampling on log(tau).  Either scale
    update can be frozen (the plug-in sampler freezes tau).
    """

    def __init__(self, n: int, lam: float, global_family, update_tau: bool = True,
                 update_psi: bool = True):
        if lam <= 0:
            raise ValueError("lambda must be positive")
        self.n = n
        self.lam = lam
        self.global_family = global_family
        self.update_tau = update_tau and not isinstance(global_family, PluginDirac)
        self.update_psi = update_psi

    def sample_prior_state(self, rng: np.random.Generator):
        prior = GLPrior(global_=self.global_family, local=Exponential(self.lam), n=self.n)
        tau, psi = sample_scales(prior, rng)
        theta = rng.standard_normal(self.n) * np.sqrt(psi * tau)
        return {"theta": theta, "psi": psi, "tau": tau}

    def resample_data(self, state, rng: np.random.Generator) -> np.ndarray:
        return state["theta"] + rng.standard_normal(self.n)

    def sweep(self, state, y: np.ndarray, rng: np.random.Generator):
        psi, tau = state["psi"], state["tau"]
        var = psi * tau
        kappa = var / (1.0 + var)
        theta = y * kappa + rng.standard_normal(self.n) * np.sqrt(kappa)

        if self.update_psi:
            theta_sq = np.maximum(theta ** 2, 1e-300)
            mu = np.sqrt(2.0 * self.lam * tau / theta_sq)
            psi = np.empty(self.n)
            direct = mu < 1e8
            if np.any(direct):
                v = rng.wald(mu[direct], 2.0 * self.lam)
                psi[direct] = 1.0 / np.maximum(v, 1e-300)
            if np.any(~direct):
                # theta essentially zero: GIG(1/2, 2*lambda, ~0) is Gamma(1/2, rate lambda)
                psi[~direct] = rng.gamma(0.5, 1.0 / self.lam, size=int(np.sum(~direct)))
            psi = np.maximum(psi, 1e-300)

        if self.update_tau:
            g = self.global_family
            th_sq_over_psi = float(np.sum(theta ** 2 / psi))

            def log_target(s):
                t = math.exp(s)
                ld = g.log_density(t)
                if not np.isfinite(ld):
                    return -math.inf
                return ld + s - 0.5 * self.n * s - 0.5 * th_sq_over_psi / t

            tau = math.exp(_slice_update(math.log(tau), log_target, rng))

        return {"theta": theta, "psi": psi, "tau": tau}


class GlobalOnlyKernel:
    """Gibbs kernel when psi_j = 1 for all j: conjugate theta update plus a
    slice update of the global scale."""

    def __init__(self, n: int, global_family):
        if not global_family.has_density:
            raise ValueError("global family must have a density")
        self.n = n
        self.global_family = global_family

    def sample_prior_state(self, rng: np.random.Generator):
        tau = self.global_family.sample(rng)
        theta = rng.standard_normal(self.n) * math.sqrt(tau)
        return {"theta": theta, "psi": np.ones(self.n), "tau": tau}

    def resample_data(self, state, rng: np.random.Generator) -> np.ndarray:
        return state["theta"] + rng.standard_normal(self.n)

    def sweep(self, state, y: np.ndarray, rng: np.random.Generator):
        tau = state["tau"]
        kappa = tau / (1.0 + tau)
        theta = y * kappa + rng.standard_normal(self.n) * math.sqrt(kappa)
        g = self.global_family
        th_sq = float(np.sum(theta ** 2))

        def log_target(s):
            t = math.exp(s)
            ld = g.log_density(t)
            if not np.isfinite(ld):
                return -math.inf
            return ld + s - 0.5 * self.n * s - 0.5 * th_sq / t

        tau = math.exp(_slice_update(math.log(tau), log_target, rng))
        return {"theta": theta, "psi": state["psi"], "tau": tau}


def laplace_gaussian_log_marginal(y, scale: float = 1.0):
    """ln int N(y; theta, 1) DE(theta; scale) dtheta, elementwise."""
    y = np.asarray(y, dtype=float)
    b = scale
    base = -math.log(2.0 * b) + 0.5 / (b * b)
    t_plus = base - y / b + sc.log_ndtr(y - 1.0 / b)
    t_minus = base + y / b + sc.log_ndtr(-y - 1.0 / b)
    return np.logaddexp(t_plus, t_minus)


class SpikeSlabKernel:
    """Blocked Gibbs for the point-mass mixture: inclusion indicators from
    the marginal likelihood ratio, slab coordinates from the two-piece
    Laplace-Gaussian posterior, and conjugate Beta update for pi."""

    def __init__(self, prior: PointMassMixture):
        self.prior = prior
        self.n = prior.n

    def sample_prior_state(self, rng: np.random.Generator):
        p = self.prior
        pi = rng.beta(p.beta_a, p.beta_b)
        z = rng.uniform(size=self.n) < pi
        theta = np.zeros(self.n)
        k = int(z.sum())
        if k:
            theta[z] = rng.laplace(scale=p.slab_scale, size=k)
        return {"theta": theta, "z": z, "pi": pi}

    def resample_data(self, state, rng: np.random.Generator) -> np.ndarray:
        return state["theta"] + rng.standard_normal(self.n)

    def _sample_slab_posterior(self, y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        b = self.prior.slab_scale
        lw_plus = -y / b + sc.log_ndtr(y - 1.0 / b)
        lw_minus = y / b + sc.log_ndtr(-y - 1.0 / b)
        p_plus = sc.expit(lw_plus - lw_minus)
        take_plus = rng.uniform(size=y.size) < p_plus
        out = np.empty(y.size)
        u = rng.uniform(size=y.size)
        if np.any(take_plus):
            mu = y[take_plus] - 1.0 / b
            out[take_plus] = _truncnorm_ppf(u[take_plus], mu)
        if np.any(~take_plus):
            mu = y[~take_plus] + 1.0 / b
            out[~take_plus] = -_truncnorm_ppf(u[~take_plus], -mu)
        return out

    def sweep(self, state, y: np.ndarray, rng: np.random.Generator):
        p = self.prior
        pi = state["pi"]
        log_m = laplace_gaussian_log_marginal(y, p.slab_scale)
        log_phi = -0.5 * y * y - 0.5 * math.log(2.0 * math.pi)
        log_odds = math.log(pi) - math.log1p(-pi) + log_m - log_phi
        z = rng.uniform(size=self.n) < sc.expit(log_odds)
        theta = np.zeros(self.n)
        if np.any(z):
            theta[z] = self._sample_slab_posterior(y[z], rng)
        k = int(z.sum())
        pi = rng.beta(p.beta_a + k, p.beta_b + self.n - k)
        return {"theta": theta, "z": z, "pi": pi}


def _truncnorm_ppf(u: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Inverse CDF of N(mu, 1) truncated to (0, inf), evaluated at u.

    Inverting through the survival function keeps the far-left case
    (mu << 0, where the truncated mass hugs 0) accurate: the quantile
    solves SF(x - mu) = (1 - u) Phi(mu).
    """
    log_target = np.log1p(-u) + sc.log_ndtr(mu)
    return mu - sc.ndtri_exp(np.minimum(log_target, 0.0))


# ---------------------------------------------------------------------------
# Chain drivers
# ---------------------------------------------------------------------------

def _run_chain(kernel, init_state, y: np.ndarray, iters: int, burn_in: int,
               thin: int, seed: int, extra_stats=None) -> McmcChain:
    if iters < burn_in:
        raise ValueError("iterations must be >= burn_in")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    rng = rng_stream(seed, 1)
    state = init_state
    kept_theta = []
    kept_tau = []
    for it in range(iters):
        state = kernel.sweep(state, y, rng)
        if it >= burn_in and (it - burn_in) % thin == 0:
            kept_theta.append(state["theta"].copy())
            kept_tau.append(float(state.get("tau", state.get("pi", math.nan))))
    draws = np.asarray(kept_theta)
    taus = np.asarray(kept_tau)
    diagnostics = {
        "ess_theta1": effective_sample_size(draws[:, 0]),
        "ess_tau": effective_sample_size(taus),
        "ess_norm_sq": effective_sample_size(np.sum(draws ** 2, axis=1)),
    }
    return McmcChain(draws_theta=draws, draws_tau=taus, iterations=iters,
                     burn_in=burn_in, thin=thin, seed=seed, diagnostics=diagnostics)


def gibbs_bayes_lasso(inst: NormalMeansInstance, lam: float, global_family,
                      iters: int, burn_in: int | None = None, thin: int = 5,
                      seed: int = 0) -> McmcChain:
    """Posterior sampler for the exponential-local (Bayesian lasso) prior."""
    if burn_in is None:
        burn_in = iters // 5
    kernel = BayesLassoKernel(inst.n, lam, global_family)
    tau0 = global_family.tau_n if isinstance(global_family, PluginDirac) else 1.0
    init = {"theta": inst.y / 2.0, "psi": np.ones(inst.n), "tau": tau0}
    return _run_chain(kernel, init, inst.y, iters, burn_in, thin, seed)


def gibbs_global_only(inst: NormalMeansInstance, global_family, iters: int,
                      burn_in: int | None = None, thin: int = 5,
                      seed: int = 0) -> McmcChain:
    """Posterior sampler when only the global scale is random (psi_j = 1)."""
    if burn_in is None:
        burn_in = iters // 5
    kernel = GlobalOnlyKernel(inst.n, global_family)
    init = {"theta": inst.y / 2.0, "psi": np.ones(inst.n), "tau": 1.0}
    return _run_chain(kernel, init, inst.y, iters, burn_in, thin, seed)


def gibbs_plugin_lasso(inst: NormalMeansInstance, lam: float, tau_n: float,
                       iters: int, burn_in: int | None = None, thin: int = 5,
                       seed: int = 0) -> McmcChain:
    """Bayesian lasso with the deterministic plug-in global scale tau_n."""
    if tau_n <= 0:
        raise ValueError("tau_n must be positive")
    if burn_in is None:
        burn_in = iters // 5
    kernel = BayesLassoKernel(inst.n, lam, PluginDirac(tau_n))
    init = {"theta": inst.y / 2.0, "psi": np.ones(inst.n), "tau": tau_n}
    return _run_chain(kernel, init, inst.y, iters, burn_in, thin, seed)


def gibbs_spike_slab(inst: NormalMeansInstance, prior: PointMassMixture,
                     iters: int, burn_in: int | None = None, thin: int = 5,
                     seed: int = 0) -> McmcChain:
    """Blocked Gibbs sampler for the point-mass mixture prior."""
    if burn_in is None:
        burn_in = iters // 5
    kernel = SpikeSlabKernel(prior)
    init = {"theta": np.zeros(inst.n), "z": np.zeros(inst.n, dtype=bool), "pi": 0.5}
    return _run_chain(kernel, init, inst.y, iters, burn_in, thin, seed)


# ---------------------------------------------------------------------------
# Posterior summaries
# ---------------------------------------------------------------------------

def effective_sample_size(x: np.ndarray) -> float:
    """ESS from the initial-positive-sequence autocorrelation estimate."""
    x = np.asarray(x, dtype=float)
    m = x.size
    if m < 4:
        return float(m)
    x = x - x.mean()
    var = float(np.dot(x, x)) / m
    if var == 0.0:
        return float(m)
    # autocovariance via FFT, then the initial positive sequence truncation
    nfft = 1 << (2 * m - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:m].real / m
    rho = acov / acov[0]
    neg = np.nonzero(rho[1:m // 2] <= 0.0)[0]
    stop = (neg[0] + 1) if neg.size else m // 2
    return float(m / (1.0 + 2.0 * float(np.sum(rho[1:stop]))))


def posterior_ball_mass(chain: McmcChain, theta0: SparseVector, radius: float):
    """Fraction of stored draws inside the ball, with batch-means MCSE."""
    draws = chain.draws_theta
    if draws.size == 0:
        raise ValueError("chain is empty")
    dist2 = np.sum((draws - theta0.to_dense()) ** 2, axis=1)
    inside = (dist2 <= radius * radius).astype(float)
    mass = float(inside.mean())
    m = inside.size
    n_batch = max(2, int(math.sqrt(m)))
    usable = (m // n_batch) * n_batch
    batches = inside[:usable].reshape(n_batch, -1).mean(axis=1)
    mcse = float(batches.std(ddof=1) / math.sqrt(n_batch)) if n_batch > 1 else math.inf
    return {"mass": mass, "mcse": mcse}


def average_ball_mass(run_chain, theta0: SparseVector, radius: float,
                      replicates: int, seed: int):
    """Replicate-averaged posterior ball mass (the outer expectation over y).

    ``run_chain(inst, chain_seed)`` must return an McmcChain; each replicate
    simulates fresh data on its own stream.
    """
    masses = []
    for r in range(replicates):
        inst = simulate_data(theta0, seed * 10_000 + r)
        chain = run_chain(inst, seed * 10_000 + r)
        masses.append(posterior_ball_mass(chain, theta0, radius)["mass"])
    masses = np.asarray(masses)
    se = float(masses.std(ddof=1) / math.sqrt(replicates)) if replicates > 1 else math.inf
    return {"mean_mass": float(masses.mean()), "se": se, "masses": masses}


def ratio_certificate(prior, theta0: SparseVector, t_n: float, r_n: float,
                      budget: int = 2000, seed: int = 0) -> RatioCertificate:
    """Evidence value log P(small) - log P(big) + r_n^2 from the best
    available prior-mass estimator; a run toward -inf across n indicates a
    posterior that cannot keep mass on the small ball."""
    if r_n <= t_n:
        raise ValueError("need r_n > t_n")

    def best(radius: float) -> LogProb:
        q = BallQuery(center=theta0, radius_t=radius)
        if isinstance(prior, GLPrior) and isinstance(prior.local, DiracOne):
            if isinstance(prior.global_, PluginDirac):
                tau = prior.global_.tau_n
                val = noncentral_chi2_logcdf(prior.n, theta0.l2_norm ** 2 / tau,
                                             q.w / tau)
                return LogProb(val, "exact")
            return global_only_exact(prior, q).log_p
        rng = rng_stream(seed, 7)
        return conditional_mc(prior, q, budget, rng).log_p

    lp_small = best(t_n)
    lp_big = best(r_n)
    cert = lp_small.value - lp_big.value + r_n * r_n
    return RatioCertificate(t_n=t_n, r_n=r_n, log_p_small=lp_small,
                            log_p_big=lp_big, log_certificate=cert)
