"""Prior ball-probability estimators and analytic bound evaluators.

Three routes to P(||theta - theta0||_2 < t) under a global-local or
spike-and-slab prior:

* ``naive_mc``        -- brute-force hit counting (the universal oracle);
* ``conditional_mc``  -- average over sampled scales of the exactly computed
                         conditional Gaussian ball probability, which removes
                         the inner-level MC variance entirely;
* ``global_only_exact`` / ``ig_global_reduction`` -- one-dimensional exact
                         reductions available when only a global scale is
                         present.

The bound evaluators expose every unspecified constant as a parameter;
asymptotic statements are checked downstream by fitting a constant at a
small n and verifying non-violation at larger n.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.integrate import quad

from .priors import (
    DiracOne,
    Exponential,
    GLPrior,
    PluginDirac,
    PointMassMixture,
    SparseVector,
    sample_scales,
)
from .specfun import (
    LogProb,
    ResolutionError,
    WeightedChiSquareSpec,
    log_mean_exp,
    noncentral_chi2_logcdf,
    weighted_noncentral_chi2_logcdf,
)

__all__ = [
    "BallQuery",
    "PowerLaw",
    "LogLaw",
    "MinimaxLaw",
    "FixedRadius",
    "ConcentrationEstimate",
    "naive_mc",
    "conditional_mc",
    "global_only_exact",
    "ig_global_reduction",
    "shifted_ball_bounds",
    "dirichlet_reduce",
    "dickey_reduce",
    "lasso_ub_integral",
    "lasso_lb_integral",
    "rate_fit",
]


@dataclass(frozen=True)
class BallQuery:
    """An l2 ball: center theta0 and radius t (w = t^2 is carried along)."""

    center: SparseVector
    radius_t: float
    w: float = field(init=False)

    def __post_init__(self):
        if self.radius_t < 0:
            raise ValueError("radius must be nonnegative")
        object.__setattr__(self, "w", float(self.radius_t) ** 2)


# --- radius schedules ------------------------------------------------------

@dataclass(frozen=True)
class PowerLaw:
    """t(n) = n^(delta/2) with delta in (0, 1)."""

    delta: float

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")

    def radius(self, n: int) -> float:
        return float(n) ** (0.5 * self.delta)


@dataclass(frozen=True)
class LogLaw:
    """t(n) = sqrt(A log n)."""

    A: float

    def __post_init__(self):
        if self.A <= 0:
            raise ValueError("A must be positive")

    def radius(self, n: int) -> float:
        return math.sqrt(self.A * math.log(n))


@dataclass(frozen=True)
class MinimaxLaw:
    """t(n) = sqrt(A q log(n/q)), the q-sparse minimax radius."""

    q: int
    A: float

    def __post_init__(self):
        if self.q < 1 or self.A <= 0:
            raise ValueError("need q >= 1 and A > 0")

    def radius(self, n: int) -> float:
        if n <= self.q:
            raise ValueError("need n > q")
        return math.sqrt(self.A * self.q * math.log(n / self.q))


@dataclass(frozen=True)
class FixedRadius:
    t: float

    def __post_init__(self):
        if self.t <= 0:
            raise ValueError("t must be positive")

    def radius(self, n: int) -> float:
        return self.t


RadiusSchedule = PowerLaw | LogLaw | MinimaxLaw | FixedRadius


@dataclass(frozen=True)
class ConcentrationEstimate:
    log_p: LogProb
    log_se: float
    method: str  # Exact1D | ConditionalMC | NaiveMC | BoundUpper | BoundLower
    budget: int
    n_failures: int = 0
    zero_hits: bool = False


# ---------------------------------------------------------------------------
# Monte Carlo estimators
# ---------------------------------------------------------------------------

_NAIVE_BATCH = 20_000


def naive_mc(prior, q: BallQuery, samples: int, rng: np.random.Generator) -> ConcentrationEstimate:
    """Brute-force fraction of prior draws falling inside the ball.

    Draws are generated in fixed-size batches on child streams spawned from
    ``rng``, so the result does not depend on how batches are scheduled.
    """
    if samples < 1_000:
        raise ValueError("samples must be >= 1000")
    theta0 = q.center.to_dense()
    n = theta0.size
    hits = 0
    done = 0
    n_batches = (samples + _NAIVE_BATCH - 1) // _NAIVE_BATCH
    streams = rng.spawn(n_batches)
    for b, sub in enumerate(streams):
        size = min(_NAIVE_BATCH, samples - done)
        if isinstance(prior, GLPrior):
            tau = np.array([prior.global_.sample(sub) for _ in range(size)])
            if isinstance(prior.local, DiracOne):
                psi = np.ones((size, n))
            else:
                psi = sub.exponential(1.0 / prior.local.rate, size=(size, n))
            theta = sub.standard_normal((size, n)) * np.sqrt(psi * tau[:, None])
        elif isinstance(prior, PointMassMixture):
            pi = sub.beta(prior.beta_a, prior.beta_b, size=size)
            include = sub.uniform(size=(size, n)) < pi[:, None]
            theta = np.where(include, sub.laplace(scale=prior.slab_scale, size=(size, n)), 0.0)
        else:
            raise TypeError(f"unsupported prior {prior!r}")
        dist2 = np.sum((theta - theta0) ** 2, axis=1)
        hits += int(np.sum(dist2 < q.w))
        done += size
    if hits == 0:
        return ConcentrationEstimate(LogProb(-math.inf, "naive_mc"), math.inf,
                                     "NaiveMC", samples, zero_hits=True)
    p = hits / samples
    log_se = math.sqrt((1.0 - p) / (p * samples))
    return ConcentrationEstimate(LogProb(math.log(p), "naive_mc"), log_se, "NaiveMC", samples)


def _conditional_log_prob(prior: GLPrior, q: BallQuery, tau: float, psi: np.ndarray) -> LogProb:
    theta0 = q.center.to_dense()
    variances = psi * tau
    if isinstance(prior.local, DiracOne):
        # equal weights: exact (non)central chi-square reduction
        ncp = float(np.sum(theta0 ** 2)) / tau
        return LogProb(noncentral_chi2_logcdf(prior.n, ncp, q.w / tau), "exact")
    with np.errstate(divide="ignore"):
        d2 = np.where(theta0 == 0.0, 0.0, theta0 ** 2 / variances)
    spec = WeightedChiSquareSpec(weights=variances, noncentralities=d2, threshold=q.w)
    return weighted_noncentral_chi2_logcdf(spec)


def conditional_mc(prior: GLPrior, q: BallQuery, scale_samples: int,
                   rng: np.random.Generator,
                   max_failure_frac: float = 0.01) -> ConcentrationEstimate:
    """Rao-Blackwellized estimate: sample scales, compute the conditional
    Gaussian ball probability exactly, and log-average.

    The standard error is a delete-1 jackknife on the log scale.  Draws on
    which the conditional CDF cannot be resolved are dropped and counted;
    more than ``max_failure_frac`` of them is an error.
    """
    if scale_samples < 100:
        raise ValueError("scale_samples must be >= 100")
    if q.w == 0.0:
        return ConcentrationEstimate(LogProb(-math.inf, "exact"), 0.0,
                                     "ConditionalMC", scale_samples)
    vals = []
    failures = 0
    for _ in range(scale_samples):
        tau, psi = sample_scales(prior, rng)
        try:
            vals.append(_conditional_log_prob(prior, q, tau, psi).value)
        except ResolutionError:
            failures += 1
    if failures > max_failure_frac * scale_samples:
        raise ResolutionError(
            f"{failures}/{scale_samples} conditional CDF evaluations failed")
    vals = np.asarray(vals)
    log_p = log_mean_exp(vals)
    log_se = _jackknife_log_se(vals)
    return ConcentrationEstimate(LogProb(log_p, "conditional_mc"), log_se,
                                 "ConditionalMC", scale_samples, n_failures=failures)


def _jackknife_log_se(vals: np.ndarray) -> float:
    k = vals.size
    if k < 2:
        return math.inf
    from scipy.special import logsumexp

    total = logsumexp(vals)
    if math.isinf(total):
        return math.inf
    rel = vals - total
    with np.errstate(divide="ignore", invalid="ignore"):
        loo = total + np.log1p(-np.exp(rel)) - math.log(k - 1)
    if not np.all(np.isfinite(loo)):
        return math.inf
    return float(math.sqrt((k - 1) / k * np.sum((loo - loo.mean()) ** 2)))


# ---------------------------------------------------------------------------
# Exact one-dimensional reductions (global-scale-only priors)
# ---------------------------------------------------------------------------

def _log_quad_max_shift(log_f, lo: float, hi: float, interior_points=(),
                        coarse: int = 400) -> float:
    """log of int_lo^hi exp(log_f(s)) ds via max-shifted adaptive quadrature."""
    grid = np.linspace(lo, hi, coarse)
    if interior_points:
        grid = np.sort(np.concatenate([grid, np.asarray(interior_points)]))
    vals = np.array([log_f(s) for s in grid])
    if not np.any(np.isfinite(vals)):
        return -math.inf
    i = int(np.nanargmax(vals))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, grid.size - 1)]
    res = optimize.minimize_scalar(lambda s: -log_f(s), bounds=(a, b), method="bounded",
                                   options={"xatol": 1e-10})
    s_max, f_max = float(res.x), float(-res.fun)
    if vals[i] > f_max:
        s_max, f_max = float(grid[i]), float(vals[i])
    # integration window: where the integrand is within e^-80 of its peak,
    # padded by one grid cell so rising/falling edges are not clipped
    live = vals > f_max - 80.0
    w_lo = grid[max(int(np.argmax(live)) - 1, 0)]
    w_hi = grid[min(grid.size - np.argmax(live[::-1]), grid.size - 1)]
    w_lo = min(w_lo, s_max)
    w_hi = max(w_hi, s_max)

    def g(s):
        v = log_f(s) - f_max
        return math.exp(v) if v > -700 else 0.0

    total = 0.0
    for aa, bb in ((w_lo, s_max), (s_max, w_hi)):
        if bb > aa:
            total += quad(g, aa, bb, limit=400, epsabs=1e-14, epsrel=1e-10)[0]
    if total <= 0.0:
        return -math.inf
    return f_max + math.log(total)


def global_only_exact(prior: GLPrior, q: BallQuery, quad_points: int = 400) -> ConcentrationEstimate:
    """P(ball) = int g(tau) P(chi-square ball | tau) dtau for DiracOne locals.

    One-dimensional log-domain quadrature over log(tau); the inner
    probability is the exact (non)central chi-square left tail.
    """
    if not isinstance(prior.local, DiracOne):
        raise ValueError("global_only_exact requires the DiracOne local family")
    if not prior.global_.has_density:
        raise ValueError("global family must have a density (PluginDirac is exact by itself)")
    if q.w == 0.0:
        return ConcentrationEstimate(LogProb(-math.inf, "exact"), 0.0, "Exact1D", quad_points)
    n = prior.n
    theta0_sq = q.center.l2_norm ** 2
    g = prior.global_

    def log_f(s):
        tau = math.exp(s)
        ld = g.log_density(tau)
        if not np.isfinite(ld):
            return -math.inf
        inner = noncentral_chi2_logcdf(n, theta0_sq / tau, q.w / tau)
        return ld + inner + s  # + s is the log-scale Jacobian

    val = _log_quad_max_shift(log_f, -60.0, 60.0, coarse=max(quad_points, 100))
    return ConcentrationEstimate(LogProb(min(val, 0.0), "exact1d"), 0.0, "Exact1D", quad_points)


def ig_global_reduction(alpha: float, beta: float, n: int, q: BallQuery,
                        quad_points: int = 400) -> ConcentrationEstimate:
    """Closed-form 1-d reduction of the centered ball mass under an
    inverse-gamma global scale, obtained by swapping the order of the
    tau and simplex integrals."""
    if alpha <= 0 or beta <= 0:
        raise ValueError("alpha and beta must be positive")
    if q.center.q != 0:
        raise ValueError("the inverse-gamma reduction requires a ball centered at zero")
    w = q.w
    if w == 0.0:
        return ConcentrationEstimate(LogProb(-math.inf, "exact"), 0.0, "Exact1D", quad_points)
    half_n = 0.5 * n
    log_const = (alpha * math.log(beta) - math.lgamma(alpha) + alpha * math.log(2.0)
                 + half_n * math.log(w) + math.lgamma(half_n + alpha) - math.lgamma(half_n))

    def log_f(t):
        if t <= 0.0:
            return -math.inf
        return (half_n - 1.0) * math.log(t) - (half_n + alpha) * math.log(2.0 * beta + w * t)

    # interior maximum of the integrand, clipped to the unit interval
    t_star = min(1.0, (half_n - 1.0) * 2.0 * beta / (w * (alpha + 1.0))) if half_n > 1 else 1.0
    log_j = _log_quad_max_shift(log_f, 1e-12, 1.0, interior_points=(t_star,),
                                coarse=max(quad_points, 100))
    val = min(0.0, log_const + log_j)
    return ConcentrationEstimate(LogProb(val, "exact1d"), 0.0, "Exact1D", quad_points)


# ---------------------------------------------------------------------------
# Lemma evaluators
# ---------------------------------------------------------------------------

def shifted_ball_bounds(sigma_diag, theta0: SparseVector, t: float,
                        require_upper: bool = False):
    """Log factors bracketing P(shifted ball) / P(centered ball) for a
    diagonal Gaussian with variances ``sigma_diag``.

    Lower factor -H/2 always holds; upper factor -H/4 requires a single
    nonzero entry (or equal variances) and t < ||theta0||_2 / 4, where
    H = sum_j theta0_j^2 / sigma_j^2.
    """
    sigma_diag = np.asarray(sigma_diag, dtype=float)
    if np.any(sigma_diag <= 0):
        raise ValueError("variances must be strictly positive")
    if sigma_diag.size != theta0.n:
        raise ValueError("dimension mismatch")
    theta = theta0.to_dense()
    h2 = float(np.sum(theta ** 2 / sigma_diag))
    if h2 == 0.0:
        return 0.0, 0.0  # shifted and centered balls coincide
    log_lower = -0.5 * h2
    upper_ok = ((theta0.q <= 1 or np.allclose(sigma_diag, sigma_diag[0]))
                and t < 0.25 * theta0.l2_norm)
    if upper_ok:
        log_upper = -0.25 * h2
    else:
        if require_upper:
            raise ValueError(
                "upper factor needs a single nonzero entry (or equal variances) "
                "and t < ||theta0||_2 / 4")
        log_upper = None
    return log_lower, log_upper


def dirichlet_reduce(h, alphas) -> float:
    """Simplex integral int_{sum x <= 1} h(sum x) prod x_j^(a_j - 1) dx
    collapsed to one dimension."""
    alphas = np.asarray(alphas, dtype=float)
    if np.any(alphas <= 0):
        raise ValueError("alphas must be positive")
    a_sum = float(np.sum(alphas))
    log_c = float(np.sum([math.lgamma(a) for a in alphas]) - math.lgamma(a_sum))
    val, err = quad(lambda t: h(t) * t ** (a_sum - 1.0), 0.0, 1.0,
                    limit=400, epsabs=1e-12, epsrel=1e-10)
    if not math.isfinite(val) or (abs(val) > 0 and err > 1e-6 * abs(val) + 1e-12):
        raise RuntimeError("quadrature failed to converge in dirichlet_reduce")
    return math.exp(log_c) * val


def dickey_reduce(q0: float, qs) -> float:
    """Simplex integral int prod x_j^{-1/2} / [sum q_j x_j + q0]^{n/2-1} dx
    collapsed to one dimension."""
    qs = np.asarray(qs, dtype=float)
    n = qs.size
    if n < 3:
        raise ValueError("need at least 3 coordinates")
    if q0 <= 0 or np.any(qs <= 0):
        raise ValueError("all q values must be positive")
    log_c = (n * math.lgamma(0.5) - math.lgamma(0.5 * n)
             + math.log(q0) + math.log(0.5 * n - 1.0))

    def f(x):
        return math.exp((0.5 * n - 2.0) * math.log(x) + math.log1p(-x)
                        - 0.5 * float(np.sum(np.log(qs * x + q0)))) if 0 < x < 1 else 0.0

    val, err = quad(f, 0.0, 1.0, limit=400, epsabs=1e-12, epsrel=1e-10)
    if not math.isfinite(val) or (abs(val) > 0 and err > 1e-6 * abs(val) + 1e-12):
        raise RuntimeError("quadrature failed to converge in dickey_reduce")
    return math.exp(log_c) * val


# ---------------------------------------------------------------------------
# Exponential-local (Bayesian lasso) bound evaluators
# ---------------------------------------------------------------------------

def _log_psi_integral(m: float, a: float, lower: float) -> float:
    """log int_lower^inf [psi/(psi+a)]^m e^-psi dpsi."""
    if m < 0:
        raise ValueError("m must be nonnegative")

    def log_f(psi):
        if psi <= 0.0:
            return -math.inf if m > 0 else -psi
        return m * (math.log(psi) - math.log(psi + a)) - psi

    if m == 0.0:
        return -lower  # plain exponential integral
    psi_star = 0.5 * (-a + math.sqrt(a * a + 4.0 * m * a))
    psi_star = max(psi_star, lower + 1e-12)
    hi = psi_star + 60.0 + 12.0 * math.sqrt(max(m, 1.0))
    return _log_quad_max_shift(log_f, max(lower, 1e-300), hi,
                               interior_points=(psi_star,), coarse=600)


def lasso_ub_integral(n: int, theta0_norm2_sq: float, w: float,
                      c_upper: float = 1.0) -> LogProb:
    """Upper bound (up to the constant ``c_upper``) on the noncentered ball
    mass under an exponential local family, as a 1-d integral over the
    signal coordinate's local scale.

    The value is a guaranteed upper bound (for a suitable constant) when the
    radius satisfies sqrt(w) < ||theta0||_2 / 4; outside that regime the
    integral is still well defined and the CLI emits a warning instead.
    """
    if n < 3:
        raise ValueError("n must be >= 3")
    if theta0_norm2_sq <= 0 or w <= 0:
        raise ValueError("theta0_norm2_sq and w must be positive")
    m = 0.5 * (n - 3.0)
    a = theta0_norm2_sq / (math.pi * w)
    val = math.log(c_upper) + _log_psi_integral(m, a, 0.0)
    return LogProb(min(val, 0.0), method="bound_upper")


def lasso_lb_integral(n: int, theta0_norm2_sq: float, v: float,
                      c1: float = 2.0, d2: float = 1.0,
                      c_lower: float = 1.0) -> LogProb:
    """Lower bound companion: same integrand restricted to
    psi >= c1 ||theta0||_2^2, damped by e^{-d2 sqrt(n)}."""
    if n < 3:
        raise ValueError("n must be >= 3")
    if c1 < 2.0:
        raise ValueError("c1 must be >= 2")
    if d2 <= 0:
        raise ValueError("d2 must be positive")
    if theta0_norm2_sq < 1.0 / n:
        raise ValueError("bound requires ||theta0||_2 >= 1/sqrt(n)")
    m = 0.5 * (n - 3.0)
    a = theta0_norm2_sq / (math.pi * v)
    lower = c1 * theta0_norm2_sq
    val = math.log(c_lower) - d2 * math.sqrt(n) + _log_psi_integral(m, a, lower)
    return LogProb(min(val, 0.0), method="bound_lower")


# ---------------------------------------------------------------------------
# Rate fitting
# ---------------------------------------------------------------------------

def rate_fit(pairs, model: str):
    """Least-squares slope of the decay of log_p against the model regressor.

    PowerOfN: -log_p ~ slope * log(n);  SqrtN: -log_p ~ slope * sqrt(n);
    LogN: log(-log_p) ~ slope * log(n), i.e. the exponent k in -log_p ~ C n^k.
    Returns ``{"slope", "r_squared"}``.
    """
    pairs = list(pairs)
    if len(pairs) < 4:
        raise ValueError("need at least 4 points")
    ns = np.array([p[0] for p in pairs], dtype=float)
    lp = np.array([p[1] for p in pairs], dtype=float)
    if np.any(np.diff(ns) <= 0):
        raise ValueError("n must be strictly increasing")
    if np.allclose(lp, lp[0]):
        raise ValueError("degenerate fit: all log-probabilities equal")
    if model == "PowerOfN":
        x, y = np.log(ns), -lp
    elif model == "SqrtN":
        x, y = np.sqrt(ns), -lp
    elif model == "LogN":
        if np.any(lp >= 0):
            raise ValueError("LogN model needs strictly negative log_p")
        # slope is the exponent k in -log_p ~ C n^k
        x, y = np.log(ns), np.log(-lp)
    else:
        raise ValueError(f"unknown model {model!r}")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "r_squared": r2}
