"""Numerical laboratory for small-ball concentration of global-local
shrinkage priors in the sparse normal-means model.

The package computes prior probabilities of l2 balls in log domain (exact
reductions, conditional Monte Carlo, and analytic two-sided bounds), runs
Gibbs samplers for the matching posteriors, and ships a verification suite
for the auxiliary inequalities behind the bound evaluators.
"""

__version__ = "0.1.0"

from .specfun import (
    LogProb,
    ResolutionError,
    WeightedChiSquareSpec,
    chi2_logcdf,
    erfc_and_bounds,
    log_gamma,
    log_mean_exp,
    log_sum_exp,
    noncentral_chi2_logcdf,
    truncated_gamma_ratio,
    weighted_noncentral_chi2_logcdf,
)
from .priors import (
    ClassGReport,
    DiracOne,
    Exponential,
    GLPrior,
    HalfCauchy,
    InverseGamma,
    PluginDirac,
    PointMassMixture,
    SparseVector,
    TabulatedDensity,
    class_g_check,
    log_prior_density_bayes_lasso,
    prior_from_json,
    prior_to_json,
    rng_stream,
    sample_point_mass,
    sample_scales,
    sample_theta,
)
from .smallball import (
    BallQuery,
    ConcentrationEstimate,
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
from .posterior_lab import (
    McmcChain,
    NormalMeansInstance,
    RatioCertificate,
    average_ball_mass,
    effective_sample_size,
    gibbs_bayes_lasso,
    gibbs_global_only,
    gibbs_plugin_lasso,
    gibbs_spike_slab,
    laplace_gaussian_log_marginal,
    minimax_radius,
    posterior_ball_mass,
    ratio_certificate,
    simulate_data,
)
from .lemmas import run_lemma_suite
