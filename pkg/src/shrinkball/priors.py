"""Prior family descriptors, samplers, and the bounded-density class checker.

Global-local priors are hierarchical Gaussian scale mixtures: each
coordinate is N(0, psi_j * tau) with local scales psi_j drawn i.i.d. from a
local family and a single global scale tau from a global family.  The
variance convention is always psi_j * tau (never a standard deviation).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "InverseGamma",
    "HalfCauchy",
    "Exponential",
    "PluginDirac",
    "TabulatedDensity",
    "DiracOne",
    "GLPrior",
    "PointMassMixture",
    "SparseVector",
    "ClassGReport",
    "sample_scales",
    "sample_theta",
    "sample_point_mass",
    "class_g_check",
    "log_prior_density_bayes_lasso",
    "rng_stream",
    "prior_to_json",
    "prior_from_json",
]


def rng_stream(seed: int, *path: int) -> np.random.Generator:
    """Counter-based (Philox) generator for the given seed and stream path.

    Distinct paths give statistically independent streams; the same
    (seed, path) always reproduces the same stream.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(path))
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# Global families (densities / point mass on the variance scale tau)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InverseGamma:
    alpha: float
    beta: float
    has_density = True

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("InverseGamma hyperparameters must be positive")

    def log_density(self, tau):
        tau = np.asarray(tau, dtype=float)
        out = np.full(tau.shape, -np.inf)
        pos = tau > 0
        out[pos] = (self.alpha * math.log(self.beta) - math.lgamma(self.alpha)
                    - (self.alpha + 1.0) * np.log(tau[pos]) - self.beta / tau[pos])
        return out if out.ndim else float(out)

    def sample(self, rng: np.random.Generator) -> float:
        return float(self.beta / rng.gamma(self.alpha))


@dataclass(frozen=True)
class HalfCauchy:
    """Half-Cauchy density placed directly on the variance tau."""

    scale: float = 1.0
    has_density = True

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("HalfCauchy scale must be positive")

    def log_density(self, tau):
        tau = np.asarray(tau, dtype=float)
        out = np.full(tau.shape, -np.inf)
        pos = tau >= 0
        out[pos] = (math.log(2.0 / (math.pi * self.scale))
                    - np.log1p((tau[pos] / self.scale) ** 2))
        return out if out.ndim else float(out)

    def sample(self, rng: np.random.Generator) -> float:
        return float(self.scale * abs(rng.standard_cauchy()))


@dataclass(frozen=True)
class Exponential:
    """Exponential family; used both as a global prior on tau and as the
    local family of the Bayesian-lasso hierarchy."""

    rate: float
    has_density = True

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("Exponential rate must be positive")

    def log_density(self, tau):
        tau = np.asarray(tau, dtype=float)
        out = np.full(tau.shape, -np.inf)
        pos = tau >= 0
        out[pos] = math.log(self.rate) - self.rate * tau[pos]
        return out if out.ndim else float(out)

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.exponential(1.0 / self.rate))


@dataclass(frozen=True)
class PluginDirac:
    """Deterministic plug-in choice tau = tau_n (no density)."""

    tau_n: float
    has_density = False

    def __post_init__(self):
        if self.tau_n <= 0:
            raise ValueError("PluginDirac tau_n must be positive")

    def sample(self, rng: np.random.Generator) -> float:
        return self.tau_n


@dataclass(frozen=True)
class TabulatedDensity:
    """Piecewise-linear density on a grid over (0, infinity)."""

    grid: np.ndarray
    density: np.ndarray
    has_density = True

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        d = np.asarray(self.density, dtype=float)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "density", d)
        if g.ndim != 1 or g.shape != d.shape or g.size < 2:
            raise ValueError("grid and density must be equal-length 1-d arrays")
        if not np.all(np.diff(g) > 0) or g[0] < 0:
            raise ValueError("grid must be strictly increasing and nonnegative")
        if np.any(d < 0):
            raise ValueError("density values must be nonnegative")
        total = float(np.trapezoid(d, g))
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"tabulated density integrates to {total}, not 1")

    def log_density(self, tau):
        tau = np.asarray(tau, dtype=float)
        vals = np.interp(tau, self.grid, self.density, left=0.0, right=0.0)
        with np.errstate(divide="ignore"):
            out = np.log(vals)
        return out if out.ndim else float(out)

    def sample(self, rng: np.random.Generator) -> float:
        # inverse CDF on the trapezoid-integrated grid, linear within cells
        g, d = self.grid, self.density
        cell = 0.5 * (d[1:] + d[:-1]) * np.diff(g)
        cdf = np.concatenate([[0.0], np.cumsum(cell)])
        cdf /= cdf[-1]
        u = rng.uniform()
        i = int(np.searchsorted(cdf, u, side="right")) - 1
        i = min(max(i, 0), len(cell) - 1)
        frac = (u - cdf[i]) / max(cdf[i + 1] - cdf[i], 1e-300)
        return float(g[i] + frac * (g[i + 1] - g[i]))


@dataclass(frozen=True)
class DiracOne:
    """Degenerate local family psi_j = 1 for all j."""

    has_density = False


GlobalFamily = InverseGamma | HalfCauchy | Exponential | PluginDirac | TabulatedDensity
LocalFamily = DiracOne | Exponential


@dataclass(frozen=True)
class GLPrior:
    global_: GlobalFamily
    local: LocalFamily
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")


@dataclass(frozen=True)
class PointMassMixture:
    """Spike-and-slab prior: Beta-distributed inclusion probability and a
    Laplace slab; defaults reproduce Beta(1, n+1) with a standard slab."""

    n: int
    beta_a: float = 1.0
    beta_b: float | None = None
    slab_scale: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.beta_b is None:
            object.__setattr__(self, "beta_b", float(self.n + 1))
        if self.beta_a <= 0 or self.beta_b <= 0 or self.slab_scale <= 0:
            raise ValueError("hyperparameters must be positive")


@dataclass(frozen=True)
class SparseVector:
    """A q-sparse n-vector: support indices plus the values on the support."""

    n: int
    support: np.ndarray
    values: np.ndarray
    l2_norm: float = field(init=False)
    l1_norm: float = field(init=False)

    def __post_init__(self):
        s = np.asarray(self.support, dtype=int)
        v = np.asarray(self.values, dtype=float)
        if s.ndim != 1 or s.shape != v.shape:
            raise ValueError("support and values must be equal-length 1-d arrays")
        if s.size and (np.any(np.diff(s) <= 0) or s[0] < 0 or s[-1] >= self.n):
            raise ValueError("support must be sorted, unique, and within [0, n)")
        if np.any(v == 0.0):
            raise ValueError("support values must be nonzero")
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "l2_norm", float(np.linalg.norm(v)))
        object.__setattr__(self, "l1_norm", float(np.sum(np.abs(v))))

    @property
    def q(self) -> int:
        return int(self.support.size)

    @classmethod
    def from_dense(cls, theta) -> "SparseVector":
        theta = np.asarray(theta, dtype=float)
        idx = np.flatnonzero(theta)
        return cls(n=theta.size, support=idx, values=theta[idx])

    @classmethod
    def zero(cls, n: int) -> "SparseVector":
        return cls(n=n, support=np.array([], dtype=int), values=np.array([]))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.n)
        out[self.support] = self.values
        return out


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------

def sample_scales(prior: GLPrior, rng: np.random.Generator):
    """Draw (tau, psi) from the prior's scale hierarchy."""
    tau = prior.global_.sample(rng)
    if isinstance(prior.local, DiracOne):
        psi = np.ones(prior.n)
    else:
        psi = rng.exponential(1.0 / prior.local.rate, size=prior.n)
    return tau, psi


def sample_theta(prior: GLPrior, rng: np.random.Generator) -> np.ndarray:
    """Draw theta: scales first, then theta_j ~ N(0, psi_j * tau)."""
    tau, psi = sample_scales(prior, rng)
    return rng.standard_normal(prior.n) * np.sqrt(psi * tau)


def sample_point_mass(prior: PointMassMixture, rng: np.random.Generator) -> SparseVector:
    """Draw a sparse vector: pi ~ Beta(a, b) once, then each coordinate is
    zero w.p. 1 - pi, else Laplace(slab_scale)."""
    pi = rng.beta(prior.beta_a, prior.beta_b)
    included = rng.uniform(size=prior.n) < pi
    theta = np.zeros(prior.n)
    k = int(included.sum())
    if k:
        theta[included] = rng.laplace(scale=prior.slab_scale, size=k)
    return SparseVector.from_dense(theta)


# ---------------------------------------------------------------------------
# Bounded-density class membership
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassGReport:
    holds_upper: bool
    holds_lower: bool
    upper_witness: tuple[float, float] | None
    lower_witness: tuple[float, float] | None


def class_g_check(global_family: GlobalFamily, M: float, grid_size: int = 1000) -> ClassGReport:
    """Check g(tau) <= M on (0, inf) and g(tau) > 1/M on (0, 1) numerically.

    Evaluates the density on a log-spaced grid over (1e-8, 1e8) for the
    upper condition and a uniform grid on (0, 1) for the lower one; returns
    the worst witness point for each violated condition.
    """
    if grid_size < 100:
        raise ValueError("grid_size must be >= 100")
    if M <= 0:
        raise ValueError("M must be positive")
    if not global_family.has_density:
        raise ValueError("class membership is undefined for a point-mass global family")
    grid_upper = np.geomspace(1e-8, 1e8, grid_size)
    dens_upper = np.exp(global_family.log_density(grid_upper))
    i_max = int(np.argmax(dens_upper))
    holds_upper = bool(dens_upper[i_max] <= M)
    upper_witness = None if holds_upper else (float(grid_upper[i_max]), float(dens_upper[i_max]))

    grid_lower = np.linspace(0.0, 1.0, grid_size + 2)[1:-1]
    dens_lower = np.exp(global_family.log_density(grid_lower))
    i_min = int(np.argmin(dens_lower))
    holds_lower = bool(dens_lower[i_min] > 1.0 / M)
    lower_witness = None if holds_lower else (float(grid_lower[i_min]), float(dens_lower[i_min]))
    return ClassGReport(holds_upper, holds_lower, upper_witness, lower_witness)


def log_prior_density_bayes_lasso(theta, tau: float, lam: float) -> float:
    """Marginal (over psi) log density of the exponential-local hierarchy.

    With psi_j ~ Exp(lam) and theta_j | psi_j ~ N(0, psi_j * tau), the
    marginal of theta_j is double-exponential with scale sqrt(tau / (2 lam)).
    """
    if tau <= 0 or lam <= 0:
        raise ValueError("tau and lam must be positive")
    theta = np.asarray(theta, dtype=float)
    b = math.sqrt(tau / (2.0 * lam))
    return float(np.sum(-np.abs(theta) / b) - theta.size * math.log(2.0 * b))


# ---------------------------------------------------------------------------
# JSON descriptors (field names are the wire contract used by the CLI)
# ---------------------------------------------------------------------------

def _family_to_json(fam):
    if isinstance(fam, InverseGamma):
        return {"family": "inverse_gamma", "params": {"alpha": fam.alpha, "beta": fam.beta}}
    if isinstance(fam, HalfCauchy):
        return {"family": "half_cauchy", "params": {"scale": fam.scale}}
    if isinstance(fam, Exponential):
        return {"family": "exponential", "params": {"rate": fam.rate}}
    if isinstance(fam, PluginDirac):
        return {"family": "plugin_dirac", "params": {"tau_n": fam.tau_n}}
    if isinstance(fam, TabulatedDensity):
        return {"family": "tabulated",
                "params": {"grid": fam.grid.tolist(), "density": fam.density.tolist()}}
    if isinstance(fam, DiracOne):
        return {"family": "dirac_one", "params": {}}
    raise TypeError(f"unknown family {fam!r}")


def _family_from_json(obj):
    fam = obj["family"]
    p = obj.get("params", {})
    if fam == "inverse_gamma":
        return InverseGamma(alpha=p["alpha"], beta=p["beta"])
    if fam == "half_cauchy":
        return HalfCauchy(scale=p.get("scale", 1.0))
    if fam == "exponential":
        return Exponential(rate=p["rate"])
    if fam == "plugin_dirac":
        return PluginDirac(tau_n=p["tau_n"])
    if fam == "tabulated":
        return TabulatedDensity(grid=np.asarray(p["grid"]), density=np.asarray(p["density"]))
    if fam == "dirac_one":
        return DiracOne()
    raise ValueError(f"unknown family name {fam!r}")


def prior_to_json(prior) -> dict:
    if isinstance(prior, GLPrior):
        return {"global": _family_to_json(prior.global_),
                "local": _family_to_json(prior.local),
                "n": prior.n}
    if isinstance(prior, PointMassMixture):
        return {"family": "point_mass", "n": prior.n,
                "params": {"beta_a": prior.beta_a, "beta_b": prior.beta_b,
                           "slab_scale": prior.slab_scale}}
    raise TypeError(f"unknown prior {prior!r}")


def prior_from_json(obj) -> GLPrior | PointMassMixture:
    if "global" in obj:
        return GLPrior(global_=_family_from_json(obj["global"]),
                       local=_family_from_json(obj["local"]),
                       n=int(obj["n"]))
    if obj.get("family") == "point_mass":
        p = obj.get("params", {})
        return PointMassMixture(n=int(obj["n"]),
                                beta_a=p.get("beta_a", 1.0),
                                beta_b=p.get("beta_b"),
                                slab_scale=p.get("slab_scale", 1.0))
    raise ValueError("unrecognized prior descriptor")
