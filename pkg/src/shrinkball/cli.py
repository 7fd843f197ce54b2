"""Configuration-driven command-line front end.

Subcommands run concentration scans, posterior ball-mass experiments, the
lemma verification suite, rate scans, and ratio-certificate sweeps.  Every
run writes ``results.csv`` plus a ``manifest.json`` capturing the resolved
configuration and seeds; identical config and seed give byte-identical CSV
regardless of worker count.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .lemmas import run_lemma_suite
from .posterior_lab import (
    average_ball_mass,
    gibbs_bayes_lasso,
    gibbs_global_only,
    gibbs_plugin_lasso,
    gibbs_spike_slab,
    minimax_radius,
    ratio_certificate,
)
from .priors import (
    DiracOne,
    Exponential,
    GLPrior,
    PluginDirac,
    PointMassMixture,
    SparseVector,
    prior_from_json,
    prior_to_json,
    rng_stream,
)
from .smallball import (
    BallQuery,
    FixedRadius,
    LogLaw,
    MinimaxLaw,
    PowerLaw,
    conditional_mc,
    global_only_exact,
    lasso_ub_integral,
    naive_mc,
    rate_fit,
)
from .specfun import LogProb, ResolutionError, noncentral_chi2_logcdf

KINDS = ("concentration", "posterior", "verify-lemmas", "rate-scan", "certificate")

_DEFAULT_BUDGETS = {
    "mc_samples": 100_000,
    "scale_samples": 1_000,
    "quad_points": 400,
    "mcmc_iters": 3_000,
    "mcmc_burn": None,  # resolved to 20% of iters
    "mcmc_thin": 5,
    "replicates": 20,
}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    prior: dict | None
    n_grid: list
    radius: dict | None
    theta0_spec: dict
    budgets: dict
    seed: int
    output_path: str
    estimator: str = "auto"
    sampler: str = "bayes_lasso"
    lam: float = 0.5
    big_radius_rule: str = "sqrt_n"

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        budgets = dict(_DEFAULT_BUDGETS)
        budgets.update(obj.get("budgets", {}))
        return cls(
            kind=obj.get("kind", ""),
            prior=obj.get("prior"),
            n_grid=list(obj.get("n_grid", [])),
            radius=obj.get("radius"),
            theta0_spec=dict(obj.get("theta0_spec", {"q": 0})),
            budgets=budgets,
            seed=int(obj.get("seed", 0)),
            output_path=obj.get("output_path", "."),
            estimator=obj.get("estimator", "auto"),
            sampler=obj.get("sampler", "bayes_lasso"),
            lam=float(obj.get("lambda", 0.5)),
            big_radius_rule=obj.get("big_radius_rule", "sqrt_n"),
        )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "prior": self.prior, "n_grid": self.n_grid,
            "radius": self.radius, "theta0_spec": self.theta0_spec,
            "budgets": self.budgets, "seed": self.seed,
            "output_path": self.output_path, "estimator": self.estimator,
            "sampler": self.sampler, "lambda": self.lam,
            "big_radius_rule": self.big_radius_rule,
        }


def parse_radius(obj) -> object:
    kind = obj["kind"]
    if kind == "power_law":
        return PowerLaw(delta=obj["delta"])
    if kind == "log_law":
        return LogLaw(A=obj["A"])
    if kind == "minimax_law":
        return MinimaxLaw(q=obj["q"], A=obj["A"])
    if kind == "fixed":
        return FixedRadius(t=obj["t"])
    raise ValueError(f"unknown radius kind {kind!r}")


def build_theta0(spec: dict, n: int, t: float) -> SparseVector:
    """Resolve a theta0 descriptor at a given dimension and ball radius.

    Nonzero entries occupy the leading q indices; every quantity computed
    downstream is permutation-invariant in the placement.
    """
    q = int(spec.get("q", 0))
    if q == 0:
        return SparseVector.zero(n)
    if q > n:
        raise ValueError("q cannot exceed n")
    rule = spec.get("magnitude", {"rule": "constant", "value": 1.0})
    if isinstance(rule, (int, float)):
        rule = {"rule": "constant", "value": float(rule)}
    name = rule.get("rule", "constant")
    if name == "constant":
        per_entry = float(rule["value"])
    elif name == "ball_norm_multiple":
        # total l2 norm = factor * t, spread evenly over the support
        per_entry = float(rule["factor"]) * t / math.sqrt(q)
    elif name == "log_loglog":
        if q != 1:
            raise ValueError("log_loglog magnitude rule requires q = 1")
        per_entry = math.sqrt(math.log(n)) * math.log(math.log(n))
    else:
        raise ValueError(f"unknown magnitude rule {name!r}")
    return SparseVector(n=n, support=np.arange(q),
                        values=np.full(q, per_entry))


def validate(config: ExperimentConfig):
    """Structural validation plus precondition warnings; returns
    (errors, warnings)."""
    errors, warnings = [], []
    if config.kind not in KINDS:
        errors.append(f"unknown kind {config.kind!r}")
        return errors, warnings
    if config.kind != "verify-lemmas":
        if not config.n_grid:
            errors.append("n_grid must be nonempty")
        elif any(b <= a for a, b in zip(config.n_grid, config.n_grid[1:])):
            errors.append("n_grid must be strictly increasing")
        if config.radius is None:
            errors.append("radius schedule is required")
        else:
            try:
                parse_radius(config.radius)
            except (KeyError, ValueError) as exc:
                errors.append(f"bad radius: {exc}")
    for key, val in config.budgets.items():
        if val is not None and val <= 0:
            errors.append(f"budget {key} must be positive")
    if config.prior is not None:
        try:
            # n is injected per grid cell; use a placeholder for validation
            prior_from_json(dict(config.prior, n=config.n_grid[0] if config.n_grid else 8))
        except (KeyError, ValueError, TypeError) as exc:
            errors.append(f"bad prior: {exc}")
    q = int(config.theta0_spec.get("q", 0))
    if config.estimator == "lasso_ub" and q != 1:
        errors.append("the exponential-local bound evaluator requires exactly "
                      "one nonzero entry in theta0")
    if (not errors and config.kind in ("concentration", "rate-scan")
            and config.radius is not None and q >= 1 and config.n_grid):
        sched = parse_radius(config.radius)
        for n in config.n_grid:
            t = sched.radius(n)
            theta0 = build_theta0(config.theta0_spec, n, t)
            if theta0.q >= 1 and t >= 0.25 * theta0.l2_norm:
                warnings.append(
                    f"n={n}: radius {t:.4g} >= ||theta0||/4; the shifted-ball "
                    "upper factor is not valid in this regime")
                break
    return errors, warnings


# ---------------------------------------------------------------------------
# Cells (module-level so the process pool can pickle them)
# ---------------------------------------------------------------------------

def _concentration_cell(args):
    config_dict, n, idx = args
    config = ExperimentConfig.from_dict(config_dict)
    sched = parse_radius(config.radius)
    t = sched.radius(n)
    theta0 = build_theta0(config.theta0_spec, n, t)
    prior_obj = dict(config.prior)
    prior_obj["n"] = n
    prior = prior_from_json(prior_obj)
    q = BallQuery(center=theta0, radius_t=t)
    est = _estimate(prior, q, config, idx)
    return {"n": n, "log_p": est.log_p.value, "log_se": est.log_se,
            "method": est.method, "budget": est.budget}


def _estimate(prior, q: BallQuery, config: ExperimentConfig, idx: int):
    mode = config.estimator
    if mode == "lasso_ub":
        lp = lasso_ub_integral(prior.n, q.center.l2_norm ** 2, q.w)
        from .smallball import ConcentrationEstimate

        return ConcentrationEstimate(lp, 0.0, "BoundUpper", 0)
    if mode == "naive" or isinstance(prior, PointMassMixture):
        rng = rng_stream(config.seed, 2, idx)
        return naive_mc(prior, q, config.budgets["mc_samples"], rng)
    if isinstance(prior.local, DiracOne) and mode in ("auto", "exact"):
        if isinstance(prior.global_, PluginDirac):
            tau = prior.global_.tau_n
            val = noncentral_chi2_logcdf(prior.n, q.center.l2_norm ** 2 / tau, q.w / tau)
            from .smallball import ConcentrationEstimate

            return ConcentrationEstimate(LogProb(val, "exact"), 0.0, "Exact1D", 0)
        return global_only_exact(prior, q, config.budgets["quad_points"])
    rng = rng_stream(config.seed, 2, idx)
    return conditional_mc(prior, q, config.budgets["scale_samples"], rng)


def _posterior_cell(args):
    config_dict, n, idx = args
    config = ExperimentConfig.from_dict(config_dict)
    sched = parse_radius(config.radius)
    radius = sched.radius(n)
    theta0 = build_theta0(config.theta0_spec, n, radius)
    iters = config.budgets["mcmc_iters"]
    burn = config.budgets["mcmc_burn"] or iters // 5
    thin = config.budgets["mcmc_thin"]
    sampler = config.sampler

    def run_chain(inst, chain_seed):
        if sampler == "bayes_lasso":
            g = prior_from_json(dict(config.prior, n=n)).global_
            return gibbs_bayes_lasso(inst, config.lam, g, iters, burn, thin, chain_seed)
        if sampler == "global_only":
            g = prior_from_json(dict(config.prior, n=n)).global_
            return gibbs_global_only(inst, g, iters, burn, thin, chain_seed)
        if sampler == "plugin_lasso":
            tau_n = 1.0 / math.log(n)
            return gibbs_plugin_lasso(inst, config.lam, tau_n, iters, burn, thin, chain_seed)
        if sampler == "spike_slab":
            return gibbs_spike_slab(inst, PointMassMixture(n=n), iters, burn, thin, chain_seed)
        raise ValueError(f"unknown sampler {sampler!r}")

    res = average_ball_mass(run_chain, theta0, radius,
                            config.budgets["replicates"], config.seed + idx)
    return {"n": n, "sampler": sampler, "radius": radius,
            "mean_mass": res["mean_mass"], "se": res["se"],
            "replicates": config.budgets["replicates"]}


def _certificate_cell(args):
    config_dict, n, idx = args
    config = ExperimentConfig.from_dict(config_dict)
    sched = parse_radius(config.radius)
    t_n = sched.radius(n)
    theta0 = build_theta0(config.theta0_spec, n, t_n)
    if config.big_radius_rule == "sqrt_n":
        r_n = math.sqrt(n)
    else:
        r_n = float(config.big_radius_rule) * t_n
    prior = prior_from_json(dict(config.prior, n=n))
    cert = ratio_certificate(prior, theta0, t_n, r_n,
                             budget=config.budgets["scale_samples"],
                             seed=config.seed + idx)
    return {"n": n, "t_n": t_n, "r_n": r_n,
            "log_p_small": cert.log_p_small.value,
            "log_p_big": cert.log_p_big.value,
            "log_certificate": cert.log_certificate}


_CELL_FUNCS = {
    "concentration": _concentration_cell,
    "rate-scan": _concentration_cell,
    "posterior": _posterior_cell,
    "certificate": _certificate_cell,
}

_COLUMNS = {
    "concentration": ["n", "log_p", "log_se", "method", "budget"],
    "rate-scan": ["n", "log_p", "log_se", "method", "budget"],
    "posterior": ["n", "sampler", "radius", "mean_mass", "se", "replicates"],
    "certificate": ["n", "t_n", "r_n", "log_p_small", "log_p_big", "log_certificate"],
    "verify-lemmas": ["lemma", "check", "passed", "witness"],
}


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def _write_csv(path: str, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format(row[c]) for c in columns])


def run(config: ExperimentConfig, workers: int = 1) -> int:
    """Execute the experiment; returns a process exit code."""
    errors, warnings = validate(config)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    if errors:
        for e in errors:
            print(f"error: {e}", file=sys.stderr)
        return 2
    t0 = time.time()
    out_dir = config.output_path
    os.makedirs(out_dir, exist_ok=True)
    extra_manifest = {}
    try:
        if config.kind == "verify-lemmas":
            rows = run_lemma_suite(seed=config.seed)
        else:
            cell = _CELL_FUNCS[config.kind]
            tasks = [(config.to_dict(), n, i) for i, n in enumerate(config.n_grid)]
            if workers > 1 and len(tasks) > 1:
                with ProcessPoolExecutor(max_workers=workers) as pool:
                    rows = list(pool.map(cell, tasks))
            else:
                rows = [cell(t) for t in tasks]
            rows.sort(key=lambda r: r["n"])
            if config.kind == "rate-scan" and len(rows) >= 4:
                fit = rate_fit([(r["n"], r["log_p"]) for r in rows], "PowerOfN")
                extra_manifest["rate_fit_power_of_n"] = fit
    except ResolutionError as exc:
        print(f"error: numeric non-convergence: {exc}", file=sys.stderr)
        return 3
    _write_csv(os.path.join(out_dir, "results.csv"), _COLUMNS[config.kind], rows)
    manifest = {
        "config": config.to_dict(),
        "version": __version__,
        "seed": config.seed,
        "workers": workers,
        "wall_clock_seconds": time.time() - t0,
        "numpy_version": np.__version__,
    }
    manifest.update(extra_manifest)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, default=str)
        fh.write("\n")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="shrinkball",
        description="Prior concentration and posterior ball-mass experiments "
                    "for global-local shrinkage priors.")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", required=(kind != "verify-lemmas"),
                       help="path to the experiment JSON config")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--workers", type=int, default=None,
                       help="worker processes (fallback: SHRINKBALL_WORKERS)")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--n-grid", default=None,
                       help="comma-separated override of the n grid")
    args = parser.parse_args(argv)

    if args.config:
        try:
            with open(args.config) as fh:
                obj = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return 2
    else:
        obj = {}
    obj["kind"] = args.command
    if args.seed is not None:
        obj["seed"] = args.seed
    if args.out is not None:
        obj["output_path"] = args.out
    if args.n_grid is not None:
        obj["n_grid"] = [int(x) for x in args.n_grid.split(",")]
    try:
        config = ExperimentConfig.from_dict(obj)
    except (KeyError, ValueError, TypeError) as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return 2
    workers = args.workers
    if workers is None:
        workers = int(os.environ.get("SHRINKBALL_WORKERS", "1"))
    return run(config, workers=workers)


if __name__ == "__main__":
    sys.exit(main())
