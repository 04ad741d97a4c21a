"""Joint maximum-likelihood estimation, observed-information variances, Wald
intervals and likelihood-ratio tests.

The optimizer works in an unconstrained space: each species' Bernstein
coefficient vector is reparameterized as (first value, log increments) so any
quasi-Newton step keeps the transformation monotone.  Marginals are fitted
one species at a time first, then the joint model starts from those fits with
an independent dependence block.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize
from scipy.special import ndtri
from scipy.stats import chi2, norm

from . import likelihood as lk
from .bases import BernsteinBasis, HarmonicDesign
from .data import ObservationTable
from .errors import CountCopulaError, EvaluationError, InputError
from .model import (
    CONSTANT,
    COVARIATE,
    JointModel,
    LambdaParams,
    LambdaSpec,
    MarginalParams,
    chain_gamma_grad,
    gamma_to_theta,
    theta_to_gamma,
)

DEFAULT_NUM_COEF = 7


@dataclass(frozen=True)
class ModelSpec:
    """What to fit: basis sizes, harmonic complexity and dependence mode."""

    num_coef: int | tuple[int, ...] = DEFAULT_NUM_COEF
    n_freq: int = 3
    lambda_mode: str = CONSTANT
    link: str = "normal"

    def coef_counts(self, n_species):
        if isinstance(self.num_coef, int):
            return (self.num_coef,) * n_species
        if len(self.num_coef) != n_species:
            raise InputError("one basis size per species required")
        return tuple(self.num_coef)


@dataclass(frozen=True)
class OptimizerConfig:
    grad_tol: float = 1e-6
    rel_tol: float = 1e-12
    max_iter: int = 500
    hessian_step: float = 1e-4


@dataclass(frozen=True)
class FitResult:
    """Outcome of one maximum-likelihood fit."""

    model: JointModel
    theta_hat: np.ndarray
    loglik: float
    vcov: np.ndarray | None
    hessian_pd: bool
    iterations: int
    converged: bool
    gradient_norm_at_opt: float
    likelihood_kind: str
    spec: ModelSpec
    n_obs: int

    @property
    def n_params(self):
        return self.theta_hat.shape[0]


def build_template(table: ObservationTable, spec: ModelSpec):
    """Assemble a :class:`JointModel` skeleton (bases, designs, zero-ish
    parameters) matching ``table``."""
    J = table.n_species
    coefs = spec.coef_counts(J)
    years = table.year_levels()
    design = HarmonicDesign(n_freq=spec.n_freq, years=years)
    bases = []
    marginals = []
    for j in range(J):
        y = table.counts[:, j]
        if y.max() == y.min():
            raise InputError(
                f"species {table.species_names[j]!r} is constant; the transformation "
                "is not identifiable"
            )
        basis = BernsteinBasis(num_coef=coefs[j], lo=0.0, hi=float(y.max()))
        bases.append(basis)
        marginals.append(
            MarginalParams(
                theta=_initial_theta(y, basis),
                beta=np.zeros(design.width),
            )
        )
    if spec.lambda_mode == COVARIATE:
        lspec = LambdaSpec(COVARIATE, J, pair_design_width=design.harmonic_width)
        lparams = LambdaParams(
            tau=np.zeros(lspec.n_pairs),
            zeta=np.zeros((lspec.n_pairs, design.harmonic_width)),
        )
    else:
        lspec = LambdaSpec(CONSTANT, J)
        lparams = LambdaParams(tau=np.zeros(lspec.n_pairs))
    return JointModel(
        species_names=table.species_names,
        bases=tuple(bases),
        design=design,
        marginals=tuple(marginals),
        lambda_spec=lspec,
        lambda_params=lparams,
        link=spec.link,
    )


def _initial_theta(counts, basis):
    """Probit of the empirical CDF on the basis grid, forced strictly
    increasing; a cheap but well-scaled starting transformation."""
    grid = np.linspace(basis.lo, basis.hi, basis.num_coef)
    ecdf = np.searchsorted(np.sort(counts), grid, side="right") / (counts.shape[0] + 1)
    theta = ndtri(np.clip(ecdf, 0.02, 0.98))
    for p in range(1, theta.shape[0]):
        theta[p] = max(theta[p], theta[p - 1] + 1e-3)
    return theta


# -- packed <-> unconstrained ---------------------------------------------

def natural_to_unconstrained(model: JointModel, theta_vec):
    theta_vec = np.asarray(theta_vec, dtype=float)
    out = theta_vec.copy()
    pos = 0
    q = model.design.width
    for b in model.bases:
        out[pos:pos + b.num_coef] = theta_to_gamma(theta_vec[pos:pos + b.num_coef])
        pos += b.num_coef + q
    return out


def unconstrained_to_natural(model: JointModel, z):
    z = np.asarray(z, dtype=float)
    out = z.copy()
    pos = 0
    q = model.design.width
    for b in model.bases:
        out[pos:pos + b.num_coef] = gamma_to_theta(z[pos:pos + b.num_coef])
        pos += b.num_coef + q
    return out


def _chain_to_unconstrained(model, z, grad_natural):
    out = grad_natural.copy()
    pos = 0
    q = model.design.width
    for b in model.bases:
        sl = slice(pos, pos + b.num_coef)
        out[sl] = chain_gamma_grad(z[sl], grad_natural[sl])
        pos += b.num_coef + q
    return out


def _value_and_grad(model, prep, kind):
    if kind == lk.CONTINUOUS:
        return lambda th: lk.loglik_and_grad_continuous(model, th, prep)
    if kind == lk.DISCRETE:
        return lambda th: lk.loglik_and_grad_discrete(model, th, prep)
    raise InputError(f"likelihood kind {kind!r} cannot be used for fitting")


_BAD_OBJECTIVE = 1e300


def _maximize(model, prep, kind, z0, config: OptimizerConfig):
    fg = _value_and_grad(model, prep, kind)

    def objective(z):
        # a wild line-search step can overflow the increment map or land on a
        # zero-probability cell; report a huge value so the search backtracks
        with np.errstate(over="ignore", invalid="ignore"):
            theta = unconstrained_to_natural(model, z)
            if not np.all(np.isfinite(theta)):
                return _BAD_OBJECTIVE, np.zeros_like(z)
            try:
                value, grad = fg(theta)
            except EvaluationError:
                return _BAD_OBJECTIVE, np.zeros_like(z)
        if not np.isfinite(value):
            return _BAD_OBJECTIVE, np.zeros_like(z)
        return -value, -_chain_to_unconstrained(model, z, grad)

    res = minimize(
        objective,
        z0,
        method="L-BFGS-B",
        jac=True,
        options={
            "maxiter": config.max_iter,
            "gtol": config.grad_tol,
            "ftol": config.rel_tol,
        },
    )
    return res


def _fit_univariate(table, template, j, kind, config):
    """Marginal fit for species j; returns (theta_j, beta_j)."""
    sub = ObservationTable(
        species_names=(template.species_names[j],),
        years=table.years,
        days=table.days,
        counts=table.counts[:, [j]],
    )
    sub_model = JointModel(
        species_names=(template.species_names[j],),
        bases=(template.bases[j],),
        design=template.design,
        marginals=(template.marginals[j],),
        lambda_spec=LambdaSpec(CONSTANT, 1),
        lambda_params=LambdaParams(tau=np.zeros(0)),
        link=template.link,
    )
    prep = lk.prepare_data(sub, sub_model)
    z0 = natural_to_unconstrained(sub_model, sub_model.pack())
    # marginal initialization always uses the interval-censored (discrete)
    # univariate likelihood, whatever the joint fitting kind
    res = _maximize(sub_model, prep, lk.DISCRETE, z0, config)
    theta_vec = unconstrained_to_natural(sub_model, res.x)
    P = template.bases[j].num_coef
    theta_j = theta_vec[:P]
    # a very negative increment parameter underflows to a zero gap; nudge so
    # the warm start stays strictly increasing
    for p in range(1, P):
        theta_j[p] = max(theta_j[p], theta_j[p - 1] + 1e-9)
    return theta_j, theta_vec[P:P + template.design.width]


def fit(
    table: ObservationTable,
    spec: ModelSpec,
    likelihood_kind: str = lk.DISCRETE,
    config: OptimizerConfig = OptimizerConfig(),
    init: "FitResult | np.ndarray | None" = None,
) -> FitResult:
    """Fit the joint model by (approximate) maximum likelihood.

    ``init`` may be a packed parameter vector or a previous :class:`FitResult`
    of a nested model (the dependence block is zero-padded), e.g. to warm
    start the day-varying dependence model from the constant one.
    """
    template = build_template(table, spec)
    prep = lk.prepare_data(table, template)

    if init is None:
        marginals = []
        for j in range(template.n_species):
            th, be = _fit_univariate(table, template, j, likelihood_kind, config)
            marginals.append(MarginalParams(theta=th, beta=be))
        start_model = replace(template, marginals=tuple(marginals))
        theta0 = start_model.pack()
    else:
        theta0 = init.theta_hat if isinstance(init, FitResult) else np.asarray(init, dtype=float)
        if theta0.shape[0] < template.n_params:
            theta0 = _upgrade_packed(template, theta0)
        if theta0.shape[0] != template.n_params:
            raise InputError("init parameter vector does not match the model spec")

    z0 = natural_to_unconstrained(template, theta0)
    res = _maximize(template, prep, likelihood_kind, z0, config)
    theta_hat = unconstrained_to_natural(template, res.x)
    value, grad_nat = _value_and_grad(template, prep, likelihood_kind)(theta_hat)
    grad_unc = _chain_to_unconstrained(template, res.x, grad_nat)
    gnorm = float(np.max(np.abs(grad_unc)))
    # gradient criterion relative to the objective scale: the log-likelihood
    # grows with n_obs, and so does its gradient at any fixed distance from
    # the optimum
    converged = bool(res.success) and gnorm < config.grad_tol * max(1.0, abs(float(value)))

    hessian = observed_information(template, theta_hat, prep, likelihood_kind, config)
    vcov, pd = _invert_information(hessian)
    fitted = template.unpack(theta_hat)
    return FitResult(
        model=fitted,
        theta_hat=theta_hat,
        loglik=float(value),
        vcov=vcov,
        hessian_pd=pd,
        iterations=int(res.nit),
        converged=converged,
        gradient_norm_at_opt=gnorm,
        likelihood_kind=likelihood_kind,
        spec=spec,
        n_obs=table.n_rows,
    )


def _upgrade_packed(template: JointModel, theta_vec):
    """Zero-pad a constant-dependence parameter vector into the
    covariate-dependence layout of ``template``."""
    lspec = template.lambda_spec
    if lspec.mode != COVARIATE:
        raise InputError("init parameter vector does not match the model spec")
    n_marg = template.n_params - lspec.n_params
    expected = n_marg + lspec.n_pairs
    if theta_vec.shape[0] != expected:
        raise InputError("init parameter vector does not match the model spec")
    pad = np.zeros(lspec.n_pairs * lspec.pair_design_width)
    return np.concatenate([theta_vec, pad])


def observed_information(model, theta_hat, prep, kind, config: OptimizerConfig = OptimizerConfig()):
    """Hessian of the negative log-likelihood by central differences of the
    analytic gradient, symmetrized."""
    fg = _value_and_grad(model, prep, kind)
    n = theta_hat.shape[0]
    H = np.empty((n, n))
    for i in range(n):
        h = config.hessian_step * max(1.0, abs(theta_hat[i]))
        plus = theta_hat.copy()
        plus[i] += h
        minus = theta_hat.copy()
        minus[i] -= h
        if kind == lk.CONTINUOUS:
            gp = lk.loglik_and_grad_continuous(model, plus, prep, validate=False)[1]
            gm = lk.loglik_and_grad_continuous(model, minus, prep, validate=False)[1]
        else:
            gp = lk.loglik_and_grad_discrete(model, plus, prep, validate=False)[1]
            gm = lk.loglik_and_grad_discrete(model, minus, prep, validate=False)[1]
        H[i] = -(gp - gm) / (2.0 * h)
    return 0.5 * (H + H.T)


def _invert_information(H):
    try:
        c = cho_factor(H)
    except np.linalg.LinAlgError:
        return None, False
    vcov = cho_solve(c, np.eye(H.shape[0]))
    return 0.5 * (vcov + vcov.T), True


def wald_ci(fit: FitResult, param_index, level):
    """Wald interval for one packed parameter."""
    if not 0 <= level < 1:
        raise InputError("confidence level must lie in [0, 1)")
    if fit.vcov is None:
        raise CountCopulaError(
            "no variance estimate: observed information was not positive definite"
        )
    var = fit.vcov[param_index, param_index]
    if var < 0:
        raise CountCopulaError(
            "negative variance estimate: observed information was not positive definite"
        )
    z = norm.ppf(0.5 * (1.0 + level))
    half = z * np.sqrt(var)
    est = fit.theta_hat[param_index]
    return est - half, est + half


class LRTest(NamedTuple):
    statistic: float
    df: int
    p_value: float
    warning: str | None


def lr_test(fit_null: FitResult, fit_alt: FitResult) -> LRTest:
    """Likelihood-ratio test of a nested null against an alternative fit."""
    if fit_null.likelihood_kind != fit_alt.likelihood_kind:
        raise InputError("fits use different likelihood kinds")
    if fit_null.n_obs != fit_alt.n_obs:
        raise InputError("fits use different data")
    df = fit_alt.n_params - fit_null.n_params
    if df < 0:
        raise InputError("null model has more parameters than the alternative")
    stat = 2.0 * (fit_alt.loglik - fit_null.loglik)
    warning = None
    if stat < 0:
        warning = (
            "alternative log-likelihood below the null; at least one optimizer "
            "did not reach its maximum"
        )
        stat = max(stat, 0.0)
    p = float(chi2.sf(stat, df)) if df > 0 else (1.0 if stat == 0 else 0.0)
    return LRTest(statistic=float(stat), df=df, p_value=p, warning=warning)


def mc_parameter_draws(fit: FitResult, n_draws=10_000, seed=0):
    """Draws from the asymptotic parameter distribution N(theta_hat, vcov).

    Basis of every derived-quantity confidence interval (correlations, rank
    correlations, day trajectories): transform the draws, take quantiles.
    """
    if fit.vcov is None:
        raise CountCopulaError(
            "no variance estimate: observed information was not positive definite"
        )
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    try:
        chol = np.linalg.cholesky(fit.vcov)
    except np.linalg.LinAlgError:
        # vcov symmetric PSD up to roundoff; fall back to eigendecomposition
        w, v = np.linalg.eigh(fit.vcov)
        chol = v @ np.diag(np.sqrt(np.maximum(w, 0.0)))
    z = rng.standard_normal((n_draws, fit.theta_hat.shape[0]))
    return fit.theta_hat + z @ chol.T
