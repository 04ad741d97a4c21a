"""Interpretable dependence summaries: latent covariance and correlations,
Spearman rank correlations, day-of-year trajectories and the species-ordering
sensitivity diagnostic.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from . import likelihood as lk
from .data import ObservationTable
from .errors import CountCopulaError, InputError
from .estimation import FitResult, ModelSpec, OptimizerConfig, fit, mc_parameter_draws
from .model import COVARIATE, pair_order


def sigma_from_lambda(lam):
    """Latent covariance Sigma = Lambda^{-1} Lambda^{-T}; det(Sigma) = 1."""
    lam = np.asarray(lam, dtype=float)
    if lam.ndim != 2 or lam.shape[0] != lam.shape[1]:
        raise InputError("dependence matrix must be square")
    if not np.allclose(np.diag(lam), 1.0):
        raise InputError("dependence matrix must have a unit diagonal")
    if not np.all(np.isfinite(lam)):
        raise InputError("dependence matrix entries must be finite")
    inv = solve_triangular(lam, np.eye(lam.shape[0]), lower=True)
    return inv @ inv.T


def corr_from_sigma(sigma):
    """Normalize a positive-definite covariance into a correlation matrix."""
    sigma = np.asarray(sigma, dtype=float)
    d = np.diag(sigma)
    if np.any(d <= 0) or np.any(np.linalg.eigvalsh(sigma) <= 0):
        raise InputError("covariance matrix must be positive definite")
    s = 1.0 / np.sqrt(d)
    corr = sigma * np.outer(s, s)
    np.fill_diagonal(corr, 1.0)
    return corr


def spearman_from_corr(rho):
    """Rank correlation of the counts from the latent correlation:
    (6 / pi) * arcsin(rho / 2)."""
    rho = np.asarray(rho, dtype=float)
    if np.any(np.abs(rho) > 1.0):
        raise InputError("correlation must lie in [-1, 1]")
    return (6.0 / np.pi) * np.arcsin(rho / 2.0)


def _pair_spearman_from_packed(fit: FitResult, theta_vec, day=None):
    """Per-pair Spearman values from a packed parameter vector.

    Only the dependence block is used, so parameter draws that wander off the
    monotone cone are still valid here.
    """
    model = fit.model.unpack(np.asarray(theta_vec, dtype=float), validate=False)
    cov = None if day is None else (None, day)
    if model.lambda_spec.mode == COVARIATE and day is None:
        raise InputError("day of year required for a day-varying dependence model")
    lam = model.build_lambda(cov)
    corr = corr_from_sigma(sigma_from_lambda(lam))
    return np.array([spearman_from_corr(corr[r, c]) for r, c in pair_order(model.n_species)])


@dataclass(frozen=True)
class DependenceSummary:
    """All dependence readouts of one fitted model at one covariate point."""

    species_names: tuple[str, ...]
    lam: np.ndarray
    sigma: np.ndarray
    corr: np.ndarray
    spearman: np.ndarray
    ci_level: float
    corr_ci: np.ndarray       # (n_pairs, 2)
    spearman_ci: np.ndarray   # (n_pairs, 2)
    evaluated_at: float | None = None

    @property
    def pairs(self):
        return pair_order(len(self.species_names))


def summarize(fit: FitResult, level=0.95, day=None, n_draws=10_000, seed=0):
    """Dependence summary with Monte-Carlo propagated confidence intervals."""
    model = fit.model
    if model.lambda_spec.mode == COVARIATE and day is None:
        raise InputError("day of year required for a day-varying dependence model")
    cov = None if day is None else (None, day)
    lam = model.build_lambda(cov)
    sigma = sigma_from_lambda(lam)
    corr = corr_from_sigma(sigma)
    spearman = spearman_from_corr(corr)
    np.fill_diagonal(spearman, 1.0)

    draws = mc_parameter_draws(fit, n_draws=n_draws, seed=seed)
    pairs = pair_order(model.n_species)
    tau_idx, zeta_idx = _dependence_indices(fit)
    lam_draws = draws[:, tau_idx]
    if model.lambda_spec.mode == COVARIATE:
        z = model.design.harmonic_rows(np.asarray(day, dtype=float))
        zeta_draws = draws[:, zeta_idx].reshape(n_draws, len(pairs), -1)
        lam_draws = lam_draws + zeta_draws @ z
    corr_draws = _batch_pair_corr(lam_draws, model.n_species)
    sp_draws = spearman_from_corr(corr_draws)
    qs = [0.5 * (1 - level), 0.5 * (1 + level)]
    corr_ci = np.quantile(corr_draws, qs, axis=0).T
    sp_ci = np.quantile(sp_draws, qs, axis=0).T
    return DependenceSummary(
        species_names=model.species_names,
        lam=lam,
        sigma=sigma,
        corr=corr,
        spearman=spearman,
        ci_level=level,
        corr_ci=corr_ci,
        spearman_ci=sp_ci,
        evaluated_at=day,
    )


def trajectory(fit: FitResult, pair, days=None, level=0.95, n_draws=10_000, seed=0):
    """Day-of-year trajectory of one pair's Spearman correlation with
    Monte-Carlo confidence bands.

    Returns ``(days, spearman, lo, hi)`` arrays.  For a constant-dependence
    fit the trajectory is flat.
    """
    model = fit.model
    pairs = pair_order(model.n_species)
    if not 0 <= pair < len(pairs):
        raise InputError(f"pair index {pair} out of range (0..{len(pairs) - 1})")
    if days is None:
        days = np.arange(1, 366)
    days = np.asarray(days)

    draws = mc_parameter_draws(fit, n_draws=n_draws, seed=seed)
    tau_idx, zeta_idx = _dependence_indices(fit)
    r, c = pairs[pair]

    def per_day_values(theta_block_tau, theta_block_zeta, day_arr):
        # lambda entries per (draw, day) for every pair, then the closed-form
        # map through Sigma to the requested pair's correlation
        if theta_block_zeta is None:
            lam_vals = np.broadcast_to(
                theta_block_tau[..., None], theta_block_tau.shape + (day_arr.shape[0],)
            )
        else:
            Z = model.design.harmonic_rows(day_arr.astype(float))  # (D, w)
            lam_vals = theta_block_tau[..., None] + np.einsum(
                "...pw,dw->...pd", theta_block_zeta, Z
            )
        return lam_vals

    tau_hat = fit.theta_hat[tau_idx]
    zeta_hat = fit.theta_hat[zeta_idx].reshape(len(pairs), -1) if zeta_idx is not None else None
    lam_hat = per_day_values(tau_hat, zeta_hat, days)  # (n_pairs, D)
    point = _pairwise_spearman_from_lambda_entries(lam_hat, model.n_species)[pair]

    tau_d = draws[:, tau_idx]
    zeta_d = draws[:, zeta_idx].reshape(n_draws, len(pairs), -1) if zeta_idx is not None else None
    lam_d = per_day_values(tau_d, zeta_d, days)  # (n_draws, n_pairs, D)
    corr_d = _batch_pair_corr(np.moveaxis(lam_d, 1, -1), model.n_species)
    sp_d = spearman_from_corr(corr_d[..., pair])  # (n_draws, D)
    lo, hi = np.quantile(sp_d, [0.5 * (1 - level), 0.5 * (1 + level)], axis=0)
    return days, point, lo, hi


def _batch_pair_corr(lam_vals, n_species, chunk=2000):
    """Per-pair latent correlations from batched dependence entries.

    ``lam_vals`` has shape ``(..., n_pairs)``; the output has the same shape.
    Works chunk-wise through stacked 3x3 (or JxJ) inverses to keep memory
    bounded for large draw batches.
    """
    lam_vals = np.asarray(lam_vals, dtype=float)
    pairs = pair_order(n_species)
    flat = lam_vals.reshape(-1, len(pairs))
    out = np.empty_like(flat)
    eye = np.eye(n_species)
    for start in range(0, flat.shape[0], chunk):
        block = flat[start:start + chunk]
        L = np.broadcast_to(eye, (block.shape[0], n_species, n_species)).copy()
        for p, (r, c) in enumerate(pairs):
            L[:, r, c] = block[:, p]
        inv = np.linalg.inv(L)
        sigma = inv @ np.swapaxes(inv, -1, -2)
        d = 1.0 / np.sqrt(np.diagonal(sigma, axis1=-2, axis2=-1))
        for p, (r, c) in enumerate(pairs):
            out[start:start + chunk, p] = sigma[:, r, c] * d[:, r] * d[:, c]
    return out.reshape(lam_vals.shape)


def _pairwise_spearman_from_lambda_entries(lam_vals, n_species):
    """(n_pairs, D) lambda entries -> (n_pairs, D) Spearman correlations."""
    corr = _batch_pair_corr(np.moveaxis(lam_vals, 0, -1), n_species)
    return np.moveaxis(spearman_from_corr(corr), -1, 0)


def _dependence_indices(fit: FitResult):
    model = fit.model
    n_marg = sum(b.num_coef for b in model.bases) + model.n_species * model.design.width
    npairs = model.lambda_spec.n_pairs
    tau_idx = np.arange(n_marg, n_marg + npairs)
    zeta_idx = None
    if model.lambda_spec.mode == COVARIATE:
        w = model.lambda_spec.pair_design_width
        zeta_idx = np.arange(n_marg + npairs, n_marg + npairs + npairs * w)
    return tau_idx, zeta_idx


@dataclass(frozen=True)
class PermutationReport:
    """Fits of all species orderings plus the order-sensitivity verdict."""

    orderings: tuple[tuple[str, ...], ...]
    logliks: tuple[float | None, ...]
    spearman: tuple[np.ndarray | None, ...]  # in the original species order
    failures: tuple[str | None, ...]
    max_discrepancy: float
    best_ordering: tuple[str, ...]
    flagged: bool
    threshold: float


def permutation_sensitivity(
    table: ObservationTable,
    spec: ModelSpec,
    likelihood_kind=lk.DISCRETE,
    config: OptimizerConfig = OptimizerConfig(),
    threshold: float = 0.05,
    eval_day: float = 1.0,
    max_species: int = 4,
):
    """Refit the model under every species ordering and compare dependence.

    A large spread of the pairwise rank correlations across orderings points
    at lack of fit of the dependence structure.  Capped at ``max_species``
    (factorial cost); raise the cap explicitly for larger communities.
    """
    J = table.n_species
    if J > max_species:
        raise InputError(
            f"{J}! orderings is above the cap ({max_species}!); pass max_species to override"
        )
    names = table.species_names
    orderings = list(itertools.permutations(range(J)))
    logliks, spearmans, failures = [], [], []
    for perm in orderings:
        perm = list(perm)
        sub = ObservationTable(
            species_names=tuple(names[i] for i in perm),
            years=table.years,
            days=table.days,
            counts=table.counts[:, perm],
        )
        try:
            res = fit(sub, spec, likelihood_kind, config)
            day = eval_day if res.model.lambda_spec.mode == COVARIATE else None
            cov = None if day is None else (None, day)
            corr = corr_from_sigma(sigma_from_lambda(res.model.build_lambda(cov)))
            sp = spearman_from_corr(corr)
            # map back to the original species order
            inv = np.argsort(perm)
            spearmans.append(sp[np.ix_(inv, inv)])
            logliks.append(res.loglik)
            failures.append(None)
        except CountCopulaError as exc:
            spearmans.append(None)
            logliks.append(None)
            failures.append(str(exc))
    ok = [s for s in spearmans if s is not None]
    if not ok:
        raise CountCopulaError("every ordering failed to fit")
    stack = np.stack(ok)
    iu = np.triu_indices(J, k=1)
    max_disc = float(np.max(np.ptp(stack[:, iu[0], iu[1]], axis=0)))
    best = int(np.nanargmax([ll if ll is not None else -np.inf for ll in logliks]))
    return PermutationReport(
        orderings=tuple(tuple(names[i] for i in perm) for perm in orderings),
        logliks=tuple(logliks),
        spearman=tuple(spearmans),
        failures=tuple(failures),
        max_discrepancy=max_disc,
        best_ordering=tuple(names[i] for i in orderings[best]),
        flagged=max_disc > threshold,
        threshold=threshold,
    )
