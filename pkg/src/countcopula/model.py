"""Model objects: marginal count transformation models, the lower-triangular
dependence structure, and the assembled joint model with its packed parameter
vector layout.

Two documented modeling conventions (carried over from the model definition):

* The floor in the marginal CDF applies to the count cut-off ``y``, not to the
  transformed value.
* The marginal CDF uses an unscaled standard-normal inverse link even though
  the latent covariance implied by the triangular dependence structure has
  non-unit diagonal beyond the first species.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtr

from .bases import NEG_INF, BernsteinBasis, HarmonicDesign
from .errors import InputError, ParameterError, UnsupportedLinkError

LINK_NORMAL = "normal"

CONSTANT = "constant"
COVARIATE = "covariate"


def pair_order(n_species):
    """Lower-triangular pair indices (row, col), row > col, 0-based.

    Order: (1,0), (2,0), (2,1), (3,0), ... which matches the packed layout.
    """
    return [(r, c) for r in range(1, n_species) for c in range(r)]


@dataclass(frozen=True)
class LambdaSpec:
    """Structure of the dependence block: constant entries or entries with a
    harmonic day-of-year component per species pair."""

    mode: str
    n_species: int
    pair_design_width: int = 0

    def __post_init__(self):
        if self.mode not in (CONSTANT, COVARIATE):
            raise InputError(f"unknown dependence mode {self.mode!r}")
        if self.n_species < 1:
            raise InputError("need at least one species")
        if self.mode == CONSTANT and self.pair_design_width != 0:
            raise InputError("constant mode has no pair design")
        if self.mode == COVARIATE and self.pair_design_width < 1:
            raise InputError("covariate mode needs a positive pair design width")

    @property
    def n_pairs(self):
        return self.n_species * (self.n_species - 1) // 2

    @property
    def n_params(self):
        return self.n_pairs * (1 + self.pair_design_width)


@dataclass(frozen=True)
class LambdaParams:
    """Parameters of the dependence block: one intercept per pair and, in
    covariate mode, one coefficient row per pair."""

    tau: np.ndarray
    zeta: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "tau", np.asarray(self.tau, dtype=float))
        if self.zeta is not None:
            zeta = np.asarray(self.zeta, dtype=float)
            if zeta.ndim != 2 or zeta.shape[0] != self.tau.shape[0]:
                raise InputError("zeta must have one row per species pair")
            object.__setattr__(self, "zeta", zeta)


@dataclass(frozen=True)
class MarginalParams:
    """Bernstein coefficients (non-decreasing) and shift coefficients of one
    marginal count transformation model."""

    theta: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        beta = np.asarray(self.beta, dtype=float)
        if np.any(np.diff(theta) < 0):
            raise ParameterError("transformation coefficients must be non-decreasing")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "beta", beta)


@dataclass(frozen=True)
class JointModel:
    """Joint model for ``J`` count responses.

    Packed parameter layout (see :func:`pack` / :func:`unpack`)::

        (theta_1, beta_1, ..., theta_J, beta_J, tau_all, zeta_all)

    with ``tau_all`` in pair order and ``zeta_all`` row-major by pair.
    """

    species_names: tuple[str, ...]
    bases: tuple[BernsteinBasis, ...]
    design: HarmonicDesign
    marginals: tuple[MarginalParams, ...]
    lambda_spec: LambdaSpec
    lambda_params: LambdaParams
    link: str = LINK_NORMAL

    def __post_init__(self):
        J = len(self.species_names)
        if not (len(self.bases) == len(self.marginals) == J):
            raise InputError("species_names, bases and marginals must align")
        if self.lambda_spec.n_species != J:
            raise InputError("lambda_spec does not match the number of species")
        if self.lambda_params.tau.shape != (self.lambda_spec.n_pairs,):
            raise InputError("tau has the wrong length")
        if self.lambda_spec.mode == COVARIATE:
            if self.lambda_params.zeta is None or self.lambda_params.zeta.shape != (
                self.lambda_spec.n_pairs,
                self.lambda_spec.pair_design_width,
            ):
                raise InputError("zeta has the wrong shape for covariate mode")
        for m, b in zip(self.marginals, self.bases):
            if m.theta.shape != (b.num_coef,):
                raise InputError("theta length does not match its basis")
            if m.beta.shape != (self.design.width,):
                raise InputError("beta length does not match the shift design")
        object.__setattr__(self, "species_names", tuple(self.species_names))
        object.__setattr__(self, "bases", tuple(self.bases))
        object.__setattr__(self, "marginals", tuple(self.marginals))

    @property
    def n_species(self):
        return len(self.species_names)

    def species_index(self, species):
        if isinstance(species, str):
            try:
                return self.species_names.index(species)
            except ValueError:
                raise InputError(f"unknown species {species!r}") from None
        j = int(species)
        if not 0 <= j < self.n_species:
            raise InputError(f"species index {j} out of range")
        return j

    def _require_normal_link(self):
        if self.link != LINK_NORMAL:
            raise UnsupportedLinkError(
                f"link {self.link!r} is accepted by the API but not implemented; "
                f"only {LINK_NORMAL!r} is supported"
            )

    def transform(self, j, y_floor):
        """alpha_j evaluated at floored cut-offs; -inf for cut-offs below 0."""
        y = np.asarray(y_floor, dtype=float)
        out = np.full(y.shape, NEG_INF)
        ok = y >= 0
        if np.any(ok):
            rows = self.bases[j].rows(np.floor(np.minimum(y[ok], self.bases[j].hi)))
            out[ok] = rows @ self.marginals[j].theta
        return out

    def shift(self, j, year, day):
        """eta_j at one or many (year, day) points."""
        return self.design.rows(np.asarray(year), np.asarray(day)) @ self.marginals[j].beta

    def marginal_cdf(self, species, y, covariates):
        """P(Y_j <= y | year, day) with the floor applied to ``y``."""
        self._require_normal_link()
        j = self.species_index(species)
        year, day = covariates
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y) | (y == NEG_INF)):
            raise InputError("non-finite cut-off")
        z = self.transform(j, y) - self.shift(j, year, day)
        return ndtr(z)

    def clamped_tail_mass(self, species, covariates):
        """Probability mass the model assigns above the basis support."""
        j = self.species_index(species)
        return 1.0 - float(self.marginal_cdf(j, self.bases[j].hi, covariates))

    def marginal_pmf(self, species, y, covariates):
        """P(Y_j = y | year, day) for integer y >= 0."""
        j = self.species_index(species)
        y = np.asarray(y)
        if not np.issubdtype(y.dtype, np.integer):
            yf = np.asarray(y, dtype=float)
            if np.any(yf != np.floor(yf)) or not np.all(np.isfinite(yf)):
                raise InputError("pmf is defined for integer counts only")
            y = yf.astype(int)
        if np.any(y < 0):
            raise InputError("counts are nonnegative")
        upper = self.marginal_cdf(j, y, covariates)
        lower = self.marginal_cdf(j, np.asarray(y, dtype=float) - 1.0, covariates)
        return upper - lower

    def marginal_auc(self, species, covariates, covariates_ref):
        """Probabilistic index P(Y <= Y_ref) between two habitats."""
        self._require_normal_link()
        j = self.species_index(species)
        d = self.shift(j, *covariates) - self.shift(j, *covariates_ref)
        return float(ndtr(d / np.sqrt(2.0)))

    def build_lambda(self, covariates=None):
        """Unit lower-triangular dependence matrix Lambda, at a covariate
        point when the dependence is day-varying."""
        J = self.n_species
        lam = np.eye(J)
        if self.lambda_spec.mode == COVARIATE:
            if covariates is None:
                raise InputError("covariate-dependent dependence needs a (year, day) point")
            _, day = covariates
            z = self.design.harmonic_rows(np.asarray(day, dtype=float))
            values = self.lambda_params.tau + self.lambda_params.zeta @ z
        else:
            values = self.lambda_params.tau
        for p, (r, c) in enumerate(pair_order(J)):
            lam[r, c] = values[p]
        return lam

    def lambda_values(self, pair_design=None):
        """Per-pair lambda entries; with an ``(N, width)`` pair design in
        covariate mode this returns an ``(N, n_pairs)`` array."""
        if self.lambda_spec.mode == CONSTANT:
            return self.lambda_params.tau
        if pair_design is None:
            raise InputError("covariate-dependent dependence needs a pair design")
        return self.lambda_params.tau + pair_design @ self.lambda_params.zeta.T

    # -- packed parameter vector ------------------------------------------

    @property
    def n_params(self):
        per_marginal = sum(b.num_coef for b in self.bases) + self.n_species * self.design.width
        return per_marginal + self.lambda_spec.n_params

    def pack(self):
        """Flatten all parameters into the documented layout."""
        parts = []
        for m in self.marginals:
            parts.append(m.theta)
            parts.append(m.beta)
        parts.append(self.lambda_params.tau)
        if self.lambda_spec.mode == COVARIATE:
            parts.append(self.lambda_params.zeta.ravel())
        return np.concatenate(parts)

    def unpack(self, theta_vec, validate=True):
        """Return a copy of this model carrying the packed parameters."""
        theta_vec = np.asarray(theta_vec, dtype=float)
        if theta_vec.shape != (self.n_params,):
            raise InputError(
                f"parameter vector has length {theta_vec.shape[0]}, expected {self.n_params}"
            )
        pos = 0
        marginals = []
        for b in self.bases:
            th = theta_vec[pos:pos + b.num_coef]
            pos += b.num_coef
            be = theta_vec[pos:pos + self.design.width]
            pos += self.design.width
            if validate and np.any(np.diff(th) < 0):
                raise ParameterError("non-monotone transformation coefficients in packed vector")
            m = MarginalParams.__new__(MarginalParams)
            object.__setattr__(m, "theta", np.array(th))
            object.__setattr__(m, "beta", np.array(be))
            marginals.append(m)
        npairs = self.lambda_spec.n_pairs
        tau = theta_vec[pos:pos + npairs]
        pos += npairs
        zeta = None
        if self.lambda_spec.mode == COVARIATE:
            w = self.lambda_spec.pair_design_width
            zeta = theta_vec[pos:pos + npairs * w].reshape(npairs, w)
            pos += npairs * w
        return replace(
            self,
            marginals=tuple(marginals),
            lambda_params=LambdaParams(tau=np.array(tau), zeta=zeta),
        )


# -- monotone reparameterization ------------------------------------------
#
# theta_1 = gamma_1, theta_p = theta_{p-1} + exp(gamma_p) keeps the Bernstein
# coefficients strictly increasing while the optimizer works unconstrained.

def theta_to_gamma(theta):
    theta = np.asarray(theta, dtype=float)
    inc = np.diff(theta)
    if np.any(inc <= 0):
        raise ParameterError("reparameterization needs strictly increasing coefficients")
    return np.concatenate([[theta[0]], np.log(inc)])


def gamma_to_theta(gamma):
    gamma = np.asarray(gamma, dtype=float)
    out = np.empty_like(gamma)
    out[0] = gamma[0]
    out[1:] = np.exp(gamma[1:])
    return np.cumsum(out)


def chain_gamma_grad(gamma, grad_theta):
    """Map a gradient w.r.t. theta to the unconstrained gamma coordinates."""
    tail = np.cumsum(grad_theta[::-1])[::-1]
    out = np.empty_like(tail)
    out[0] = tail[0]
    out[1:] = np.exp(np.asarray(gamma, dtype=float)[1:]) * tail[1:]
    return out
