"""Shared model/table factories for the test suite."""
import numpy as np

from countcopula.bases import BernsteinBasis, HarmonicDesign
from countcopula.data import ObservationTable
from countcopula.model import (
    CONSTANT,
    COVARIATE,
    JointModel,
    LambdaParams,
    LambdaSpec,
    MarginalParams,
)


def random_model(J=3, mode=CONSTANT, n_freq=2, years=(2002, 2003), seed=0,
                 num_coef=5, support=25.0, tau_scale=0.3):
    rng = np.random.default_rng(seed)
    design = HarmonicDesign(n_freq=n_freq, years=years)
    bases = tuple(BernsteinBasis(num_coef=num_coef, lo=0.0, hi=support) for _ in range(J))
    marginals = tuple(
        MarginalParams(
            theta=np.sort(rng.normal(loc=rng.normal(), scale=1.2, size=num_coef)),
            beta=rng.normal(scale=0.25, size=design.width),
        )
        for _ in range(J)
    )
    npairs = J * (J - 1) // 2
    if mode == COVARIATE:
        lspec = LambdaSpec(COVARIATE, J, pair_design_width=design.harmonic_width)
        lparams = LambdaParams(
            tau=rng.normal(scale=tau_scale, size=npairs),
            zeta=rng.normal(scale=0.1, size=(npairs, design.harmonic_width)),
        )
    else:
        lspec = LambdaSpec(CONSTANT, J)
        lparams = LambdaParams(tau=rng.normal(scale=tau_scale, size=npairs))
    return JointModel(
        species_names=tuple(f"sp{j}" for j in range(J)),
        bases=bases,
        design=design,
        marginals=marginals,
        lambda_spec=lspec,
        lambda_params=lparams,
    )


def random_table(model, N=30, seed=1, max_count=None):
    """Counts drawn uniformly on the model's support grid (not from the
    model itself; likelihood evaluations must work at any admissible data)."""
    rng = np.random.default_rng(seed)
    hi = int(min(b.hi for b in model.bases)) if max_count is None else max_count
    years = rng.choice(model.design.years, size=N)
    days = rng.integers(1, 366, size=N)
    counts = rng.integers(0, hi + 1, size=(N, model.n_species))
    return ObservationTable(
        species_names=model.species_names,
        years=years,
        days=days,
        counts=counts,
    )
