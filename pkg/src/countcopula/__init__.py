"""Joint transformation models for multivariate species count data.

Marginal count distributions are smooth monotone transformations of a
standard-normal scale; dependence between species enters through a
lower-triangular decomposition of the latent precision, optionally varying
smoothly over the day of the year.
"""

from .bases import BernsteinBasis, HarmonicDesign, bernstein_deriv, bernstein_eval, shift_design
from .data import ObservationTable, ingest_csv, write_csv
from .dependence import (
    DependenceSummary,
    PermutationReport,
    corr_from_sigma,
    permutation_sensitivity,
    sigma_from_lambda,
    spearman_from_corr,
    summarize,
    trajectory,
)
from .errors import (
    CountCopulaError,
    EvaluationError,
    IngestError,
    InputError,
    ParameterError,
    UnsupportedLinkError,
)
from .estimation import (
    FitResult,
    LRTest,
    ModelSpec,
    OptimizerConfig,
    fit,
    lr_test,
    mc_parameter_draws,
    observed_information,
    wald_ci,
)
from .likelihood import (
    CONTINUOUS,
    DISCRETE,
    EXACT,
    IntegratorConfig,
    loglik_continuous,
    loglik_discrete,
    loglik_exact,
    midpoint_transform,
    mvn_rectangle,
    prepare_data,
)
from .model import (
    CONSTANT,
    COVARIATE,
    JointModel,
    LambdaParams,
    LambdaSpec,
    MarginalParams,
    pair_order,
)
from .simulate import (
    BootstrapResult,
    SimulationConfig,
    compare_approximations,
    parametric_bootstrap,
    sample_counts,
    simulate_table,
    synth_birds,
)

__version__ = "1.0.0"

__all__ = [
    "BernsteinBasis",
    "BootstrapResult",
    "CONSTANT",
    "CONTINUOUS",
    "COVARIATE",
    "CountCopulaError",
    "DISCRETE",
    "DependenceSummary",
    "EXACT",
    "EvaluationError",
    "FitResult",
    "HarmonicDesign",
    "IngestError",
    "InputError",
    "IntegratorConfig",
    "JointModel",
    "LRTest",
    "LambdaParams",
    "LambdaSpec",
    "MarginalParams",
    "ModelSpec",
    "ObservationTable",
    "OptimizerConfig",
    "ParameterError",
    "PermutationReport",
    "SimulationConfig",
    "UnsupportedLinkError",
    "bernstein_deriv",
    "bernstein_eval",
    "compare_approximations",
    "corr_from_sigma",
    "fit",
    "ingest_csv",
    "loglik_continuous",
    "loglik_discrete",
    "loglik_exact",
    "lr_test",
    "mc_parameter_draws",
    "midpoint_transform",
    "mvn_rectangle",
    "observed_information",
    "pair_order",
    "parametric_bootstrap",
    "permutation_sensitivity",
    "prepare_data",
    "sample_counts",
    "shift_design",
    "sigma_from_lambda",
    "simulate_table",
    "spearman_from_corr",
    "summarize",
    "synth_birds",
    "trajectory",
    "wald_ci",
    "write_csv",
]
