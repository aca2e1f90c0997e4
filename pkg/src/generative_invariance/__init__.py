"""Prediction under hidden confounding and covariate shift.

Fits a causal coefficient and a confounding covariance from multi-source
data in closed form, synthesizes test-environment responses through a
moment-matched generator, quantifies uncertainty via a plug-in sandwich
covariance, and ranks source combinations by asymptotic efficiency.
"""

from .asymptotics import (
    AsymptoticReport,
    EfficiencyRanking,
    aggregate_predictions,
    asymptotic_covariance,
    det_prefilter,
    efficiency_key,
    orthogonal_complement_basis,
    plug_in_omega,
    plug_in_phi,
    select_sources,
)
from .data import (
    CenteringMatrix,
    Dataset,
    EnvironmentSummary,
    IdentityReport,
    centering_matrix,
    load_csv,
    summarize,
    verify_identities,
)
from .errors import (
    DegenerateCovariatesError,
    EllipsoidViolationError,
    EmptyInputError,
    GIError,
    IdentifiabilityError,
    InsufficientTestSampleError,
    NotEnoughSourcesError,
    ParseError,
    SchemaError,
    SelectionInfeasibleError,
    SingularCovarianceError,
)
from .estimator import (
    GIFit,
    RankReport,
    check_identifiability,
    ellipsoid_slack,
    empirical_risk,
    estimate_noise_variance,
    fit,
    fit_from_json,
    fit_ols,
    fit_to_json,
)
from .evaluation import (
    EnergyResult,
    energy_distance,
    energy_matrix,
    mse,
    peculiarity_ranking,
)
from .generator import (
    GeneratorSpec,
    build_generator,
    do_interventional_generator,
    g_eval,
    generate_responses,
    ols_generator,
    spec_from_json,
    spec_from_moments,
    spec_to_json,
)
from .simulation import (
    CoverageResult,
    MultiEnvTruth,
    SimulationConfig,
    SweepResult,
    coverage_study,
    energy_benchmark,
    simulate_multienv,
    simulate_test_environment,
    simulate_univariate_shift,
)

__version__ = "0.1.0"

__all__ = [
    "AsymptoticReport",
    "CenteringMatrix",
    "CoverageResult",
    "Dataset",
    "DegenerateCovariatesError",
    "EfficiencyRanking",
    "EllipsoidViolationError",
    "EmptyInputError",
    "EnergyResult",
    "EnvironmentSummary",
    "GIError",
    "GIFit",
    "GeneratorSpec",
    "IdentifiabilityError",
    "IdentityReport",
    "InsufficientTestSampleError",
    "MultiEnvTruth",
    "NotEnoughSourcesError",
    "ParseError",
    "RankReport",
    "SchemaError",
    "SelectionInfeasibleError",
    "SimulationConfig",
    "SingularCovarianceError",
    "SweepResult",
    "aggregate_predictions",
    "asymptotic_covariance",
    "build_generator",
    "centering_matrix",
    "check_identifiability",
    "coverage_study",
    "det_prefilter",
    "do_interventional_generator",
    "efficiency_key",
    "ellipsoid_slack",
    "empirical_risk",
    "energy_benchmark",
    "energy_distance",
    "energy_matrix",
    "estimate_noise_variance",
    "fit",
    "fit_from_json",
    "fit_ols",
    "fit_to_json",
    "g_eval",
    "generate_responses",
    "load_csv",
    "mse",
    "ols_generator",
    "orthogonal_complement_basis",
    "peculiarity_ranking",
    "plug_in_omega",
    "plug_in_phi",
    "select_sources",
    "simulate_multienv",
    "simulate_test_environment",
    "simulate_univariate_shift",
    "spec_from_json",
    "spec_from_moments",
    "spec_to_json",
    "summarize",
    "verify_identities",
]
