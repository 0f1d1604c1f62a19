"""Sensitivity analysis for treatment effects on censored medical costs.

The package fits log-link Gamma models to inverse-probability-weighted
cost data, then asks how an unmeasured confounder of a given family and
strength would move the treatment effect. Closed-form corrections use
the confounder's moment generating function per arm; Monte Carlo tools
quantify when the correction holds and when conditional dependence on
measured covariates erodes it.
"""

from .censoring import (
    cost_design,
    fit_censored_cost,
    fit_cost_unweighted,
    ipw_weights,
    km_censoring_survival,
)
from .data import CostDataset, CostRecord, load_dataset, save_dataset, zero_cost_shift
from .diagnostics import (
    WITHIN_STRATUM_THRESHOLD,
    CorrelationReport,
    correlation_report,
    loo_correlation_report,
    propensity_scores,
)
from .errors import (
    ConfigError,
    CorrelationModelError,
    CostSenseError,
    DidNotConvergeError,
    EmptyDatasetError,
    EmptyFitError,
    EstimationError,
    InputNotFoundError,
    MgfDomainError,
    NoPositiveCostError,
    ParseError,
    SchemaError,
    SeparationError,
    SingularDesignError,
    UsageError,
    ZeroProbabilityError,
)
from .glm import Family, FitResult, irls_fit
from .sensitivity import (
    AdjustedEffect,
    ApparentEffect,
    BernoulliParams,
    ConfounderFamily,
    ConfounderModel,
    GAMMA_RATIO_CONVENTION,
    GammaParams,
    NormalParams,
    PoissonParams,
    SweepRow,
    adjust_effect,
    gamma_arms_from_mean_ratio,
    log_mgf,
    sweep,
    z_quantile,
)
from .simulation import (
    CDScenario,
    CIScenario,
    PropensityStudyResult,
    ReplicationRecord,
    SimulationResult,
    aggregate,
    confounder_for_scenario,
    generate_cd_dataset,
    generate_ci_dataset,
    propensity_correlation_study,
    run_replication,
    run_replications,
    run_study,
    synthetic_cohort,
)

__version__ = "0.1.0"

__all__ = [
    "AdjustedEffect",
    "ApparentEffect",
    "BernoulliParams",
    "CDScenario",
    "CIScenario",
    "ConfigError",
    "ConfounderFamily",
    "ConfounderModel",
    "CorrelationModelError",
    "CorrelationReport",
    "CostDataset",
    "CostRecord",
    "CostSenseError",
    "DidNotConvergeError",
    "EmptyDatasetError",
    "EmptyFitError",
    "EstimationError",
    "Family",
    "FitResult",
    "GAMMA_RATIO_CONVENTION",
    "GammaParams",
    "InputNotFoundError",
    "MgfDomainError",
    "NoPositiveCostError",
    "NormalParams",
    "ParseError",
    "PoissonParams",
    "PropensityStudyResult",
    "ReplicationRecord",
    "SchemaError",
    "SeparationError",
    "SimulationResult",
    "SingularDesignError",
    "SweepRow",
    "UsageError",
    "WITHIN_STRATUM_THRESHOLD",
    "ZeroProbabilityError",
    "adjust_effect",
    "aggregate",
    "confounder_for_scenario",
    "correlation_report",
    "cost_design",
    "fit_censored_cost",
    "fit_cost_unweighted",
    "gamma_arms_from_mean_ratio",
    "generate_cd_dataset",
    "generate_ci_dataset",
    "ipw_weights",
    "irls_fit",
    "km_censoring_survival",
    "load_dataset",
    "log_mgf",
    "loo_correlation_report",
    "propensity_correlation_study",
    "propensity_scores",
    "run_replication",
    "run_replications",
    "run_study",
    "save_dataset",
    "sweep",
    "synthetic_cohort",
    "z_quantile",
    "zero_cost_shift",
]
