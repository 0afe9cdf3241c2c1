"""Semiparametric location-scale survival regression with rank-based estimation."""

from .errors import (
    EmptyRiskSetError,
    ExtrapolationError,
    InsufficientDrawsError,
    InvalidInputError,
    NumericOverflowError,
    QuantileOutOfRangeError,
    SingularMatrixError,
    SmprError,
    StudyUnstableError,
)
from .estimator import (
    EstimatorConfig,
    RiskSummary,
    StepHazard,
    WeightSpec,
    nelson_aalen,
    objective,
    risk_summary,
    score,
    weight_eval,
)
from .functionals import (
    CovariateProfile,
    conditional_quantile,
    conditional_survivor,
    functional_band,
    kaplan_meier,
    quantile_ratio,
    quantile_ratio_band,
    survivor_band,
)
from .inference import (
    InferenceResult,
    InfluencePieces,
    MultiplierDraws,
    PerturbationSet,
    analyze,
    estimate_phi_dot,
    estimate_psi_dot,
    hazard_variance,
    infer,
    influence_pieces,
    joint_test,
    log_scale_hazard_ci,
    multiplier_draws,
    theta_covariance,
    wald_ci,
)
from .model import (
    Observation,
    SurvivalDataset,
    Theta,
    linear_predictors,
    residual,
    residuals,
)
from .simharness import Scenario, StudySummary, generate_dataset, run_study
from .solver import FitResult, SolverConfig, fit, warm_start

__version__ = "0.1.0"
