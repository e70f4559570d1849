"""Complete subset averaging two-stage least squares."""

from .amse import (
    AmseTable,
    PreliminaryFit,
    amse_score,
    csa2sls,
    preliminary_estimate,
    select_optimal_k,
)
from .dataframe import ModelFrame, Table, build_model_frame, expand_varlist, load_csv
from .errors import Csa2slsError, DataError, EstimationError, SingularMatrixError
from .estimators import (
    EstimationResult,
    ProjectionStats,
    accumulate_projection_stats,
    csa2sls_fixed_k,
    ols,
    tsls,
)
from .subsets import SubsetPlan, binomial_capped, build_subset_plan, enumerate_k_subsets

__version__ = "0.1.0"

__all__ = [
    "AmseTable",
    "Csa2slsError",
    "DataError",
    "EstimationError",
    "EstimationResult",
    "ModelFrame",
    "PreliminaryFit",
    "ProjectionStats",
    "SingularMatrixError",
    "SubsetPlan",
    "Table",
    "accumulate_projection_stats",
    "amse_score",
    "binomial_capped",
    "build_model_frame",
    "build_subset_plan",
    "csa2sls",
    "csa2sls_fixed_k",
    "enumerate_k_subsets",
    "expand_varlist",
    "load_csv",
    "ols",
    "preliminary_estimate",
    "select_optimal_k",
    "tsls",
]
