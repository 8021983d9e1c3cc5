"""Sparse regression by MAP estimation under a spike-and-slab prior.

The l0 selection penalty is relaxed to a log-sum penalty and minimized by
majorization-minimization over weighted-l1 coordinate descent.  Linear and
logistic models, Bayes-factor and cross-validation tuning, a Lasso baseline
and simulation runners are included.
"""

from bavamio._kernels import BACKEND, available_backends
from bavamio.data import (
    Dataset,
    DataError,
    FitState,
    Hyperparameters,
    StandardizeRecord,
    load_dataset,
    standardize,
    unstandardize,
)
from bavamio.glm import LOGISTIC, fit_glm_map, glm_cross_validate, glm_path, rho_grid
from bavamio.lasso import cv_lasso, fit_lasso, fit_lasso_logistic
from bavamio.linear import (
    ConvergenceWarning,
    MonotonicityError,
    SolverConfig,
    SolverError,
    fit_map,
    mm_solve,
    ridge_solve,
)
from bavamio.penalty import logsum, mm_weights, soft_threshold
from bavamio.selection import (
    bayes_factor,
    build_grid,
    cross_validate,
    fit_path,
    log_marginal_likelihood,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConvergenceWarning",
    "DataError",
    "Dataset",
    "FitState",
    "Hyperparameters",
    "LOGISTIC",
    "MonotonicityError",
    "SolverConfig",
    "SolverError",
    "StandardizeRecord",
    "available_backends",
    "bayes_factor",
    "build_grid",
    "cross_validate",
    "cv_lasso",
    "fit_glm_map",
    "fit_lasso",
    "fit_lasso_logistic",
    "fit_map",
    "fit_path",
    "glm_cross_validate",
    "glm_path",
    "load_dataset",
    "log_marginal_likelihood",
    "logsum",
    "mm_solve",
    "mm_weights",
    "rho_grid",
    "ridge_solve",
    "soft_threshold",
    "standardize",
    "unstandardize",
]
