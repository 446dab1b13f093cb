"""Statistical evaluation stack for synthetic loan profitability."""

from .ols import (INTERCEPT, CooksVector, InsufficientDataError, OlsFit, cooks_distance,
                  ols_fit, stars)
from .selection import (AlignmentError, CvResult, StepwiseResult, compare_nested,
                        fold_assignment, gaussian_aic, kfold_cv, ladder_table, nested_fits,
                        relative_likelihood, stepwise_aic)
from .zeroinfl import (DegenerateDataError, DesignError, NonConvergenceError, TobitFit,
                       VuongResult, ZipFit, fit_tobit, fit_zip_intercept_only,
                       normal_loglik_i, poisson_loglik_i, tobit_loglik_i, vuong_test,
                       zip_loglik_i)
from .rows import (GRAPH_COLUMNS, LOAN_COLUMNS, DEFAULT_MODEL_COLUMNS, default_specs,
                   fit_default_model, influence_by_predictor, join_observations,
                   location_columns, synthetic_profit)

__all__ = [
    "INTERCEPT",
    "CooksVector",
    "InsufficientDataError",
    "OlsFit",
    "cooks_distance",
    "ols_fit",
    "stars",
    "AlignmentError",
    "CvResult",
    "StepwiseResult",
    "compare_nested",
    "fold_assignment",
    "gaussian_aic",
    "kfold_cv",
    "ladder_table",
    "nested_fits",
    "relative_likelihood",
    "stepwise_aic",
    "DegenerateDataError",
    "DesignError",
    "NonConvergenceError",
    "TobitFit",
    "VuongResult",
    "ZipFit",
    "fit_tobit",
    "fit_zip_intercept_only",
    "normal_loglik_i",
    "poisson_loglik_i",
    "tobit_loglik_i",
    "vuong_test",
    "zip_loglik_i",
    "GRAPH_COLUMNS",
    "LOAN_COLUMNS",
    "DEFAULT_MODEL_COLUMNS",
    "default_specs",
    "fit_default_model",
    "influence_by_predictor",
    "join_observations",
    "location_columns",
    "synthetic_profit",
]
