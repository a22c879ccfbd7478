from .fused import fit_fused_logistic, fused_kkt_residual, fused_objective
from .logistic import (
    COEF_CAP,
    LogisticProblem,
    SolverError,
    SolverReport,
    fit_weighted_lasso_logistic,
    kkt_residual,
    lambda_max,
)

__all__ = [
    "COEF_CAP",
    "LogisticProblem",
    "SolverError",
    "SolverReport",
    "fit_fused_logistic",
    "fit_weighted_lasso_logistic",
    "fused_kkt_residual",
    "fused_objective",
    "kkt_residual",
    "lambda_max",
]
