"""Weighted-lasso logistic regression by proximal Newton / coordinate descent."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ._kernels import cd_quadratic

#: Box constraint on every coefficient (logit scale), guarding separation.
COEF_CAP = 30.0
TOL_KKT = 1e-6


class SolverError(RuntimeError):
    """Numerical failure inside a solver."""


@dataclass(frozen=True)
class LogisticProblem:
    """Binary response, design matrix and per-column penalty weights.

    The design carries its own intercept column; a weight of zero leaves
    the corresponding coefficient unpenalized.
    """

    design: np.ndarray
    response: np.ndarray
    penalty_weights: np.ndarray

    def __post_init__(self):
        X = np.ascontiguousarray(self.design, dtype=float)
        y = np.asarray(self.response, dtype=float).ravel()
        w = np.asarray(self.penalty_weights, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] != y.size:
            raise ValueError("design must be (n, d) with one row per response")
        if not np.all(np.isfinite(X)):
            raise ValueError("design contains non-finite values")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("response must be binary")
        if w.shape != (X.shape[1],):
            raise ValueError("need one penalty weight per design column")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("penalty weights must be finite and nonnegative")
        object.__setattr__(self, "design", X)
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "penalty_weights", w)

    @classmethod
    def with_intercept(cls, X, y, weights=None) -> LogisticProblem:
        """Prepend an unpenalized intercept column to ``X``."""
        X = np.asarray(X, dtype=float)
        w = np.ones(X.shape[1]) if weights is None else np.asarray(weights, dtype=float)
        design = np.column_stack([np.ones(X.shape[0]), X])
        return cls(design, y, np.concatenate([[0.0], w]))

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def d(self) -> int:
        return self.design.shape[1]

    @property
    def penalized(self) -> np.ndarray:
        return self.penalty_weights > 0


@dataclass(frozen=True)
class SolverReport:
    coefficients: np.ndarray
    objective: float
    iterations: int
    converged: bool
    kkt_residual: float
    capped: bool = False


def neg_loglik(X, y, beta) -> float:
    eta = X @ beta
    return float(np.sum(np.logaddexp(0.0, eta) - y * eta))


def neg_loglik_grad(X, y, beta) -> np.ndarray:
    return X.T @ (expit(X @ beta) - y)


def lambda_max(problem: LogisticProblem) -> float:
    """Smallest penalty level at which all penalized coefficients vanish.

    Assumes the unpenalized columns are just the intercept, so the
    all-zero fit predicts the mean response.
    """
    y = problem.response
    ybar = y.mean()
    if ybar in (0.0, 1.0):
        raise ValueError("lambda_max is undefined for a constant response")
    pen = problem.penalized
    if not pen.any():
        return 0.0
    grad = problem.design[:, pen].T @ (y - ybar)
    return float(np.max(np.abs(grad) / problem.penalty_weights[pen]))


def kkt_residual(problem: LogisticProblem, beta, lam: float, cap: float = COEF_CAP) -> float:
    """Largest violation of the lasso optimality conditions at ``beta``.

    Zero coordinates need ``|g_m| <= lam w_m``; active ones need
    ``g_m = -lam w_m sign(beta_m)``; coordinates on the box boundary are
    allowed the one-sided inequality.
    """
    g = neg_loglik_grad(problem.design, problem.response, beta)
    pen = lam * problem.penalty_weights
    viol = np.where(beta == 0.0, np.maximum(np.abs(g) - pen, 0.0), np.abs(g + pen * np.sign(beta)))
    at_top = beta >= cap
    at_bottom = beta <= -cap
    viol = np.where(at_top, np.maximum(g + pen, 0.0), viol)
    viol = np.where(at_bottom, np.maximum(-(g - pen), 0.0), viol)
    return float(viol.max()) if viol.size else 0.0


def penalized_objective(problem: LogisticProblem, beta, lam: float) -> float:
    return neg_loglik(problem.design, problem.response, beta) + lam * float(
        problem.penalty_weights @ np.abs(beta)
    )


def fit_weighted_lasso_logistic(
    problem: LogisticProblem,
    lam: float,
    tol: float = 1e-7,
    *,
    init=None,
    max_iter: int = 10_000,
    tol_kkt: float = TOL_KKT,
    cap: float = COEF_CAP,
    debug: bool = False,
) -> SolverReport:
    """Minimise ``-loglik(beta) + lam * sum_m w_m |beta_m|``.

    Each outer iteration forms the IRLS quadratic model at the current
    point, minimises it with cyclic coordinate descent, and backtracks
    along the resulting step until the penalized objective decreases
    sufficiently. Iteration stops when the sup-norm step is below
    ``tol`` and the KKT residual is below ``tol_kkt``.

    With ``debug=True`` the objective is asserted non-increasing across
    outer iterations.
    """
    if lam < 0 or not np.isfinite(lam):
        raise ValueError("lam must be finite and nonnegative")
    X, y = problem.design, problem.response
    pen = lam * problem.penalty_weights
    beta = np.zeros(problem.d) if init is None else np.clip(np.array(init, dtype=float), -cap, cap)
    obj = penalized_objective(problem, beta, lam)
    inner_tol = max(tol * 1e-2, 1e-14)
    converged = False
    kkt = np.inf
    it = 0
    stalls = 0
    for it in range(1, max_iter + 1):
        eta = X @ beta
        prob = expit(eta)
        grad = X.T @ (prob - y)
        W = prob * (1.0 - prob)
        H = X.T @ (X * W[:, None])
        new = beta.copy()
        r = grad.copy()
        cd_quadratic(H, r, new, pen, cap, inner_tol, 100_000)
        step = new - beta
        # Armijo backtracking on the composite objective
        decrease = grad @ step + pen @ (np.abs(new) - np.abs(beta))
        t = 1.0
        while True:
            cand = new if t == 1.0 else beta + t * step
            cand_obj = penalized_objective(problem, cand, lam)
            if cand_obj <= obj + 1e-4 * t * decrease or t < 1e-10:
                break
            t *= 0.5
        if cand_obj > obj:
            cand, cand_obj = beta, obj
        if debug:
            assert cand_obj <= obj + 1e-9 * (1 + abs(obj)), "objective increased"
        change = float(np.max(np.abs(cand - beta))) if beta.size else 0.0
        beta, obj = cand, cand_obj
        if change < tol:
            kkt = kkt_residual(problem, beta, lam, cap)
            if kkt <= tol_kkt:
                converged = True
                break
            stalls += 1
            inner_tol = max(inner_tol * 1e-2, 1e-16)
            if stalls > 20:
                break
    if not converged:
        kkt = kkt_residual(problem, beta, lam, cap)
    return SolverReport(
        coefficients=beta,
        objective=obj,
        iterations=it,
        converged=converged,
        kkt_residual=kkt,
        capped=bool(np.any(np.abs(beta) >= cap)),
    )
