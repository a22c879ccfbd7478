"""Generalized fused-lasso logistic regression over K strata.

Minimises

    sum_k [-loglik_k(theta_k) + lambda1 sum_m w_m |theta_km|]
        + lambda2 sum_m sum_{k<k'} |theta_km - theta_k'm|

by proximal Newton steps whose quadratic subproblems are solved with
ADMM. The ADMM penalised copy goes through the exact columnwise prox of
the fused penalty, so fused and zero coefficients come out exact.
The whole objective is divided by the total sample size internally.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np
from scipy.special import expit

from ._kernels import admm_fused_quadratic, fused_prox_matrix
from .logistic import COEF_CAP, TOL_KKT, LogisticProblem, SolverReport

MAX_FUSED_K = 12


def _check(problems: Sequence[LogisticProblem]):
    if not problems:
        raise ValueError("need at least one problem")
    d = problems[0].d
    w = problems[0].penalty_weights
    for pb in problems[1:]:
        if pb.d != d:
            raise ValueError("all strata must share the same design columns")
        if not np.array_equal(pb.penalty_weights, w):
            raise ValueError("lasso weights must be shared across strata")
    if len(problems) > MAX_FUSED_K:
        raise ValueError(f"exact fused prox supports at most {MAX_FUSED_K} strata")
    return d, w


def fused_penalty(theta: np.ndarray, weights, lambda1: float, lambda2: float) -> float:
    K = theta.shape[0]
    out = lambda1 * float(np.sum(np.abs(theta) @ weights))
    for a in range(K):
        for b in range(a + 1, K):
            out += lambda2 * float(np.sum(np.abs(theta[a] - theta[b])))
    return out


def fused_objective(problems, theta, lambda1, lambda2) -> float:
    loss = 0.0
    for pb, t in zip(problems, theta):
        eta = pb.design @ t
        loss += float(np.sum(np.logaddexp(0.0, eta) - pb.response * eta))
    return loss + fused_penalty(theta, problems[0].penalty_weights, lambda1, lambda2)


def _gradients(problems, theta):
    return np.array([pb.design.T @ (expit(pb.design @ t) - pb.response) for pb, t in zip(problems, theta)])


def fused_kkt_residual(problems, theta, lambda1, lambda2, cap=COEF_CAP) -> float:
    """Prox-gradient fixed-point residual, on the scale of the summed loss.

    Reduces to the usual lasso KKT violation when K = 1.
    """
    N = sum(pb.n for pb in problems)
    theta = np.asarray(theta, dtype=float)
    G = _gradients(problems, theta)
    V = np.ascontiguousarray(theta - G / N)
    out = np.empty_like(V)
    fused_prox_matrix(V, lambda1 * problems[0].penalty_weights / N, lambda2 / N, cap, out)
    return float(N * np.max(np.abs(theta - out)))


def fit_fused_logistic(
    problems: Sequence[LogisticProblem],
    lambda1: float,
    lambda2: float,
    tol: float = 1e-7,
    *,
    init=None,
    max_iter: int = 10_000,
    admm_tol: float = 1e-10,
    admm_max_iter: int = 100_000,
    tol_kkt: float = TOL_KKT,
    cap: float = COEF_CAP,
) -> list[SolverReport]:
    """Jointly fit K logistic regressions under a generalized fused lasso.

    Returns one :class:`SolverReport` per stratum; they share the joint
    objective, iteration count, convergence flag and KKT residual.
    ``admm_tol`` is the relative residual tolerance of the inner ADMM.
    """
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError("penalty levels must be nonnegative")
    d, w = _check(problems)
    K = len(problems)
    N = float(sum(pb.n for pb in problems))
    pen1 = lambda1 * w / N
    lam2 = lambda2 / N

    theta = np.zeros((K, d)) if init is None else np.clip(np.array(init, dtype=float), -cap, cap)
    obj = fused_objective(problems, theta, lambda1, lambda2)
    Z = theta.copy()
    U = np.zeros((K, d))
    rho = 1.0
    converged = False
    kkt = np.inf
    it = 0
    stalls = 0
    inner_tol = admm_tol
    Q = np.empty((K, d, d))
    L = np.empty((K, d))
    b = np.empty((K, d))
    grad = np.empty((K, d))
    for it in range(1, max_iter + 1):
        for k, pb in enumerate(problems):
            X, y = pb.design, pb.response
            prob = expit(X @ theta[k])
            g = X.T @ (prob - y) / N
            H = X.T @ (X * (prob * (1.0 - prob))[:, None]) / N
            evals, evecs = np.linalg.eigh(H)
            L[k] = np.maximum(evals, 0.0)
            Q[k] = evecs
            b[k] = H @ theta[k] - g
            grad[k] = g
        Z[:] = theta
        _, rho, _, _ = admm_fused_quadratic(
            Q, L, b, pen1, lam2, cap, Z, U, rho, inner_tol, admm_max_iter
        )
        new = Z.copy()
        step = new - theta
        decrease = N * float(np.sum(grad * step)) + (
            fused_penalty(new, w, lambda1, lambda2) - fused_penalty(theta, w, lambda1, lambda2)
        )
        t = 1.0
        while True:
            cand = new if t == 1.0 else theta + t * step
            cand_obj = fused_objective(problems, cand, lambda1, lambda2)
            if cand_obj <= obj + 1e-4 * t * decrease or t < 1e-10:
                break
            t *= 0.5
        if cand_obj > obj:
            cand, cand_obj = theta, obj
        change = float(np.max(np.abs(cand - theta)))
        theta, obj = cand, cand_obj
        if change < tol:
            kkt = fused_kkt_residual(problems, theta, lambda1, lambda2, cap)
            if kkt <= tol_kkt:
                converged = True
                break
            stalls += 1
            if stalls > 20:
                break
            inner_tol = max(inner_tol * 1e-2, 1e-15)
    if not converged:
        kkt = fused_kkt_residual(problems, theta, lambda1, lambda2, cap)
    capped = bool(np.any(np.abs(theta) >= cap))
    return [
        SolverReport(
            coefficients=theta[k].copy(),
            objective=obj,
            iterations=it,
            converged=converged,
            kkt_residual=kkt,
            capped=capped,
        )
        for k in range(K)
    ]
