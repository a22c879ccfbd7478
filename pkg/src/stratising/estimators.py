"""Node-wise stratified graph estimators and symmetrisation rules.

Every estimator regresses each node ``j`` on the remaining nodes within
each stratum. They differ in how the K per-stratum coefficient vectors
are coupled:

``indep``
    K separate lasso fits.
``fused``
    generalized fused lasso across strata, intercepts included in the
    fused term.
``datashared`` / ``datashared-adaptive``
    ``theta_k = mu + gamma_k`` with lasso penalties on ``mu`` (slopes
    only) and every ``gamma_k``, fitted as one weighted lasso on a
    stacked design.
``reflasso``
    same stacked design with stratum ``r`` as reference (``gamma_r = 0``).
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .model import (
    FUSION_TOL,
    NodewiseCoefficients,
    StratifiedDataset,
    StratifiedGraphEstimate,
    comp,
    iter_pairs,
)
from .solvers import (
    COEF_CAP,
    LogisticProblem,
    fit_fused_logistic,
    fit_weighted_lasso_logistic,
    lambda_max,
)

ESTIMATORS = ("indep", "fused", "datashared", "datashared-adaptive", "reflasso")
RULES = ("and", "or", "min", "max")
ADAPTIVE_WEIGHT_CAP = 1e6


@dataclass(frozen=True)
class EstimatorKind:
    name: str
    reference: int | None = None

    def __post_init__(self):
        if self.name not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.name!r}; choose from {ESTIMATORS}")
        if (self.name == "reflasso") != (self.reference is not None):
            raise ValueError("a reference stratum is required for reflasso, and only there")

    def validate(self, K: int) -> None:
        if self.reference is not None and not 0 <= self.reference < K:
            raise ValueError(f"reference stratum {self.reference} outside [0, {K})")

    @property
    def decomposed(self) -> bool:
        return self.name in ("datashared", "datashared-adaptive", "reflasso")

    @property
    def uses_lambda2(self) -> bool:
        return self.name != "indep"

    def __str__(self) -> str:
        return self.name if self.reference is None else f"{self.name}[{self.reference}]"


@dataclass(frozen=True)
class SymmetrizationRule:
    name: str = "min"
    tie_break: str = "lower-node"

    def __post_init__(self):
        if self.name not in RULES:
            raise ValueError(f"unknown rule {self.name!r}; choose from {RULES}")
        if self.tie_break != "lower-node":
            raise ValueError("only the 'lower-node' tie break is implemented")


# ---------------------------------------------------------------------------
# node-wise data
# ---------------------------------------------------------------------------


def _others(p: int, j: int) -> np.ndarray:
    return np.delete(np.arange(p), j)


def node_design(data: StratifiedDataset, j: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """``([1, U_{-j}], U_j)`` for stratum ``k``."""
    U = data.stratum(k).astype(float)
    X = np.column_stack([np.ones(U.shape[0]), U[:, _others(data.p, j)]])
    return X, U[:, j]


def _slope_weights(p: int) -> np.ndarray:
    w = np.ones(p)
    w[0] = 0.0
    return w


def _constant(y: np.ndarray) -> bool:
    return bool(np.all(y == y[0]))


def _capped_intercept(y: np.ndarray) -> float:
    return COEF_CAP if y[0] == 1 else -COEF_CAP


class _NodeModel:
    """Per-node problem shared across penalty levels (caches designs)."""

    def __init__(self, data: StratifiedDataset, j: int):
        self.data = data
        self.j = j
        self.p = data.p
        self.K = data.K
        self.blocks = [node_design(data, j, k) for k in range(data.K)]
        self.constant = np.array([_constant(y) for _, y in self.blocks])

    def pooled_problem(self, weights=None) -> LogisticProblem:
        X = np.vstack([X for X, _ in self.blocks])
        y = np.concatenate([y for _, y in self.blocks])
        w = _slope_weights(self.p) if weights is None else weights
        return LogisticProblem(X, y, w)

    def lambda_max(self) -> float:
        pb = self.pooled_problem()
        if _constant(pb.response):
            return 0.0
        return lambda_max(pb)

    def loglik(self, coef: NodewiseCoefficients) -> np.ndarray:
        out = np.empty(self.K)
        for k, (X, y) in enumerate(self.blocks):
            eta = X @ coef.coefficient_rows()[k]
            out[k] = -float(np.sum(np.logaddexp(0.0, eta) - y * eta))
        return out


class IndepNode(_NodeModel):
    def fit(self, lambdas, init=None, tol=1e-7):
        lambdas = np.broadcast_to(np.asarray(lambdas, dtype=float), (self.K,))
        rows = np.zeros((self.K, self.p))
        converged = True
        for k, (X, y) in enumerate(self.blocks):
            if self.constant[k]:
                rows[k, 0] = _capped_intercept(y)
                continue
            pb = LogisticProblem(X, y, _slope_weights(self.p))
            start = None if init is None else init[k]
            rep = fit_weighted_lasso_logistic(pb, float(lambdas[k]), tol, init=start)
            rows[k] = rep.coefficients
            converged &= rep.converged
        coef = NodewiseCoefficients(
            self.j, rows[:, 0], rows[:, 1:], degenerate=self.constant, converged=converged
        )
        return coef, rows


class FusedNode(_NodeModel):
    def fit(self, lambda1, lambda2, init=None, tol=1e-7):
        problems = [LogisticProblem(X, y, _slope_weights(self.p)) for X, y in self.blocks]
        if self.constant.all():
            rows = np.zeros((self.K, self.p))
            rows[:, 0] = [_capped_intercept(y) for _, y in self.blocks]
            converged = True
        else:
            reps = fit_fused_logistic(problems, float(lambda1), float(lambda2), tol, init=init)
            rows = np.array([r.coefficients for r in reps])
            converged = reps[0].converged
        coef = NodewiseCoefficients(
            self.j, rows[:, 0], rows[:, 1:], degenerate=self.constant, converged=converged
        )
        return coef, rows


class DataSharedNode(_NodeModel):
    """Stacked-design reduction of the shared/deviation decomposition.

    Columns are ``[1, U_{-j}]`` for the shared part followed by one block
    per free deviation, equal to ``[1, U_{-j}]`` on that stratum's rows
    and zero elsewhere. With ``reference=r`` stratum r has no deviation
    block and the shared part is its coefficient vector. A single
    stratum has no deviation block either: the split is not identified.
    """

    def __init__(self, data, j, reference=None, adaptive=None):
        super().__init__(data, j)
        self.reference = reference
        self.dev_strata = [k for k in range(self.K) if k != reference] if self.K > 1 else []
        self.adaptive = adaptive
        n_k = [X.shape[0] for X, _ in self.blocks]
        offsets = np.concatenate([[0], np.cumsum(n_k)])
        shared = np.vstack([X for X, _ in self.blocks])
        design = np.zeros((offsets[-1], self.p * (1 + len(self.dev_strata))))
        design[:, : self.p] = shared
        for b, k in enumerate(self.dev_strata):
            rows = slice(offsets[k], offsets[k + 1])
            design[rows, self.p * (b + 1): self.p * (b + 2)] = self.blocks[k][0]
        self.design = design
        self.response = np.concatenate([y for _, y in self.blocks])

    def penalty_weights(self, lambda1, lambda2k) -> np.ndarray:
        lambda2k = np.broadcast_to(np.asarray(lambda2k, dtype=float), (self.K,))
        w_mu = _slope_weights(self.p) * lambda1
        blocks = [np.full(self.p, lambda2k[k]) for k in self.dev_strata]
        if self.adaptive is not None:
            w_mu = w_mu * self.adaptive.shared[self.j]
            blocks = [b * self.adaptive.deviations[self.j, k] for b, k in zip(blocks, self.dev_strata)]
        return np.concatenate([w_mu, *blocks])

    def lambda_max(self) -> float:
        w = None
        if self.adaptive is not None:
            w = _slope_weights(self.p) * self.adaptive.shared[self.j]
        pb = self.pooled_problem(w)
        if _constant(pb.response):
            return 0.0
        return lambda_max(pb)

    def problem(self, lambda1, lambda2k) -> LogisticProblem:
        return LogisticProblem(self.design, self.response, self.penalty_weights(lambda1, lambda2k))

    def fit(self, lambda1, lambda2k, init=None, tol=1e-7):
        n_blocks = 1 + len(self.dev_strata)
        if _constant(self.response):
            c = np.zeros(self.p * n_blocks)
            c[0] = _capped_intercept(self.response)
            converged = True
        else:
            rep = fit_weighted_lasso_logistic(self.problem(lambda1, lambda2k), 1.0, tol, init=init)
            c = rep.coefficients
            converged = rep.converged
        mu = c[: self.p]
        gamma = np.zeros((self.K, self.p))
        for b, k in enumerate(self.dev_strata):
            gamma[k] = c[self.p * (b + 1): self.p * (b + 2)]
        theta = mu[None, :] + gamma
        coef = NodewiseCoefficients(
            self.j,
            theta[:, 0],
            theta[:, 1:],
            shared_part=mu,
            deviations=gamma,
            degenerate=self.constant,
            converged=converged,
        )
        return coef, c


def node_model(data: StratifiedDataset, j: int, kind: EstimatorKind, adaptive=None) -> _NodeModel:
    kind.validate(data.K)
    if kind.name == "indep":
        return IndepNode(data, j)
    if kind.name == "fused":
        return FusedNode(data, j)
    if kind.name == "reflasso":
        return DataSharedNode(data, j, reference=kind.reference)
    if kind.name == "datashared-adaptive":
        if adaptive is None:
            raise ValueError("adaptive weights are required")
        return DataSharedNode(data, j, adaptive=adaptive)
    return DataSharedNode(data, j)


# ---------------------------------------------------------------------------
# public estimators
# ---------------------------------------------------------------------------


def fit_indep_seplogit(data: StratifiedDataset, lambdas, tol=1e-7) -> list[NodewiseCoefficients]:
    """Separate lasso neighbourhood regressions in every stratum.

    ``lambdas`` gives one penalty level per stratum (a scalar is
    broadcast).
    """
    lambdas = np.broadcast_to(np.asarray(lambdas, dtype=float), (data.K,))
    if np.any(lambdas < 0):
        raise ValueError("penalty levels must be nonnegative")
    return [IndepNode(data, j).fit(lambdas, tol=tol)[0] for j in range(data.p)]


def fit_fused_seplogit(data: StratifiedDataset, lambda1, lambda2, tol=1e-7):
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError("penalty levels must be nonnegative")
    return [FusedNode(data, j).fit(lambda1, lambda2, tol=tol)[0] for j in range(data.p)]


def fit_datashared_seplogit(
    data: StratifiedDataset, lambda1, lambda2k, adaptive_weights=None, tol=1e-7
):
    """Shared-plus-deviation fit; ``lambda2k`` is a scalar or one value per stratum."""
    lam2 = np.broadcast_to(np.asarray(lambda2k, dtype=float), (data.K,))
    if lambda1 < 0 or np.any(lam2 < 0):
        raise ValueError("penalty levels must be nonnegative")
    return [
        DataSharedNode(data, j, adaptive=adaptive_weights).fit(lambda1, lam2, tol=tol)[0]
        for j in range(data.p)
    ]


def fit_reflasso_seplogit(data: StratifiedDataset, reference: int, lambda1, lambda2, tol=1e-7):
    if not 0 <= reference < data.K:
        raise ValueError(f"reference stratum {reference} outside [0, {data.K})")
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError("penalty levels must be nonnegative")
    return [
        DataSharedNode(data, j, reference=reference).fit(lambda1, lambda2, tol=tol)[0]
        for j in range(data.p)
    ]


def per_stratum_lambda2(lambda2: float, n_k: Sequence[int], scaled: bool = False) -> np.ndarray:
    """Per-stratum deviation penalties: common, or scaled by ``sqrt(n_k / N)``."""
    n_k = np.asarray(n_k, dtype=float)
    if not scaled:
        return np.full(n_k.size, float(lambda2))
    return lambda2 * np.sqrt(n_k / n_k.sum())


# ---------------------------------------------------------------------------
# adaptive weights
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdaptiveWeights:
    """Reciprocal unpenalized estimates for the stacked-design columns.

    ``shared[j]`` weights node j's shared vector (intercept entry unused);
    ``deviations[j, k]`` weights the stratum-k deviation vector.
    """

    shared: np.ndarray
    deviations: np.ndarray


def _reciprocal(x, cap=ADAPTIVE_WEIGHT_CAP) -> np.ndarray:
    a = np.abs(np.asarray(x, dtype=float))
    with np.errstate(divide="ignore"):
        w = np.where(a > 0, 1.0 / a, np.inf)
    return np.clip(w, 1.0 / COEF_CAP, cap)


def _mle(X, y) -> np.ndarray:
    if _constant(y):
        out = np.zeros(X.shape[1])
        out[0] = _capped_intercept(y)
        return out
    pb = LogisticProblem(X, y, np.zeros(X.shape[1]))
    return fit_weighted_lasso_logistic(pb, 0.0).coefficients


def compute_adaptive_weights(data: StratifiedDataset, cap: float = ADAPTIVE_WEIGHT_CAP) -> AdaptiveWeights:
    """Adaptive weights from unpenalized maximum likelihood fits.

    The shared part of node j is weighted by the pooled MLE; the
    stratum-k deviation by the gap between the stratum-k MLE and the
    pooled MLE, which is the unpenalized estimate of that deviation.
    """
    p, K = data.p, data.K
    shared = np.empty((p, p))
    deviations = np.empty((p, K, p))
    for j in range(p):
        node = _NodeModel(data, j)
        pooled = node.pooled_problem()
        mu = _mle(pooled.design, pooled.response)
        shared[j] = _reciprocal(mu, cap)
        for k, (X, y) in enumerate(node.blocks):
            deviations[j, k] = _reciprocal(_mle(X, y) - mu, cap)
    return AdaptiveWeights(shared, deviations)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def degenerate_direction_slack(
    coef: NodewiseCoefficients, lambda1, lambda2k, adaptive=None, delta=1e-3
) -> float:
    """Largest penalty decrease from shifting ``mu`` by ``+-delta`` and all
    deviations by ``-+delta`` in one coordinate.

    Such moves leave every ``theta_k`` unchanged, so at an optimum of the
    shared/deviation criterion none of them may lower the penalty. Only
    meaningful without a reference stratum.
    """
    if coef.shared_part is None:
        raise ValueError("fit carries no shared/deviation decomposition")
    K, p = coef.K, coef.p
    lam2 = np.broadcast_to(np.asarray(lambda2k, dtype=float), (K,))
    w_mu = _slope_weights(p) * lambda1
    w_gam = np.tile(lam2[:, None], (1, p))
    if adaptive is not None:
        w_mu = w_mu * adaptive.shared[coef.node]
        w_gam = w_gam * adaptive.deviations[coef.node]
    mu, gam = coef.shared_part, coef.deviations
    worst = 0.0
    for m in range(p):
        base = w_mu[m] * abs(mu[m]) + float(w_gam[:, m] @ np.abs(gam[:, m]))
        for s in (delta, -delta):
            moved = w_mu[m] * abs(mu[m] + s) + float(w_gam[:, m] @ np.abs(gam[:, m] - s))
            worst = max(worst, base - moved)
    return worst


# ---------------------------------------------------------------------------
# symmetrisation
# ---------------------------------------------------------------------------


def _pick_and_or(a: np.ndarray, b: np.ndarray, rule: str) -> np.ndarray:
    out = np.zeros_like(a)
    nz_a = np.abs(a) > FUSION_TOL
    nz_b = np.abs(b) > FUSION_TOL
    for k in range(a.size):
        if rule == "and":
            if nz_a[k] and nz_b[k]:
                out[k] = a[k] if abs(a[k]) <= abs(b[k]) else b[k]
        else:
            if nz_a[k] or nz_b[k]:
                out[k] = a[k] if abs(a[k]) >= abs(b[k]) else b[k]
    return out


def symmetrize(
    fits: Sequence[NodewiseCoefficients], rule: SymmetrizationRule | str = "min"
) -> StratifiedGraphEstimate:
    """Resolve the two estimates of every pair into one K-vector.

    ``min``/``max`` keep whichever of the two node-wise vectors has the
    lower/higher complexity (ties keep the lower node's vector);
    ``and``/``or`` decide each stratum separately, keeping the smaller /
    larger magnitude estimate.
    """
    if isinstance(rule, str):
        rule = SymmetrizationRule(rule)
    p = len(fits)
    if p < 2 or any(f.p != p for f in fits) or [f.node for f in fits] != list(range(p)):
        raise ValueError("need one fit per node, in node order")
    K = fits[0].K
    W = np.zeros((p * (p - 1) // 2, K))
    for i, (j, l) in enumerate(iter_pairs(p)):
        s_j = fits[j].interaction(l)
        s_l = fits[l].interaction(j)
        if rule.name in ("min", "max"):
            c_j, c_l = comp(s_j), comp(s_l)
            if c_j == c_l:
                W[i] = s_j
            elif (c_j < c_l) == (rule.name == "min"):
                W[i] = s_j
            else:
                W[i] = s_l
        else:
            W[i] = _pick_and_or(s_j, s_l, rule.name)
    return StratifiedGraphEstimate(p, W)
