"""BIC scoring and grid search over penalty levels."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .estimators import (
    AdaptiveWeights,
    EstimatorKind,
    compute_adaptive_weights,
    node_model,
)
from .model import FUSION_TOL, NodewiseCoefficients, PenaltySpec, StratifiedDataset, comp


class SelectionError(RuntimeError):
    """No grid point produced a usable fit."""


def _distinct(values, tol=FUSION_TOL) -> int:
    s = np.sort(np.asarray(values, dtype=float))
    return 0 if s.size == 0 else 1 + int(np.count_nonzero(np.diff(s) > tol))


def node_df(coef: NodewiseCoefficients, decomposed: bool) -> int:
    """Degrees of freedom of one node-wise fit.

    Decomposed fits count nonzero shared slopes and deviation entries,
    plus the shared intercept. Other fits count, per slope coordinate,
    the distinct nonzero values across strata, plus the distinct
    intercepts.
    """
    if decomposed:
        if coef.shared_part is None:
            raise ValueError("decomposed df needs a shared/deviation fit")
        return (
            int(np.count_nonzero(np.abs(coef.shared_part[1:]) > FUSION_TOL))
            + int(np.count_nonzero(np.abs(coef.deviations) > FUSION_TOL))
            + 1
        )
    return sum(comp(coef.slopes[:, i]) for i in range(coef.p - 1)) + _distinct(coef.intercepts)


def node_loglik(coef: NodewiseCoefficients, data: StratifiedDataset) -> float:
    j = coef.node
    total = 0.0
    others = np.delete(np.arange(data.p), j)
    for k in range(data.K):
        U = data.stratum(k).astype(float)
        eta = coef.intercepts[k] + U[:, others] @ coef.slopes[k]
        total -= float(np.sum(np.logaddexp(0.0, eta) - U[:, j] * eta))
    return total


def bic_score(
    fits: Sequence[NodewiseCoefficients], data: StratifiedDataset, decomposed: bool | None = None
) -> tuple[float, int]:
    """Summed node-wise BIC ``-2 loglik + df log(N)`` and total df."""
    if len(fits) != data.p:
        raise ValueError(f"expected {data.p} node fits, got {len(fits)}")
    for f in fits:
        if f.p != data.p or f.K != data.K:
            raise ValueError("fit dimensions do not match the data")
    logn = math.log(data.n_total)
    bic = 0.0
    df = 0
    for f in fits:
        dec = f.shared_part is not None if decomposed is None else decomposed
        d = node_df(f, dec)
        bic += -2.0 * node_loglik(f, data) + d * logn
        df += d
    return bic, df


@dataclass(frozen=True)
class GridSpec:
    """Log-spaced penalty grid anchored at the largest pooled ``lambda_max``.

    Explicit ``lambda1``/``lambda2`` value lists override the generated axes.
    """

    n_lambda1: int = 10
    n_lambda2: int = 10
    ratio: float = 0.01
    lambda1: tuple[float, ...] | None = None
    lambda2: tuple[float, ...] | None = None
    scaled_lambda2: bool = False

    def __post_init__(self):
        if self.n_lambda1 < 1 or self.n_lambda2 < 1:
            raise ValueError("grid needs at least one point per axis")
        if not 0 < self.ratio <= 1:
            raise ValueError("ratio must be in (0, 1]")
        for name in ("lambda1", "lambda2"):
            vals = getattr(self, name)
            if vals is not None:
                if len(vals) == 0 or not all(np.isfinite(v) and v >= 0 for v in vals):
                    raise ValueError(f"explicit {name} values must be finite and nonnegative")
                object.__setattr__(self, name, tuple(float(v) for v in vals))

    def axes(self, anchor: float, uses_lambda2: bool) -> tuple[np.ndarray, np.ndarray]:
        def axis(n):
            if n == 1:
                return np.array([anchor])
            return anchor * np.geomspace(1.0, self.ratio, n)

        l1 = np.array(sorted(self.lambda1, reverse=True)) if self.lambda1 else axis(self.n_lambda1)
        if not uses_lambda2:
            return l1, np.zeros(1)
        l2 = np.array(sorted(self.lambda2, reverse=True)) if self.lambda2 else axis(self.n_lambda2)
        return l1, l2

    def describe(self) -> dict:
        return {
            "n_lambda1": self.n_lambda1,
            "n_lambda2": self.n_lambda2,
            "ratio": self.ratio,
            "lambda1": list(self.lambda1) if self.lambda1 else None,
            "lambda2": list(self.lambda2) if self.lambda2 else None,
            "scaled_lambda2": self.scaled_lambda2,
        }


@dataclass(frozen=True)
class GridPoint:
    lambda1: float
    lambda2: float
    bic: float
    df: int


@dataclass(frozen=True)
class SelectionResult:
    chosen: PenaltySpec
    bic_surface: tuple[GridPoint, ...]
    fits: tuple[NodewiseCoefficients, ...]
    bic: float
    df: int
    per_node: tuple | None = None
    adaptive: AdaptiveWeights | None = field(default=None, repr=False)


def _lambda2k(lam2, data, grid):
    if grid.scaled_lambda2:
        n_k = np.asarray(data.n_k, dtype=float)
        return lam2 * np.sqrt(n_k / n_k.sum())
    return np.full(data.K, lam2)


def _node_path(data, j, kind, adaptive, l1s, l2s, grid, tol):
    """Fit one node at every grid point with warm starts.

    Returns ``{(a, b): (coef, loglik)}`` keyed by axis positions.
    """
    model = node_model(data, j, kind, adaptive)
    out = {}
    row_start = None
    for a, lam1 in enumerate(l1s):
        init = row_start
        for b, lam2 in enumerate(l2s):
            if kind.name == "indep":
                coef, state = model.fit(np.full(data.K, lam1), init=init, tol=tol)
            elif kind.name == "fused" or kind.name == "reflasso":
                coef, state = model.fit(lam1, lam2, init=init, tol=tol)
            else:
                coef, state = model.fit(lam1, _lambda2k(lam2, data, grid), init=init, tol=tol)
            if b == 0:
                row_start = state
            init = state
            out[a, b] = (coef, float(model.loglik(coef).sum()))
    return out


def grid_anchor(data: StratifiedDataset, kind: EstimatorKind, adaptive=None) -> float:
    """Largest pooled ``lambda_max`` over nodes."""
    return max(node_model(data, j, kind, adaptive).lambda_max() for j in range(data.p))


def _better(bic, l1, l2, best):
    if best is None:
        return True
    b_bic, b_l1, b_l2 = best
    slack = 1e-9 * max(1.0, abs(b_bic))
    if bic < b_bic - slack:
        return True
    if bic <= b_bic + slack:
        return (l1, l2) > (b_l1, b_l2)
    return False


def select_by_grid(
    data: StratifiedDataset,
    estimator: EstimatorKind | str,
    grid: GridSpec | None = None,
    *,
    per_node: bool = False,
    adaptive: AdaptiveWeights | None = None,
    jobs: int = 1,
    tol: float = 1e-7,
) -> SelectionResult:
    """Fit ``estimator`` over the penalty grid and keep the BIC minimiser.

    One ``(lambda1, lambda2)`` pair is shared by all node-wise problems
    and the node BICs are summed. With ``per_node=True`` (independent
    fits only) each node and stratum picks its own level by its own BIC.
    Ties go to the larger penalties.
    """
    kind = EstimatorKind(estimator) if isinstance(estimator, str) else estimator
    kind.validate(data.K)
    grid = grid or GridSpec()
    if per_node and kind.name != "indep":
        raise ValueError("per-node selection is only available for indep")
    if kind.name == "datashared-adaptive" and adaptive is None:
        adaptive = compute_adaptive_weights(data)
    anchor = grid_anchor(data, kind, adaptive)
    if not anchor > 0:
        raise SelectionError("every node has a constant response; nothing to select")
    l1s, l2s = grid.axes(anchor, kind.uses_lambda2)

    args = [(data, j, kind, adaptive, l1s, l2s, grid, tol) for j in range(data.p)]
    if jobs == 1:
        paths = [_node_path(*a) for a in args]
    else:
        from joblib import Parallel, delayed

        paths = Parallel(n_jobs=jobs)(delayed(_node_path)(*a) for a in args)

    if per_node:
        return _select_per_node(data, kind, paths, l1s)

    logn = math.log(data.n_total)
    surface = []
    best = None
    best_key = None
    for a, lam1 in enumerate(l1s):
        for b, lam2 in enumerate(l2s):
            bic = 0.0
            df = 0
            for path in paths:
                coef, ll = path[a, b]
                d = node_df(coef, kind.decomposed)
                bic += -2.0 * ll + d * logn
                df += d
            surface.append(GridPoint(float(lam1), float(lam2), bic, df))
            if np.isfinite(bic) and _better(bic, lam1, lam2, best):
                best = (bic, lam1, lam2)
                best_key = (a, b, df)
    if best is None:
        raise SelectionError(
            f"no finite BIC on the {len(l1s)}x{len(l2s)} grid (anchor {anchor:.4g})"
        )
    a, b, df = best_key
    lam2 = _lambda2k(l2s[b], data, grid) if kind.name in ("datashared", "datashared-adaptive") else l2s[b]
    if np.ndim(lam2) and np.all(lam2 == lam2[0]):
        lam2 = float(lam2[0])
    chosen = PenaltySpec(float(l1s[a]), lam2 if np.ndim(lam2) == 0 else tuple(lam2))
    return SelectionResult(
        chosen=chosen,
        bic_surface=tuple(surface),
        fits=tuple(path[a, b][0] for path in paths),
        bic=best[0],
        df=df,
        adaptive=adaptive,
    )


def _select_per_node(data, kind, paths, l1s):
    from .estimators import IndepNode

    fits = []
    choices = []
    total_bic = 0.0
    total_df = 0
    for j, path in enumerate(paths):
        model = IndepNode(data, j)
        intercepts = np.empty(data.K)
        slopes = np.empty((data.K, data.p - 1))
        lams = np.empty(data.K)
        for k in range(data.K):
            logn = math.log(data.n_k[k])
            best = None
            for a, lam in enumerate(l1s):
                coef = path[a, 0][0]
                ll = model.loglik(coef)[k]
                d = int(np.count_nonzero(np.abs(coef.slopes[k]) > FUSION_TOL)) + 1
                bic = -2.0 * ll + d * logn
                if _better(bic, lam, 0.0, None if best is None else best[:3]):
                    best = (bic, lam, 0.0, a, d)
            bic, lam, _, a, d = best
            coef = path[a, 0][0]
            intercepts[k] = coef.intercepts[k]
            slopes[k] = coef.slopes[k]
            lams[k] = lam
            total_bic += bic
            total_df += d
        degenerate = path[0, 0][0].degenerate
        fits.append(NodewiseCoefficients(j, intercepts, slopes, degenerate=degenerate))
        choices.append(tuple(float(x) for x in lams))
    chosen = PenaltySpec(float(np.median([c for cs in choices for c in cs])), 0.0)
    return SelectionResult(
        chosen=chosen,
        bic_surface=(),
        fits=tuple(fits),
        bic=total_bic,
        df=total_df,
        per_node=tuple(choices),
    )
