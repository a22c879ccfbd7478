"""Synthetic stratified Ising designs, accuracy metrics and the benchmark driver."""

from __future__ import annotations

import math
import time
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .estimators import EstimatorKind, SymmetrizationRule, symmetrize
from .ising import MAX_EXACT_P, SamplerConfig, sample_exact, sample_gibbs
from .model import (
    IsingParameters,
    StratifiedDataset,
    StratifiedGraphEstimate,
    StratifiedIsingParameters,
    n_pairs,
    pair_index,
)
from .selection import GridSpec, select_by_grid

STRUCTURES = ("chain", "three_nearest_neighbor", "scale_free")
WEIGHT_RANGE = (0.5, 1.0)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def generate_common_structure(kind: str, p: int, seed=None) -> list[tuple[int, int]]:
    """Edge list ``(j, l)`` with ``j < l``, sorted.

    ``chain`` links consecutive nodes. ``three_nearest_neighbor`` drops p
    points uniformly on the unit square and links each to its three
    nearest neighbours. ``scale_free`` grows a preferential-attachment
    tree, one edge per arriving node.
    """
    if p < 2:
        raise ValueError("need at least two nodes")
    if kind == "chain":
        edges = {(j, j + 1) for j in range(p - 1)}
    elif kind == "three_nearest_neighbor":
        rng = _rng(seed)
        pts = rng.random((p, 2))
        k = min(3, p - 1)
        _, nbrs = cKDTree(pts).query(pts, k=k + 1)
        edges = set()
        for j, row in enumerate(nbrs):
            for l in row[1:]:
                edges.add((min(j, int(l)), max(j, int(l))))
    elif kind == "scale_free":
        rng = _rng(seed)
        edges = {(0, 1)}
        # each node appears in `ends` once per incident edge
        ends = [0, 1]
        for new in range(2, p):
            target = ends[rng.integers(len(ends))]
            edges.add((target, new))
            ends += [target, new]
    else:
        raise ValueError(f"unknown structure {kind!r}; choose from {STRUCTURES}")
    return sorted(edges)


def _weights(rng, size) -> np.ndarray:
    lo, hi = WEIGHT_RANGE
    return rng.choice([-1.0, 1.0], size=size) * rng.uniform(lo, hi, size=size)


def n_specific(rho: float, n_common: int) -> int:
    """``round(rho * n_common)`` with halves rounded away from zero."""
    return int(math.floor(rho * n_common + 0.5))


def build_stratified_parameters(
    common: Sequence[tuple[int, int]], p: int, rho: float, K: int, seed=None
) -> tuple[StratifiedIsingParameters, np.ndarray]:
    """Truth parameters ``theta_k = mu + psi_k`` and the heterogeneity map.

    Common edges share one weight across strata. Each stratum then gets
    ``round(rho * |common|)`` specific edges drawn without replacement
    from the non-common pairs, independently of the other strata. Main
    effects are zero.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    if K < 1:
        raise ValueError("K must be positive")
    rng = _rng(seed)
    common_idx = np.array(sorted({pair_index(j, l, p) for j, l in common}), dtype=int)
    free = np.setdiff1d(np.arange(n_pairs(p)), common_idx)
    m = n_specific(rho, len(common_idx))
    if m > free.size:
        raise ValueError(
            f"{m} specific edges requested per stratum but only {free.size} non-common pairs exist"
        )
    mu = np.zeros(n_pairs(p))
    mu[common_idx] = _weights(rng, common_idx.size)
    strata = []
    for _ in range(K):
        theta = mu.copy()
        if m:
            chosen = rng.choice(free, size=m, replace=False)
            theta[chosen] = _weights(rng, m)
        strata.append(IsingParameters(p, np.zeros(p), theta))
    truth = StratifiedIsingParameters(tuple(strata))
    return truth, truth.heterogeneity(tol=0.0)


def _check_dims(truth: StratifiedIsingParameters, estimate: StratifiedGraphEstimate):
    if truth.p != estimate.p or truth.K != estimate.K:
        raise ValueError(
            f"truth is p={truth.p}, K={truth.K} but estimate is p={estimate.p}, K={estimate.K}"
        )


def acc_s(truth: StratifiedIsingParameters, estimate: StratifiedGraphEstimate) -> float:
    """Support accuracy averaged over strata."""
    _check_dims(truth, estimate)
    true_support = truth.interaction_table() != 0
    return float(np.mean(true_support == estimate.support()))


def acc_h(z_true, z_hat) -> float:
    """Share of pairs whose heterogeneity flag is recovered."""
    z_true = np.asarray(z_true, dtype=bool)
    z_hat = np.asarray(z_hat, dtype=bool)
    if z_true.shape != z_hat.shape or z_true.ndim != 1:
        raise ValueError(f"heterogeneity maps differ in shape: {z_true.shape} vs {z_hat.shape}")
    return float(np.mean(z_true == z_hat))


@dataclass(frozen=True)
class SimulationDesign:
    structure: str = "chain"
    p: int = 10
    K: int = 3
    n_k: int | tuple[int, ...] = 500
    rho: float = 0.0
    replicates: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ValueError(f"unknown structure {self.structure!r}; choose from {STRUCTURES}")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.p < 2 or self.K < 1:
            raise ValueError("need p >= 2 and K >= 1")
        sizes = self.sizes
        if len(sizes) != self.K or min(sizes) < 1:
            raise ValueError("need one positive sample size per stratum")

    @property
    def sizes(self) -> tuple[int, ...]:
        if np.ndim(self.n_k):
            return tuple(int(n) for n in self.n_k)
        return (int(self.n_k),) * self.K

    @property
    def design_id(self) -> str:
        n = self.sizes[0] if len(set(self.sizes)) == 1 else "x".join(map(str, self.sizes))
        return f"{self.structure}-p{self.p}-K{self.K}-n{n}-rho{self.rho:g}"


def simulate(design: SimulationDesign, seed=None):
    """Draw one replicate: ``(truth, Z*, dataset)``.

    ``seed`` defaults to ``design.seed``; it may be a ``SeedSequence``.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(
        design.seed if seed is None else seed
    )
    s_graph, s_par, s_data = ss.spawn(3)
    common = generate_common_structure(design.structure, design.p, np.random.default_rng(s_graph))
    truth, z = build_stratified_parameters(
        common, design.p, design.rho, design.K, np.random.default_rng(s_par)
    )
    arrays = []
    for theta, n, child in zip(truth.per_stratum, design.sizes, s_data.spawn(design.K)):
        if design.p <= MAX_EXACT_P:
            U = sample_exact(theta, n, np.random.default_rng(child))
        else:
            cfg = SamplerConfig(seed=int(child.generate_state(1)[0]))
            U = sample_gibbs(theta, n, cfg)
        arrays.append(U.values)
    names = tuple(f"s{k + 1}" for k in range(design.K))
    data = StratifiedDataset.from_arrays(arrays, names)
    return truth, z, data


@dataclass(frozen=True)
class BenchmarkRecord:
    design: str
    structure: str
    p: int
    K: int
    rho: float
    replicate: int
    estimator: str
    acc_s: float
    acc_h: float
    lambda1: float
    lambda2: float | tuple[float, ...]
    df: int
    seconds: float
    error: str = ""


def _kind(e) -> EstimatorKind:
    if isinstance(e, EstimatorKind):
        return e
    name, _, ref = str(e).partition(":")
    return EstimatorKind(name, int(ref) if ref else None)


def run_benchmark(
    design: SimulationDesign,
    estimators: Sequence[str | EstimatorKind],
    *,
    grid: GridSpec | None = None,
    rule: str = "min",
    jobs: int = 1,
) -> list[BenchmarkRecord]:
    """Simulate, fit and score every replicate of ``design``.

    Replicate ``r`` uses the r-th child of ``SeedSequence(design.seed)``
    so records do not depend on which replicates or estimators are run
    alongside. A failing fit is recorded with NaN metrics and its error
    message; the sweep carries on.
    """
    kinds = [_kind(e) for e in estimators]
    rule = SymmetrizationRule(rule)
    children = np.random.SeedSequence(design.seed).spawn(design.replicates)
    records = []
    for r, child in enumerate(children):
        truth, z, data = simulate(design, child)
        for kind in kinds:
            t0 = time.perf_counter()
            try:
                res = select_by_grid(data, kind, grid, jobs=jobs)
                est = symmetrize(res.fits, rule)
                a_s, a_h = acc_s(truth, est), acc_h(z, est.heterogeneity)
                lam1, lam2, df, err = res.chosen.lambda1, res.chosen.lambda2, res.df, ""
            except (ArithmeticError, ValueError, RuntimeError) as exc:
                a_s = a_h = lam1 = lam2 = math.nan
                df = -1
                err = f"{type(exc).__name__}: {exc}"
            records.append(
                BenchmarkRecord(
                    design=design.design_id,
                    structure=design.structure,
                    p=design.p,
                    K=design.K,
                    rho=design.rho,
                    replicate=r,
                    estimator=str(kind),
                    acc_s=a_s,
                    acc_h=a_h,
                    lambda1=lam1,
                    lambda2=lam2,
                    df=df,
                    seconds=time.perf_counter() - t0,
                    error=err,
                )
            )
    return records


def summarize(records: Sequence[BenchmarkRecord]) -> dict:
    """Mean Acc.S / Acc.H per ``(design, estimator)`` over successful records."""
    groups: dict = {}
    for rec in records:
        if rec.error:
            continue
        groups.setdefault((rec.design, rec.estimator), []).append((rec.acc_s, rec.acc_h))
    return {
        key: {"acc_s": float(np.mean([v[0] for v in vals])), "acc_h": float(np.mean([v[1] for v in vals])), "n": len(vals)}
        for key, vals in sorted(groups.items())
    }


__all__ = [
    "STRUCTURES",
    "BenchmarkRecord",
    "SimulationDesign",
    "acc_h",
    "acc_s",
    "build_stratified_parameters",
    "generate_common_structure",
    "run_benchmark",
    "simulate",
    "summarize",
]
