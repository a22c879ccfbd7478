"""Shared domain types for stratified Ising structure estimation.

All containers are frozen dataclasses whose numpy buffers are marked
read-only on construction, so instances can be shared freely between
worker processes and threads.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

#: Absolute tolerance used to decide equality and nullity of estimates.
FUSION_TOL = 1e-8


class DataError(ValueError):
    """Raised when input data violate the binary stratified format."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def n_pairs(p: int) -> int:
    return p * (p - 1) // 2


def pair_index(j: int, l: int, p: int) -> int:
    """Position of the unordered pair ``{j, l}`` in row-major upper-triangle order."""
    if j == l:
        raise IndexError("diagonal entries are not interactions")
    if j > l:
        j, l = l, j
    if j < 0 or l >= p:
        raise IndexError(f"pair ({j}, {l}) outside [0, {p})")
    return j * (2 * p - j - 1) // 2 + (l - j - 1)


def iter_pairs(p: int):
    """Yield ``(j, l)`` with ``j < l`` in the storage order of :func:`pair_index`."""
    for j in range(p):
        for l in range(j + 1, p):
            yield j, l


# ---------------------------------------------------------------------------
# Complexity and heterogeneity
# ---------------------------------------------------------------------------


def comp(values: Sequence[float], tol: float = FUSION_TOL) -> int:
    """Number of distinct non-null values in ``values``.

    Values are sorted and chained into groups whenever consecutive
    entries differ by at most ``tol``; groups whose members are all
    within ``tol`` of zero are not counted.
    """
    s = np.asarray(values, dtype=float).ravel()
    if not np.all(np.isfinite(s)):
        raise ValueError("comp requires finite values")
    s = np.sort(s[np.abs(s) > tol])
    if s.size == 0:
        return 0
    return 1 + int(np.count_nonzero(np.diff(s) > tol))


def is_heterogeneous(values: Sequence[float], tol: float = FUSION_TOL) -> bool:
    """True unless every entry of ``values`` is equal (within ``tol``)."""
    s = np.asarray(values, dtype=float).ravel()
    return bool(s.size and (s.max() - s.min()) > tol)


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IsingParameters:
    """Main effects and symmetric pairwise interactions of one Ising model.

    Interactions are stored once per unordered pair, in the order given by
    :func:`iter_pairs`.
    """

    p: int
    main_effects: np.ndarray
    interactions: np.ndarray

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be positive")
        h = _frozen(self.main_effects)
        J = _frozen(self.interactions)
        if h.shape != (self.p,):
            raise ValueError(f"main_effects must have length {self.p}")
        if J.shape != (n_pairs(self.p),):
            raise ValueError(f"interactions must have length {n_pairs(self.p)}")
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(J))):
            raise ValueError("Ising parameters must be finite")
        object.__setattr__(self, "main_effects", h)
        object.__setattr__(self, "interactions", J)

    @classmethod
    def zeros(cls, p: int) -> IsingParameters:
        return cls(p, np.zeros(p), np.zeros(n_pairs(p)))

    @classmethod
    def from_matrix(cls, matrix, main_effects=None) -> IsingParameters:
        """Build from a symmetric ``p x p`` matrix; the diagonal is ignored."""
        M = np.asarray(matrix, dtype=float)
        p = M.shape[0]
        if M.shape != (p, p):
            raise ValueError("interaction matrix must be square")
        if not np.allclose(M, M.T, rtol=0.0, atol=0.0):
            raise ValueError("interaction matrix must be symmetric")
        iu = np.triu_indices(p, k=1)
        h = np.zeros(p) if main_effects is None else main_effects
        return cls(p, h, M[iu])

    def get(self, j: int, l: int) -> float:
        return float(self.interactions[pair_index(j, l, self.p)])

    def matrix(self) -> np.ndarray:
        """Symmetric interaction matrix with zero diagonal."""
        M = np.zeros((self.p, self.p))
        iu = np.triu_indices(self.p, k=1)
        M[iu] = self.interactions
        return M + M.T

    def edges(self, tol: float = FUSION_TOL) -> list[tuple[int, int]]:
        return [jl for jl, v in zip(iter_pairs(self.p), self.interactions) if abs(v) > tol]


@dataclass(frozen=True)
class StratifiedIsingParameters:
    per_stratum: tuple[IsingParameters, ...]

    def __post_init__(self):
        members = tuple(self.per_stratum)
        if not members:
            raise ValueError("at least one stratum is required")
        if len({m.p for m in members}) != 1:
            raise ValueError("all strata must share the same p")
        object.__setattr__(self, "per_stratum", members)

    @property
    def K(self) -> int:
        return len(self.per_stratum)

    @property
    def p(self) -> int:
        return self.per_stratum[0].p

    def interaction_table(self) -> np.ndarray:
        """``(n_pairs, K)`` array of interaction values."""
        return np.column_stack([m.interactions for m in self.per_stratum])

    def heterogeneity(self, tol: float = FUSION_TOL) -> np.ndarray:
        """Ground-truth indicator of pairs whose K values are not all equal."""
        return np.array([is_heterogeneous(row, tol) for row in self.interaction_table()])


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BinaryObservationMatrix:
    values: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.values)
        if raw.ndim != 2:
            raise DataError("observation matrix must be two-dimensional")
        bad = np.argwhere((raw != 0) & (raw != 1))
        if bad.size:
            r, c = bad[0]
            raise DataError(f"non-binary value {raw[r, c]!r} at row {r}, column {c}")
        object.__setattr__(self, "values", _frozen(raw, dtype=np.int8))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class StratifiedDataset:
    strata: tuple[BinaryObservationMatrix, ...]
    stratum_names: tuple[str, ...]
    variable_names: tuple[str, ...] = ()

    def __post_init__(self):
        strata = tuple(
            s if isinstance(s, BinaryObservationMatrix) else BinaryObservationMatrix(s)
            for s in self.strata
        )
        names = tuple(str(s) for s in self.stratum_names)
        if not strata:
            raise DataError("dataset needs at least one stratum")
        if len(names) != len(strata):
            raise DataError("one name per stratum is required")
        if len(set(names)) != len(names):
            raise DataError("stratum names must be unique")
        if len({s.p for s in strata}) != 1:
            raise DataError("all strata must share the same variables")
        for name, s in zip(names, strata):
            if s.n == 0:
                raise DataError(f"stratum {name!r} is empty")
        p = strata[0].p
        variables = tuple(self.variable_names) or tuple(f"V{i + 1}" for i in range(p))
        if len(variables) != p:
            raise DataError(f"expected {p} variable names, got {len(variables)}")
        object.__setattr__(self, "strata", strata)
        object.__setattr__(self, "stratum_names", names)
        object.__setattr__(self, "variable_names", variables)

    @classmethod
    def from_arrays(cls, arrays, names=None, variable_names=()) -> StratifiedDataset:
        arrays = list(arrays)
        if names is None:
            names = [f"S{k + 1}" for k in range(len(arrays))]
        return cls(tuple(arrays), tuple(names), tuple(variable_names))

    @property
    def K(self) -> int:
        return len(self.strata)

    @property
    def p(self) -> int:
        return self.strata[0].p

    @property
    def n_k(self) -> tuple[int, ...]:
        return tuple(s.n for s in self.strata)

    @property
    def n_total(self) -> int:
        return sum(self.n_k)

    def stratum(self, k: int) -> np.ndarray:
        return self.strata[k].values

    def pooled(self) -> np.ndarray:
        return np.vstack([s.values for s in self.strata])

    def reordered(self, order: Sequence[int]) -> StratifiedDataset:
        """Same data with strata permuted into ``order``."""
        return StratifiedDataset(
            tuple(self.strata[k] for k in order),
            tuple(self.stratum_names[k] for k in order),
            self.variable_names,
        )


def validate_dataset(
    rows: Iterable[Sequence], columns: Sequence[str], *, first_line: int = 2
) -> StratifiedDataset:
    """Group raw tabular rows into a :class:`StratifiedDataset`.

    ``columns`` is the header; its first entry names the stratum column
    and the rest are the binary variables. Rows are grouped by stratum
    label in order of first appearance. ``first_line`` is the line number
    reported for the first row in error messages (2 for a file with a
    header line).
    """
    columns = list(columns)
    if len(columns) < 3:
        raise DataError("need a stratum column and at least two value columns")
    p = len(columns) - 1
    groups: dict[str, list[list[int]]] = {}
    count = 0
    for i, row in enumerate(rows):
        line = first_line + i
        row = list(row)
        if len(row) != len(columns):
            raise DataError(f"line {line}: expected {len(columns)} fields, got {len(row)}")
        label = str(row[0])
        if label == "":
            raise DataError(f"line {line}: empty stratum label")
        values = []
        for c, cell in enumerate(row[1:], start=1):
            v = str(cell).strip()
            if v not in ("0", "1"):
                raise DataError(
                    f"line {line}, column {columns[c]!r}: non-binary value {cell!r}"
                )
            values.append(int(v))
        groups.setdefault(label, []).append(values)
        count += 1
    if count == 0:
        raise DataError("dataset has no rows")
    strata = [np.array(v, dtype=np.int8).reshape(-1, p) for v in groups.values()]
    return StratifiedDataset(tuple(strata), tuple(groups), tuple(columns[1:]))


# ---------------------------------------------------------------------------
# Estimates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NodewiseCoefficients:
    """Per-stratum logistic coefficients of one node regressed on the others.

    ``slopes[k, i]`` is the coefficient of variable ``others[i]`` where
    ``others`` lists every node except ``node`` in ascending order. When
    the fit comes from a shared/deviation decomposition, ``shared_part``
    holds ``(intercept, slopes...)`` of the common vector and
    ``deviations[k]`` the stratum-k deviation in the same layout.
    """

    node: int
    intercepts: np.ndarray
    slopes: np.ndarray
    shared_part: np.ndarray | None = None
    deviations: np.ndarray | None = None
    degenerate: np.ndarray | None = None
    converged: bool = True

    def __post_init__(self):
        b0 = _frozen(self.intercepts)
        B = _frozen(self.slopes)
        if B.ndim != 2 or b0.shape != (B.shape[0],):
            raise ValueError("intercepts must be (K,) and slopes (K, p-1)")
        object.__setattr__(self, "intercepts", b0)
        object.__setattr__(self, "slopes", B)
        deg = np.zeros(b0.size, bool) if self.degenerate is None else self.degenerate
        object.__setattr__(self, "degenerate", _frozen(deg, dtype=bool))
        if (self.shared_part is None) != (self.deviations is None):
            raise ValueError("shared_part and deviations come together")
        if self.shared_part is not None:
            mu = _frozen(self.shared_part)
            gam = _frozen(self.deviations)
            if mu.shape != (B.shape[1] + 1,) or gam.shape != (B.shape[0], B.shape[1] + 1):
                raise ValueError("decomposition has the wrong shape")
            full = np.column_stack([b0, B])
            if not np.allclose(mu[None, :] + gam, full, rtol=0.0, atol=1e-12):
                raise ValueError("intercepts/slopes must equal shared_part + deviations")
            object.__setattr__(self, "shared_part", mu)
            object.__setattr__(self, "deviations", gam)

    @property
    def K(self) -> int:
        return self.intercepts.size

    @property
    def p(self) -> int:
        return self.slopes.shape[1] + 1

    def column_of(self, l: int) -> int:
        if l == self.node:
            raise IndexError("a node has no slope on itself")
        return l if l < self.node else l - 1

    def interaction(self, l: int) -> np.ndarray:
        """K-vector of estimated coefficients of node ``l`` in this regression."""
        return self.slopes[:, self.column_of(l)]

    def coefficient_rows(self) -> np.ndarray:
        """``(K, p)`` array ``[intercept, slopes...]`` per stratum."""
        return np.column_stack([self.intercepts, self.slopes])


@dataclass(frozen=True)
class StratifiedGraphEstimate:
    """Symmetrised per-pair, per-stratum edge weights and heterogeneity flags."""

    p: int
    edge_weights: np.ndarray
    heterogeneity: np.ndarray = field(default=None)

    def __post_init__(self):
        W = _frozen(self.edge_weights)
        if W.ndim != 2 or W.shape[0] != n_pairs(self.p):
            raise ValueError(f"edge_weights must have shape ({n_pairs(self.p)}, K)")
        Z = np.array([is_heterogeneous(row) for row in W], dtype=bool)
        if self.heterogeneity is not None and not np.array_equal(
            np.asarray(self.heterogeneity, dtype=bool), Z
        ):
            raise ValueError("heterogeneity flags disagree with edge weights")
        object.__setattr__(self, "edge_weights", W)
        object.__setattr__(self, "heterogeneity", _frozen(Z, dtype=bool))

    @property
    def K(self) -> int:
        return self.edge_weights.shape[1]

    def weights(self, j: int, l: int) -> np.ndarray:
        return self.edge_weights[pair_index(j, l, self.p)]

    def support(self, tol: float = FUSION_TOL) -> np.ndarray:
        return np.abs(self.edge_weights) > tol

    def stratum_parameters(self, k: int) -> IsingParameters:
        return IsingParameters(self.p, np.zeros(self.p), self.edge_weights[:, k])


@dataclass(frozen=True)
class PenaltySpec:
    lambda1: float
    lambda2: float | tuple[float, ...] = 0.0
    adaptive_weights: object = None

    def __post_init__(self):
        lam2 = self.lambda2
        if np.ndim(lam2):
            lam2 = tuple(float(x) for x in lam2)
            vals = lam2
        else:
            lam2 = float(lam2)
            vals = (lam2,)
        for v in (float(self.lambda1),) + tuple(vals):
            if not np.isfinite(v) or v < 0:
                raise ValueError("penalty levels must be finite and nonnegative")
        object.__setattr__(self, "lambda1", float(self.lambda1))
        object.__setattr__(self, "lambda2", lam2)

    def lambda2_for(self, K: int) -> np.ndarray:
        if isinstance(self.lambda2, tuple):
            if len(self.lambda2) != K:
                raise ValueError(f"expected {K} per-stratum lambda2 values")
            return np.array(self.lambda2)
        return np.full(K, self.lambda2)
