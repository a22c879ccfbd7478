"""Exact enumeration and sampling for small Ising models.

States are encoded as integers whose bit ``j`` is ``u_j``. Enumeration
splits the nodes into a low block (at most 12 nodes, enumerated in one
dense array) and a high block walked in chunks, so memory stays bounded
up to the hard cap of :data:`MAX_EXACT_P` nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy.special import expit, logsumexp

from .model import BinaryObservationMatrix, IsingParameters

MAX_EXACT_P = 25
_LOW_BITS = 12
_HIGH_CHUNK = 512


class EnumerationLimitError(ValueError):
    pass


def _check_cap(p: int) -> None:
    if p > MAX_EXACT_P:
        raise EnumerationLimitError(
            f"exact enumeration is limited to p <= {MAX_EXACT_P} (got p={p})"
        )


def _bits(n_bits: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    stop = (1 << n_bits) if stop is None else stop
    idx = np.arange(start, stop, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n_bits)) & 1).astype(float)


def _energy(U: np.ndarray, h: np.ndarray, J: np.ndarray) -> np.ndarray:
    """``h.u + sum_{j<l} J_jl u_j u_l`` for each row of ``U``."""
    return U @ h + 0.5 * np.einsum("ij,ij->i", U @ J, U)


class _Enumerator:
    """Walks the 2^p states as (high chunk) x (all low states) blocks."""

    def __init__(self, theta: IsingParameters):
        _check_cap(theta.p)
        p = theta.p
        self.b = min(p, _LOW_BITS)
        self.nh = p - self.b
        h, J = theta.main_effects, theta.matrix()
        b = self.b
        self.low = _bits(b)
        self.e_low = _energy(self.low, h[:b], J[:b, :b])
        self.h_high = h[b:]
        self.J_high = J[b:, b:]
        self.cross = J[:b, b:]

    def blocks(self):
        """Yield ``(first_high_index, energies)`` with energies of shape ``(2^b, m)``."""
        total = 1 << self.nh
        for start in range(0, total, _HIGH_CHUNK):
            stop = min(total, start + _HIGH_CHUNK)
            H = _bits(self.nh, start, stop)
            e_high = _energy(H, self.h_high, self.J_high)
            E = self.e_low[:, None] + e_high[None, :] + self.low @ self.cross @ H.T
            yield start, E


def log_partition(theta: IsingParameters) -> float:
    """Log normalising constant of the Ising model by exact enumeration."""
    enum = _Enumerator(theta)
    return float(logsumexp([logsumexp(E) for _, E in enum.blocks()]))


def log_probabilities(theta: IsingParameters) -> np.ndarray:
    """Log probability of every state, indexed by the bit encoding."""
    enum = _Enumerator(theta)
    A = log_partition(theta)
    out = np.empty(1 << theta.p)
    nlow = 1 << enum.b
    for start, E in enum.blocks():
        m = E.shape[1]
        out[start * nlow:(start + m) * nlow] = (E - A).T.ravel()
    return out


def states(p: int) -> np.ndarray:
    """All ``2^p`` binary states as rows, matching :func:`log_probabilities`."""
    _check_cap(p)
    return _bits(p).astype(np.int8)


def state_index(U) -> np.ndarray:
    U = np.atleast_2d(np.asarray(U, dtype=np.int64))
    return U @ (1 << np.arange(U.shape[1], dtype=np.int64))


def exact_probability(theta: IsingParameters, u) -> float:
    _check_cap(theta.p)
    u = np.asarray(u, dtype=float)
    if u.shape != (theta.p,):
        raise ValueError(f"state must have length {theta.p}")
    e = _energy(u[None, :], theta.main_effects, theta.matrix())[0]
    return float(np.exp(e - log_partition(theta)))


def conditional_success_prob(theta: IsingParameters, j: int, u_minus_j) -> float:
    """``P(U_j = 1 | U_{-j} = u_minus_j)``; needs no partition function."""
    u = np.asarray(u_minus_j, dtype=float)
    if u.shape != (theta.p - 1,):
        raise ValueError(f"u_minus_j must have length {theta.p - 1}")
    row = np.delete(theta.matrix()[j], j)
    return float(expit(theta.main_effects[j] + row @ u))


def sample_exact(theta: IsingParameters, n: int, seed=None) -> BinaryObservationMatrix:
    """Draw ``n`` i.i.d. states by two-level inverse-CDF sampling."""
    enum = _Enumerator(theta)
    rng = np.random.default_rng(seed)
    blocks = list(enum.blocks())
    A = log_partition(theta)
    # marginal mass of each high-block state
    high_logmass = np.concatenate([logsumexp(E, axis=0) for _, E in blocks])
    high_cdf = np.cumsum(np.exp(high_logmass - A))
    u1 = rng.random(n)
    u2 = rng.random(n)
    hi = np.minimum(np.searchsorted(high_cdf, u1 * high_cdf[-1], side="right"), high_cdf.size - 1)
    lo = np.empty(n, dtype=np.int64)
    for h in np.unique(hi):
        start, E = blocks[h // _HIGH_CHUNK]
        col = E[:, h - start]
        cdf = np.cumsum(np.exp(col - col.max()))
        sel = hi == h
        lo[sel] = np.minimum(
            np.searchsorted(cdf, u2[sel] * cdf[-1], side="right"), cdf.size - 1
        )
    idx = lo + (hi.astype(np.int64) << enum.b)
    U = (idx[:, None] >> np.arange(theta.p)) & 1
    return BinaryObservationMatrix(U)


@dataclass(frozen=True)
class SamplerConfig:
    method: str = "gibbs"
    burn_in: int = 1000
    thinning: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.method not in ("exact", "gibbs"):
            raise ValueError(f"unknown sampler method {self.method!r}")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.thinning is not None and self.thinning < 1:
            raise ValueError("thinning must be >= 1")


@numba.njit(cache=True)
def _gibbs_block(state, h, J, uniforms, thinning, out, first_gap):
    """Run sweeps, storing a copy of the state every ``thinning`` sweeps.

    The first stored sample comes after ``first_gap`` sweeps (may be 0).
    ``uniforms`` holds one row per sweep.
    """
    p = state.size
    sweep = 0
    for i in range(out.shape[0]):
        gap = first_gap if i == 0 else thinning
        for _ in range(gap):
            for j in range(p):
                eta = h[j]
                for l in range(p):
                    if state[l]:
                        eta += J[j, l]
                prob = 1.0 / (1.0 + np.exp(-eta))
                state[j] = 1 if uniforms[sweep, j] < prob else 0
            sweep += 1
        out[i] = state


def sample_gibbs(
    theta: IsingParameters, n: int, config: SamplerConfig | None = None
) -> BinaryObservationMatrix:
    """Single-site Gibbs sampler with ascending node order per sweep."""
    config = config or SamplerConfig()
    p = theta.p
    thinning = config.thinning or p
    rng = np.random.default_rng(config.seed)
    h = np.ascontiguousarray(theta.main_effects, dtype=float)
    J = theta.matrix()
    state = (rng.random(p) < 0.5).astype(np.int8)
    out = np.empty((n, p), dtype=np.int8)
    chunk = max(1, (1 << 20) // max(1, p * thinning))
    first_gap = config.burn_in
    for start in range(0, n, chunk):
        m = min(chunk, n - start)
        n_sweeps = first_gap + (m - 1) * thinning
        U = rng.random((max(n_sweeps, 1), p))
        block = np.empty((m, p), dtype=np.int8)
        _gibbs_block(state, h, J, U, thinning, block, first_gap)
        out[start:start + m] = block
        first_gap = thinning
    return BinaryObservationMatrix(out)


def sample(theta: IsingParameters, n: int, seed=None, config: SamplerConfig | None = None):
    """Exact sampling when enumeration is feasible, Gibbs otherwise."""
    if config is not None:
        if config.method == "gibbs":
            return sample_gibbs(theta, n, config)
        return sample_exact(theta, n, config.seed if seed is None else seed)
    if theta.p <= MAX_EXACT_P:
        return sample_exact(theta, n, seed)
    return sample_gibbs(theta, n, SamplerConfig(seed=seed))
