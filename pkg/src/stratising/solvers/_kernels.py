"""Compiled inner loops for the penalized logistic solvers."""

import numba
import numpy as np


@numba.njit(cache=True)
def cd_quadratic(H, r, beta, pen, cap, tol, max_sweeps):
    """Cyclic coordinate descent on a weighted-lasso quadratic model.

    Minimises ``c + r0.(b - b0) + (b - b0)' H (b - b0) / 2 + sum pen|b|``
    over the box ``|b| <= cap``. ``r`` must hold the model gradient at
    the starting ``beta`` and is kept current; both are updated in place.
    After a full sweep, sweeps cycle over the nonzero coordinates until
    they settle, then a full sweep confirms.
    """
    d = beta.size
    full = True
    sweeps = 0
    while sweeps < max_sweeps:
        maxd = 0.0
        for m in range(d):
            if not full and beta[m] == 0.0:
                continue
            a = H[m, m]
            if a <= 1e-14:
                continue
            z = beta[m] - r[m] / a
            t = pen[m] / a
            if z > t:
                new = z - t
            elif z < -t:
                new = z + t
            else:
                new = 0.0
            if new > cap:
                new = cap
            elif new < -cap:
                new = -cap
            dlt = new - beta[m]
            if dlt != 0.0:
                for i in range(d):
                    r[i] += H[i, m] * dlt
                beta[m] = new
                ad = abs(dlt)
                if ad > maxd:
                    maxd = ad
        sweeps += 1
        if maxd < tol:
            if full:
                break
            full = True
        else:
            full = False
    return sweeps


@numba.njit(cache=True)
def clique_fused_prox(v, b, out):
    """Exact minimiser of ``|z - v|^2 / 2 + b * sum_{i<j} |z_i - z_j|``.

    The solution keeps the order of ``v`` and groups contiguous runs of
    the sorted values, so every split of the sorted sequence into runs
    is tried; each run sits at its mean shifted by ``b`` times the
    imbalance of values below and above it. Among (numerically) equal
    objectives the split with fewest runs wins.
    """
    K = v.size
    if K == 1 or b <= 0.0:
        out[:] = v
        return
    order = np.argsort(v)
    s = v[order]
    cand = np.empty(K)
    best = np.empty(K)
    best_obj = np.inf
    best_runs = K + 1
    for mask in range(1 << (K - 1)):
        start = 0
        runs = 0
        for i in range(K):
            if i == K - 1 or (mask >> i) & 1:
                size = i - start + 1
                tot = 0.0
                for q in range(start, i + 1):
                    tot += s[q]
                c = tot / size - b * (start - (K - 1 - i))
                for q in range(start, i + 1):
                    cand[q] = c
                runs += 1
                start = i + 1
        obj = 0.0
        for i in range(K):
            obj += 0.5 * (cand[i] - s[i]) ** 2
            for q in range(i + 1, K):
                obj += b * abs(cand[i] - cand[q])
        slack = 1e-14 * (1.0 + abs(best_obj)) if best_obj < np.inf else 0.0
        if obj < best_obj - slack or (obj <= best_obj + slack and runs < best_runs):
            best_obj = obj
            best_runs = runs
            best[:] = cand
    for i in range(K):
        out[order[i]] = best[i]


@numba.njit(cache=True)
def fused_prox_matrix(V, pen1, lam2, cap, out):
    """Prox of ``sum_k pen1[m]|z_km| + lam2 sum_{k<k'} |z_km - z_k'm|`` columnwise."""
    K, d = V.shape
    col = np.empty(K)
    res = np.empty(K)
    for m in range(d):
        for k in range(K):
            col[k] = V[k, m]
        clique_fused_prox(col, lam2, res)
        t = pen1[m]
        for k in range(K):
            z = res[k]
            if z > t:
                z -= t
            elif z < -t:
                z += t
            else:
                z = 0.0
            if z > cap:
                z = cap
            elif z < -cap:
                z = -cap
            out[k, m] = z


@numba.njit(cache=True)
def admm_fused_quadratic(Q, L, b, pen1, lam2, cap, Z, U, rho, tol, max_iter):
    """ADMM on ``sum_k (t_k' H_k t_k / 2 - b_k' t_k) + fused penalty``.

    ``H_k = Q_k diag(L_k) Q_k'``. ``Z`` (the penalised copy, returned
    with exact fusions and zeros) and the scaled dual ``U`` are updated
    in place and warm-start the next call. The penalty parameter is
    rebalanced when primal and dual residuals drift apart.
    Returns ``(iterations, rho, primal_residual, dual_residual)``.
    """
    K, d = Z.shape
    T = np.empty((K, d))
    Zold = np.empty((K, d))
    V = np.empty((K, d))
    pen_scaled = np.empty(d)
    tmp = np.empty(d)
    rhs = np.empty(d)
    r = np.inf
    s = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        for k in range(K):
            for m in range(d):
                rhs[m] = b[k, m] + rho * (Z[k, m] - U[k, m])
            for m in range(d):
                acc = 0.0
                for i in range(d):
                    acc += Q[k, i, m] * rhs[i]
                tmp[m] = acc / (L[k, m] + rho)
            for i in range(d):
                acc = 0.0
                for m in range(d):
                    acc += Q[k, i, m] * tmp[m]
                T[k, i] = acc
        Zold[:, :] = Z
        for k in range(K):
            for m in range(d):
                V[k, m] = T[k, m] + U[k, m]
        for m in range(d):
            pen_scaled[m] = pen1[m] / rho
        fused_prox_matrix(V, pen_scaled, lam2 / rho, cap, Z)
        r = 0.0
        s = 0.0
        scale = 1.0
        for k in range(K):
            for m in range(d):
                U[k, m] += T[k, m] - Z[k, m]
                dr = abs(T[k, m] - Z[k, m])
                ds = abs(Z[k, m] - Zold[k, m])
                if dr > r:
                    r = dr
                if ds > s:
                    s = ds
                az = abs(Z[k, m])
                if az > scale:
                    scale = az
        s *= rho
        if r <= tol * scale and s <= tol * scale:
            break
        if it % 5 == 0:
            if r > 10.0 * s:
                rho *= 2.0
                for k in range(K):
                    for m in range(d):
                        U[k, m] *= 0.5
            elif s > 10.0 * r:
                rho *= 0.5
                for k in range(K):
                    for m in range(d):
                        U[k, m] *= 2.0
    return it, rho, r, s
